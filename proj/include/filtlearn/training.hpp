#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "filtlearn/autodiff.hpp"
#include "filtlearn/filtration.hpp"
#include "filtlearn/geometry.hpp"
#include "filtlearn/optim.hpp"
#include "filtlearn/perslay.hpp"
#include "filtlearn/persistence.hpp"
#include "filtlearn/weightnet.hpp"

namespace filtlearn {

/// Routes diagram-point gradients back to the per-point weights through the
/// persistence pairing. grad_points[k] = (dL/d birth, dL/d death) for
/// diag.points[k]; death gradients of essential points are ignored. Each
/// cell's appearance value is a max of terms; the gradient goes to the argmax
/// term (vertex weight, or (1/2, 1/2) on the averaged edge term); ties pick
/// the term whose cell comes first in the filtration total order. Triangles
/// route to their argmax edge first.
WeightVector pd_backward(const Filtration& f, const PersistenceDiagram& diag,
                         std::span<const std::pair<double, double>> grad_points,
                         const DistanceMatrix& d, const WeightVector& w);

/// Differentiable diagram coordinates: builds the weighted Rips filtration
/// from the current values of `w_node` ([n x 1]), reduces it, and exposes the
/// finite degree-`degree` points as a [P x 2] node whose backward pass applies
/// pd_backward. `d` must outlive the tape. Non-finite weights raise
/// NumericalError. The full diagram (with pairing) is copied to diag_out when
/// given.
ad::NodeId persistence_node(ad::Tape& t, const DistanceMatrix& d, ad::NodeId w_node,
                            int degree, double t_max,
                            PersistenceDiagram* diag_out = nullptr);

enum class FiltrationMode { rips, dtm, learned };
FiltrationMode filtration_mode_from_string(const std::string& s);
std::string to_string(FiltrationMode m);

/// Everything the differentiable pipeline needs to turn one dissimilarity
/// matrix into class logits.
struct TopoPipeline {
    WeightNetConfig wnet = WeightNetConfig::preset("desk");
    PersLayConfig perslay;
    FiltrationMode mode = FiltrationMode::learned;
    std::size_t k0 = 5; // dtm mode
    double q = 2.0;     // dtm mode
    int degree = 1;
    double t_max = std::numeric_limits<double>::infinity();
    std::size_t n_classes = 2;
    std::size_t extra_feature_dim = 0; // prepended constant features (phase 2)
};

/// Registers weight-net (learned mode), vectorization, and classifier-head
/// parameters. t_cap scales the vectorization's center grid.
void init_topo_pipeline(ad::ParameterStore& ps, const TopoPipeline& pipe,
                        double t_cap, SplitMix64& rng);

/// Logits for one example; extra (may be empty) is prepended to the
/// topological feature before the linear head.
ad::NodeId topo_logits(ad::Tape& t, ad::ParameterStore& ps, const TopoPipeline& pipe,
                       const DistanceMatrix& d, std::span<const double> extra = {},
                       PersistenceDiagram* diag_out = nullptr,
                       ad::RunMode mode = ad::RunMode::eval,
                       SplitMix64* dropout_rng = nullptr);

/// Cross-entropy loss of topo_logits against the label (the end-to-end
/// objective for one example).
ad::NodeId topo_loss(ad::Tape& t, ad::ParameterStore& ps, const TopoPipeline& pipe,
                     const DistanceMatrix& d, int label,
                     std::span<const double> extra = {},
                     PersistenceDiagram* diag_out = nullptr,
                     ad::RunMode mode = ad::RunMode::eval,
                     SplitMix64* dropout_rng = nullptr);

/// DeepSets backbone: phi2(sum_i phi1(x_i)) feature plus a linear head.
struct DeepSetsConfig {
    ad::MlpSpec phi1, phi2;
    static DeepSetsConfig preset(const std::string& name, std::size_t in_dim);
};
void init_deepsets(ad::ParameterStore& ps, const DeepSetsConfig& cfg,
                   std::size_t n_classes, SplitMix64& rng);
ad::NodeId deepsets_features(ad::Tape& t, ad::ParameterStore& ps,
                             const DeepSetsConfig& cfg, const PointCloud& pc,
                             ad::RunMode mode = ad::RunMode::eval,
                             SplitMix64* dropout_rng = nullptr);
ad::NodeId deepsets_classify(ad::Tape& t, ad::ParameterStore& ps,
                             const DeepSetsConfig& cfg, const PointCloud& pc,
                             ad::RunMode mode = ad::RunMode::eval,
                             SplitMix64* dropout_rng = nullptr);

/// A labelled dataset; dmats always present, clouds only for coordinate-based
/// models.
struct LabelledData {
    std::vector<PointCloud> clouds;
    std::vector<DistanceMatrix> dmats;
    std::vector<int> labels;
    std::size_t size() const { return labels.size(); }
};

struct ExperimentConfig {
    // dataset
    std::string task = "circle_vs_disk_with_outliers";
    std::size_t n_points = 64;
    std::size_t n_outliers = 8;
    double noise_sigma = 0.08;
    std::size_t n_train = 400;
    std::size_t n_test = 100;
    // filtration / pipeline
    std::string filtration = "learned";
    std::size_t k0 = 5;
    double q = 2.0;
    int degree = 1;
    double t_max = std::numeric_limits<double>::infinity();
    std::string wnet_preset = "desk";
    // Per-set normalization inside the weight net. Statistics always come
    // from the cloud being processed, so the learned weight function stays a
    // pure function of the distance matrix at train and apply time alike.
    bool wnet_batch_norm = true;
    std::string deepsets_preset = "desk";
    std::size_t perslay_centers = 32;
    std::size_t perslay_out = 16;
    double t_cap = 0.0; // <= 0: derive from training Rips diagrams
    // optimization
    std::size_t batch_size = 40;
    int epochs = 20;
    int epochs_phase1 = 200;
    int epochs_phase2 = 100;
    double eta_max = 1e-2;
    double eta_max_phase1 = 2e-2;
    int n_warmup = 40;
    std::uint64_t seed = 1;
    int folds = 5;
    std::string eval_mode = "holdout"; // holdout | cv

    void validate() const;
};

/// Deterministic dataset construction: item k uses seed base_seed + k, so
/// labels alternate and every item is reproducible in isolation.
LabelledData make_dataset(const ExperimentConfig& cfg, std::size_t count,
                          std::uint64_t base_seed, bool with_clouds = true);

struct TrainOutcome {
    double test_accuracy = 0.0;
    double test_loss = 0.0;
    std::vector<double> epoch_losses;
    double mean_diagram_size = 0.0;
};

/// Writes one record per epoch: epoch,phase,fold,loss,accuracy,lr,
/// mean_diagram_size.
class MetricsLog {
public:
    explicit MetricsLog(std::ostream* os);
    void record(int epoch, int phase, int fold, double loss, double accuracy,
                double lr, double mean_diag);

private:
    std::ostream* os_;
};

/// Trains the topological classifier (any filtration mode). Fixed-filtration
/// modes reuse each item's diagram across steps (the weights are constant, so
/// recomputing would produce the identical diagram). extra_* rows, when
/// nonempty, are constant per-item features concatenated before the head.
TrainOutcome train_topo_classifier(
    const ExperimentConfig& cfg, const TopoPipeline& pipe, const LabelledData& train,
    const LabelledData& test, ad::ParameterStore& ps, MetricsLog* metrics,
    int fold = 0, int phase = 1,
    const std::vector<std::vector<double>>* extra_train = nullptr,
    const std::vector<std::vector<double>>* extra_test = nullptr);

TrainOutcome train_deepsets_classifier(const ExperimentConfig& cfg,
                                       const DeepSetsConfig& ds,
                                       const LabelledData& train,
                                       const LabelledData& test,
                                       ad::ParameterStore& ps, MetricsLog* metrics,
                                       int fold = 0, int phase = 1);

struct TwoPhaseResult {
    double phase1_accuracy = 0.0;
    double phase2_accuracy = 0.0;
    bool frozen_backbone_intact = false;
    ad::ParameterStore deepsets_params;
    ad::ParameterStore topo_params;
    TopoPipeline pipeline;
    DeepSetsConfig deepsets_cfg;
    double t_cap = 1.0;
};

/// Phase 1: coordinate backbone + linear head. Phase 2: backbone frozen, head
/// discarded, topological branch and joint head trained on the concatenated
/// 16 + 16 features.
TwoPhaseResult two_phase_train(const ExperimentConfig& cfg, const LabelledData& train,
                               const LabelledData& test, MetricsLog* metrics,
                               int fold = 0);

struct RegressionResult {
    double held_out_mse = 0.0;
    std::vector<double> epoch_losses;
    ad::ParameterStore params;
    WeightNetConfig wnet;
};

/// Fits weights_for_cloud to the distance-to-measure weights with parameters
/// (k0, q) over random mixed-shape clouds; reports held-out per-point MSE.
RegressionResult dtm_regression_train(const ExperimentConfig& cfg, std::size_t k0,
                                      double q, MetricsLog* metrics);

} // namespace filtlearn
