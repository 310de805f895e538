#pragma once

#include <string>

#include "filtlearn/autodiff.hpp"
#include "filtlearn/geometry.hpp"

namespace filtlearn {

/// Architecture of the per-point weight model. The model sees a cloud only
/// through its pairwise dissimilarities, so its outputs are invariant under
/// isometries and equivariant under point relabelling by construction:
///   g1(x)   = phi2( sum_j phi1(d(x, x_j)) )          local descriptor
///   g2(x_i) = phi4( sum_j phi3(D[i][j]) )            per-point summary
///   h(X)    = phi5( sum_i g2(x_i) )                  global descriptor
///   f(X, x) = phi6( [h(X); g1(x)] )                  scalar weight
struct WeightNetConfig {
    ad::MlpSpec phi1, phi2, phi3, phi4, phi5, phi6;
    /// Final layer of phi6 drawn from N(0, final_sigma^2) so initial weights
    /// are almost zero and the starting filtration is almost plain Rips.
    /// Negative disables the special init.
    double final_sigma = 1e-4;

    /// Named presets: "paper-default", "r1".."r4" (reduced variants), "desk"
    /// (small sizes for laptop-scale experiments and CI).
    static WeightNetConfig preset(const std::string& name);
    void validate() const;
};

/// Enables/disables batch normalization on the network's hidden layers.
/// phi5 is left plain: it only ever sees the single pooled row of one cloud,
/// so per-batch statistics are undefined there.
void set_batch_norm(WeightNetConfig& cfg, bool on);
bool uses_batch_norm(const WeightNetConfig& cfg);

void init_weight_net(ad::ParameterStore& ps, const WeightNetConfig& cfg,
                     SplitMix64& rng);

/// All n weights at once: [n x 1] node. Bit-identical to calling
/// weight_for_point on every cloud point (default eval mode, no batch norm;
/// normalized networks see different pooling batches in the two calls).
/// With batch norm enabled, train mode normalizes by the statistics of this
/// cloud's rows — pass update_running = false to keep application-time
/// forwards from touching the running averages.
ad::NodeId weights_for_cloud(ad::Tape& t, ad::ParameterStore& ps,
                             const WeightNetConfig& cfg, const DistanceMatrix& d,
                             ad::RunMode mode = ad::RunMode::eval,
                             SplitMix64* dropout_rng = nullptr,
                             bool update_running = true);

/// Weight of one (possibly off-cloud) point given its distances to every
/// cloud point. [1 x 1] node.
ad::NodeId weight_for_point(ad::Tape& t, ad::ParameterStore& ps,
                            const WeightNetConfig& cfg, const DistanceMatrix& d,
                            std::span<const double> dists_to_cloud,
                            ad::RunMode mode = ad::RunMode::eval,
                            SplitMix64* dropout_rng = nullptr);

/// The isometry-invariant global descriptor h(X): [1 x phi5.out] node.
ad::NodeId cloud_descriptor(ad::Tape& t, ad::ParameterStore& ps,
                            const WeightNetConfig& cfg, const DistanceMatrix& d,
                            ad::RunMode mode = ad::RunMode::eval,
                            SplitMix64* dropout_rng = nullptr,
                            bool update_running = true);

/// Classifier over dissimilarity matrices alone: h(X) plus a linear head.
/// Uses its own parameter prefix ("dmn.*").
void init_distmatrixnet(ad::ParameterStore& ps, const WeightNetConfig& cfg,
                        std::size_t n_classes, SplitMix64& rng);
ad::NodeId distmatrixnet_classify(ad::Tape& t, ad::ParameterStore& ps,
                                  const WeightNetConfig& cfg, const DistanceMatrix& d,
                                  ad::RunMode mode = ad::RunMode::eval,
                                  SplitMix64* dropout_rng = nullptr);

} // namespace filtlearn
