#include "filtlearn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <ostream>
#include <stdexcept>

#include "filtlearn/errors.hpp"
#include "filtlearn/num_format.hpp"

namespace filtlearn {

using ad::AdamState;
using ad::NodeId;
using ad::ParameterStore;
using ad::RunMode;
using ad::Tape;

// ---------------------------------------------------------------------------
// gradient routing through the pairing
// ---------------------------------------------------------------------------

namespace {

// dv/dw for one edge value max(wi, wj, (d+wi+wj)/2); ties resolved toward the
// cell earliest in the filtration order (vertex i, then vertex j, then the
// edge's own averaged term).
void route_edge(int i, int j, double g, const DistanceMatrix& d,
                const WeightVector& w, WeightVector& out) {
    const double wi = w[i], wj = w[j];
    const double avg = (d(i, j) + wi + wj) / 2.0;
    const double v = std::max({wi, wj, avg});
    if (wi == v) {
        out[i] += g;
    } else if (wj == v) {
        out[j] += g;
    } else {
        out[i] += g / 2.0;
        out[j] += g / 2.0;
    }
}

void route_cell(const FiltrationCell& cell, double g, const DistanceMatrix& d,
                const WeightVector& w, WeightVector& out) {
    switch (cell.s.dim) {
        case 0:
            out[cell.s.v[0]] += g;
            return;
        case 1:
            route_edge(cell.s.v[0], cell.s.v[1], g, d, w, out);
            return;
        case 2: {
            const int a = cell.s.v[0], b = cell.s.v[1], c = cell.s.v[2];
            const double eab = edge_appearance(d(a, b), w[a], w[b]);
            const double eac = edge_appearance(d(a, c), w[a], w[c]);
            const double ebc = edge_appearance(d(b, c), w[b], w[c]);
            const double v = std::max({eab, eac, ebc});
            // Lexicographically first among tied maximal edges.
            if (eab == v)
                route_edge(a, b, g, d, w, out);
            else if (eac == v)
                route_edge(a, c, g, d, w, out);
            else
                route_edge(b, c, g, d, w, out);
            return;
        }
        default:
            throw std::invalid_argument("pd_backward: unsupported cell dimension");
    }
}

} // namespace

WeightVector pd_backward(const Filtration& f, const PersistenceDiagram& diag,
                         std::span<const std::pair<double, double>> grad_points,
                         const DistanceMatrix& d, const WeightVector& w) {
    if (grad_points.size() != diag.points.size())
        throw std::invalid_argument("pd_backward: gradient count != diagram size");
    if (w.size() != d.size())
        throw std::invalid_argument("pd_backward: weight length mismatch");

    WeightVector out(w.size(), 0.0);
    for (std::size_t k = 0; k < diag.points.size(); ++k) {
        const DiagramPoint& p = diag.points[k];
        if (p.birth_cell < 0 || static_cast<std::size_t>(p.birth_cell) >= f.size() ||
            f.cell(p.birth_cell).value != p.birth)
            throw std::invalid_argument("pd_backward: pairing does not match filtration");
        const auto& [gb, gd] = grad_points[k];
        if (gb != 0.0) route_cell(f.cell(p.birth_cell), gb, d, w, out);
        if (!p.essential()) {
            if (static_cast<std::size_t>(p.death_cell) >= f.size() ||
                f.cell(p.death_cell).value != p.death)
                throw std::invalid_argument(
                    "pd_backward: pairing does not match filtration");
            if (gd != 0.0) route_cell(f.cell(p.death_cell), gd, d, w, out);
        }
    }
    return out;
}

NodeId persistence_node(Tape& t, const DistanceMatrix& d, NodeId w_node, int degree,
                        double t_max, PersistenceDiagram* diag_out) {
    if (degree < 0 || degree > 1)
        throw std::invalid_argument("persistence_node: degree must be 0 or 1");
    const auto& wv = t.value(w_node);
    if (wv.size() != d.size())
        throw std::invalid_argument("persistence_node: weight node length mismatch");
    for (double x : wv)
        if (!std::isfinite(x))
            throw NumericalError("persistence_node: non-finite weights");

    auto w = std::make_shared<WeightVector>(wv.begin(), wv.end());
    auto filt = std::make_shared<Filtration>(
        weighted_rips_filtration(d, *w, degree + 1, t_max));
    auto diag = std::make_shared<PersistenceDiagram>(compute_persistence(*filt, degree));
    if (diag_out) *diag_out = *diag;

    std::vector<double> coords;
    auto rows = std::make_shared<std::vector<std::size_t>>(); // diagram indices
    for (std::size_t k = 0; k < diag->points.size(); ++k) {
        const auto& p = diag->points[k];
        if (p.degree == degree && !p.essential()) {
            coords.push_back(p.birth);
            coords.push_back(p.death);
            rows->push_back(k);
        }
    }
    const std::size_t n_pts = rows->size();
    const NodeId self = static_cast<NodeId>(t.size()); // id of the node pushed next
    const DistanceMatrix* dp = &d;
    return t.custom(
        n_pts, 2, std::move(coords), [self, w_node, w, filt, diag, rows, dp](Tape& tt) {
            const auto& g = tt.grad(self);
            std::vector<std::pair<double, double>> gp(diag->points.size(), {0.0, 0.0});
            for (std::size_t r = 0; r < rows->size(); ++r)
                gp[(*rows)[r]] = {g[2 * r], g[2 * r + 1]};
            WeightVector gw = pd_backward(*filt, *diag, gp, *dp, *w);
            auto& dst = tt.grad(w_node);
            for (std::size_t i = 0; i < gw.size(); ++i) dst[i] += gw[i];
        });
}

// ---------------------------------------------------------------------------
// pipelines
// ---------------------------------------------------------------------------

FiltrationMode filtration_mode_from_string(const std::string& s) {
    if (s == "rips") return FiltrationMode::rips;
    if (s == "dtm") return FiltrationMode::dtm;
    if (s == "learned") return FiltrationMode::learned;
    throw InputError("unknown filtration mode: " + s);
}

std::string to_string(FiltrationMode m) {
    switch (m) {
        case FiltrationMode::rips: return "rips";
        case FiltrationMode::dtm: return "dtm";
        case FiltrationMode::learned: return "learned";
    }
    throw std::logic_error("unreachable");
}

void init_topo_pipeline(ParameterStore& ps, const TopoPipeline& pipe, double t_cap,
                        SplitMix64& rng) {
    if (pipe.mode == FiltrationMode::learned) init_weight_net(ps, pipe.wnet, rng);
    init_perslay(ps, pipe.perslay, t_cap, rng);
    ad::MlpSpec head;
    head.dims = {pipe.perslay.out_dim + pipe.extra_feature_dim, pipe.n_classes};
    ad::init_mlp_params(ps, "clf.head", head, rng);
}

NodeId topo_logits(Tape& t, ParameterStore& ps, const TopoPipeline& pipe,
                   const DistanceMatrix& d, std::span<const double> extra,
                   PersistenceDiagram* diag_out, RunMode mode, SplitMix64* dropout_rng) {
    if (extra.size() != pipe.extra_feature_dim)
        throw std::invalid_argument("topo_logits: extra feature width mismatch");
    NodeId w_node;
    switch (pipe.mode) {
        case FiltrationMode::learned: {
            // Normalized weight nets always draw statistics from the cloud at
            // hand (never running averages), so train and eval apply the same
            // function; dropout still follows the caller's mode.
            const ad::RunMode wmode =
                uses_batch_norm(pipe.wnet) ? ad::RunMode::train : mode;
            SplitMix64* wdrop = mode == ad::RunMode::train ? dropout_rng : nullptr;
            w_node = weights_for_cloud(t, ps, pipe.wnet, d, wmode, wdrop, false);
            break;
        }
        case FiltrationMode::rips:
            w_node = t.input(d.size(), 1, std::vector<double>(d.size(), 0.0));
            break;
        case FiltrationMode::dtm: {
            WeightVector w = dtm_weights(d, pipe.k0, pipe.q);
            w_node = t.input(d.size(), 1, std::vector<double>(w.begin(), w.end()));
            break;
        }
        default:
            throw std::logic_error("unreachable");
    }
    NodeId pts = persistence_node(t, d, w_node, pipe.degree, pipe.t_max, diag_out);
    NodeId feat = topo_feature(t, ps, pipe.perslay, pts);
    if (pipe.extra_feature_dim > 0) {
        NodeId e = t.input(1, extra.size(),
                           std::vector<double>(extra.begin(), extra.end()));
        feat = t.concat_cols(e, feat);
    }
    return t.affine(ps, "clf.head.l0.W", "clf.head.l0.b", feat);
}

NodeId topo_loss(Tape& t, ParameterStore& ps, const TopoPipeline& pipe,
                 const DistanceMatrix& d, int label, std::span<const double> extra,
                 PersistenceDiagram* diag_out, RunMode mode, SplitMix64* dropout_rng) {
    NodeId logits = topo_logits(t, ps, pipe, d, extra, diag_out, mode, dropout_rng);
    return t.cross_entropy(logits, label);
}

DeepSetsConfig DeepSetsConfig::preset(const std::string& name, std::size_t in_dim) {
    DeepSetsConfig c;
    auto mk = [](std::vector<std::size_t> dims) {
        ad::MlpSpec s;
        s.dims = std::move(dims);
        return s;
    };
    if (name == "paper-default") {
        c.phi1 = mk({in_dim, 64, 64, 64, 128, 1024});
        c.phi2 = mk({1024, 512, 256, 16});
    } else if (name == "desk") {
        c.phi1 = mk({in_dim, 32, 64});
        c.phi2 = mk({64, 32, 16});
    } else {
        throw std::invalid_argument("DeepSetsConfig: unknown preset " + name);
    }
    return c;
}

void init_deepsets(ParameterStore& ps, const DeepSetsConfig& cfg,
                   std::size_t n_classes, SplitMix64& rng) {
    if (cfg.phi2.in_dim() != cfg.phi1.out_dim())
        throw std::invalid_argument("init_deepsets: phi2 input != phi1 output");
    ad::init_mlp_params(ps, "ds.phi1", cfg.phi1, rng);
    ad::init_mlp_params(ps, "ds.phi2", cfg.phi2, rng);
    ad::MlpSpec head;
    head.dims = {cfg.phi2.out_dim(), n_classes};
    ad::init_mlp_params(ps, "ds.head", head, rng);
}

NodeId deepsets_features(Tape& t, ParameterStore& ps, const DeepSetsConfig& cfg,
                         const PointCloud& pc, RunMode mode, SplitMix64* dropout_rng) {
    if (pc.size() == 0) throw std::invalid_argument("deepsets_features: empty cloud");
    if (pc.dim() != cfg.phi1.in_dim())
        throw std::invalid_argument("deepsets_features: dimension mismatch");
    std::vector<double> coords;
    coords.reserve(pc.size() * pc.dim());
    for (std::size_t i = 0; i < pc.size(); ++i) {
        auto p = pc.point(i);
        coords.insert(coords.end(), p.begin(), p.end());
    }
    NodeId x = t.input(pc.size(), pc.dim(), std::move(coords));
    NodeId a = ad::mlp_forward(t, ps, "ds.phi1", cfg.phi1, x, mode, dropout_rng);
    NodeId pooled = t.sum_pool_rows(a);
    return ad::mlp_forward(t, ps, "ds.phi2", cfg.phi2, pooled, mode, dropout_rng);
}

NodeId deepsets_classify(Tape& t, ParameterStore& ps, const DeepSetsConfig& cfg,
                         const PointCloud& pc, RunMode mode, SplitMix64* dropout_rng) {
    NodeId f = deepsets_features(t, ps, cfg, pc, mode, dropout_rng);
    return t.affine(ps, "ds.head.l0.W", "ds.head.l0.b", f);
}

// ---------------------------------------------------------------------------
// experiment plumbing
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (batch_size < 1) throw InputError("config: batch_size must be >= 1");
    if (folds < 2) throw InputError("config: folds must be >= 2");
    if (epochs < 1 || epochs_phase1 < 1 || epochs_phase2 < 1)
        throw InputError("config: epoch counts must be >= 1");
    if (!(eta_max > 0.0) || !(eta_max_phase1 > 0.0))
        throw InputError("config: learning rates must be > 0");
    if (n_warmup < 1) throw InputError("config: n_warmup must be >= 1");
    if (eval_mode != "holdout" && eval_mode != "cv")
        throw InputError("config: eval must be holdout or cv");
    if (degree < 0 || degree > 1) throw InputError("config: degree must be 0 or 1");
    if (n_points < 4) throw InputError("config: n_points must be >= 4");
}

LabelledData make_dataset(const ExperimentConfig& cfg, std::size_t count,
                          std::uint64_t base_seed, bool with_clouds) {
    LabelledData data;
    data.labels.reserve(count);
    data.dmats.reserve(count);
    const bool surrogate = (cfg.task == "protein_surrogate");
    for (std::size_t k = 0; k < count; ++k) {
        const std::uint64_t seed = base_seed + k;
        if (surrogate) {
            data.dmats.push_back(
                generate_surrogate_dissimilarity(cfg.n_points, cfg.noise_sigma, seed));
        } else {
            PointCloud pc =
                generate_synthetic(synthetic_task_from_string(cfg.task), cfg.n_points,
                                   cfg.n_outliers, cfg.noise_sigma, seed);
            data.dmats.push_back(pairwise_distances(pc));
            if (with_clouds) data.clouds.push_back(std::move(pc));
        }
        data.labels.push_back(static_cast<int>(seed % 2));
    }
    return data;
}

MetricsLog::MetricsLog(std::ostream* os) : os_(os) {}

void MetricsLog::record(int epoch, int phase, int fold, double loss, double accuracy,
                        double lr, double mean_diag) {
    if (!os_) return;
    (*os_) << epoch << ',' << phase << ',' << fold << ',' << format_double(loss)
           << ',' << format_double(accuracy) << ',' << format_double(lr) << ','
           << format_double(mean_diag) << '\n';
}

namespace {

int argmax_row(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

void shuffle_indices(std::vector<std::size_t>& idx, SplitMix64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.next_below(i)]);
}

struct EpochStats {
    double loss_sum = 0.0;
    std::size_t n = 0;
    std::size_t correct = 0;
    double diag_sum = 0.0;
};

} // namespace

TrainOutcome train_topo_classifier(
    const ExperimentConfig& cfg, const TopoPipeline& pipe, const LabelledData& train,
    const LabelledData& test, ParameterStore& ps, MetricsLog* metrics, int fold,
    int phase, const std::vector<std::vector<double>>* extra_train,
    const std::vector<std::vector<double>>* extra_test) {
    cfg.validate();
    if (pipe.extra_feature_dim > 0 && (!extra_train || !extra_test))
        throw std::invalid_argument("train_topo_classifier: extra features missing");

    const std::size_t n = train.size();
    const bool fixed_filtration = pipe.mode != FiltrationMode::learned;

    // For constant weights the diagram never changes; compute it once.
    std::vector<std::vector<double>> cached_coords(fixed_filtration ? n : 0);
    std::vector<std::vector<double>> cached_test;
    auto fixed_coords = [&](const DistanceMatrix& d) {
        WeightVector w(d.size(), 0.0);
        if (pipe.mode == FiltrationMode::dtm) w = dtm_weights(d, pipe.k0, pipe.q);
        Filtration f = weighted_rips_filtration(d, w, pipe.degree + 1, pipe.t_max);
        PersistenceDiagram diag = compute_persistence(f, pipe.degree);
        std::vector<double> coords;
        for (const auto& p : diag.points)
            if (p.degree == pipe.degree && !p.essential()) {
                coords.push_back(p.birth);
                coords.push_back(p.death);
            }
        return coords;
    };
    if (fixed_filtration) {
        for (std::size_t i = 0; i < n; ++i) cached_coords[i] = fixed_coords(train.dmats[i]);
        cached_test.resize(test.size());
        for (std::size_t i = 0; i < test.size(); ++i)
            cached_test[i] = fixed_coords(test.dmats[i]);
    }

    auto example_loss = [&](Tape& t, const DistanceMatrix& d,
                            const std::vector<double>* cached, int label,
                            std::span<const double> extra, RunMode mode,
                            SplitMix64* drop_rng, std::size_t* diag_size,
                            int* predicted) {
        NodeId logits;
        if (cached) {
            NodeId pts = t.input(cached->size() / 2, 2, *cached);
            NodeId feat = topo_feature(t, ps, pipe.perslay, pts);
            if (pipe.extra_feature_dim > 0) {
                NodeId e = t.input(1, extra.size(),
                                   std::vector<double>(extra.begin(), extra.end()));
                feat = t.concat_cols(e, feat);
            }
            logits = t.affine(ps, "clf.head.l0.W", "clf.head.l0.b", feat);
            if (diag_size) *diag_size = cached->size() / 2;
        } else {
            PersistenceDiagram diag;
            logits = topo_logits(t, ps, pipe, d, extra, &diag, mode, drop_rng);
            if (diag_size) {
                *diag_size = 0;
                for (const auto& p : diag.points)
                    if (p.degree == pipe.degree && !p.essential()) ++(*diag_size);
            }
        }
        if (predicted) *predicted = argmax_row(t.value(logits));
        return t.cross_entropy(logits, label);
    };

    TrainOutcome out;
    AdamState adam;
    Tape tape;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;

    double last_diag_mean = 0.0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = ad::lr_schedule(epoch, cfg.eta_max, cfg.n_warmup);
        SplitMix64 shuffle_rng = SplitMix64::substream(
            cfg.seed, 1000000ULL * static_cast<std::uint64_t>(phase) +
                          10000ULL * static_cast<std::uint64_t>(fold) +
                          static_cast<std::uint64_t>(epoch));
        SplitMix64 drop_rng = SplitMix64::substream(
            cfg.seed, 900000000ULL + 1000000ULL * static_cast<std::uint64_t>(phase) +
                          static_cast<std::uint64_t>(epoch));
        shuffle_indices(idx, shuffle_rng);

        EpochStats stats;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - start);
            ps.zero_grad();
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = idx[b];
                tape.clear();
                std::size_t diag_size = 0;
                int predicted = -1;
                std::span<const double> extra =
                    pipe.extra_feature_dim > 0
                        ? std::span<const double>((*extra_train)[i])
                        : std::span<const double>();
                NodeId loss = example_loss(
                    tape, train.dmats[i],
                    fixed_filtration ? &cached_coords[i] : nullptr, train.labels[i],
                    extra, RunMode::train, &drop_rng, &diag_size, &predicted);
                const double lv = tape.value(loss)[0];
                if (!std::isfinite(lv))
                    throw NumericalError("training loss is not finite");
                tape.backward(loss, std::span<const double>(&inv, 1));
                stats.loss_sum += lv;
                stats.n += 1;
                stats.correct += (predicted == train.labels[i]) ? 1 : 0;
                stats.diag_sum += static_cast<double>(diag_size);
            }
            adam_step(ps, adam, lr);
        }
        const double mean_loss = stats.loss_sum / static_cast<double>(stats.n);
        const double acc = static_cast<double>(stats.correct) /
                           static_cast<double>(stats.n);
        last_diag_mean = stats.diag_sum / static_cast<double>(stats.n);
        out.epoch_losses.push_back(mean_loss);
        if (metrics) metrics->record(epoch, phase, fold, mean_loss, acc, lr,
                                     last_diag_mean);
    }
    out.mean_diagram_size = last_diag_mean;

    // held-out evaluation
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        tape.clear();
        int predicted = -1;
        std::span<const double> extra =
            pipe.extra_feature_dim > 0 ? std::span<const double>((*extra_test)[i])
                                       : std::span<const double>();
        NodeId loss = example_loss(tape, test.dmats[i],
                                   fixed_filtration ? &cached_test[i] : nullptr,
                                   test.labels[i], extra, RunMode::eval, nullptr,
                                   nullptr, &predicted);
        loss_sum += tape.value(loss)[0];
        correct += (predicted == test.labels[i]) ? 1 : 0;
    }
    out.test_loss = test.size() ? loss_sum / static_cast<double>(test.size()) : 0.0;
    out.test_accuracy =
        test.size() ? static_cast<double>(correct) / static_cast<double>(test.size())
                    : 0.0;
    return out;
}

TrainOutcome train_deepsets_classifier(const ExperimentConfig& cfg,
                                       const DeepSetsConfig& ds,
                                       const LabelledData& train,
                                       const LabelledData& test, ParameterStore& ps,
                                       MetricsLog* metrics, int fold, int phase) {
    cfg.validate();
    if (train.clouds.size() != train.size() || test.clouds.size() != test.size())
        throw std::invalid_argument("train_deepsets_classifier: clouds required");

    TrainOutcome out;
    AdamState adam;
    Tape tape;
    const std::size_t n = train.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = ad::lr_schedule(epoch, cfg.eta_max, cfg.n_warmup);
        SplitMix64 shuffle_rng = SplitMix64::substream(
            cfg.seed, 1000000ULL * static_cast<std::uint64_t>(phase) +
                          10000ULL * static_cast<std::uint64_t>(fold) +
                          static_cast<std::uint64_t>(epoch));
        SplitMix64 drop_rng = SplitMix64::substream(
            cfg.seed, 900000000ULL + 1000000ULL * static_cast<std::uint64_t>(phase) +
                          static_cast<std::uint64_t>(epoch));
        shuffle_indices(idx, shuffle_rng);

        EpochStats stats;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - start);
            ps.zero_grad();
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = idx[b];
                tape.clear();
                NodeId logits = deepsets_classify(tape, ps, ds, train.clouds[i],
                                                  RunMode::train, &drop_rng);
                int predicted = argmax_row(tape.value(logits));
                NodeId loss = tape.cross_entropy(logits, train.labels[i]);
                const double lv = tape.value(loss)[0];
                if (!std::isfinite(lv))
                    throw NumericalError("training loss is not finite");
                tape.backward(loss, std::span<const double>(&inv, 1));
                stats.loss_sum += lv;
                stats.n += 1;
                stats.correct += (predicted == train.labels[i]) ? 1 : 0;
            }
            adam_step(ps, adam, lr);
        }
        const double mean_loss = stats.loss_sum / static_cast<double>(stats.n);
        const double acc = static_cast<double>(stats.correct) /
                           static_cast<double>(stats.n);
        out.epoch_losses.push_back(mean_loss);
        if (metrics) metrics->record(epoch, phase, fold, mean_loss, acc, lr, 0.0);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        tape.clear();
        NodeId logits = deepsets_classify(tape, ps, ds, test.clouds[i], RunMode::eval);
        correct += (argmax_row(tape.value(logits)) == test.labels[i]) ? 1 : 0;
        NodeId loss = tape.cross_entropy(logits, test.labels[i]);
        loss_sum += tape.value(loss)[0];
    }
    out.test_loss = test.size() ? loss_sum / static_cast<double>(test.size()) : 0.0;
    out.test_accuracy =
        test.size() ? static_cast<double>(correct) / static_cast<double>(test.size())
                    : 0.0;
    return out;
}

namespace {

std::uint64_t fnv1a_bytes(const void* data, std::size_t len, std::uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t hash_params(const ParameterStore& ps, const std::string& prefix) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& [name, p] : ps) {
        if (name.rfind(prefix, 0) != 0) continue;
        h = fnv1a_bytes(name.data(), name.size(), h);
        h = fnv1a_bytes(p.value.data(), p.value.size() * sizeof(double), h);
        h = fnv1a_bytes(p.m.data(), p.m.size() * sizeof(double), h);
        h = fnv1a_bytes(p.v.data(), p.v.size() * sizeof(double), h);
    }
    return h;
}

std::vector<std::vector<double>> frozen_features(ParameterStore& ps,
                                                 const DeepSetsConfig& ds,
                                                 const LabelledData& data) {
    std::vector<std::vector<double>> out(data.size());
    Tape tape;
    for (std::size_t i = 0; i < data.size(); ++i) {
        tape.clear();
        NodeId f = deepsets_features(tape, ps, ds, data.clouds[i], RunMode::eval);
        out[i] = tape.value(f);
    }
    return out;
}

} // namespace

TwoPhaseResult two_phase_train(const ExperimentConfig& cfg, const LabelledData& train,
                               const LabelledData& test, MetricsLog* metrics,
                               int fold) {
    cfg.validate();
    TwoPhaseResult res;
    if (train.clouds.empty())
        throw std::invalid_argument("two_phase_train: coordinate clouds required");
    const std::size_t dim = train.clouds.front().dim();
    res.deepsets_cfg = DeepSetsConfig::preset(cfg.deepsets_preset, dim);

    // Phase 1: backbone + disposable linear head.
    SplitMix64 init1 = SplitMix64::substream(cfg.seed, 11);
    init_deepsets(res.deepsets_params, res.deepsets_cfg, 2, init1);
    ExperimentConfig cfg1 = cfg;
    cfg1.epochs = cfg.epochs_phase1;
    cfg1.eta_max = cfg.eta_max_phase1;
    TrainOutcome out1 = train_deepsets_classifier(cfg1, res.deepsets_cfg, train, test,
                                                  res.deepsets_params, metrics, fold, 1);
    res.phase1_accuracy = out1.test_accuracy;

    // Freeze the backbone and cache its (now constant) features. The head from
    // phase 1 is discarded.
    auto features_train = frozen_features(res.deepsets_params, res.deepsets_cfg, train);
    auto features_test = frozen_features(res.deepsets_params, res.deepsets_cfg, test);
    const std::size_t feat_dim = features_train.front().size();

    // Phase 2 store: frozen backbone copies (exercising the freeze contract in
    // the optimizer) + fresh topological branch and joint head.
    for (const auto& [name, p] : res.deepsets_params) {
        if (name.rfind("ds.head", 0) == 0) continue;
        auto& copy = res.topo_params.add(name, p.shape, p.value);
        copy.trainable = false;
    }
    const std::uint64_t frozen_before = hash_params(res.topo_params, "ds.");

    res.pipeline.mode = filtration_mode_from_string(cfg.filtration);
    res.pipeline.wnet = WeightNetConfig::preset(cfg.wnet_preset);
    res.pipeline.perslay.n_centers = cfg.perslay_centers;
    res.pipeline.perslay.out_dim = cfg.perslay_out;
    res.pipeline.k0 = cfg.k0;
    res.pipeline.q = cfg.q;
    res.pipeline.degree = cfg.degree;
    res.pipeline.t_max = cfg.t_max;
    res.pipeline.extra_feature_dim = feat_dim;

    double t_cap = cfg.t_cap;
    if (!(t_cap > 0.0)) {
        std::vector<PersistenceDiagram> diags;
        for (const auto& d : train.dmats) {
            WeightVector w(d.size(), 0.0);
            diags.push_back(compute_persistence(
                weighted_rips_filtration(d, w, cfg.degree + 1, cfg.t_max), cfg.degree));
        }
        t_cap = default_t_cap(diags, cfg.degree);
    }
    res.t_cap = t_cap;

    SplitMix64 init2 = SplitMix64::substream(cfg.seed, 12);
    init_topo_pipeline(res.topo_params, res.pipeline, t_cap, init2);

    ExperimentConfig cfg2 = cfg;
    cfg2.epochs = cfg.epochs_phase2;
    cfg2.eta_max = cfg.eta_max;
    TrainOutcome out2 = train_topo_classifier(cfg2, res.pipeline, train, test,
                                              res.topo_params, metrics, fold, 2,
                                              &features_train, &features_test);
    res.phase2_accuracy = out2.test_accuracy;
    res.frozen_backbone_intact =
        hash_params(res.topo_params, "ds.") == frozen_before;
    return res;
}

// ---------------------------------------------------------------------------
// distance-to-measure regression
// ---------------------------------------------------------------------------

namespace {

// Mixed-shape 2-D clouds in the unit square so the weight targets vary.
PointCloud make_regression_cloud(std::size_t n, std::uint64_t seed) {
    SplitMix64 pick = SplitMix64::substream(seed, 21);
    SplitMix64 rng = SplitMix64::substream(seed, 22);
    PointCloud pc(2, n);
    const std::uint64_t shape = pick.next_below(3);
    for (std::size_t i = 0; i < n; ++i) {
        double p[2];
        if (shape == 0) { // uniform square
            p[0] = rng.uniform01();
            p[1] = rng.uniform01();
        } else if (shape == 1) { // noisy circle with a few stray points
            if (i < n - 3) {
                double th = 6.283185307179586 * rng.uniform01();
                p[0] = 0.5 + 0.35 * std::cos(th) + 0.02 * rng.normal();
                p[1] = 0.5 + 0.35 * std::sin(th) + 0.02 * rng.normal();
            } else {
                p[0] = rng.uniform01();
                p[1] = rng.uniform01();
            }
        } else { // two blobs
            double cx = (i % 2 == 0) ? 0.3 : 0.7;
            p[0] = cx + 0.08 * rng.normal();
            p[1] = cx + 0.08 * rng.normal();
        }
        pc.add(p);
    }
    return pc;
}

} // namespace

RegressionResult dtm_regression_train(const ExperimentConfig& cfg, std::size_t k0,
                                      double q, MetricsLog* metrics) {
    cfg.validate();
    RegressionResult res;
    res.wnet = WeightNetConfig::preset(cfg.wnet_preset);
    res.wnet.final_sigma = -1.0; // plain fan-in init for regression
    // Sum pooling makes hidden activations grow with cloud size; per-layer
    // normalization keeps the regression landscape scaled to the targets.
    // Statistics come from the cloud being processed (train mode) both during
    // fitting and at held-out evaluation, so the applied function is exactly
    // the trained one; running averages stay untouched.
    set_batch_norm(res.wnet, true);

    const std::size_t n_train = cfg.n_train, n_test = cfg.n_test;
    std::vector<DistanceMatrix> dmats;
    std::vector<WeightVector> targets;
    dmats.reserve(n_train + n_test);
    targets.reserve(n_train + n_test);
    for (std::size_t k = 0; k < n_train + n_test; ++k) {
        PointCloud pc = make_regression_cloud(cfg.n_points, cfg.seed + 1000 + k);
        dmats.push_back(pairwise_distances(pc));
        targets.push_back(dtm_weights(dmats.back(), k0, q));
    }

    SplitMix64 init = SplitMix64::substream(cfg.seed, 31);
    init_weight_net(res.params, res.wnet, init);

    AdamState adam;
    Tape tape;
    std::vector<std::size_t> idx(n_train);
    for (std::size_t i = 0; i < n_train; ++i) idx[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = ad::lr_schedule(epoch, cfg.eta_max, cfg.n_warmup);
        SplitMix64 shuffle_rng = SplitMix64::substream(cfg.seed, 40000ULL + epoch);
        shuffle_indices(idx, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t stop = std::min(n_train, start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - start);
            res.params.zero_grad();
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = idx[b];
                tape.clear();
                NodeId w = weights_for_cloud(tape, res.params, res.wnet, dmats[i],
                                             ad::RunMode::train, nullptr, false);
                NodeId loss = tape.mse_against(
                    w, std::vector<double>(targets[i].begin(), targets[i].end()));
                const double lv = tape.value(loss)[0];
                if (!std::isfinite(lv))
                    throw NumericalError("regression loss is not finite");
                tape.backward(loss, std::span<const double>(&inv, 1));
                loss_sum += lv;
            }
            adam_step(res.params, adam, lr);
        }
        const double mean_loss = loss_sum / static_cast<double>(n_train);
        res.epoch_losses.push_back(mean_loss);
        if (metrics) metrics->record(epoch, 1, 0, mean_loss, 0.0, lr, 0.0);
    }

    double sq_sum = 0.0;
    std::size_t n_pts = 0;
    for (std::size_t i = n_train; i < n_train + n_test; ++i) {
        tape.clear();
        NodeId w = weights_for_cloud(tape, res.params, res.wnet, dmats[i],
                                     ad::RunMode::train, nullptr, false);
        const auto& pred = tape.value(w);
        for (std::size_t j = 0; j < pred.size(); ++j) {
            double diff = pred[j] - targets[i][j];
            sq_sum += diff * diff;
        }
        n_pts += pred.size();
    }
    res.held_out_mse = sq_sum / static_cast<double>(n_pts);
    return res;
}

} // namespace filtlearn
