#include "filtlearn/weightnet.hpp"

#include <stdexcept>

namespace filtlearn {

using ad::MlpSpec;
using ad::NodeId;
using ad::Param;
using ad::ParameterStore;
using ad::RunMode;
using ad::Tape;

WeightNetConfig WeightNetConfig::preset(const std::string& name) {
    WeightNetConfig c;
    auto mk = [](std::vector<std::size_t> dims) {
        MlpSpec s;
        s.dims = std::move(dims);
        return s;
    };
    if (name == "paper-default") {
        c.phi1 = mk({1, 64, 128, 256});
        c.phi2 = mk({256, 128, 64, 8});
        c.phi3 = mk({1, 64, 128, 256});
        c.phi4 = mk({256, 256, 256, 256});
        c.phi5 = mk({256, 128, 64, 16});
        c.phi6 = mk({24, 256, 512, 256, 1});
    } else if (name == "r1") {
        c.phi1 = mk({1, 64, 128});
        c.phi2 = mk({128, 64, 8});
        c.phi3 = mk({1, 64, 128});
        c.phi4 = mk({128, 128, 128, 128});
        c.phi5 = mk({128, 64, 16});
        c.phi6 = mk({24, 256, 512, 256, 1});
    } else if (name == "r2") {
        c = preset("paper-default");
        c.phi6 = mk({24, 128, 128, 1});
    } else if (name == "r3") {
        c = preset("r1");
        c.phi6 = mk({24, 128, 128, 1});
    } else if (name == "r4") {
        c = preset("r3");
        c.phi4 = mk({128, 128});
    } else if (name == "desk") {
        c.phi1 = mk({1, 32, 64});
        c.phi2 = mk({64, 32, 8});
        c.phi3 = mk({1, 32, 64});
        c.phi4 = mk({64, 64});
        c.phi5 = mk({64, 32, 16});
        c.phi6 = mk({24, 64, 64, 1});
    } else {
        throw std::invalid_argument("WeightNetConfig: unknown preset " + name);
    }
    c.validate();
    return c;
}

void WeightNetConfig::validate() const {
    if (phi1.in_dim() != 1 || phi3.in_dim() != 1)
        throw std::invalid_argument("WeightNetConfig: phi1/phi3 take scalar distances");
    if (phi2.in_dim() != phi1.out_dim())
        throw std::invalid_argument("WeightNetConfig: phi2 input != phi1 output");
    if (phi4.in_dim() != phi3.out_dim())
        throw std::invalid_argument("WeightNetConfig: phi4 input != phi3 output");
    if (phi5.in_dim() != phi4.out_dim())
        throw std::invalid_argument("WeightNetConfig: phi5 input != phi4 output");
    if (phi6.in_dim() != phi5.out_dim() + phi2.out_dim())
        throw std::invalid_argument(
            "WeightNetConfig: phi6 input != descriptor + local widths");
    if (phi6.out_dim() != 1)
        throw std::invalid_argument("WeightNetConfig: phi6 must output a scalar");
}

void set_batch_norm(WeightNetConfig& cfg, bool on) {
    cfg.phi1.use_batch_norm = on;
    cfg.phi2.use_batch_norm = on;
    cfg.phi3.use_batch_norm = on;
    cfg.phi4.use_batch_norm = on;
    cfg.phi6.use_batch_norm = on;
}

bool uses_batch_norm(const WeightNetConfig& cfg) {
    return cfg.phi1.use_batch_norm || cfg.phi2.use_batch_norm ||
           cfg.phi3.use_batch_norm || cfg.phi4.use_batch_norm ||
           cfg.phi5.use_batch_norm || cfg.phi6.use_batch_norm;
}

void init_weight_net(ParameterStore& ps, const WeightNetConfig& cfg, SplitMix64& rng) {
    cfg.validate();
    ad::init_mlp_params(ps, "wnet.phi1", cfg.phi1, rng);
    ad::init_mlp_params(ps, "wnet.phi2", cfg.phi2, rng);
    ad::init_mlp_params(ps, "wnet.phi3", cfg.phi3, rng);
    ad::init_mlp_params(ps, "wnet.phi4", cfg.phi4, rng);
    ad::init_mlp_params(ps, "wnet.phi5", cfg.phi5, rng);
    ad::init_mlp_params(ps, "wnet.phi6", cfg.phi6, rng, cfg.final_sigma);
}

namespace {

// phi4(pool over each row's phi3 features): the per-point summaries g2,
// stacked as [n x phi4.out]. `prefix` switches between the weight net's and
// the matrix classifier's parameters.
NodeId per_point_summaries(Tape& t, ParameterStore& ps, const std::string& prefix,
                           const WeightNetConfig& cfg, const DistanceMatrix& d,
                           RunMode mode, SplitMix64* rng, bool update_running = true) {
    const std::size_t n = d.size();
    std::vector<double> all(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = d.row(i);
        std::copy(r.begin(), r.end(), all.begin() + i * n);
    }
    NodeId dists = t.input(n * n, 1, std::move(all));
    NodeId a = ad::mlp_forward(t, ps, prefix + ".phi3", cfg.phi3, dists, mode, rng,
                               update_running);
    NodeId pooled = t.segment_sum_pool(a, n);
    return ad::mlp_forward(t, ps, prefix + ".phi4", cfg.phi4, pooled, mode, rng,
                           update_running);
}

NodeId descriptor_from_summaries(Tape& t, ParameterStore& ps, const std::string& prefix,
                                 const WeightNetConfig& cfg, NodeId g2, RunMode mode,
                                 SplitMix64* rng, bool update_running = true) {
    NodeId pooled = t.sum_pool_rows(g2);
    return ad::mlp_forward(t, ps, prefix + ".phi5", cfg.phi5, pooled, mode, rng,
                           update_running);
}

// phi2(pool of phi1 over each point's distance list): [segments x phi2.out].
NodeId local_features(Tape& t, ParameterStore& ps, const WeightNetConfig& cfg,
                      NodeId dists_column, std::size_t segment_len, RunMode mode,
                      SplitMix64* rng, bool update_running = true) {
    NodeId a = ad::mlp_forward(t, ps, "wnet.phi1", cfg.phi1, dists_column, mode, rng,
                               update_running);
    NodeId pooled = t.segment_sum_pool(a, segment_len);
    return ad::mlp_forward(t, ps, "wnet.phi2", cfg.phi2, pooled, mode, rng,
                           update_running);
}

} // namespace

NodeId cloud_descriptor(Tape& t, ParameterStore& ps, const WeightNetConfig& cfg,
                        const DistanceMatrix& d, RunMode mode, SplitMix64* rng,
                        bool update_running) {
    NodeId g2 = per_point_summaries(t, ps, "wnet", cfg, d, mode, rng, update_running);
    return descriptor_from_summaries(t, ps, "wnet", cfg, g2, mode, rng,
                                     update_running);
}

NodeId weights_for_cloud(Tape& t, ParameterStore& ps, const WeightNetConfig& cfg,
                         const DistanceMatrix& d, RunMode mode, SplitMix64* rng,
                         bool update_running) {
    const std::size_t n = d.size();
    NodeId h = cloud_descriptor(t, ps, cfg, d, mode, rng, update_running);

    std::vector<double> all(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = d.row(i);
        std::copy(r.begin(), r.end(), all.begin() + i * n);
    }
    NodeId dists = t.input(n * n, 1, std::move(all));
    NodeId g1 = local_features(t, ps, cfg, dists, n, mode, rng, update_running);

    NodeId hb = t.broadcast_rows(h, n);
    NodeId cat = t.concat_cols(hb, g1);
    return ad::mlp_forward(t, ps, "wnet.phi6", cfg.phi6, cat, mode, rng,
                           update_running);
}

NodeId weight_for_point(Tape& t, ParameterStore& ps, const WeightNetConfig& cfg,
                        const DistanceMatrix& d, std::span<const double> dists_to_cloud,
                        RunMode mode, SplitMix64* rng) {
    if (dists_to_cloud.size() != d.size())
        throw std::invalid_argument("weight_for_point: distance list length mismatch");
    NodeId h = cloud_descriptor(t, ps, cfg, d, mode, rng);
    NodeId dists = t.input(dists_to_cloud.size(), 1,
                           std::vector<double>(dists_to_cloud.begin(),
                                               dists_to_cloud.end()));
    NodeId g1 = local_features(t, ps, cfg, dists, dists_to_cloud.size(), mode, rng);
    NodeId cat = t.concat_cols(h, g1);
    return ad::mlp_forward(t, ps, "wnet.phi6", cfg.phi6, cat, mode, rng);
}

void init_distmatrixnet(ParameterStore& ps, const WeightNetConfig& cfg,
                        std::size_t n_classes, SplitMix64& rng) {
    cfg.validate();
    if (n_classes < 2)
        throw std::invalid_argument("init_distmatrixnet: need at least 2 classes");
    ad::init_mlp_params(ps, "dmn.phi3", cfg.phi3, rng);
    ad::init_mlp_params(ps, "dmn.phi4", cfg.phi4, rng);
    ad::init_mlp_params(ps, "dmn.phi5", cfg.phi5, rng);
    MlpSpec head;
    head.dims = {cfg.phi5.out_dim(), n_classes};
    ad::init_mlp_params(ps, "dmn.head", head, rng);
}

NodeId distmatrixnet_classify(Tape& t, ParameterStore& ps, const WeightNetConfig& cfg,
                              const DistanceMatrix& d, RunMode mode, SplitMix64* rng) {
    NodeId g2 = per_point_summaries(t, ps, "dmn", cfg, d, mode, rng);
    NodeId h = descriptor_from_summaries(t, ps, "dmn", cfg, g2, mode, rng);
    const Param& head = ps.at("dmn.head.l0.W");
    MlpSpec spec;
    spec.dims = {head.shape[1], head.shape[0]};
    return ad::mlp_forward(t, ps, "dmn.head", spec, h, mode, rng);
}

} // namespace filtlearn
