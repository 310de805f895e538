#include "filtlearn/perslay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace filtlearn {

void init_perslay(ad::ParameterStore& ps, const PersLayConfig& cfg, double t_cap,
                  SplitMix64& rng) {
    if (cfg.n_centers < 1 || cfg.out_dim < 1)
        throw std::invalid_argument("init_perslay: empty configuration");
    if (!(t_cap > 0.0) || !std::isfinite(t_cap))
        throw std::invalid_argument("init_perslay: t_cap must be finite and > 0");

    // Smallest k whose strict upper triangle holds n_centers grid points.
    std::size_t k = 2;
    while (k * (k - 1) / 2 < cfg.n_centers) ++k;
    struct G {
        double b, d;
    };
    std::vector<G> grid;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
            grid.push_back({t_cap * static_cast<double>(a) / static_cast<double>(k - 1),
                            t_cap * static_cast<double>(b) / static_cast<double>(k - 1)});
    std::stable_sort(grid.begin(), grid.end(), [](const G& x, const G& y) {
        return (x.d - x.b) > (y.d - y.b);
    });
    grid.resize(cfg.n_centers);
    // Fixed reading order for the parameter itself.
    std::sort(grid.begin(), grid.end(), [](const G& x, const G& y) {
        if (x.b != y.b) return x.b < y.b;
        return x.d < y.d;
    });
    std::vector<double> centers;
    centers.reserve(2 * cfg.n_centers);
    for (const auto& g : grid) {
        centers.push_back(g.b);
        centers.push_back(g.d);
    }
    ps.add("perslay.centers", {cfg.n_centers, 2}, std::move(centers));

    ad::MlpSpec proj;
    proj.dims = {cfg.n_centers, cfg.out_dim};
    ad::init_mlp_params(ps, "perslay.proj", proj, rng);
}

ad::NodeId perslay_vectorize(ad::Tape& t, ad::ParameterStore& ps,
                             const PersLayConfig& cfg, ad::NodeId points) {
    ad::NodeId v = t.gaussian_kernel_sum(ps, "perslay.centers", points);
    if (t.cols(v) != cfg.n_centers)
        throw std::invalid_argument("perslay_vectorize: center count mismatch");
    return v;
}

ad::NodeId topo_feature(ad::Tape& t, ad::ParameterStore& ps, const PersLayConfig& cfg,
                        ad::NodeId points) {
    ad::NodeId v = perslay_vectorize(t, ps, cfg, points);
    return t.affine(ps, "perslay.proj.l0.W", "perslay.proj.l0.b", v);
}

ad::NodeId diagram_points_node(ad::Tape& t, const PersistenceDiagram& diag, int degree) {
    std::vector<double> coords;
    for (const auto& p : diag.points)
        if (p.degree == degree && !p.essential()) {
            coords.push_back(p.birth);
            coords.push_back(p.death);
        }
    const std::size_t n = coords.size() / 2;
    return t.input(n, 2, std::move(coords));
}

double default_t_cap(const std::vector<PersistenceDiagram>& diagrams, int degree) {
    std::vector<double> deaths;
    for (const auto& d : diagrams)
        for (const auto& p : d.points)
            if (p.degree == degree && !p.essential()) deaths.push_back(p.death);
    if (deaths.empty()) return 1.0;
    std::sort(deaths.begin(), deaths.end());
    std::size_t idx = (deaths.size() * 95 + 99) / 100; // ceil(0.95 n)
    if (idx > 0) --idx;
    double cap = deaths[idx];
    return cap > 0.0 ? cap : 1.0;
}

} // namespace filtlearn
