#include "filtlearn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "filtlearn/perslay.hpp"
#include "filtlearn/training.hpp"
#include "filtlearn/weightnet.hpp"

namespace filtlearn {

using ad::NodeId;
using ad::ParameterStore;
using ad::Tape;

void GradCheckSummary::add(GradCheckReport r) {
    max_rel_err = std::max(max_rel_err, r.max_rel_err);
    all_passed = all_passed && r.passed;
    reports.push_back(std::move(r));
}

void GradCheckSummary::merge(const GradCheckSummary& other) {
    for (const auto& r : other.reports) add(r);
}

double grad_rel_err(double analytic, double fd) {
    return std::abs(analytic - fd) /
           std::max({1.0, std::abs(analytic), std::abs(fd)});
}

GradCheckReport fd_check_params(const std::string& name, ParameterStore& ps,
                                const std::function<double(bool)>& loss, double h,
                                double tol) {
    GradCheckReport rep;
    rep.name = name;
    ps.zero_grad();
    loss(true);
    std::vector<std::pair<ad::Param*, std::vector<double>>> analytic;
    for (auto& [pname, p] : ps)
        if (p.trainable) analytic.emplace_back(&p, p.grad);
    for (auto& [p, grads] : analytic) {
        for (std::size_t i = 0; i < p->count(); ++i) {
            const double old = p->value[i];
            p->value[i] = old + h;
            const double fp = loss(false);
            p->value[i] = old - h;
            const double fm = loss(false);
            p->value[i] = old;
            const double fd = (fp - fm) / (2.0 * h);
            rep.max_rel_err = std::max(rep.max_rel_err, grad_rel_err(grads[i], fd));
            rep.n_checked += 1;
        }
    }
    rep.passed = rep.max_rel_err < tol;
    return rep;
}

GradCheckReport fd_check_vector(
    const std::string& name, std::vector<double> x,
    const std::function<double(std::span<const double>, std::vector<double>*)>& f,
    double h, double tol) {
    GradCheckReport rep;
    rep.name = name;
    std::vector<double> analytic;
    f(x, &analytic);
    if (analytic.size() != x.size())
        throw std::logic_error("fd_check_vector: gradient size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double old = x[i];
        x[i] = old + h;
        const double fp = f(x, nullptr);
        x[i] = old - h;
        const double fm = f(x, nullptr);
        x[i] = old;
        const double fd = (fp - fm) / (2.0 * h);
        rep.max_rel_err = std::max(rep.max_rel_err, grad_rel_err(analytic[i], fd));
        rep.n_checked += 1;
    }
    rep.passed = rep.max_rel_err < tol;
    return rep;
}

double tie_margin(const DistanceMatrix& d, const WeightVector& w, int max_dim,
                  double t_max) {
    // Cell values are generated by the n vertex weights plus the averaged
    // term of each edge whose argmax it is; every other cell value is a
    // bitwise copy that co-moves with its generator under perturbation
    // (triangles copy their maximal edge, vertex-dominated edges copy the
    // weight). So nonsmoothness can only come from (a) two independent
    // generators crossing, (b) an edge's argmax term flipping, (c) a
    // triangle's maximal edge flipping, or (d) a value crossing t_max.
    const std::size_t n = d.size();
    double margin = std::numeric_limits<double>::infinity();
    auto top_two_gap = [&](double a, double b, double c) {
        double v[3] = {a, b, c};
        std::sort(v, v + 3);
        margin = std::min(margin, v[2] == v[1] ? 0.0 : v[2] - v[1]);
    };

    std::vector<double> gen(w.begin(), w.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isfinite(t_max)) margin = std::min(margin, std::abs(w[i] - t_max));
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = (d(i, j) + w[i] + w[j]) / 2.0;
            top_two_gap(w[i], w[j], avg);
            if (avg >= w[i] && avg >= w[j]) gen.push_back(avg);
            if (std::isfinite(t_max))
                margin = std::min(
                    margin, std::abs(edge_appearance(d(i, j), w[i], w[j]) - t_max));
        }
    }
    if (max_dim >= 2) {
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                for (std::size_t c = b + 1; c < n; ++c)
                    top_two_gap(edge_appearance(d(a, b), w[a], w[b]),
                                edge_appearance(d(a, c), w[a], w[c]),
                                edge_appearance(d(b, c), w[b], w[c]));
    }
    std::sort(gen.begin(), gen.end());
    for (std::size_t k = 1; k < gen.size(); ++k)
        margin = std::min(margin, gen[k] == gen[k - 1] ? 0.0 : gen[k] - gen[k - 1]);
    return margin;
}

namespace {

std::vector<double> rand_vec(SplitMix64& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Values bounded away from zero so ReLU never differentiates at its kink.
std::vector<double> rand_vec_signed(SplitMix64& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) {
        double mag = rng.uniform(0.05, 1.0);
        x = rng.uniform01() < 0.5 ? -mag : mag;
    }
    return v;
}

// 6 unit-square points with pairwise separation >= 0.2 (deterministic
// rejection sampling).
PointCloud separated_cloud(SplitMix64& rng, std::size_t n = 6) {
    PointCloud pc(2, n);
    while (pc.size() < n) {
        double p[2] = {rng.uniform01(), rng.uniform01()};
        bool ok = true;
        for (std::size_t i = 0; i < pc.size(); ++i)
            if (euclidean_distance(pc.point(i), std::span<const double>(p, 2)) < 0.2)
                ok = false;
        if (ok) pc.add(p);
    }
    return pc;
}

WeightNetConfig tiny_weight_net() {
    WeightNetConfig cfg;
    cfg.phi1.dims = {1, 4, 5};
    cfg.phi2.dims = {5, 3};
    cfg.phi3.dims = {1, 4, 5};
    cfg.phi4.dims = {5, 6};
    cfg.phi5.dims = {6, 4};
    cfg.phi6.dims = {7, 5, 1};
    cfg.final_sigma = -1.0; // generic last layer, gradients visible everywhere
    return cfg;
}

// Fresh initializations are not generic points for finite differences: biases
// start at exactly zero while the distance column contains exact zeros (the
// diagonal), parking first-layer pre-activations on the ReLU kink where the
// subgradient and the centered difference legitimately disagree. Nudging
// every trainable scalar off its initial value restores genericity.
void jitter_params(ad::ParameterStore& ps, SplitMix64& rng) {
    for (auto& [name, p] : ps) {
        (void)name;
        if (!p.trainable) continue;
        for (auto& v : p.value) {
            const double mag = rng.uniform(0.01, 0.05);
            v += rng.uniform01() < 0.5 ? -mag : mag;
        }
    }
}

} // namespace

GradCheckSummary gradcheck_primitives(std::uint64_t seed) {
    GradCheckSummary sum;
    SplitMix64 rng = SplitMix64::substream(seed, 100);

    { // affine: parameters and input
        ParameterStore ps;
        ps.add("t.W", {3, 4}, rand_vec_signed(rng, 12));
        ps.add("t.b", {3}, rand_vec_signed(rng, 3));
        auto xv = rand_vec_signed(rng, 8);
        auto target = rand_vec(rng, 6, -1.0, 1.0);
        sum.add(fd_check_params("affine/params", ps, [&](bool g) {
            Tape t;
            NodeId y = t.affine(ps, "t.W", "t.b", t.input(2, 4, xv));
            NodeId L = t.mse_against(y, target);
            if (g) t.backward(L);
            return t.value(L)[0];
        }));
        sum.add(fd_check_vector(
            "affine/input", xv,
            [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                NodeId xn = t.input(2, 4, {x.begin(), x.end()});
                NodeId L = t.mse_against(t.affine(ps, "t.W", "t.b", xn), target);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
    }

    { // relu
        auto xv = rand_vec_signed(rng, 12);
        auto target = rand_vec(rng, 12, -1.0, 1.0);
        sum.add(fd_check_vector(
            "relu/input", xv, [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                NodeId xn = t.input(3, 4, {x.begin(), x.end()});
                NodeId L = t.mse_against(t.relu(xn), target);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
    }

    { // add + scale chained
        auto av = rand_vec_signed(rng, 6);
        auto bv = rand_vec_signed(rng, 6);
        auto target = rand_vec(rng, 6, -1.0, 1.0);
        sum.add(fd_check_vector(
            "add-scale/input", av,
            [&](std::span<const double> a, std::vector<double>* g) {
                Tape t;
                NodeId an = t.input(2, 3, {a.begin(), a.end()});
                NodeId bn = t.input(2, 3, bv);
                NodeId L = t.mse_against(t.scale(t.add(an, bn), 1.7), target);
                if (g) {
                    t.backward(L);
                    *g = t.grad(an);
                }
                return t.value(L)[0];
            }));
    }

    { // batch norm, train and eval statistics
        ParameterStore ps;
        ps.add("bn.gamma", {3}, rand_vec(rng, 3, 0.5, 1.5));
        ps.add("bn.beta", {3}, rand_vec_signed(rng, 3));
        ps.add("bn.run_mean", {3}, rand_vec_signed(rng, 3)).trainable = false;
        ps.add("bn.run_var", {3}, rand_vec(rng, 3, 0.5, 2.0)).trainable = false;
        auto xv = rand_vec_signed(rng, 15);
        auto target = rand_vec(rng, 15, -1.0, 1.0);
        for (auto mode : {ad::RunMode::train, ad::RunMode::eval}) {
            const std::string tag =
                mode == ad::RunMode::train ? "batch-norm/train" : "batch-norm/eval";
            sum.add(fd_check_params(tag + "/params", ps, [&, mode](bool g) {
                Tape t;
                NodeId y = t.batch_norm(ps, "bn", t.input(5, 3, xv), mode,
                                        /*update_running=*/false);
                NodeId L = t.mse_against(y, target);
                if (g) t.backward(L);
                return t.value(L)[0];
            }));
            sum.add(fd_check_vector(
                tag + "/input", xv,
                [&, mode](std::span<const double> x, std::vector<double>* g) {
                    Tape t;
                    NodeId xn = t.input(5, 3, {x.begin(), x.end()});
                    NodeId L = t.mse_against(
                        t.batch_norm(ps, "bn", xn, mode, false), target);
                    if (g) {
                        t.backward(L);
                        *g = t.grad(xn);
                    }
                    return t.value(L)[0];
                }));
        }
    }

    { // dropout with a fixed mask (rng reseeded per evaluation)
        auto xv = rand_vec_signed(rng, 12);
        auto target = rand_vec(rng, 12, -1.0, 1.0);
        const std::uint64_t mask_seed = rng.next_u64();
        sum.add(fd_check_vector(
            "dropout/input", xv,
            [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                SplitMix64 mask_rng(mask_seed);
                NodeId xn = t.input(3, 4, {x.begin(), x.end()});
                NodeId L = t.mse_against(
                    t.dropout(xn, 0.3, mask_rng, ad::RunMode::train), target);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
    }

    { // segment sum pool (covers sum_pool_rows) and broadcast
        auto xv = rand_vec_signed(rng, 12);
        auto target = rand_vec(rng, 4, -1.0, 1.0);
        sum.add(fd_check_vector(
            "segment-sum-pool/input", xv,
            [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                NodeId xn = t.input(6, 2, {x.begin(), x.end()});
                NodeId L = t.mse_against(t.segment_sum_pool(xn, 3), target);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
        auto rv = rand_vec_signed(rng, 3);
        auto target2 = rand_vec(rng, 12, -1.0, 1.0);
        sum.add(fd_check_vector(
            "broadcast-rows/input", rv,
            [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                NodeId xn = t.input(1, 3, {x.begin(), x.end()});
                NodeId L = t.mse_against(t.broadcast_rows(xn, 4), target2);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
    }

    { // concat
        auto av = rand_vec_signed(rng, 4);
        auto bv = rand_vec_signed(rng, 6);
        auto target = rand_vec(rng, 10, -1.0, 1.0);
        sum.add(fd_check_vector(
            "concat-cols/input", av,
            [&](std::span<const double> a, std::vector<double>* g) {
                Tape t;
                NodeId an = t.input(2, 2, {a.begin(), a.end()});
                NodeId bn = t.input(2, 3, bv);
                NodeId L = t.mse_against(t.concat_cols(an, bn), target);
                if (g) {
                    t.backward(L);
                    *g = t.grad(an);
                }
                return t.value(L)[0];
            }));
    }

    { // cross entropy (already scalar)
        auto lv = rand_vec_signed(rng, 5);
        sum.add(fd_check_vector(
            "cross-entropy/input", lv,
            [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                NodeId xn = t.input(1, 5, {x.begin(), x.end()});
                NodeId L = t.cross_entropy(xn, 3);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
    }

    { // mse (its own scalarizer)
        auto pv = rand_vec_signed(rng, 6);
        auto target = rand_vec(rng, 6, -1.0, 1.0);
        sum.add(fd_check_vector(
            "mse/input", pv, [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                NodeId xn = t.input(2, 3, {x.begin(), x.end()});
                NodeId L = t.mse_against(xn, target);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
    }

    { // gaussian kernel sum: centers parameter and diagram-point input
        ParameterStore ps;
        ps.add("k.centers", {4, 2}, rand_vec(rng, 8, 0.0, 1.2));
        auto pv = rand_vec(rng, 10, 0.0, 1.2);
        auto target = rand_vec(rng, 4, -1.0, 1.0);
        sum.add(fd_check_params("gaussian-kernel/params", ps, [&](bool g) {
            Tape t;
            NodeId y = t.gaussian_kernel_sum(ps, "k.centers", t.input(5, 2, pv));
            NodeId L = t.mse_against(y, target);
            if (g) t.backward(L);
            return t.value(L)[0];
        }));
        sum.add(fd_check_vector(
            "gaussian-kernel/input", pv,
            [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                NodeId xn = t.input(5, 2, {x.begin(), x.end()});
                NodeId L =
                    t.mse_against(t.gaussian_kernel_sum(ps, "k.centers", xn), target);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
    }

    return sum;
}

GradCheckSummary gradcheck_weight_net(std::uint64_t seed) {
    GradCheckSummary sum;
    SplitMix64 rng = SplitMix64::substream(seed, 200);
    WeightNetConfig cfg = tiny_weight_net();
    ParameterStore ps;
    init_weight_net(ps, cfg, rng);
    jitter_params(ps, rng);
    PointCloud pc = separated_cloud(rng);
    DistanceMatrix d = pairwise_distances(pc);
    auto target = rand_vec(rng, pc.size(), -0.5, 0.5);
    sum.add(fd_check_params("weight-net/params", ps, [&](bool g) {
        Tape t;
        NodeId w = weights_for_cloud(t, ps, cfg, d);
        NodeId L = t.mse_against(w, target);
        if (g) t.backward(L);
        return t.value(L)[0];
    }));
    return sum;
}

GradCheckSummary gradcheck_perslay(std::uint64_t seed) {
    GradCheckSummary sum;
    SplitMix64 rng = SplitMix64::substream(seed, 300);
    PersLayConfig cfg;
    cfg.n_centers = 8;
    cfg.out_dim = 4;
    ParameterStore ps;
    init_perslay(ps, cfg, 1.0, rng);
    std::vector<double> pts(14);
    for (std::size_t k = 0; k < 7; ++k) {
        double b = rng.uniform(0.0, 0.8);
        pts[2 * k] = b;
        pts[2 * k + 1] = b + rng.uniform(0.05, 0.4);
    }
    auto target = rand_vec(rng, cfg.out_dim, -1.0, 1.0);
    sum.add(fd_check_params("perslay/params", ps, [&](bool g) {
        Tape t;
        NodeId f = topo_feature(t, ps, cfg, t.input(7, 2, pts));
        NodeId L = t.mse_against(f, target);
        if (g) t.backward(L);
        return t.value(L)[0];
    }));
    sum.add(fd_check_vector(
        "perslay/diagram-input", pts,
        [&](std::span<const double> x, std::vector<double>* g) {
            Tape t;
            NodeId xn = t.input(7, 2, {x.begin(), x.end()});
            NodeId L = t.mse_against(topo_feature(t, ps, cfg, xn), target);
            if (g) {
                t.backward(L);
                *g = t.grad(xn);
            }
            return t.value(L)[0];
        }));
    return sum;
}

GradCheckSummary gradcheck_full_loss(std::uint64_t seed) {
    GradCheckSummary sum;
    const double inf = std::numeric_limits<double>::infinity();
    constexpr double kSeparation = 1e-4;

    TopoPipeline pipe;
    pipe.wnet = tiny_weight_net();
    // Small last-layer init keeps the learned weights well below the cloud's
    // 0.2 point separation, so the averaged edge term wins every edge and no
    // structural value ties (vertex == edge) can occur.
    pipe.wnet.final_sigma = 0.02;
    pipe.perslay.n_centers = 8;
    pipe.perslay.out_dim = 4;
    pipe.degree = 1;

    // Deterministic search for a generic instance: the filtration the current
    // parameters induce must sit clear of every tie so finite differences stay
    // on a single smooth piece.
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        SplitMix64 rng = SplitMix64::substream(seed, 400 + attempt);
        ParameterStore ps;
        TopoPipeline p = pipe;
        init_topo_pipeline(ps, p, 1.0, rng);
        jitter_params(ps, rng);
        PointCloud pc = separated_cloud(rng);
        DistanceMatrix d = pairwise_distances(pc);

        Tape probe;
        NodeId wn = weights_for_cloud(probe, ps, p.wnet, d);
        WeightVector w(probe.value(wn).begin(), probe.value(wn).end());
        if (tie_margin(d, w, p.degree + 1, inf) <= kSeparation) continue;

        const int label = static_cast<int>(attempt % 2);
        sum.add(fd_check_params("full-loss/params", ps, [&](bool g) {
            Tape t;
            NodeId L = topo_loss(t, ps, p, d, label);
            if (g) t.backward(L);
            return t.value(L)[0];
        }));

        // Gradient through the pairing alone: treat the weights as the input.
        sum.add(fd_check_vector(
            "full-loss/pairing-input", w,
            [&](std::span<const double> x, std::vector<double>* g) {
                Tape t;
                NodeId xn =
                    t.input(x.size(), 1, std::vector<double>(x.begin(), x.end()));
                NodeId ptsn = persistence_node(t, d, xn, p.degree, p.t_max);
                NodeId feat = topo_feature(t, ps, p.perslay, ptsn);
                NodeId logits = t.affine(ps, "clf.head.l0.W", "clf.head.l0.b", feat);
                NodeId L = t.cross_entropy(logits, label);
                if (g) {
                    t.backward(L);
                    *g = t.grad(xn);
                }
                return t.value(L)[0];
            }));
        return sum;
    }
    GradCheckReport rep;
    rep.name = "full-loss/no-generic-instance";
    rep.passed = false;
    sum.add(rep);
    return sum;
}

GradCheckSummary gradcheck_all(std::uint64_t seed) {
    GradCheckSummary sum;
    sum.merge(gradcheck_primitives(seed));
    sum.merge(gradcheck_weight_net(seed));
    sum.merge(gradcheck_perslay(seed));
    sum.merge(gradcheck_full_loss(seed));
    return sum;
}

} // namespace filtlearn
