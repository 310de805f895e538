// Acceptance gate. Each run checks one numbered criterion and prints exactly
// one line: "criterion N: PASS - <detail>" or "criterion N: FAIL - <detail>".
// usage: acceptance_suite <criterion 1..10> <path-to-cli>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "filtlearn/autodiff.hpp"
#include "filtlearn/filtration.hpp"
#include "filtlearn/geometry.hpp"
#include "filtlearn/gradcheck.hpp"
#include "filtlearn/io.hpp"
#include "filtlearn/optim.hpp"
#include "filtlearn/persistence.hpp"
#include "filtlearn/perslay.hpp"
#include "filtlearn/training.hpp"
#include "filtlearn/weightnet.hpp"

namespace fs = std::filesystem;
using namespace filtlearn;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string fmt(double v, const char* spec = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

DistanceMatrix random_dissimilarity(std::size_t n, SplitMix64& rng) {
    DistanceMatrix d(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            d.set(i, j, 0.1 + 1.9 * rng.uniform01());
    return d;
}

// ---------------------------------------------------------------------------
// criterion 1: production reduction == naive textbook reduction
// ---------------------------------------------------------------------------

// Slow, obviously-correct column reduction over the whole filtration at once:
// sets of global indices, no clearing, no dimension splitting.
PersistenceDiagram naive_persistence(const Filtration& f, int max_degree) {
    const std::size_t m = f.size();
    std::map<std::tuple<int, int, int, int>, int> index;
    for (std::size_t k = 0; k < m; ++k) {
        const Simplex& s = f.cell(k).s;
        index[{s.dim, s.v[0], s.v[1], s.v[2]}] = static_cast<int>(k);
    }
    auto facet_indices = [&](const Simplex& s) {
        std::set<int> out;
        if (s.dim == 1) {
            out.insert(index.at({0, s.v[0], -1, -1}));
            out.insert(index.at({0, s.v[1], -1, -1}));
        } else if (s.dim == 2) {
            out.insert(index.at({1, s.v[0], s.v[1], -1}));
            out.insert(index.at({1, s.v[0], s.v[2], -1}));
            out.insert(index.at({1, s.v[1], s.v[2], -1}));
        }
        return out;
    };

    std::vector<std::set<int>> stored(m);
    std::vector<int> pivot_owner(m, -1);
    std::vector<char> positive(m, 0);
    PersistenceDiagram diag;
    for (std::size_t j = 0; j < m; ++j) {
        std::set<int> col = facet_indices(f.cell(j).s);
        while (!col.empty()) {
            const int piv = *col.rbegin();
            const int owner = pivot_owner[piv];
            if (owner < 0) break;
            for (int e : stored[owner]) {
                auto it = col.find(e);
                if (it != col.end())
                    col.erase(it);
                else
                    col.insert(e);
            }
        }
        if (col.empty()) {
            positive[j] = 1;
        } else {
            const int piv = *col.rbegin();
            pivot_owner[piv] = static_cast<int>(j);
            stored[j] = col;
            const double bv = f.cell(piv).value;
            const double dv = f.cell(j).value;
            const int deg = f.cell(piv).s.dim;
            if (bv != dv && deg <= max_degree)
                diag.points.push_back({deg, bv, dv, piv, static_cast<int>(j)});
        }
    }
    for (std::size_t i = 0; i < m; ++i)
        if (positive[i] && pivot_owner[i] < 0 && f.cell(i).s.dim <= max_degree)
            diag.points.push_back(
                {f.cell(i).s.dim, f.cell(i).value, kInf, static_cast<int>(i), -1});
    return diag;
}

bool diagrams_identical(PersistenceDiagram a, PersistenceDiagram b) {
    auto key = [](const DiagramPoint& p) {
        return std::make_tuple(p.degree, p.birth_cell, p.death_cell, p.birth,
                               p.death);
    };
    auto lt = [&](const DiagramPoint& x, const DiagramPoint& y) {
        return key(x) < key(y);
    };
    std::sort(a.points.begin(), a.points.end(), lt);
    std::sort(b.points.begin(), b.points.end(), lt);
    if (a.points.size() != b.points.size()) return false;
    for (std::size_t k = 0; k < a.points.size(); ++k)
        if (key(a.points[k]) != key(b.points[k])) return false;
    return true;
}

bool criterion_1(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    SplitMix64 rng = SplitMix64::substream(424242, 1);
    int ok = 0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
        const std::size_t n = 4 + rng.next_below(5); // 4..8
        DistanceMatrix d = random_dissimilarity(n, rng);
        WeightVector w(n);
        for (auto& x : w) x = 0.6 * rng.uniform01();
        const double t_max = (trial % 3 == 0) ? 0.4 + rng.uniform01() : kInf;
        Filtration f = weighted_rips_filtration(d, w, 2, t_max);
        if (diagrams_identical(compute_persistence(f, 2), naive_persistence(f, 2)))
            ++ok;
    }
    const double dt = seconds_since(t0);
    detail = std::to_string(ok) + "/" + std::to_string(trials) +
             " random filtrations match the naive reduction exactly (" + fmt(dt) +
             "s)";
    return ok == trials && dt < 10.0;
}

// ---------------------------------------------------------------------------
// criterion 2: unit-square degree-1 diagram
// ---------------------------------------------------------------------------

bool criterion_2(std::string& detail) {
    PointCloud pc(2);
    const double pts[4][2] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
    for (const auto& p : pts) pc.add(p);
    DistanceMatrix d = pairwise_distances(pc);
    PersistenceDiagram diag =
        compute_persistence(weighted_rips_filtration(d, WeightVector(4, 0.0)), 1);
    auto fin = diag.finite_points(1);
    auto ess = diag.essential_points(1);
    const double want_death = std::sqrt(2.0) / 2.0;
    const bool pass = fin.size() == 1 && ess.empty() &&
                      std::abs(fin[0].birth - 0.5) <= 1e-12 &&
                      std::abs(fin[0].death - want_death) <= 1e-12;
    if (fin.size() == 1)
        detail = "degree-1 diagram = {(" + fmt(fin[0].birth, "%.12g") + ", " +
                 fmt(fin[0].death, "%.12g") + ")}, expected {(0.5, sqrt(2)/2)}";
    else
        detail = "expected exactly one finite degree-1 point, got " +
                 std::to_string(fin.size());
    return pass;
}

// ---------------------------------------------------------------------------
// criterion 3: bottleneck stability under weight perturbation
// ---------------------------------------------------------------------------

bool criterion_3(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    SplitMix64 rng = SplitMix64::substream(424242, 3);
    double worst_excess = -kInf;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        const std::size_t n = 5 + rng.next_below(4); // 5..8
        DistanceMatrix d = random_dissimilarity(n, rng);
        WeightVector w(n), w2(n);
        for (auto& x : w) x = 0.5 * rng.uniform01();
        const double eps = 0.01 + 0.19 * rng.uniform01();
        // perturbation with sup norm exactly eps
        std::vector<double> delta(n);
        double dmax = 0.0;
        for (auto& x : delta) {
            x = 2.0 * rng.uniform01() - 1.0;
            dmax = std::max(dmax, std::abs(x));
        }
        for (std::size_t i = 0; i < n; ++i) w2[i] = w[i] + delta[i] * (eps / dmax);
        PersistenceDiagram a =
            compute_persistence(weighted_rips_filtration(d, w), 1);
        PersistenceDiagram b =
            compute_persistence(weighted_rips_filtration(d, w2), 1);
        worst_excess =
            std::max(worst_excess, bottleneck_distance(a, b, 1) - eps);
    }
    detail = "max(bottleneck - eps) = " + fmt(worst_excess, "%.3e") + " over " +
             std::to_string(trials) + " trials (" + fmt(seconds_since(t0)) + "s)";
    return worst_excess <= 1e-9;
}

// ---------------------------------------------------------------------------
// criterion 4: isometry invariance / permutation equivariance
// ---------------------------------------------------------------------------

double rel_gap(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

bool criterion_4(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    SplitMix64 rng = SplitMix64::substream(424242, 4);

    TopoPipeline pipe;
    pipe.mode = FiltrationMode::learned;
    pipe.wnet = WeightNetConfig::preset("desk");
    pipe.perslay.n_centers = 16;
    pipe.perslay.out_dim = 8;
    pipe.degree = 1;
    ad::ParameterStore ps;
    SplitMix64 init = SplitMix64::substream(424242, 40);
    init_topo_pipeline(ps, pipe, 1.0, init);
    // nudge the weight net off its near-zero start so invariance is tested at
    // a nontrivial operating point
    for (auto& [name, p] : ps)
        if (name.rfind("wnet.", 0) == 0)
            for (auto& v : p.value) v += 0.05 * (2.0 * init.uniform01() - 1.0);

    auto eval_all = [&](const DistanceMatrix& d, std::vector<double>& weights,
                        std::vector<double>& descriptor) {
        ad::Tape t;
        weights = t.value(weights_for_cloud(t, ps, pipe.wnet, d));
        descriptor = t.value(cloud_descriptor(t, ps, pipe.wnet, d));
        ad::Tape t2;
        return t2.value(topo_loss(t2, ps, pipe, d, 0))[0];
    };

    double worst = 0.0;   // rigid-motion relative error
    bool exact = true;    // permutation bit-exactness
    const int n_clouds = 50, n_motions = 10, n_perms = 10;
    for (int c = 0; c < n_clouds; ++c) {
        PointCloud pc = generate_synthetic(
            SyntheticTask::circle_vs_disk_with_outliers, 10, 2, 0.05, 1000 + c);
        const std::size_t n = pc.size();
        DistanceMatrix d0 = pairwise_distances(pc);
        std::vector<double> w0, h0;
        const double loss0 = eval_all(d0, w0, h0);

        for (int mtn = 0; mtn < n_motions; ++mtn) {
            const double th = 6.283185307179586 * rng.uniform01();
            const double tx = 2.0 * rng.uniform01() - 1.0;
            const double ty = 2.0 * rng.uniform01() - 1.0;
            const double refl = (mtn % 2 == 0) ? 1.0 : -1.0; // half are reflections
            PointCloud moved(2);
            for (std::size_t i = 0; i < n; ++i) {
                const auto p = pc.point(i);
                const double y = refl * p[1];
                const double q[2] = {p[0] * std::cos(th) - y * std::sin(th) + tx,
                                     p[0] * std::sin(th) + y * std::cos(th) + ty};
                moved.add(q);
            }
            std::vector<double> w1, h1;
            const double loss1 = eval_all(pairwise_distances(moved), w1, h1);
            for (std::size_t i = 0; i < n; ++i)
                worst = std::max(worst, rel_gap(w0[i], w1[i]));
            for (std::size_t i = 0; i < h0.size(); ++i)
                worst = std::max(worst, rel_gap(h0[i], h1[i]));
            worst = std::max(worst, rel_gap(loss0, loss1));
        }

        for (int pr = 0; pr < n_perms; ++pr) {
            std::vector<std::size_t> perm(n);
            for (std::size_t i = 0; i < n; ++i) perm[i] = i;
            for (std::size_t i = n; i > 1; --i)
                std::swap(perm[i - 1], perm[rng.next_below(i)]);
            DistanceMatrix dp(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j)
                    dp.set(i, j, d0(perm[i], perm[j]));
            std::vector<double> w1, h1;
            const double loss1 = eval_all(dp, w1, h1);
            for (std::size_t i = 0; i < n; ++i)
                exact = exact && w1[i] == w0[perm[i]];
            exact = exact && h1 == h0 && loss1 == loss0;
        }
    }
    detail = "rigid motions: max rel err " + fmt(worst, "%.3e") +
             "; permutations: " + (exact ? "bit-exact" : "NOT bit-exact") + " (" +
             std::to_string(n_clouds) + " clouds x " +
             std::to_string(n_motions + n_perms) + " transforms, " +
             fmt(seconds_since(t0)) + "s)";
    return worst <= 1e-9 && exact;
}

// ---------------------------------------------------------------------------
// criterion 5: finite-difference gradient suites
// ---------------------------------------------------------------------------

bool criterion_5(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckSummary sum = gradcheck_all(1);
    const double dt = seconds_since(t0);
    std::size_t coords = 0;
    for (const auto& r : sum.reports) coords += r.n_checked;
    detail = std::to_string(sum.reports.size()) + " suites / " +
             std::to_string(coords) + " coordinates, max rel err " +
             fmt(sum.max_rel_err, "%.3e") + " < 1e-3 (" + fmt(dt) + "s)";
    return sum.all_passed && sum.max_rel_err < 1e-3 && dt < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 6: distance-to-measure regression
// ---------------------------------------------------------------------------

bool criterion_6(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    cfg.n_points = 32;
    cfg.n_train = 500;
    cfg.n_test = 100;
    cfg.batch_size = 40;
    cfg.epochs = 40;
    cfg.eta_max = 1e-2;
    cfg.n_warmup = 20;
    cfg.seed = 7;
    detail.clear();
    bool pass = true;
    for (std::size_t k0 : {std::size_t{2}, std::size_t{5}}) {
        RegressionResult res = dtm_regression_train(cfg, k0, 2.0, nullptr);
        if (!detail.empty()) detail += ", ";
        detail += "k0=" + std::to_string(k0) + " held-out MSE " +
                  fmt(res.held_out_mse, "%.2e");
        pass = pass && res.held_out_mse <= 0.01;
    }
    const double dt = seconds_since(t0);
    detail += " (<= 0.01 required; 500 clouds, " + std::to_string(cfg.epochs) +
              " epochs, " + fmt(dt) + "s)";
    return pass && dt < 900.0;
}

// ---------------------------------------------------------------------------
// criterion 7: learned filtration beats plain Rips on outlier data
// ---------------------------------------------------------------------------

double run_separation_arm(const ExperimentConfig& cfg, FiltrationMode mode,
                          const LabelledData& train, const LabelledData& test,
                          double t_cap) {
    TopoPipeline pipe;
    pipe.mode = mode;
    pipe.wnet = WeightNetConfig::preset(cfg.wnet_preset);
    pipe.perslay.n_centers = cfg.perslay_centers;
    pipe.perslay.out_dim = cfg.perslay_out;
    pipe.degree = cfg.degree;
    pipe.t_max = cfg.t_max;
    ad::ParameterStore ps;
    SplitMix64 init = SplitMix64::substream(cfg.seed, 1);
    init_topo_pipeline(ps, pipe, t_cap, init);
    TrainOutcome out = train_topo_classifier(cfg, pipe, train, test, ps, nullptr);
    return out.test_accuracy;
}

bool criterion_7(std::string& detail) {
    detail.clear();
    bool pass = true;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto t0 = std::chrono::steady_clock::now();
        ExperimentConfig cfg;
        cfg.task = "circle_vs_disk_with_outliers";
        cfg.n_points = 64;
        cfg.n_outliers = 8;
        cfg.noise_sigma = 0.08;
        cfg.n_train = 400;
        cfg.n_test = 100;
        cfg.batch_size = 40;
        cfg.epochs = 30;
        cfg.eta_max = 1e-2;
        cfg.n_warmup = 10;
        cfg.seed = seed;

        const std::uint64_t base = seed * 1000000ULL;
        LabelledData train = make_dataset(cfg, cfg.n_train, base, false);
        LabelledData test = make_dataset(cfg, cfg.n_test, base + cfg.n_train, false);

        // shared downstream scale, derived from the plain-Rips training
        // diagrams exactly as the trainer does
        std::vector<PersistenceDiagram> diags;
        for (const auto& dm : train.dmats)
            diags.push_back(compute_persistence(
                weighted_rips_filtration(dm, WeightVector(dm.size(), 0.0),
                                         cfg.degree + 1, cfg.t_max),
                cfg.degree));
        const double t_cap = default_t_cap(diags, cfg.degree);

        const double acc_rips =
            run_separation_arm(cfg, FiltrationMode::rips, train, test, t_cap);
        const double acc_learned =
            run_separation_arm(cfg, FiltrationMode::learned, train, test, t_cap);
        const double dt = seconds_since(t0);
        if (!detail.empty()) detail += "; ";
        detail += "seed " + std::to_string(seed) + ": learned " +
                  fmt(acc_learned, "%.2f") + ", plain " + fmt(acc_rips, "%.2f") +
                  " (" + fmt(dt, "%.0f") + "s)";
        pass = pass && acc_learned >= 0.90 && acc_rips <= 0.75 && dt < 1800.0;
    }
    detail += " [need learned >= 0.90 and plain <= 0.75 on all seeds]";
    return pass;
}

// ---------------------------------------------------------------------------
// criterion 8: two-phase protocol contract
// ---------------------------------------------------------------------------

bool criterion_8(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    cfg.task = "circle_vs_disk_with_outliers";
    cfg.n_points = 32;
    cfg.n_outliers = 4;
    cfg.noise_sigma = 0.08;
    cfg.n_train = 120;
    cfg.n_test = 60;
    cfg.batch_size = 40;
    cfg.epochs_phase1 = 80;
    cfg.epochs_phase2 = 100;
    cfg.eta_max_phase1 = 2e-2;
    cfg.eta_max = 1e-2;
    cfg.n_warmup = 10;
    cfg.seed = 11;

    const std::uint64_t base = cfg.seed * 1000000ULL;
    LabelledData train = make_dataset(cfg, cfg.n_train, base);
    LabelledData test = make_dataset(cfg, cfg.n_test, base + cfg.n_train);
    TwoPhaseResult res = two_phase_train(cfg, train, test, nullptr);
    const double dt = seconds_since(t0);
    detail = "frozen backbone " +
             std::string(res.frozen_backbone_intact ? "bit-identical" : "CHANGED") +
             "; phase 1 accuracy " + fmt(res.phase1_accuracy, "%.3f") +
             ", phase 2 accuracy " + fmt(res.phase2_accuracy, "%.3f") +
             " (allowed drop 0.01; " + fmt(dt, "%.0f") + "s)";
    return res.frozen_backbone_intact &&
           res.phase2_accuracy >= res.phase1_accuracy - 0.01 - 1e-12;
}

// ---------------------------------------------------------------------------
// criterion 9: learning-rate schedule closed form
// ---------------------------------------------------------------------------

bool criterion_9(std::string& detail) {
    const double eta = 1e-2;
    const int warm = 40;
    const struct {
        int epoch;
        double want;
    } cases[] = {{1, eta * std::pow(40.0, -1.5)},
                 {40, eta * std::pow(40.0, -0.5)},
                 {160, eta * std::pow(160.0, -0.5)}};
    double worst = 0.0;
    for (const auto& c : cases)
        worst = std::max(worst,
                         std::abs(ad::lr_schedule(c.epoch, eta, warm) - c.want));
    detail = "epochs {1,40,160}: max |lr - closed form| = " + fmt(worst, "%.2e") +
             " (tolerance 1e-15)";
    return worst <= 1e-15;
}

// ---------------------------------------------------------------------------
// criterion 10: byte-identical training reruns
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

bool criterion_10(std::string& detail, const std::string& cli) {
    const fs::path work =
        fs::temp_directory_path() /
        ("filtlearn_acceptance_10_" + std::to_string(::getpid()));
    fs::remove_all(work);
    fs::create_directories(work);
    const fs::path cfg_path = work / "det.ini";
    {
        std::ofstream f(cfg_path, std::ios::binary);
        f << "task = circle_vs_disk_with_outliers\nn_points = 16\nn_outliers = 2\n"
             "noise_sigma = 0.08\nn_train = 20\nn_test = 10\nfiltration = learned\n"
             "perslay_centers = 8\nperslay_out = 4\nbatch_size = 10\nepochs = 3\n"
             "eta_max = 0.01\nn_warmup = 2\nseed = 13\n";
    }
    auto train_into = [&](const std::string& dir) {
        const std::string cmd = cli + " train --config " + cfg_path.string() +
                                " --out " + (work / dir).string() + " > " +
                                (work / "out.txt").string() + " 2>&1";
        const int rc = std::system(cmd.c_str());
        return rc != -1 && WIFEXITED(rc) && WEXITSTATUS(rc) == 0;
    };
    if (!train_into("run_a") || !train_into("run_b")) {
        detail = "training run failed: " + slurp(work / "out.txt");
        fs::remove_all(work);
        return false;
    }
    const bool metrics_same =
        slurp(work / "run_a" / "metrics.csv") == slurp(work / "run_b" / "metrics.csv");
    const bool ckpt_same = slurp(work / "run_a" / "checkpoint.json") ==
                           slurp(work / "run_b" / "checkpoint.json");
    fs::remove_all(work);
    detail = std::string("metrics.csv ") +
             (metrics_same ? "byte-identical" : "DIFFER") + ", checkpoint.json " +
             (ckpt_same ? "byte-identical" : "DIFFERS") +
             " across two identical runs";
    return metrics_same && ckpt_same;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance_suite <criterion 1..10> [path-to-cli]\n";
        return 2;
    }
    const int crit = std::atoi(argv[1]);
    const std::string cli = argc > 2 ? argv[2] : "";
    std::string detail;
    bool pass = false;
    switch (crit) {
        case 1: pass = criterion_1(detail); break;
        case 2: pass = criterion_2(detail); break;
        case 3: pass = criterion_3(detail); break;
        case 4: pass = criterion_4(detail); break;
        case 5: pass = criterion_5(detail); break;
        case 6: pass = criterion_6(detail); break;
        case 7: pass = criterion_7(detail); break;
        case 8: pass = criterion_8(detail); break;
        case 9: pass = criterion_9(detail); break;
        case 10:
            if (cli.empty()) {
                detail = "criterion 10 needs the CLI path as argv[2]";
                pass = false;
            } else {
                pass = criterion_10(detail, cli);
            }
            break;
        default:
            std::cerr << "unknown criterion " << crit << "\n";
            return 2;
    }
    std::cout << "criterion " << crit << ": " << (pass ? "PASS" : "FAIL") << " - "
              << detail << "\n";
    return pass ? 0 : 1;
}
