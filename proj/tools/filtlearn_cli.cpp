#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "filtlearn/errors.hpp"
#include "filtlearn/gradcheck.hpp"
#include "filtlearn/io.hpp"
#include "filtlearn/num_format.hpp"
#include "filtlearn/training.hpp"

namespace fs = std::filesystem;
using namespace filtlearn;

namespace {

constexpr const char* kRevision = "filtlearn 1.0.0";

std::string item_name(const std::string& task, std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05zu.csv", k);
    return (task == "protein_surrogate" ? std::string("dmat_") : std::string("cloud_")) +
           buf;
}

// ---------------------------------------------------------------------------

struct GenerateOpts {
    std::string task = "circle_vs_disk_with_outliers";
    std::size_t n = 64, outliers = 8, count = 1000;
    double noise = 0.08;
    std::uint64_t seed = 1;
    std::string out = "dataset";
};

int run_generate(const GenerateOpts& o) {
    DirLock lock(o.out);
    ExperimentConfig cfg;
    cfg.task = o.task;
    cfg.n_points = o.n;
    cfg.n_outliers = o.outliers;
    cfg.noise_sigma = o.noise;
    cfg.seed = o.seed;
    if (o.task != "protein_surrogate")
        (void)synthetic_task_from_string(o.task); // validate early

    RunManifest man;
    man.config_text = config_to_text(cfg);
    man.revision = kRevision;
    man.seeds = {o.seed};
    std::vector<std::pair<std::string, int>> labels;
    for (std::size_t k = 0; k < o.count; ++k) {
        const std::uint64_t item_seed = o.seed + k;
        const std::string name = item_name(o.task, k);
        const fs::path path = fs::path(o.out) / name;
        if (o.task == "protein_surrogate") {
            write_distance_matrix_csv(
                path, generate_surrogate_dissimilarity(o.n, o.noise, item_seed));
        } else {
            write_point_cloud_csv(
                path, generate_synthetic(synthetic_task_from_string(o.task), o.n,
                                         o.outliers, o.noise, item_seed));
        }
        labels.emplace_back(name, static_cast<int>(item_seed % 2));
        man.file_hashes[name] = "";
        man.outputs.push_back(name);
    }
    write_labels_csv(fs::path(o.out) / "labels.csv", labels);
    man.outputs.push_back("labels.csv");
    for (auto& [rel, h] : man.file_hashes) {
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv1a_file(fs::path(o.out) / rel)));
        h = hex;
    }
    {
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a_file(fs::path(o.out) / "labels.csv")));
        man.file_hashes["labels.csv"] = hex;
    }
    write_manifest(fs::path(o.out) / "manifest.json", man);
    std::cout << "wrote " << o.count << " items + labels.csv + manifest.json to "
              << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct PdOpts {
    std::string input;
    std::string format = "cloud"; // cloud | matrix
    std::string filtration = "rips";
    std::size_t k0 = 5;
    double q = 2.0;
    double t_max = std::numeric_limits<double>::infinity();
    std::string checkpoint;
    std::string out = "diagram.csv";
    std::string svg;
    std::string dump_filtration;
    int svg_degree = 1;
};

// Normalized networks take their statistics from the set being processed
// (the function they were fitted as); plain ones run in eval mode.
ad::RunMode apply_mode(const WeightNetConfig& cfg) {
    return uses_batch_norm(cfg) ? ad::RunMode::train : ad::RunMode::eval;
}

WeightNetConfig wnet_from_checkpoint(const Checkpoint& ck) {
    auto it = ck.meta.find("wnet_preset");
    if (it == ck.meta.end())
        throw StateError("checkpoint carries no weight-network preset");
    WeightNetConfig cfg = WeightNetConfig::preset(it->second);
    auto bn = ck.meta.find("wnet_batch_norm");
    if (bn != ck.meta.end() && bn->second == "1") set_batch_norm(cfg, true);
    if (!ck.params.has("wnet.phi6.l0.W"))
        throw StateError("checkpoint carries no weight-network parameters");
    return cfg;
}

int run_pd(const PdOpts& o) {
    DistanceMatrix d(1);
    if (o.format == "cloud") {
        d = pairwise_distances(read_point_cloud_csv(o.input));
    } else if (o.format == "matrix") {
        d = read_distance_matrix_csv(o.input);
    } else {
        throw InputError("pd: --format must be cloud or matrix");
    }

    WeightVector w(d.size(), 0.0);
    if (o.filtration == "rips") {
        // zeros
    } else if (o.filtration == "dtm") {
        w = dtm_weights(d, o.k0, o.q);
    } else if (o.filtration == "learned") {
        if (o.checkpoint.empty())
            throw InputError("pd: --filtration learned requires --checkpoint");
        Checkpoint ck = load_checkpoint(o.checkpoint);
        WeightNetConfig cfg = wnet_from_checkpoint(ck);
        ad::Tape t;
        ad::NodeId wn = weights_for_cloud(t, ck.params, cfg, d,
                                          apply_mode(cfg), nullptr, false);
        w.assign(t.value(wn).begin(), t.value(wn).end());
    } else {
        throw InputError("pd: unknown filtration " + o.filtration);
    }

    Filtration f = weighted_rips_filtration(d, w, 2, o.t_max);
    PersistenceDiagram diag = compute_persistence(f, 1);
    write_diagram_csv(o.out, diag);
    if (!o.svg.empty()) write_diagram_svg(o.svg, diag, o.svg_degree);
    if (!o.dump_filtration.empty()) write_filtration_csv(o.dump_filtration, f);
    std::cout << "wrote " << diag.points.size() << " diagram points to " << o.out
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
    std::string config;
    std::string out = "run";
    std::string mode = "classify"; // classify | two-phase | dtm-regression
    std::size_t k0 = 0;            // dtm-regression override; 0 = use config
};

void hash_outputs(RunManifest& man, const fs::path& dir,
                  const std::vector<std::string>& files) {
    for (const auto& rel : files) {
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv1a_file(dir / rel)));
        man.file_hashes[rel] = hex;
        man.outputs.push_back(rel);
    }
}

Checkpoint make_checkpoint(const ad::ParameterStore& ps, const std::string& kind,
                           const ExperimentConfig& cfg,
                           const std::vector<std::pair<std::string, std::string>>&
                               extra_meta = {}) {
    Checkpoint ck;
    for (const auto& [name, p] : ps) {
        ad::Param& q = ck.params.add(name, p.shape, p.value);
        q.trainable = p.trainable;
        q.m = p.m;
        q.v = p.v;
    }
    ck.kind = kind;
    ck.meta["config"] = config_to_text(cfg);
    ck.meta["wnet_preset"] = cfg.wnet_preset;
    for (const auto& [k, v] : extra_meta) ck.meta[k] = v;
    return ck;
}

int run_train(const TrainOpts& o) {
    if (o.config.empty()) throw InputError("train: --config is required");
    ExperimentConfig cfg = load_config(o.config);
    DirLock lock(o.out);
    const fs::path dir(o.out);

    std::ofstream metrics_file(dir / "metrics.csv", std::ios::binary);
    metrics_file << "epoch,phase,fold,loss,accuracy,lr,mean_diagram_size\n";
    MetricsLog metrics(&metrics_file);
    std::string report = "mode,filtration,fold,metric,value\n";
    auto report_row = [&](const std::string& mode, const std::string& filt, int fold,
                          const std::string& metric, double value) {
        report += mode + "," + filt + "," + std::to_string(fold) + "," + metric +
                  "," + format_double(value) + "\n";
    };

    if (o.mode == "dtm-regression") {
        const std::size_t k0 = o.k0 ? o.k0 : cfg.k0;
        RegressionResult res = dtm_regression_train(cfg, k0, cfg.q, &metrics);
        report_row("dtm-regression", "learned", 0, "held_out_mse", res.held_out_mse);
        Checkpoint ck = make_checkpoint(
            res.params, "weight-net", cfg,
            {{"k0", std::to_string(k0)},
             {"wnet_batch_norm", uses_batch_norm(res.wnet) ? "1" : "0"}});
        save_checkpoint(dir / "checkpoint.json", ck);
        std::cout << "held-out MSE (k0=" << k0 << "): "
                  << format_double(res.held_out_mse) << "\n";
    } else if (o.mode == "classify") {
        const std::uint64_t base = cfg.seed * 1000000ULL;
        const bool with_clouds = cfg.task != "protein_surrogate";
        LabelledData train = make_dataset(cfg, cfg.n_train, base, with_clouds);
        LabelledData test = make_dataset(cfg, cfg.n_test, base + cfg.n_train,
                                         with_clouds);
        TopoPipeline pipe;
        pipe.mode = filtration_mode_from_string(cfg.filtration);
        pipe.wnet = WeightNetConfig::preset(cfg.wnet_preset);
        pipe.perslay.n_centers = cfg.perslay_centers;
        pipe.perslay.out_dim = cfg.perslay_out;
        pipe.k0 = cfg.k0;
        pipe.q = cfg.q;
        pipe.degree = cfg.degree;
        pipe.t_max = cfg.t_max;
        double t_cap = cfg.t_cap;
        if (!(t_cap > 0.0)) {
            std::vector<PersistenceDiagram> diags;
            for (const auto& dm : train.dmats) {
                WeightVector zero(dm.size(), 0.0);
                diags.push_back(compute_persistence(
                    weighted_rips_filtration(dm, zero, cfg.degree + 1, cfg.t_max),
                    cfg.degree));
            }
            t_cap = default_t_cap(diags, cfg.degree);
        }
        ad::ParameterStore ps;
        SplitMix64 init = SplitMix64::substream(cfg.seed, 1);
        init_topo_pipeline(ps, pipe, t_cap, init);
        TrainOutcome out =
            train_topo_classifier(cfg, pipe, train, test, ps, &metrics);
        report_row("classify", cfg.filtration, 0, "test_accuracy", out.test_accuracy);
        report_row("classify", cfg.filtration, 0, "test_loss", out.test_loss);
        Checkpoint ck = make_checkpoint(ps, "topo-classifier", cfg,
                                        {{"t_cap", format_double(t_cap)}});
        save_checkpoint(dir / "checkpoint.json", ck);
        std::cout << "test accuracy (" << cfg.filtration
                  << "): " << format_double(out.test_accuracy) << "\n";
    } else if (o.mode == "two-phase") {
        if (cfg.task == "protein_surrogate")
            throw InputError("two-phase training needs point coordinates");
        const std::uint64_t base = cfg.seed * 1000000ULL;
        LabelledData train = make_dataset(cfg, cfg.n_train, base);
        LabelledData test = make_dataset(cfg, cfg.n_test, base + cfg.n_train);
        if (cfg.eval_mode == "cv") {
            double sum = 0.0, sumsq = 0.0;
            for (int fold = 0; fold < cfg.folds; ++fold) {
                LabelledData tr, va;
                for (std::size_t i = 0; i < train.size(); ++i) {
                    LabelledData& dst =
                        (static_cast<int>(i % cfg.folds) == fold) ? va : tr;
                    dst.clouds.push_back(train.clouds[i]);
                    dst.dmats.push_back(train.dmats[i]);
                    dst.labels.push_back(train.labels[i]);
                }
                TwoPhaseResult r = two_phase_train(cfg, tr, va, &metrics, fold);
                report_row("two-phase", cfg.filtration, fold, "phase1_accuracy",
                           r.phase1_accuracy);
                report_row("two-phase", cfg.filtration, fold, "phase2_accuracy",
                           r.phase2_accuracy);
                sum += r.phase2_accuracy;
                sumsq += r.phase2_accuracy * r.phase2_accuracy;
            }
            const double mean = sum / cfg.folds;
            const double var = std::max(0.0, sumsq / cfg.folds - mean * mean);
            report_row("two-phase", cfg.filtration, -1, "cv_mean_accuracy", mean);
            report_row("two-phase", cfg.filtration, -1, "cv_std_accuracy",
                       std::sqrt(var));
            std::cout << "cv accuracy: " << format_double(mean) << " +- "
                      << format_double(std::sqrt(var)) << "\n";
        } else {
            TwoPhaseResult r = two_phase_train(cfg, train, test, &metrics);
            report_row("two-phase", cfg.filtration, 0, "phase1_accuracy",
                       r.phase1_accuracy);
            report_row("two-phase", cfg.filtration, 0, "phase2_accuracy",
                       r.phase2_accuracy);
            report_row("two-phase", cfg.filtration, 0, "frozen_backbone_intact",
                       r.frozen_backbone_intact ? 1.0 : 0.0);
            Checkpoint ck = make_checkpoint(r.topo_params, "topo-classifier", cfg,
                                            {{"t_cap", format_double(r.t_cap)},
                                             {"two_phase", "1"}});
            save_checkpoint(dir / "checkpoint.json", ck);
            std::cout << "phase 1 accuracy: " << format_double(r.phase1_accuracy)
                      << ", phase 2 accuracy: " << format_double(r.phase2_accuracy)
                      << "\n";
        }
    } else {
        throw InputError("train: unknown --mode " + o.mode);
    }

    {
        std::ofstream rep(dir / "report.csv", std::ios::binary);
        rep << report;
    }
    metrics_file.close();

    RunManifest man;
    man.config_text = config_to_text(cfg);
    man.revision = kRevision;
    man.seeds = {cfg.seed};
    std::vector<std::string> outs = {"metrics.csv", "report.csv"};
    if (fs::exists(dir / "checkpoint.json")) outs.push_back("checkpoint.json");
    hash_outputs(man, dir, outs);
    write_manifest(dir / "manifest.json", man);
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalOpts {
    std::string checkpoint;
    std::string out;
};

int run_eval(const EvalOpts& o) {
    if (o.checkpoint.empty()) throw InputError("eval: --checkpoint is required");
    Checkpoint ck = load_checkpoint(o.checkpoint);
    if (ck.kind != "topo-classifier")
        throw StateError("eval: checkpoint is not a classifier");
    auto cfg_it = ck.meta.find("config");
    auto cap_it = ck.meta.find("t_cap");
    if (cfg_it == ck.meta.end() || cap_it == ck.meta.end())
        throw StateError("eval: checkpoint lacks config metadata");
    if (ck.meta.count("two_phase"))
        throw StateError("eval: two-phase checkpoints need their frozen features; "
                         "re-run training to evaluate");
    ExperimentConfig cfg = parse_config_text(cfg_it->second);

    TopoPipeline pipe;
    pipe.mode = filtration_mode_from_string(cfg.filtration);
    pipe.wnet = WeightNetConfig::preset(cfg.wnet_preset);
    pipe.perslay.n_centers = cfg.perslay_centers;
    pipe.perslay.out_dim = cfg.perslay_out;
    pipe.k0 = cfg.k0;
    pipe.q = cfg.q;
    pipe.degree = cfg.degree;
    pipe.t_max = cfg.t_max;

    const std::uint64_t base = cfg.seed * 1000000ULL;
    LabelledData test =
        make_dataset(cfg, cfg.n_test, base + cfg.n_train, false);
    ad::Tape t;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        t.clear();
        ad::NodeId logits = topo_logits(t, ck.params, pipe, test.dmats[i]);
        const auto& lv = t.value(logits);
        int pred = static_cast<int>(std::max_element(lv.begin(), lv.end()) -
                                    lv.begin());
        correct += (pred == test.labels[i]) ? 1 : 0;
        loss_sum += t.value(t.cross_entropy(logits, test.labels[i]))[0];
    }
    const double acc = static_cast<double>(correct) / test.size();
    const double loss = loss_sum / test.size();
    std::string report = "metric,value\n";
    report += "test_accuracy," + format_double(acc) + "\n";
    report += "test_loss," + format_double(loss) + "\n";
    if (!o.out.empty()) {
        std::ofstream rep(o.out, std::ios::binary);
        rep << report;
    }
    std::cout << report;
    return 0;
}

// ---------------------------------------------------------------------------

struct ExportOpts {
    std::string checkpoint;
    std::string cloud;
    std::string out = "weights.csv";
    std::string svg;
};

int run_export_weights(const ExportOpts& o) {
    if (o.checkpoint.empty() || o.cloud.empty())
        throw InputError("export-weights: --checkpoint and --cloud are required");
    Checkpoint ck = load_checkpoint(o.checkpoint);
    WeightNetConfig cfg = wnet_from_checkpoint(ck);
    PointCloud pc = read_point_cloud_csv(o.cloud);
    DistanceMatrix d = pairwise_distances(pc);
    ad::Tape t;
    ad::NodeId wn = weights_for_cloud(t, ck.params, cfg, d,
                                      apply_mode(cfg), nullptr, false);
    const auto& w = t.value(wn);

    std::string out;
    for (std::size_t i = 0; i < pc.size(); ++i) {
        out += std::to_string(i);
        for (double c : pc.point(i)) {
            out += ',';
            out += format_double(c);
        }
        out += ',';
        out += format_double(w[i]);
        out += ',';
        out += pc.is_outlier(i) ? '1' : '0';
        out += '\n';
    }
    {
        std::ofstream f(o.out, std::ios::binary);
        if (!f) throw InputError("cannot open " + o.out + " for writing");
        f << out;
    }
    if (!o.svg.empty())
        write_weighted_cloud_svg(o.svg, pc, WeightVector(w.begin(), w.end()));
    std::cout << "wrote " << pc.size() << " weights to " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int run_gradcheck(std::uint64_t seed) {
    GradCheckSummary sum = gradcheck_all(seed);
    for (const auto& r : sum.reports)
        std::printf("%-28s %5zu coords   max rel err %.3e   %s\n", r.name.c_str(),
                    r.n_checked, r.max_rel_err, r.passed ? "ok" : "FAIL");
    std::printf("max relative error: %.6e (%s)\n", sum.max_rel_err,
                sum.all_passed ? "all passed" : "FAILURES");
    return sum.all_passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"learned weighted-Rips filtrations: data, diagrams, training"};
    app.require_subcommand(1);

    GenerateOpts gen;
    auto* cgen = app.add_subcommand("generate", "write a synthetic dataset");
    cgen->add_option("--task", gen.task,
                     "circle_vs_disk_with_outliers | two_scales | protein_surrogate");
    cgen->add_option("--n", gen.n, "points per cloud");
    cgen->add_option("--outliers", gen.outliers, "outliers per cloud");
    cgen->add_option("--noise", gen.noise, "coordinate noise sigma");
    cgen->add_option("--count", gen.count, "number of items");
    cgen->add_option("--seed", gen.seed, "base seed");
    cgen->add_option("--out", gen.out, "output directory");

    PdOpts pd;
    auto* cpd = app.add_subcommand("pd", "compute a persistence diagram");
    cpd->add_option("--input", pd.input, "point cloud or distance matrix CSV")
        ->required();
    cpd->add_option("--format", pd.format, "cloud | matrix");
    cpd->add_option("--filtration", pd.filtration, "rips | dtm | learned");
    cpd->add_option("--k0", pd.k0, "dtm neighbor count");
    cpd->add_option("--q", pd.q, "dtm power");
    cpd->add_option("--t-max", pd.t_max, "filtration truncation");
    cpd->add_option("--checkpoint", pd.checkpoint, "weight-net checkpoint (learned)");
    cpd->add_option("--out", pd.out, "diagram CSV path");
    cpd->add_option("--svg", pd.svg, "optional diagram SVG path");
    cpd->add_option("--svg-degree", pd.svg_degree, "degree drawn in the SVG");
    cpd->add_option("--dump-filtration", pd.dump_filtration,
                    "optional filtration dump path");

    TrainOpts tr;
    auto* ctr = app.add_subcommand("train", "train a model from a config file");
    ctr->add_option("--config", tr.config, "config file")->required();
    ctr->add_option("--out", tr.out, "output directory");
    ctr->add_option("--mode", tr.mode, "classify | two-phase | dtm-regression");
    ctr->add_option("--k0", tr.k0, "dtm-regression target k0 (overrides config)");

    EvalOpts ev;
    auto* cev = app.add_subcommand("eval", "evaluate a classifier checkpoint");
    cev->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    cev->add_option("--out", ev.out, "optional report CSV path");

    ExportOpts ex;
    auto* cex = app.add_subcommand("export-weights",
                                   "apply a weight net to a cloud and export");
    cex->add_option("--checkpoint", ex.checkpoint, "checkpoint file")->required();
    cex->add_option("--cloud", ex.cloud, "point cloud CSV")->required();
    cex->add_option("--out", ex.out, "weights CSV path");
    cex->add_option("--svg", ex.svg, "optional colored scatter SVG path");

    std::uint64_t gc_seed = 1;
    auto* cgc = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    cgc->add_option("--seed", gc_seed, "suite seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*cgen) return run_generate(gen);
        if (*cpd) return run_pd(pd);
        if (*ctr) return run_train(tr);
        if (*cev) return run_eval(ev);
        if (*cex) return run_export_weights(ex);
        if (*cgc) return run_gradcheck(gc_seed);
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const StateError& e) {
        std::cerr << "state error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
