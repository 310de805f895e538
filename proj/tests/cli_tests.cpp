// End-to-end checks of the command-line tool: every subcommand is exercised
// through a real process, outputs are read back with the library readers, and
// exit codes are pinned. Invoked as: cli_tests <path-to-cli>.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "filtlearn/autodiff.hpp"
#include "filtlearn/io.hpp"
#include "filtlearn/num_format.hpp"
#include "filtlearn/training.hpp"
#include "filtlearn/weightnet.hpp"

namespace fs = std::filesystem;
using namespace filtlearn;

namespace {

int checks = 0, failures = 0;

void check(bool ok, const std::string& what) {
    ++checks;
    if (!ok) {
        ++failures;
        std::cout << "FAIL - " << what << std::endl;
    } else {
        std::cout << "ok - " << what << std::endl;
    }
}

std::string cli;
fs::path work;

int run(const std::string& args) {
    const std::string cmd = cli + " " + args + " > " + (work / "stdout.txt").string() +
                            " 2> " + (work / "stderr.txt").string();
    int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    if (WIFEXITED(rc)) return WEXITSTATUS(rc);
    return -2;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string cli_stdout() { return slurp(work / "stdout.txt"); }

PointCloud square_cloud() {
    PointCloud pc(2);
    const double pts[4][2] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
    for (const auto& p : pts) pc.add(p);
    return pc;
}

bool same_files(const fs::path& a, const fs::path& b) {
    return slurp(a) == slurp(b);
}

// Pulls `metric,value` rows out of a simple CSV report.
double report_value(const std::string& text, const std::string& metric) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto pos = line.rfind(',');
        if (pos == std::string::npos) continue;
        if (line.find(metric) != std::string::npos)
            return parse_double(line.substr(pos + 1));
    }
    return std::numeric_limits<double>::quiet_NaN();
}

void test_generate() {
    const std::string gen_args =
        "generate --task circle_vs_disk_with_outliers --n 8 --outliers 1 "
        "--noise 0.05 --count 4 --seed 3 --out ";
    check(run(gen_args + (work / "gen_a").string()) == 0, "generate exits 0");

    std::vector<std::string> items = {"cloud_00000.csv", "cloud_00001.csv",
                                      "cloud_00002.csv", "cloud_00003.csv"};
    bool all_exist = fs::exists(work / "gen_a" / "labels.csv") &&
                     fs::exists(work / "gen_a" / "manifest.json");
    for (const auto& it : items) all_exist &= fs::exists(work / "gen_a" / it);
    check(all_exist, "generate writes items, labels, and manifest");

    auto labels = read_labels_csv(work / "gen_a" / "labels.csv");
    bool labels_ok = labels.size() == 4;
    for (std::size_t k = 0; labels_ok && k < labels.size(); ++k)
        labels_ok = labels[k].first == items[k] &&
                    labels[k].second == static_cast<int>((3 + k) % 2);
    check(labels_ok, "labels follow the per-item seed parity");

    bool verified = true;
    try {
        verify_manifest_hashes(read_manifest(work / "gen_a" / "manifest.json"),
                               work / "gen_a");
    } catch (const std::exception&) {
        verified = false;
    }
    check(verified, "generate manifest hashes verify");

    check(run(gen_args + (work / "gen_b").string()) == 0, "second generate exits 0");
    bool identical = same_files(work / "gen_a" / "labels.csv",
                                work / "gen_b" / "labels.csv");
    for (const auto& it : items)
        identical &= same_files(work / "gen_a" / it, work / "gen_b" / it);
    check(identical, "same seed reproduces every file byte for byte");

    check(run("generate --task circle_vs_disk_with_outliers --n 8 --outliers 1 "
              "--noise 0.05 --count 4 --seed 4 --out " +
              (work / "gen_c").string()) == 0,
          "third generate exits 0");
    check(!same_files(work / "gen_a" / "cloud_00000.csv",
                      work / "gen_c" / "cloud_00000.csv"),
          "a different seed produces different clouds");

    check(run("generate --task protein_surrogate --n 8 --count 2 --seed 5 --out " +
              (work / "gen_d").string()) == 0,
          "surrogate generate exits 0");
    check(fs::exists(work / "gen_d" / "dmat_00000.csv"),
          "surrogate items are distance matrices");
    DistanceMatrix dm = read_distance_matrix_csv(work / "gen_d" / "dmat_00000.csv");
    check(dm.size() == 8, "surrogate matrices have the requested size");
}

void test_pd() {
    const fs::path cloud = work / "square.csv";
    write_point_cloud_csv(cloud, square_cloud());

    const fs::path diag_csv = work / "diag_rips.csv";
    check(run("pd --input " + cloud.string() + " --out " + diag_csv.string() +
              " --dump-filtration " + (work / "filt.csv").string() + " --svg " +
              (work / "diag.svg").string()) == 0,
          "pd (plain) exits 0");

    PersistenceDiagram diag = read_diagram_csv(diag_csv);
    DistanceMatrix d = pairwise_distances(square_cloud());
    PersistenceDiagram want =
        compute_persistence(weighted_rips_filtration(d, WeightVector(4, 0.0)), 1);
    bool match = diag.points.size() == want.points.size();
    for (std::size_t k = 0; match && k < diag.points.size(); ++k)
        match = diag.points[k].degree == want.points[k].degree &&
                diag.points[k].birth == want.points[k].birth &&
                (want.points[k].essential()
                     ? diag.points[k].essential()
                     : diag.points[k].death == want.points[k].death);
    check(match, "pd reproduces the library diagram exactly");
    check(diag.finite_points(1).size() == 1 && diag.finite_points(1)[0].birth == 0.5,
          "square has one 1-degree class born at 0.5");

    const std::string filt = slurp(work / "filt.csv");
    check(filt.rfind("0,0,-1,-1,0\n", 0) == 0, "filtration dump starts at vertex 0");
    check(slurp(work / "diag.svg").find("<svg") != std::string::npos,
          "diagram SVG is written");

    // k0 = 1 distance-to-measure weights are all zero, so the diagram file
    // must match the plain one byte for byte.
    const fs::path diag_dtm = work / "diag_dtm.csv";
    check(run("pd --input " + cloud.string() + " --filtration dtm --k0 1 --out " +
              diag_dtm.string()) == 0,
          "pd (dtm k0=1) exits 0");
    check(same_files(diag_csv, diag_dtm), "dtm with k0=1 equals the plain diagram");

    // matrix input path
    const fs::path mat = work / "square_dmat.csv";
    write_distance_matrix_csv(mat, d);
    const fs::path diag_mat = work / "diag_mat.csv";
    check(run("pd --input " + mat.string() + " --format matrix --out " +
              diag_mat.string()) == 0,
          "pd (matrix input) exits 0");
    check(same_files(diag_csv, diag_mat), "matrix input gives the same diagram");

    // truncation leaves the cycle unfilled
    const fs::path diag_cut = work / "diag_cut.csv";
    check(run("pd --input " + cloud.string() + " --t-max 0.6 --out " +
              diag_cut.string()) == 0,
          "pd (truncated) exits 0");
    PersistenceDiagram cut = read_diagram_csv(diag_cut);
    check(cut.essential_points(1).size() == 1 &&
              cut.essential_points(1)[0].birth == 0.5,
          "truncation makes the square cycle essential");
}

void test_train_eval_export() {
    const std::string config_text =
        "[dataset]\n"
        "task = circle_vs_disk_with_outliers\n"
        "n_points = 8\n"
        "n_outliers = 0\n"
        "noise_sigma = 0.05\n"
        "n_train = 8\n"
        "n_test = 4\n"
        "[pipeline]\n"
        "filtration = rips\n"
        "perslay_centers = 6\n"
        "perslay_out = 4\n"
        "t_cap = 1\n"
        "[optim]\n"
        "batch_size = 4\n"
        "epochs = 2\n"
        "eta_max = 0.01\n"
        "n_warmup = 1\n"
        "seed = 3\n";
    const fs::path cfg_path = work / "tiny.ini";
    {
        std::ofstream f(cfg_path, std::ios::binary);
        f << config_text;
    }

    check(run("train --config " + cfg_path.string() + " --out " +
              (work / "run1").string()) == 0,
          "train (classify) exits 0");
    check(fs::exists(work / "run1" / "metrics.csv") &&
              fs::exists(work / "run1" / "report.csv") &&
              fs::exists(work / "run1" / "checkpoint.json") &&
              fs::exists(work / "run1" / "manifest.json"),
          "train writes metrics, report, checkpoint, manifest");
    check(!fs::exists(work / "run1" / ".lock"), "train releases the run lock");

    const std::string metrics = slurp(work / "run1" / "metrics.csv");
    check(metrics.rfind("epoch,phase,fold,", 0) == 0 &&
              std::count(metrics.begin(), metrics.end(), '\n') == 3,
          "metrics has a header plus one row per epoch");

    bool verified = true;
    try {
        verify_manifest_hashes(read_manifest(work / "run1" / "manifest.json"),
                               work / "run1");
    } catch (const std::exception&) {
        verified = false;
    }
    check(verified, "train manifest hashes verify");

    Checkpoint ck = load_checkpoint(work / "run1" / "checkpoint.json");
    check(ck.kind == "topo-classifier" && ck.meta.count("t_cap") == 1,
          "checkpoint kind and metadata are recorded");

    check(run("train --config " + cfg_path.string() + " --out " +
              (work / "run2").string()) == 0,
          "second identical train exits 0");
    check(same_files(work / "run1" / "metrics.csv", work / "run2" / "metrics.csv") &&
              same_files(work / "run1" / "checkpoint.json",
                         work / "run2" / "checkpoint.json") &&
              same_files(work / "run1" / "report.csv", work / "run2" / "report.csv"),
          "identical config reproduces metrics, checkpoint, and report");

    // eval on the trained checkpoint recomputes the same held-out accuracy
    check(run("eval --checkpoint " + (work / "run1" / "checkpoint.json").string() +
              " --out " + (work / "eval.csv").string()) == 0,
          "eval exits 0");
    const double report_acc =
        report_value(slurp(work / "run1" / "report.csv"), "test_accuracy");
    const double eval_acc =
        report_value(slurp(work / "eval.csv"), "test_accuracy");
    check(report_acc == eval_acc, "eval reproduces the training-run accuracy");

    // dtm-regression smoke through the CLI
    const std::string reg_text =
        "n_points = 8\nn_train = 6\nn_test = 3\nbatch_size = 3\nepochs = 2\n"
        "eta_max = 0.01\nn_warmup = 1\nseed = 9\nk0 = 2\n";
    const fs::path reg_cfg = work / "reg.ini";
    {
        std::ofstream f(reg_cfg, std::ios::binary);
        f << reg_text;
    }
    check(run("train --config " + reg_cfg.string() + " --mode dtm-regression --out " +
              (work / "reg_run").string()) == 0,
          "train (dtm-regression) exits 0");
    check(cli_stdout().find("held-out MSE (k0=2):") != std::string::npos,
          "regression reports its held-out error");
    Checkpoint rck = load_checkpoint(work / "reg_run" / "checkpoint.json");
    check(rck.kind == "weight-net" && rck.params.has("wnet.phi6.l0.W"),
          "regression checkpoint stores the weight network");

    // export-weights applies the stored network to a cloud
    const fs::path wcsv = work / "weights.csv";
    check(run("export-weights --checkpoint " +
              (work / "reg_run" / "checkpoint.json").string() + " --cloud " +
              (work / "square.csv").string() + " --out " + wcsv.string() +
              " --svg " + (work / "weights.svg").string()) == 0,
          "export-weights exits 0");

    ad::Tape t;
    WeightNetConfig wcfg = WeightNetConfig::preset(rck.meta.at("wnet_preset"));
    if (rck.meta.count("wnet_batch_norm") && rck.meta.at("wnet_batch_norm") == "1")
        set_batch_norm(wcfg, true);
    const ad::RunMode wmode =
        uses_batch_norm(wcfg) ? ad::RunMode::train : ad::RunMode::eval;
    DistanceMatrix d = pairwise_distances(square_cloud());
    const auto& want =
        t.value(weights_for_cloud(t, rck.params, wcfg, d, wmode, nullptr, false));
    std::istringstream win(slurp(wcsv));
    std::string line;
    std::size_t rows = 0;
    bool weights_match = true;
    while (std::getline(win, line)) {
        std::size_t c1 = line.rfind(',');
        std::size_t c2 = line.rfind(',', c1 - 1);
        weights_match &= parse_double(line.substr(c2 + 1, c1 - c2 - 1)) == want[rows];
        ++rows;
    }
    check(rows == 4 && weights_match,
          "exported weights match the in-process network bitwise");
    check(slurp(work / "weights.svg").find("<svg") != std::string::npos,
          "weight scatter SVG is written");
}

void test_exit_codes() {
    check(run("pd --input " + (work / "no_such_file.csv").string()) == 2,
          "missing input exits 2");
    check(run("pd --input " + (work / "square.csv").string() +
              " --filtration learned") == 2,
          "learned filtration without checkpoint exits 2");
    check(run("pd --input " + (work / "square.csv").string() +
              " --filtration bogus") == 2,
          "unknown filtration exits 2");
    check(run("no-such-command") == 2, "unknown subcommand exits 2");
    check(run("") == 2, "missing subcommand exits 2");
    check(run("train --config " + (work / "absent.ini").string()) == 2,
          "missing config exits 2");

    // held lock -> state error
    fs::create_directories(work / "locked");
    { std::ofstream f(work / "locked" / ".lock"); }
    check(run("generate --count 1 --n 8 --out " + (work / "locked").string()) == 3,
          "locked output directory exits 3");
    fs::remove(work / "locked" / ".lock");

    // wrong checkpoint kind -> state error
    Checkpoint ck;
    ck.kind = "weight-net";
    ck.meta["wnet_preset"] = "desk";
    save_checkpoint(work / "wn.json", ck);
    check(run("eval --checkpoint " + (work / "wn.json").string()) == 3,
          "evaluating a non-classifier checkpoint exits 3");

    // weight-net checkpoint without parameters -> state error
    check(run("export-weights --checkpoint " + (work / "wn.json").string() +
              " --cloud " + (work / "square.csv").string()) == 3,
          "checkpoint without network parameters exits 3");

    // corrupt checkpoint file -> input error
    { std::ofstream f(work / "garbage.json"); f << "not json at all"; }
    check(run("eval --checkpoint " + (work / "garbage.json").string()) == 2,
          "unparsable checkpoint exits 2");
}

void test_gradcheck() {
    check(run("gradcheck --seed 1") == 0, "gradient suites pass");
    check(cli_stdout().find("all passed") != std::string::npos,
          "gradcheck reports success");
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_tests <path-to-cli>\n";
        return 1;
    }
    cli = argv[1];
    work = fs::temp_directory_path() /
           ("filtlearn_cli_tests_" + std::to_string(::getpid()));
    fs::remove_all(work);
    fs::create_directories(work);

    try {
        test_generate();
        test_pd();
        test_train_eval_export();
        test_exit_codes();
        test_gradcheck();
    } catch (const std::exception& e) {
        std::cout << "FAIL - unexpected exception: " << e.what() << std::endl;
        ++failures;
    }

    std::cout << checks - failures << "/" << checks << " cli checks passed\n";
    fs::remove_all(work);
    return failures == 0 ? 0 : 1;
}
