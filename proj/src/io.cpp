#include "filtlearn/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "filtlearn/errors.hpp"
#include "filtlearn/num_format.hpp"

#include "json.hpp"

namespace filtlearn {

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InputError("cannot open " + p.string() + " for writing");
    out << text;
    if (!out) throw InputError("write failed: " + p.string());
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty() && cur.back() == '\r') cur.pop_back();
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

} // namespace

// ---------------------------------------------------------------------------
// point clouds
// ---------------------------------------------------------------------------

void write_point_cloud_csv(const std::filesystem::path& p, const PointCloud& pc) {
    std::string out;
    for (std::size_t i = 0; i < pc.size(); ++i) {
        for (double c : pc.point(i)) {
            out += format_double(c);
            out += ',';
        }
        out += pc.is_outlier(i) ? '1' : '0';
        out += '\n';
    }
    write_file(p, out);
}

PointCloud read_point_cloud_csv(const std::filesystem::path& p) {
    auto lines = split_lines(read_file(p));
    std::vector<std::vector<double>> rows;
    for (const auto& line : lines) {
        if (trim(line).empty()) continue;
        std::vector<double> row;
        for (const auto& tok : split_csv(line)) row.push_back(parse_double(tok));
        if (!rows.empty() && row.size() != rows.front().size())
            throw InputError(p.string() + ": ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError(p.string() + ": empty point cloud");
    const std::size_t ncols = rows.front().size();
    bool has_flag = ncols >= 2;
    for (const auto& r : rows)
        if (r.back() != 0.0 && r.back() != 1.0) has_flag = false;
    const std::size_t dim = has_flag ? ncols - 1 : ncols;
    PointCloud pc(dim, rows.size());
    for (const auto& r : rows)
        pc.add(std::span<const double>(r.data(), dim), has_flag && r.back() == 1.0);
    return pc;
}

// ---------------------------------------------------------------------------
// distance matrices
// ---------------------------------------------------------------------------

void write_distance_matrix_csv(const std::filesystem::path& p,
                               const DistanceMatrix& d) {
    std::string out;
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d.size(); ++j) {
            if (j) out += ',';
            out += format_double(d(i, j));
        }
        out += '\n';
    }
    write_file(p, out);
}

DistanceMatrix read_distance_matrix_csv(const std::filesystem::path& p) {
    auto lines = split_lines(read_file(p));
    std::vector<std::vector<double>> rows;
    for (const auto& line : lines) {
        if (trim(line).empty()) continue;
        std::vector<double> row;
        for (const auto& tok : split_csv(line)) row.push_back(parse_double(tok));
        rows.push_back(std::move(row));
    }
    const std::size_t n = rows.size();
    if (n == 0) throw InputError(p.string() + ": empty distance matrix");
    for (const auto& r : rows)
        if (r.size() != n)
            throw InputError(p.string() + ": distance matrix is not square");
    DistanceMatrix d(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i][i] != 0.0)
            throw InputError(p.string() + ": nonzero diagonal");
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(rows[i][j] - rows[j][i]) > 1e-12)
                throw InputError(p.string() + ": asymmetric beyond 1e-12");
            d.set(i, j, (rows[i][j] + rows[j][i]) / 2.0);
        }
    }
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------
// labels
// ---------------------------------------------------------------------------

void write_labels_csv(const std::filesystem::path& p,
                      const std::vector<std::pair<std::string, int>>& rows) {
    std::string out;
    for (const auto& [name, label] : rows) {
        out += name;
        out += ',';
        out += std::to_string(label);
        out += '\n';
    }
    write_file(p, out);
}

std::vector<std::pair<std::string, int>> read_labels_csv(
    const std::filesystem::path& p) {
    std::vector<std::pair<std::string, int>> out;
    for (const auto& line : split_lines(read_file(p))) {
        if (trim(line).empty()) continue;
        auto cols = split_csv(line);
        if (cols.size() != 2) throw InputError(p.string() + ": expected name,label");
        double v = parse_double(trim(cols[1]));
        if (v != std::floor(v)) throw InputError(p.string() + ": non-integer label");
        out.emplace_back(trim(cols[0]), static_cast<int>(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// diagrams and filtrations
// ---------------------------------------------------------------------------

void write_diagram_csv(const std::filesystem::path& p, const PersistenceDiagram& d) {
    std::string out;
    for (const auto& pt : d.points) {
        out += std::to_string(pt.degree);
        out += ',';
        out += format_double(pt.birth);
        out += ',';
        out += format_double(pt.death);
        out += '\n';
    }
    write_file(p, out);
}

PersistenceDiagram read_diagram_csv(const std::filesystem::path& p) {
    PersistenceDiagram d;
    for (const auto& line : split_lines(read_file(p))) {
        if (trim(line).empty()) continue;
        auto cols = split_csv(line);
        if (cols.size() != 3)
            throw InputError(p.string() + ": expected degree,birth,death");
        DiagramPoint pt;
        double deg = parse_double(trim(cols[0]));
        if (deg != std::floor(deg) || deg < 0)
            throw InputError(p.string() + ": bad degree");
        pt.degree = static_cast<int>(deg);
        pt.birth = parse_double(trim(cols[1]));
        pt.death = parse_double(trim(cols[2]));
        pt.birth_cell = -1;
        pt.death_cell = std::isinf(pt.death) ? -1 : -2; // pairing not stored
        d.points.push_back(pt);
    }
    return d;
}

void write_filtration_csv(const std::filesystem::path& p, const Filtration& f) {
    std::string out;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const FiltrationCell& c = f.cell(k);
        out += std::to_string(c.s.dim);
        for (int slot = 0; slot < 3; ++slot) {
            out += ',';
            out += std::to_string(slot <= c.s.dim ? c.s.v[slot] : -1);
        }
        out += ',';
        out += format_double(c.value);
        out += '\n';
    }
    write_file(p, out);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kCheckpointFormat = "filtlearn-checkpoint-v1";
constexpr const char* kManifestFormat = "filtlearn-manifest-v1";
} // namespace

void save_checkpoint(const std::filesystem::path& p, const Checkpoint& c) {
    json j;
    j["format"] = kCheckpointFormat;
    j["kind"] = c.kind;
    j["meta"] = c.meta;
    j["adam"] = {{"t", c.adam.t},
                 {"beta1", c.adam.cfg.beta1},
                 {"beta2", c.adam.cfg.beta2},
                 {"eps", c.adam.cfg.eps}};
    json params = json::object();
    for (const auto& [name, prm] : c.params) {
        json e;
        e["shape"] = prm.shape;
        e["trainable"] = prm.trainable;
        e["value"] = prm.value;
        e["m"] = prm.m;
        e["v"] = prm.v;
        params[name] = std::move(e);
    }
    j["params"] = std::move(params);
    write_file(p, j.dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& p) {
    json j;
    try {
        j = json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw InputError(p.string() + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat)
            throw StateError(p.string() + ": not a checkpoint file");
        Checkpoint c;
        c.kind = j.at("kind").get<std::string>();
        c.meta = j.at("meta").get<std::map<std::string, std::string>>();
        c.adam.t = j.at("adam").at("t").get<std::int64_t>();
        c.adam.cfg.beta1 = j.at("adam").at("beta1").get<double>();
        c.adam.cfg.beta2 = j.at("adam").at("beta2").get<double>();
        c.adam.cfg.eps = j.at("adam").at("eps").get<double>();
        for (const auto& [name, e] : j.at("params").items()) {
            auto shape = e.at("shape").get<std::vector<std::size_t>>();
            auto value = e.at("value").get<std::vector<double>>();
            ad::Param& prm = c.params.add(name, shape, value);
            prm.trainable = e.at("trainable").get<bool>();
            auto m = e.at("m").get<std::vector<double>>();
            auto v = e.at("v").get<std::vector<double>>();
            if (m.size() != prm.count() || v.size() != prm.count())
                throw StateError(p.string() + ": moment size mismatch for " + name);
            prm.m = std::move(m);
            prm.v = std::move(v);
        }
        return c;
    } catch (const json::exception& e) {
        throw StateError(p.string() + ": malformed checkpoint: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

namespace {

long long parse_int(const std::string& s, const std::string& key) {
    double v = parse_double(s);
    if (v != std::floor(v) || std::abs(v) > 1e15)
        throw InputError("config: " + key + " must be an integer");
    return static_cast<long long>(v);
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
    long long v = parse_int(s, key);
    if (v < 0) throw InputError("config: " + key + " must be nonnegative");
    return static_cast<std::uint64_t>(v);
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    static const std::vector<std::string> sections = {"dataset", "pipeline", "optim"};
    for (const auto& raw : split_lines(text)) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw InputError("config: malformed section header: " + line);
            std::string sec = trim(line.substr(1, line.size() - 2));
            if (std::find(sections.begin(), sections.end(), sec) == sections.end())
                throw InputError("config: unknown section: " + sec);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config: expected key = value: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "task") cfg.task = val;
        else if (key == "n_points") cfg.n_points = parse_u64(val, key);
        else if (key == "n_outliers") cfg.n_outliers = parse_u64(val, key);
        else if (key == "noise_sigma") cfg.noise_sigma = parse_double(val);
        else if (key == "n_train") cfg.n_train = parse_u64(val, key);
        else if (key == "n_test") cfg.n_test = parse_u64(val, key);
        else if (key == "filtration") cfg.filtration = val;
        else if (key == "k0") cfg.k0 = parse_u64(val, key);
        else if (key == "q") cfg.q = parse_double(val);
        else if (key == "degree") cfg.degree = static_cast<int>(parse_int(val, key));
        else if (key == "t_max") cfg.t_max = parse_double(val);
        else if (key == "wnet_preset") cfg.wnet_preset = val;
        else if (key == "wnet_batch_norm") {
            if (val == "1" || val == "true") cfg.wnet_batch_norm = true;
            else if (val == "0" || val == "false") cfg.wnet_batch_norm = false;
            else throw InputError("config: wnet_batch_norm must be 0/1/true/false");
        }
        else if (key == "deepsets_preset") cfg.deepsets_preset = val;
        else if (key == "perslay_centers") cfg.perslay_centers = parse_u64(val, key);
        else if (key == "perslay_out") cfg.perslay_out = parse_u64(val, key);
        else if (key == "t_cap") cfg.t_cap = parse_double(val);
        else if (key == "batch_size") cfg.batch_size = parse_u64(val, key);
        else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(val, key));
        else if (key == "epochs_phase1")
            cfg.epochs_phase1 = static_cast<int>(parse_int(val, key));
        else if (key == "epochs_phase2")
            cfg.epochs_phase2 = static_cast<int>(parse_int(val, key));
        else if (key == "eta_max") cfg.eta_max = parse_double(val);
        else if (key == "eta_max_phase1") cfg.eta_max_phase1 = parse_double(val);
        else if (key == "n_warmup") cfg.n_warmup = static_cast<int>(parse_int(val, key));
        else if (key == "seed") cfg.seed = parse_u64(val, key);
        else if (key == "folds") cfg.folds = static_cast<int>(parse_int(val, key));
        else if (key == "eval") cfg.eval_mode = val;
        else throw InputError("config: unknown key: " + key);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& p) {
    return parse_config_text(read_file(p));
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::string s;
    auto kv = [&](const char* k, const std::string& v) {
        s += k;
        s += " = ";
        s += v;
        s += '\n';
    };
    s += "[dataset]\n";
    kv("task", cfg.task);
    kv("n_points", std::to_string(cfg.n_points));
    kv("n_outliers", std::to_string(cfg.n_outliers));
    kv("noise_sigma", format_double(cfg.noise_sigma));
    kv("n_train", std::to_string(cfg.n_train));
    kv("n_test", std::to_string(cfg.n_test));
    s += "\n[pipeline]\n";
    kv("filtration", cfg.filtration);
    kv("k0", std::to_string(cfg.k0));
    kv("q", format_double(cfg.q));
    kv("degree", std::to_string(cfg.degree));
    kv("t_max", format_double(cfg.t_max));
    kv("wnet_preset", cfg.wnet_preset);
    kv("wnet_batch_norm", cfg.wnet_batch_norm ? "1" : "0");
    kv("deepsets_preset", cfg.deepsets_preset);
    kv("perslay_centers", std::to_string(cfg.perslay_centers));
    kv("perslay_out", std::to_string(cfg.perslay_out));
    kv("t_cap", format_double(cfg.t_cap));
    s += "\n[optim]\n";
    kv("batch_size", std::to_string(cfg.batch_size));
    kv("epochs", std::to_string(cfg.epochs));
    kv("epochs_phase1", std::to_string(cfg.epochs_phase1));
    kv("epochs_phase2", std::to_string(cfg.epochs_phase2));
    kv("eta_max", format_double(cfg.eta_max));
    kv("eta_max_phase1", format_double(cfg.eta_max_phase1));
    kv("n_warmup", std::to_string(cfg.n_warmup));
    kv("seed", std::to_string(cfg.seed));
    kv("folds", std::to_string(cfg.folds));
    kv("eval", cfg.eval_mode);
    return s;
}

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

std::uint64_t fnv1a_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    std::uint64_t h = 14695981039346656037ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

} // namespace

void write_manifest(const std::filesystem::path& p, const RunManifest& m) {
    json j;
    j["format"] = kManifestFormat;
    j["config"] = m.config_text;
    j["revision"] = m.revision;
    j["seeds"] = m.seeds;
    j["file_hashes"] = m.file_hashes;
    j["outputs"] = m.outputs;
    write_file(p, j.dump(1) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& p) {
    json j;
    try {
        j = json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw InputError(p.string() + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kManifestFormat)
            throw StateError(p.string() + ": not a manifest");
        RunManifest m;
        m.config_text = j.at("config").get<std::string>();
        m.revision = j.at("revision").get<std::string>();
        m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        m.file_hashes = j.at("file_hashes").get<std::map<std::string, std::string>>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        return m;
    } catch (const json::exception& e) {
        throw StateError(p.string() + ": malformed manifest: " + e.what());
    }
}

void verify_manifest_hashes(const RunManifest& m,
                            const std::filesystem::path& base_dir) {
    for (const auto& [rel, expect] : m.file_hashes) {
        const auto path = base_dir / rel;
        std::string got;
        try {
            got = hex64(fnv1a_file(path));
        } catch (const InputError&) {
            throw StateError("manifest: missing file " + path.string());
        }
        if (got != expect)
            throw StateError("manifest: hash mismatch for " + path.string());
    }
}

// ---------------------------------------------------------------------------
// SVG exports
// ---------------------------------------------------------------------------

namespace {

std::string svg_num(double v) {
    // two decimals are plenty for figures
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace

void write_diagram_svg(const std::filesystem::path& p, const PersistenceDiagram& d,
                       int degree) {
    const double size = 440.0, margin = 40.0, plot = size - 2 * margin;
    double vmax = 0.0;
    for (const auto& pt : d.points) {
        if (pt.degree != degree) continue;
        vmax = std::max(vmax, pt.birth);
        if (!pt.essential()) vmax = std::max(vmax, pt.death);
    }
    if (vmax <= 0.0) vmax = 1.0;
    vmax *= 1.05;
    auto X = [&](double v) { return margin + v / vmax * plot; };
    auto Y = [&](double v) { return size - margin - v / vmax * plot; };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"440\" height=\"440\" "
         "viewBox=\"0 0 440 440\">\n";
    s += "<rect width=\"440\" height=\"440\" fill=\"white\"/>\n";
    s += "<line x1=\"" + svg_num(margin) + "\" y1=\"" + svg_num(size - margin) +
         "\" x2=\"" + svg_num(size - margin) + "\" y2=\"" + svg_num(size - margin) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + svg_num(margin) + "\" y1=\"" + svg_num(size - margin) +
         "\" x2=\"" + svg_num(margin) + "\" y2=\"" + svg_num(margin) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + svg_num(X(0)) + "\" y1=\"" + svg_num(Y(0)) + "\" x2=\"" +
         svg_num(X(vmax)) + "\" y2=\"" + svg_num(Y(vmax)) +
         "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n";
    s += "<text x=\"" + svg_num(size / 2) + "\" y=\"" + svg_num(size - 8) +
         "\" font-size=\"13\" text-anchor=\"middle\">birth</text>\n";
    s += "<text x=\"14\" y=\"" + svg_num(size / 2) +
         "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         svg_num(size / 2) + ")\">death</text>\n";
    for (const auto& pt : d.points) {
        if (pt.degree != degree) continue;
        if (pt.essential()) {
            s += "<path d=\"M " + svg_num(X(pt.birth) - 4) + " " + svg_num(margin + 4) +
                 " l 8 0 l -4 -8 z\" fill=\"#2ca02c\"/>\n";
        } else {
            s += "<circle cx=\"" + svg_num(X(pt.birth)) + "\" cy=\"" +
                 svg_num(Y(pt.death)) + "\" r=\"3.5\" fill=\"#d62728\" "
                 "fill-opacity=\"0.75\"/>\n";
        }
    }
    s += "</svg>\n";
    write_file(p, s);
}

void write_weighted_cloud_svg(const std::filesystem::path& p, const PointCloud& pc,
                              const WeightVector& w) {
    if (w.size() != pc.size())
        throw InputError("weighted cloud svg: weight count mismatch");
    if (pc.dim() != 2)
        throw InputError("weighted cloud svg: only 2-D clouds supported");
    const double size = 440.0, margin = 40.0, plot = size - 2 * margin;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    double wmin = 1e300, wmax = -1e300;
    for (std::size_t i = 0; i < pc.size(); ++i) {
        auto pt = pc.point(i);
        xmin = std::min(xmin, pt[0]);
        xmax = std::max(xmax, pt[0]);
        ymin = std::min(ymin, pt[1]);
        ymax = std::max(ymax, pt[1]);
        wmin = std::min(wmin, w[i]);
        wmax = std::max(wmax, w[i]);
    }
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
    const double wspan = std::max(wmax - wmin, 1e-12);
    auto X = [&](double v) { return margin + (v - xmin) / span * plot; };
    auto Y = [&](double v) { return size - margin - (v - ymin) / span * plot; };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"440\" height=\"440\" "
         "viewBox=\"0 0 440 440\">\n";
    s += "<rect width=\"440\" height=\"440\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < pc.size(); ++i) {
        auto pt = pc.point(i);
        const double t = (w[i] - wmin) / wspan; // 0 = cold, 1 = hot
        const int r = static_cast<int>(44 + t * (215 - 44));
        const int g = static_cast<int>(123 - t * (123 - 25));
        const int b = static_cast<int>(182 - t * (182 - 28));
        s += "<circle cx=\"" + svg_num(X(pt[0])) + "\" cy=\"" + svg_num(Y(pt[1])) +
             "\" r=\"5\" fill=\"rgb(" + std::to_string(r) + "," + std::to_string(g) +
             "," + std::to_string(b) + ")\"";
        if (pc.is_outlier(i)) s += " stroke=\"black\" stroke-width=\"1.6\"";
        s += "/>\n";
    }
    s += "<text x=\"" + svg_num(margin) + "\" y=\"20\" font-size=\"12\">weight " +
         format_double(wmin) + " (blue) to " + format_double(wmax) + " (red); "
         "outliers ringed</text>\n";
    s += "</svg>\n";
    write_file(p, s);
}

// ---------------------------------------------------------------------------
// directory lock
// ---------------------------------------------------------------------------

DirLock::DirLock(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
    file_ = dir / ".lock";
    int fd = ::open(file_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw StateError("output directory is locked (remove " + file_.string() +
                         " if no other run is active)");
    ::close(fd);
    owned_ = true;
}

DirLock::~DirLock() {
    if (owned_) ::unlink(file_.c_str());
}

} // namespace filtlearn
