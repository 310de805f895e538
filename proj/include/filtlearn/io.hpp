#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "filtlearn/autodiff.hpp"
#include "filtlearn/filtration.hpp"
#include "filtlearn/geometry.hpp"
#include "filtlearn/optim.hpp"
#include "filtlearn/persistence.hpp"
#include "filtlearn/training.hpp"

namespace filtlearn {

// All writers emit shortest round-trip decimal strings, so every read-back
// reproduces the in-memory doubles bit for bit. Malformed files raise
// InputError.

// Point cloud CSV: one point per line, coordinate columns, trailing 0/1
// outlier column (the reader also accepts files without it: a final column is
// treated as the flag only when every value in it is 0 or 1 and there are at
// least two columns).
void write_point_cloud_csv(const std::filesystem::path& p, const PointCloud& pc);
PointCloud read_point_cloud_csv(const std::filesystem::path& p);

// Distance matrix CSV: n rows of n entries. The reader validates symmetry
// within 1e-12 and symmetrizes by averaging; larger asymmetry is an error.
void write_distance_matrix_csv(const std::filesystem::path& p,
                               const DistanceMatrix& d);
DistanceMatrix read_distance_matrix_csv(const std::filesystem::path& p);

// Labels CSV: `filename,label` per line.
void write_labels_csv(const std::filesystem::path& p,
                      const std::vector<std::pair<std::string, int>>& rows);
std::vector<std::pair<std::string, int>> read_labels_csv(
    const std::filesystem::path& p);

// Diagram CSV: `degree,birth,death` per point, `inf` for essential deaths.
// Reading loses the pairing (cell indices come back as -1).
void write_diagram_csv(const std::filesystem::path& p, const PersistenceDiagram& d);
PersistenceDiagram read_diagram_csv(const std::filesystem::path& p);

// Filtration dump: `dim,v0,v1,v2,value`, unused vertex slots -1.
void write_filtration_csv(const std::filesystem::path& p, const Filtration& f);

// ---------------------------------------------------------------------------

/// Everything needed to resume or apply a model: parameters with optimizer
/// moments, the optimizer step counter, a kind tag, and string metadata
/// (config echo). Round-trips bit-exactly.
struct Checkpoint {
    ad::ParameterStore params;
    ad::AdamState adam;
    std::string kind;
    std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::filesystem::path& p, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& p);

// ---------------------------------------------------------------------------

/// Flat `key = value` config with `[section]` headers and `#` comments.
/// Sections are organizational; keys are globally unique and all optional.
/// Unknown keys are errors.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& p);
std::string config_to_text(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------

std::uint64_t fnv1a_file(const std::filesystem::path& p);

/// Record of one experiment run: the exact config, a code revision string,
/// the seeds used, content hashes of the input/output files, and the output
/// paths. Hashes recomputed on load must match.
struct RunManifest {
    std::string config_text;
    std::string revision;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::string> file_hashes; // relative path -> hex fnv1a
    std::vector<std::string> outputs;
};

void write_manifest(const std::filesystem::path& p, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& p);
/// Recomputes every hash relative to base_dir; mismatch or missing file
/// raises StateError.
void verify_manifest_hashes(const RunManifest& m,
                            const std::filesystem::path& base_dir);

// ---------------------------------------------------------------------------

/// Static scatter of a diagram's points for one degree (essentials drawn on
/// the top edge).
void write_diagram_svg(const std::filesystem::path& p, const PersistenceDiagram& d,
                       int degree);

/// Cloud scatter with per-point weights mapped to color; outliers ringed.
void write_weighted_cloud_svg(const std::filesystem::path& p, const PointCloud& pc,
                              const WeightVector& w);

// ---------------------------------------------------------------------------

/// Exclusive output-directory lock (`.lock` sentinel created O_EXCL, removed
/// on destruction). A held lock raises StateError.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::filesystem::path file_;
    bool owned_ = false;
};

} // namespace filtlearn
