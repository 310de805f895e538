#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "filtlearn/rng.hpp"

namespace filtlearn {

/// Finite point cloud in R^d, row-major flat storage. Each point carries an
/// outlier flag (metadata only; no algorithm reads it except reporting).
class PointCloud {
public:
    static constexpr std::size_t kDefaultCap = 4096;

    explicit PointCloud(std::size_t dim, std::size_t cap = kDefaultCap);

    void add(std::span<const double> x, bool outlier = false);

    std::size_t size() const { return n_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> point(std::size_t i) const {
        return {coords_.data() + i * dim_, dim_};
    }
    bool is_outlier(std::size_t i) const { return outlier_[i] != 0; }
    std::size_t outlier_count() const;

private:
    std::size_t dim_;
    std::size_t cap_;
    std::size_t n_ = 0;
    std::vector<double> coords_;
    std::vector<std::uint8_t> outlier_;
};

/// Symmetric nonnegative dissimilarity matrix with zero diagonal. Symmetry is
/// structural: set(i, j, d) writes both mirror cells, so (i,j) == (j,i) holds
/// bitwise. Rows are contiguous for fast per-point pooling.
class DistanceMatrix {
public:
    explicit DistanceMatrix(std::size_t n);

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, double d);
    std::span<const double> row(std::size_t i) const { return {d_.data() + i * n_, n_}; }

    /// Throws std::invalid_argument on non-finite/negative entries, nonzero
    /// diagonal, or (for matrices built some other way) asymmetry.
    void validate() const;

private:
    std::size_t n_;
    std::vector<double> d_;
};

double euclidean_distance(std::span<const double> a, std::span<const double> b);

DistanceMatrix pairwise_distances(const PointCloud& pc);

/// Distances from one query point (same dimension) to every cloud point.
std::vector<double> relative_distances(const PointCloud& pc, std::span<const double> x);

/// Symmetric Hausdorff distance between two clouds of equal dimension.
double hausdorff_distance(const PointCloud& a, const PointCloud& b);

enum class SyntheticTask {
    circle_vs_disk_with_outliers,
    two_scales,
};

SyntheticTask synthetic_task_from_string(const std::string& name);
std::string to_string(SyntheticTask task);

/// Deterministic labelled cloud generator; the class label is seed % 2.
/// circle_vs_disk_with_outliers: class 0 = unit circle, class 1 = area-uniform
/// unit disk. two_scales: class 0 = one circle radius 1, class 1 = two circles
/// radius 1/2 centred at (+-1/2, 0). Both tasks then append n_outliers
/// area-uniform disk points (flagged) and add N(0, sigma^2) noise to every
/// coordinate. Draw order is fixed via substreams, so layouts are stable.
PointCloud generate_synthetic(SyntheticTask task, std::size_t n_points,
                              std::size_t n_outliers, double noise_sigma,
                              std::uint64_t seed);

/// Adds one N(0, sigma^2) draw to each off-diagonal pair (i < j, row-major
/// order), clamps at zero, keeps symmetry. sigma == 0 returns the input
/// unchanged (bitwise).
DistanceMatrix perturb_distance_matrix(const DistanceMatrix& d, double sigma,
                                       std::uint64_t seed);

/// Surrogate open-vs-closed shape task over dissimilarity matrices: label =
/// seed % 2 picks a base shape (open arc / full loop), a deterministic
/// subsample of n_sub base points is taken, and the rescaled distance matrix
/// is returned with symmetric noise applied. No coordinates are exposed.
DistanceMatrix generate_surrogate_dissimilarity(std::size_t n_sub, double noise_sigma,
                                                std::uint64_t seed);

} // namespace filtlearn
