#include "filtlearn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace filtlearn {

PointCloud::PointCloud(std::size_t dim, std::size_t cap) : dim_(dim), cap_(cap) {
    if (dim == 0) throw std::invalid_argument("PointCloud: dimension must be >= 1");
    if (cap == 0) throw std::invalid_argument("PointCloud: cap must be >= 1");
}

void PointCloud::add(std::span<const double> x, bool outlier) {
    if (x.size() != dim_)
        throw std::invalid_argument("PointCloud::add: wrong dimension");
    if (n_ + 1 > cap_)
        throw std::invalid_argument("PointCloud::add: exceeds configured cap");
    for (double c : x)
        if (!std::isfinite(c))
            throw std::invalid_argument("PointCloud::add: non-finite coordinate");
    coords_.insert(coords_.end(), x.begin(), x.end());
    outlier_.push_back(outlier ? 1 : 0);
    ++n_;
}

std::size_t PointCloud::outlier_count() const {
    std::size_t c = 0;
    for (auto f : outlier_) c += f;
    return c;
}

DistanceMatrix::DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {
    if (n == 0) throw std::invalid_argument("DistanceMatrix: size must be >= 1");
}

void DistanceMatrix::set(std::size_t i, std::size_t j, double d) {
    if (i == j) {
        if (d != 0.0) throw std::invalid_argument("DistanceMatrix::set: diagonal must be 0");
        return;
    }
    if (!std::isfinite(d) || d < 0.0)
        throw std::invalid_argument("DistanceMatrix::set: entries must be finite and >= 0");
    d_[i * n_ + j] = d;
    d_[j * n_ + i] = d;
}

void DistanceMatrix::validate() const {
    for (std::size_t i = 0; i < n_; ++i) {
        if (d_[i * n_ + i] != 0.0)
            throw std::invalid_argument("DistanceMatrix: nonzero diagonal");
        for (std::size_t j = i + 1; j < n_; ++j) {
            double a = d_[i * n_ + j], b = d_[j * n_ + i];
            if (!std::isfinite(a) || a < 0.0)
                throw std::invalid_argument("DistanceMatrix: non-finite or negative entry");
            if (a != b)
                throw std::invalid_argument("DistanceMatrix: asymmetric entries");
        }
    }
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("euclidean_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double t = a[k] - b[k];
        s += t * t;
    }
    return std::sqrt(s);
}

DistanceMatrix pairwise_distances(const PointCloud& pc) {
    const std::size_t n = pc.size();
    if (n == 0) throw std::invalid_argument("pairwise_distances: empty cloud");
    DistanceMatrix d(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            d.set(i, j, euclidean_distance(pc.point(i), pc.point(j)));
    return d;
}

std::vector<double> relative_distances(const PointCloud& pc, std::span<const double> x) {
    std::vector<double> out(pc.size());
    for (std::size_t i = 0; i < pc.size(); ++i)
        out[i] = euclidean_distance(pc.point(i), x);
    return out;
}

double hausdorff_distance(const PointCloud& a, const PointCloud& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("hausdorff_distance: dimension mismatch");
    if (a.size() == 0 || b.size() == 0)
        throw std::invalid_argument("hausdorff_distance: empty cloud");
    auto directed = [](const PointCloud& p, const PointCloud& q) {
        double worst = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < q.size(); ++j)
                best = std::min(best, euclidean_distance(p.point(i), q.point(j)));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

SyntheticTask synthetic_task_from_string(const std::string& name) {
    if (name == "circle_vs_disk_with_outliers" || name == "circle_vs_disk")
        return SyntheticTask::circle_vs_disk_with_outliers;
    if (name == "two_scales") return SyntheticTask::two_scales;
    throw std::invalid_argument("unknown synthetic task: " + name);
}

std::string to_string(SyntheticTask task) {
    switch (task) {
        case SyntheticTask::circle_vs_disk_with_outliers: return "circle_vs_disk_with_outliers";
        case SyntheticTask::two_scales: return "two_scales";
    }
    throw std::logic_error("unreachable");
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void append_disk_point(PointCloud& pc, SplitMix64& rng, bool outlier) {
    double theta = kTwoPi * rng.uniform01();
    double r = std::sqrt(rng.uniform01()); // area-uniform
    double p[2] = {r * std::cos(theta), r * std::sin(theta)};
    pc.add(p, outlier);
}

} // namespace

PointCloud generate_synthetic(SyntheticTask task, std::size_t n_points,
                              std::size_t n_outliers, double noise_sigma,
                              std::uint64_t seed) {
    if (n_points < 4)
        throw std::invalid_argument("generate_synthetic: need at least 4 main points");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw std::invalid_argument("generate_synthetic: noise_sigma must be finite and >= 0");

    const int label = static_cast<int>(seed % 2);
    SplitMix64 main_rng = SplitMix64::substream(seed, 0);
    SplitMix64 outlier_rng = SplitMix64::substream(seed, 1);
    SplitMix64 noise_rng = SplitMix64::substream(seed, 2);

    PointCloud pc(2, std::max<std::size_t>(PointCloud::kDefaultCap, n_points + n_outliers));

    switch (task) {
        case SyntheticTask::circle_vs_disk_with_outliers: {
            for (std::size_t i = 0; i < n_points; ++i) {
                if (label == 0) {
                    double theta = kTwoPi * main_rng.uniform01();
                    double p[2] = {std::cos(theta), std::sin(theta)};
                    pc.add(p, false);
                } else {
                    append_disk_point(pc, main_rng, false);
                }
            }
            break;
        }
        case SyntheticTask::two_scales: {
            for (std::size_t i = 0; i < n_points; ++i) {
                double theta = kTwoPi * main_rng.uniform01();
                if (label == 0) {
                    double p[2] = {std::cos(theta), std::sin(theta)};
                    pc.add(p, false);
                } else {
                    double cx = (i < (n_points + 1) / 2) ? -0.5 : 0.5;
                    double p[2] = {cx + 0.5 * std::cos(theta), 0.5 * std::sin(theta)};
                    pc.add(p, false);
                }
            }
            break;
        }
    }

    for (std::size_t i = 0; i < n_outliers; ++i)
        append_disk_point(pc, outlier_rng, true);

    if (noise_sigma > 0.0) {
        PointCloud noisy(pc.dim(), n_points + n_outliers);
        for (std::size_t i = 0; i < pc.size(); ++i) {
            auto p = pc.point(i);
            double q[2] = {p[0] + noise_sigma * noise_rng.normal(),
                           p[1] + noise_sigma * noise_rng.normal()};
            noisy.add(q, pc.is_outlier(i));
        }
        return noisy;
    }
    return pc;
}

DistanceMatrix perturb_distance_matrix(const DistanceMatrix& d, double sigma,
                                       std::uint64_t seed) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("perturb_distance_matrix: sigma must be finite and >= 0");
    if (sigma == 0.0) return d;
    DistanceMatrix out(d.size());
    SplitMix64 rng = SplitMix64::substream(seed, 7);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = i + 1; j < d.size(); ++j)
            out.set(i, j, std::max(0.0, d(i, j) + sigma * rng.normal()));
    return out;
}

DistanceMatrix generate_surrogate_dissimilarity(std::size_t n_sub, double noise_sigma,
                                                std::uint64_t seed) {
    if (n_sub < 8)
        throw std::invalid_argument("generate_surrogate_dissimilarity: need at least 8 points");
    const int label = static_cast<int>(seed % 2);
    constexpr std::size_t kBaseN = 370;

    // Deterministic base shapes (independent of the instance seed): an open
    // arc spanning three quarters of a circle vs the full loop.
    PointCloud base(2, kBaseN);
    SplitMix64 base_rng(0x5u + static_cast<std::uint64_t>(label));
    for (std::size_t i = 0; i < kBaseN; ++i) {
        double frac = (static_cast<double>(i) + base_rng.uniform01()) / kBaseN;
        double theta = (label == 0) ? 1.5 * kTwoPi / 2.0 * frac : kTwoPi * frac;
        double p[2] = {std::cos(theta), std::sin(theta)};
        base.add(p, false);
    }

    SplitMix64 pick = SplitMix64::substream(seed, 3);
    std::vector<std::size_t> idx(kBaseN);
    for (std::size_t i = 0; i < kBaseN; ++i) idx[i] = i;
    for (std::size_t i = kBaseN - 1; i > 0; --i)
        std::swap(idx[i], idx[pick.next_below(i + 1)]);
    idx.resize(n_sub);
    std::sort(idx.begin(), idx.end());

    DistanceMatrix d(n_sub);
    for (std::size_t i = 0; i < n_sub; ++i)
        for (std::size_t j = i + 1; j < n_sub; ++j)
            d.set(i, j, euclidean_distance(base.point(idx[i]), base.point(idx[j])) / 2.0);
    return perturb_distance_matrix(d, noise_sigma, seed);
}

} // namespace filtlearn
