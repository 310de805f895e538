#include "filtlearn/filtration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace filtlearn {

bool cell_less(const FiltrationCell& a, const FiltrationCell& b) {
    if (a.value != b.value) return a.value < b.value;
    if (a.s.dim != b.s.dim) return a.s.dim < b.s.dim;
    return a.s.v < b.s.v;
}

Filtration::Filtration(std::vector<FiltrationCell> cells) : cells_(std::move(cells)) {
    if (!std::is_sorted(cells_.begin(), cells_.end(),
                        [](const FiltrationCell& a, const FiltrationCell& b) {
                            return cell_less(a, b);
                        }))
        throw std::invalid_argument("Filtration: cells not in filtration order");
}

WeightVector dtm_weights(const DistanceMatrix& d, std::size_t k0, double q) {
    const std::size_t n = d.size();
    if (k0 < 1 || k0 > n)
        throw std::invalid_argument("dtm_weights: k0 must be in [1, n]");
    if (!(q > 0.0) || !std::isfinite(q))
        throw std::invalid_argument("dtm_weights: q must be finite and > 0");

    WeightVector w(n, 0.0);
    if (k0 == 1) return w; // nearest point is the point itself, distance 0

    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = d.row(i);
        row.assign(r.begin(), r.end());
        std::nth_element(row.begin(), row.begin() + (k0 - 1), row.end());
        // Canonical (ascending) summation order so relabelling the points
        // reproduces each weight bit-for-bit.
        std::sort(row.begin(), row.begin() + k0);
        double acc = 0.0;
        for (std::size_t k = 0; k < k0; ++k) acc += std::pow(row[k], q);
        w[i] = std::pow(acc / static_cast<double>(k0), 1.0 / q);
    }
    return w;
}

double edge_appearance(double d, double wi, double wj) {
    return std::max({wi, wj, (d + wi + wj) / 2.0});
}

Filtration weighted_rips_filtration(const DistanceMatrix& d, const WeightVector& w,
                                    int max_dim, double t_max) {
    const std::size_t n = d.size();
    if (w.size() != n)
        throw std::invalid_argument("weighted_rips_filtration: weight length mismatch");
    for (double wi : w)
        if (!std::isfinite(wi))
            throw std::invalid_argument("weighted_rips_filtration: non-finite weight");
    if (max_dim < 0 || max_dim > 2)
        throw std::invalid_argument("weighted_rips_filtration: max_dim must be 0, 1 or 2");
    if (std::isnan(t_max))
        throw std::invalid_argument("weighted_rips_filtration: t_max is NaN");

    std::vector<FiltrationCell> cells;
    cells.reserve(n + (max_dim >= 1 ? n * (n - 1) / 2 : 0));

    for (std::size_t i = 0; i < n; ++i)
        if (w[i] <= t_max)
            cells.push_back({Simplex::vertex(static_cast<int>(i)), w[i]});

    std::vector<double> edge_val; // full matrix for triangle lookups
    if (max_dim >= 1) {
        edge_val.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double v = edge_appearance(d(i, j), w[i], w[j]);
                edge_val[i * n + j] = v;
                edge_val[j * n + i] = v;
                if (v <= t_max)
                    cells.push_back(
                        {Simplex::edge(static_cast<int>(i), static_cast<int>(j)), v});
            }
    }
    if (max_dim >= 2) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                for (std::size_t k = j + 1; k < n; ++k) {
                    double v = std::max(
                        {edge_val[i * n + j], edge_val[i * n + k], edge_val[j * n + k]});
                    if (v <= t_max)
                        cells.push_back({Simplex::triangle(static_cast<int>(i),
                                                           static_cast<int>(j),
                                                           static_cast<int>(k)),
                                         v});
                }
    }

    std::sort(cells.begin(), cells.end(),
              [](const FiltrationCell& a, const FiltrationCell& b) {
                  return cell_less(a, b);
              });
    return Filtration(std::move(cells));
}

} // namespace filtlearn
