#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <vector>

#include "filtlearn/geometry.hpp"

namespace filtlearn {

/// Per-point filtration weights; same length as the cloud, finite, >= 0
/// for the standard constructions (learned weights may be any finite value).
using WeightVector = std::vector<double>;

/// A simplex of dimension 0..2 with strictly increasing vertex ids; unused
/// slots hold -1.
struct Simplex {
    int dim = 0;
    std::array<int, 3> v{-1, -1, -1};

    static Simplex vertex(int a) { return {0, {a, -1, -1}}; }
    static Simplex edge(int a, int b) { return {1, {a, b, -1}}; }
    static Simplex triangle(int a, int b, int c) { return {2, {a, b, c}}; }

    friend bool operator==(const Simplex&, const Simplex&) = default;
};

struct FiltrationCell {
    Simplex s;
    double value = 0.0;
};

/// Total order on cells: appearance value, then dimension, then vertex ids
/// lexicographically. This is the order every consumer (reduction, gradient
/// routing, dumps) sees.
bool cell_less(const FiltrationCell& a, const FiltrationCell& b);

/// A finite filtered complex: cells sorted by cell_less, faces before cofaces.
class Filtration {
public:
    explicit Filtration(std::vector<FiltrationCell> cells);

    std::size_t size() const { return cells_.size(); }
    const FiltrationCell& cell(std::size_t i) const { return cells_[i]; }
    const std::vector<FiltrationCell>& cells() const { return cells_; }

private:
    std::vector<FiltrationCell> cells_;
};

/// Distance-to-measure weight at each point: the q-power mean of distances to
/// the k0 nearest points *including the point itself* (self-distance 0), ties
/// broken toward smaller index. k0 = 1 gives all-zero weights.
WeightVector dtm_weights(const DistanceMatrix& d, std::size_t k0, double q);

/// First scale at which the edge {i, j} is present given endpoint weights:
/// max(wi, wj, (d + wi + wj) / 2).
double edge_appearance(double d, double wi, double wj);

/// Builds the weighted Rips filtration up to dimension max_dim (0..2) over
/// the given dissimilarity matrix, keeping only cells with value <= t_max.
/// Vertices appear at their weights, edges at edge_appearance, triangles at
/// the max of their three edges.
Filtration weighted_rips_filtration(const DistanceMatrix& d, const WeightVector& w,
                                    int max_dim = 2,
                                    double t_max = std::numeric_limits<double>::infinity());

} // namespace filtlearn
