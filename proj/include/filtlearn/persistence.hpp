#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "filtlearn/filtration.hpp"

namespace filtlearn {

/// One persistence interval. birth_cell / death_cell index into the cells of
/// the filtration that produced the diagram; negative cell indices mean the
/// pairing is not available (read back from CSV). An essential class lives
/// forever: death == +infinity (and death_cell == -1 when produced here).
struct DiagramPoint {
    int degree = 0;
    double birth = 0.0;
    double death = std::numeric_limits<double>::infinity();
    int birth_cell = -1;
    int death_cell = -1;

    bool essential() const { return std::isinf(death); }
    double persistence() const { return death - birth; }
};

struct PersistenceDiagram {
    std::vector<DiagramPoint> points;

    std::vector<DiagramPoint> finite_points(int degree) const;
    std::vector<DiagramPoint> essential_points(int degree) const;
};

/// Standard boundary-matrix reduction over GF(2) (dense bit columns, clearing
/// optimization, dimensions processed top-down). Emits degrees 0..max_degree;
/// intervals with birth == death are dropped at the source. Throws
/// std::invalid_argument if a cell's facet is missing or duplicated.
PersistenceDiagram compute_persistence(const Filtration& filt, int max_degree);

/// Bottleneck distance between the degree-d parts of two diagrams, diagonal
/// matching allowed for finite points. Essential points must agree in count
/// (else std::invalid_argument) and are matched sorted by birth.
double bottleneck_distance(const PersistenceDiagram& a, const PersistenceDiagram& b,
                           int degree);

} // namespace filtlearn
