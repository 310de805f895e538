#pragma once

#include <vector>

#include "filtlearn/autodiff.hpp"
#include "filtlearn/persistence.hpp"

namespace filtlearn {

/// Gaussian-bump vectorization of a persistence diagram followed by a linear
/// projection: out[m] = sum_q exp(-||q - c_m||^2 / 2) over the finite points
/// q = (birth, death) of one homology degree, then a trainable M -> out_dim
/// map. Centers are trainable.
struct PersLayConfig {
    std::size_t n_centers = 32;
    std::size_t out_dim = 16;
};

/// Centers start on a deterministic grid over the birth <= death triangle of
/// [0, t_cap]^2 (the grid points with the largest death - birth margin are
/// kept); the projection gets fan-in uniform init from `rng`.
void init_perslay(ad::ParameterStore& ps, const PersLayConfig& cfg, double t_cap,
                  SplitMix64& rng);

/// Raw bump activations, [1 x n_centers]. `points` is any [P x 2] node of
/// (birth, death) rows; P == 0 gives zeros.
ad::NodeId perslay_vectorize(ad::Tape& t, ad::ParameterStore& ps,
                             const PersLayConfig& cfg, ad::NodeId points);

/// Projected topological feature vector, [1 x out_dim].
ad::NodeId topo_feature(ad::Tape& t, ad::ParameterStore& ps, const PersLayConfig& cfg,
                        ad::NodeId points);

/// Constant input node holding a diagram's finite degree-d points.
ad::NodeId diagram_points_node(ad::Tape& t, const PersistenceDiagram& diag, int degree);

/// 95th percentile of finite deaths across diagrams (1.0 if none): the
/// default span for the center grid.
double default_t_cap(const std::vector<PersistenceDiagram>& diagrams, int degree);

} // namespace filtlearn
