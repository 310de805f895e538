#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "filtlearn/autodiff.hpp"
#include "filtlearn/filtration.hpp"
#include "filtlearn/geometry.hpp"

namespace filtlearn {

struct GradCheckReport {
    std::string name;
    std::size_t n_checked = 0;
    double max_rel_err = 0.0;
    bool passed = false;
};

struct GradCheckSummary {
    std::vector<GradCheckReport> reports;
    double max_rel_err = 0.0;
    bool all_passed = true;

    void add(GradCheckReport r);
    void merge(const GradCheckSummary& other);
};

/// |a - f| / max(1, |a|, |f|).
double grad_rel_err(double analytic, double fd);

/// Central finite differences over every trainable scalar in `ps` against the
/// analytic gradients produced by `loss(true)`. `loss(with_grad)` must
/// recompute the objective from the current parameter values; when with_grad
/// it must also run backward so gradients land in ps (this function zeroes
/// them first). Default step 1e-6, pass threshold 1e-3.
GradCheckReport fd_check_params(const std::string& name, ad::ParameterStore& ps,
                                const std::function<double(bool)>& loss,
                                double h = 1e-6, double tol = 1e-3);

/// Same idea for a flat input vector: `f(x, g)` returns the objective at x
/// and, when g != nullptr, writes d objective/dx into *g.
GradCheckReport fd_check_vector(
    const std::string& name, std::vector<double> x,
    const std::function<double(std::span<const double>, std::vector<double>*)>& f,
    double h = 1e-6, double tol = 1e-3);

/// Distance of the weighted-Rips instance from the nearest tie that could
/// change pairing or gradient routing: the minimum over (a) gaps between
/// consecutive distinct cell appearance values, (b) each edge's winning term
/// minus its runner-up, and (c) each triangle's top edge value minus its
/// second. Bitwise-equal competitors give margin 0. Checks with persistence in
/// the loop require this margin to exceed the separation threshold so finite
/// differences stay on one smooth piece.
double tie_margin(const DistanceMatrix& d, const WeightVector& w, int max_dim,
                  double t_max);

/// Finite-difference suites (deterministic given the seed; instances that sit
/// too close to a tie are skipped in favour of the next derived seed).
GradCheckSummary gradcheck_primitives(std::uint64_t seed);
GradCheckSummary gradcheck_weight_net(std::uint64_t seed);
GradCheckSummary gradcheck_perslay(std::uint64_t seed);
GradCheckSummary gradcheck_full_loss(std::uint64_t seed);

/// All four suites merged.
GradCheckSummary gradcheck_all(std::uint64_t seed);

} // namespace filtlearn
