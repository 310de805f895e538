#pragma once

#include <cstdint>

#include "filtlearn/autodiff.hpp"

namespace filtlearn::ad {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Step counter shared by all parameters the optimizer touches; saved in
/// checkpoints so training resumes exactly.
struct AdamState {
    AdamConfig cfg;
    std::int64_t t = 0;
};

/// One bias-corrected Adam update over every trainable parameter. If any
/// trainable gradient is non-finite the whole step is skipped (state and
/// values untouched) and false is returned.
bool adam_step(ParameterStore& ps, AdamState& state, double lr);

/// Warmup-then-inverse-sqrt schedule (epoch counted from 1):
/// eta_max * min(epoch^-1/2, epoch * n_warmup^-3/2).
double lr_schedule(int epoch, double eta_max, int n_warmup = 40);

} // namespace filtlearn::ad
