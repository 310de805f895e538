#include "filtlearn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace filtlearn::ad {

bool adam_step(ParameterStore& ps, AdamState& state, double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("adam_step: lr must be finite and > 0");
    for (const auto& [name, p] : ps) {
        if (!p.trainable) continue;
        for (double g : p.grad)
            if (!std::isfinite(g)) return false;
    }
    state.t += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (auto& [name, p] : ps) {
        if (!p.trainable) continue;
        for (std::size_t i = 0; i < p.count(); ++i) {
            const double g = p.grad[i];
            p.m[i] = b1 * p.m[i] + (1.0 - b1) * g;
            p.v[i] = b2 * p.v[i] + (1.0 - b2) * g * g;
            const double mhat = p.m[i] / c1;
            const double vhat = p.v[i] / c2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
        }
    }
    return true;
}

double lr_schedule(int epoch, double eta_max, int n_warmup) {
    if (epoch < 1) throw std::invalid_argument("lr_schedule: epoch counts from 1");
    if (n_warmup < 1) throw std::invalid_argument("lr_schedule: n_warmup must be >= 1");
    const double e = static_cast<double>(epoch);
    const double w = static_cast<double>(n_warmup);
    return eta_max * std::min(std::pow(e, -0.5), e * std::pow(w, -1.5));
}

} // namespace filtlearn::ad
