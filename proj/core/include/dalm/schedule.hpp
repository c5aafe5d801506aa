#pragma once

#include <cmath>

#include "dalm/errors.hpp"

namespace dalm {

// Linear ramp 0 -> peak over the first peak_fraction of training, then a
// linear decay back to 0 at total_steps.
inline double triangular_lr(long step, long total_steps, double peak_lr,
                            double peak_fraction = 0.5) {
    if (total_steps < 1) throw DataError("triangular_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw DataError("triangular_lr: step out of range");
    if (!(peak_fraction > 0.0 && peak_fraction < 1.0))
        throw DataError("triangular_lr: peak_fraction must be in (0,1)");
    const double peak_step = peak_fraction * static_cast<double>(total_steps);
    const double s = static_cast<double>(step);
    if (s <= peak_step) return peak_lr * (s / peak_step);
    return peak_lr * (static_cast<double>(total_steps) - s) /
           (static_cast<double>(total_steps) - peak_step);
}

// Cosine decay lr0 -> 0 across total_steps (finetuning schedule).
inline double cosine_lr(long step, long total_steps, double initial_lr) {
    if (total_steps < 1) return initial_lr;
    const double progress =
        std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return initial_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace dalm
