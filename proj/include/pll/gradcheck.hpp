#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "pll/params.hpp"

namespace pll {

/// Loss value plus (when requested) its analytic gradient.
struct LossEval {
    double value = 0.0;
    GradientSet grads;
    /// Fingerprint of the on/off pattern of every piecewise-linear unit the loss passed
    /// through; 0 when the objective does not track it.
    std::uint64_t kink_signature = 0;
};

/// Must be a pure function of the parameters: no dropout, frozen augmentation noise,
/// frozen label targets.
using Objective = std::function<LossEval(const ParameterSet&, bool with_gradient)>;

struct GradcheckOptions {
    double eps = 1e-4;
    /// Cap on coordinates probed per entry; 0 probes every coordinate. Entries above the
    /// cap are probed on a seeded uniform sample of their coordinates.
    std::size_t max_coords_per_entry = 0;
    std::uint64_t sample_seed = 0;
    /// When a ±eps probe changes the kink signature the difference straddles a
    /// non-differentiable point; the step is divided by 10 until it no longer does, down to
    /// this floor.
    double min_eps = 1e-9;
};

struct GradcheckReport {
    double max_rel_error = 0.0;
    std::string worst_entry;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coords_checked = 0;
    std::size_t coords_refined = 0;     // probed with a step below eps to stay off a kink
    std::size_t coords_on_kink = 0;     // still straddling a kink at min_eps
    bool deterministic = true;

    bool passed(double tolerance) const { return deterministic && max_rel_error <= tolerance; }
};

/// |a - n| / max(1, |a|, |n|), the usual scale-aware gradient-check metric.
double gradient_rel_error(double analytic, double numeric);

/// Central differences (f(θ+ε) - f(θ-ε)) / 2ε per probed coordinate of every trainable
/// entry, compared against the analytic gradient at θ. `params` is restored on return.
/// A loss that does not reproduce its own value at θ is reported as non-deterministic.
GradcheckReport gradcheck(const Objective& objective, ParameterSet& params, const GradcheckOptions& options = {});

}  // namespace pll
