#include "pll/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace pll {

double gradient_rel_error(double analytic, double numeric) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

namespace {

std::vector<std::size_t> probe_coordinates(std::size_t size, std::size_t cap, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (cap == 0 || size <= cap) return idx;
    std::vector<std::size_t> picked;
    picked.reserve(cap);
    std::sample(idx.begin(), idx.end(), std::back_inserter(picked), cap, rng);
    return picked;
}

}  // namespace

GradcheckReport gradcheck(const Objective& objective, ParameterSet& params, const GradcheckOptions& options) {
    if (!(options.eps > 0.0)) throw std::invalid_argument("gradcheck: eps must be positive");
    GradcheckReport report;

    const LossEval base = objective(params, true);
    if (!base.grads.congruent(params)) throw ShapeError("gradcheck: analytic gradient layout mismatch");
    const double replay = objective(params, false).value;
    if (replay != base.value) {
        report.deterministic = false;
        report.max_rel_error = std::numeric_limits<double>::infinity();
        return report;
    }

    std::mt19937_64 rng(options.sample_seed);
    for (std::size_t e = 0; e < params.size(); ++e) {
        if (!params.entry(e).trainable) continue;
        Tensor& theta = params[e];
        const auto coords = probe_coordinates(theta.size(), options.max_coords_per_entry, rng);
        for (std::size_t j : coords) {
            const double original = theta[j];
            double eps = options.eps;
            double numeric = 0.0;
            bool refined = false;
            for (;;) {
                theta[j] = original + eps;
                const LossEval plus = objective(params, false);
                theta[j] = original - eps;
                const LossEval minus = objective(params, false);
                theta[j] = original;
                numeric = (plus.value - minus.value) / (2.0 * eps);
                const bool smooth =
                    plus.kink_signature == base.kink_signature && minus.kink_signature == base.kink_signature;
                if (smooth) break;
                if (eps / 10.0 < options.min_eps) {
                    ++report.coords_on_kink;
                    break;
                }
                eps /= 10.0;
                refined = true;
            }
            if (refined) ++report.coords_refined;
            const double analytic = base.grads[e][j];
            const double err = gradient_rel_error(analytic, numeric);
            ++report.coords_checked;
            if (!(err <= report.max_rel_error)) {
                report.max_rel_error = err;
                report.worst_entry = params.entry(e).name;
                report.worst_index = j;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace pll
