#pragma once

// Finite-difference check of a full method loss through the backbone.
//
// The objective is made a pure function of the parameters: batch norm uses running statistics
// (or, optionally, batch statistics), dropout is off, augmentation noise is drawn once, and
// every detached quantity (disambiguated targets, LW weights, keys, queue, prototypes, guessed
// and prototype labels) is frozen at the base parameters.

#include <cstddef>
#include <cstdint>
#include <string>

#include "pll/gradcheck.hpp"
#include "pll/methods.hpp"

namespace pll {

struct MethodCheckSetup {
    std::size_t batch = 8;
    std::size_t features = 310;
    std::uint64_t seed = 0;
    double candidate_q = 0.5;  // ambiguity of the random candidate sets
    int cr_epoch = 0;
    int cr_total_epochs = 30;
    bool batch_stats = false;
    GradcheckOptions options{1e-4, 256, 0};
};

GradcheckReport check_method_gradient(const MethodConfig& method, const MethodCheckSetup& setup);

/// Short label such as "lw-ce-b2 ld=on" or "cr ld=off t=15/30".
std::string describe_check(const MethodConfig& method, const MethodCheckSetup& setup);

}  // namespace pll
