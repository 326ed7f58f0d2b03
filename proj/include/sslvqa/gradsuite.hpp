#pragma once

#include "sslvqa/autodiff.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sslvqa {

struct GradCase {
    std::string name;
    ad::GradCheckResult result;
    bool passed = false;
};

/// Central-difference checks of every differentiable path used in training, on
/// small random inputs (C <= 8, N <= 32, batch <= 8).
std::vector<GradCase> run_gradcheck_suite(std::uint64_t seed, double tolerance = 1e-4);

} // namespace sslvqa
