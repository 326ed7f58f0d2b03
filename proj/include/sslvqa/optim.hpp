#pragma once

#include "sslvqa/autodiff.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace sslvqa {

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamWState {
    std::vector<ad::Matrix> m;
    std::vector<ad::Matrix> v;
    std::int64_t step = 0;

    bool operator==(const AdamWState&) const = default;
};

/// Zero moments shaped like `params`.
AdamWState make_adamw_state(std::span<const ad::Matrix* const> params);

/// One decoupled-weight-decay Adam step:
///   p <- p (1 - lr wd);  p <- p - lr mhat / (sqrt(vhat) + eps)
/// Returns false (leaving params and state untouched) when any gradient is
/// non-finite.
bool adamw_step(std::span<ad::Matrix* const> params, std::span<const ad::Matrix> grads,
                AdamWState& state, const AdamWConfig& cfg);

} // namespace sslvqa
