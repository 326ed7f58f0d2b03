#include "sslvqa/optim.hpp"

#include "sslvqa/errors.hpp"

#include <cmath>

namespace sslvqa {

AdamWState make_adamw_state(std::span<const ad::Matrix* const> params) {
    AdamWState s;
    for (const ad::Matrix* p : params) {
        s.m.push_back(ad::Matrix::Zero(p->rows(), p->cols()));
        s.v.push_back(ad::Matrix::Zero(p->rows(), p->cols()));
    }
    return s;
}

bool adamw_step(std::span<ad::Matrix* const> params, std::span<const ad::Matrix> grads,
                AdamWState& state, const AdamWConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size()) {
        throw ConfigError("adamw_step: parameter/gradient/state count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
            state.m[i].rows() != grads[i].rows() || state.m[i].cols() != grads[i].cols()) {
            throw ConfigError("adamw_step: shape mismatch");
        }
        if (!grads[i].allFinite()) {
            return false;
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        ad::Matrix& p = *params[i];
        const ad::Matrix& g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        p *= (1.0 - cfg.lr * cfg.weight_decay);
        const auto mhat = state.m[i].array() / bc1;
        const auto vhat = state.v[i].array() / bc2;
        p.array() -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
    return true;
}

} // namespace sslvqa
