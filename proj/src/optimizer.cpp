#include "drift/optimizer.hpp"

#include <cmath>

namespace drift::optim {

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error("optimizer: learning_rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw Error("optimizer: betas must lie in [0,1)");
    }
    if (eps <= 0.0) throw Error("optimizer: eps must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw Error("optimizer: momentum must lie in [0,1)");
}

OptimizerState OptimizerState::init(const OptimizerConfig& cfg, const nn::ParamSet& layout) {
    cfg.validate();
    OptimizerState s;
    s.cfg = cfg;
    for (const auto& e : layout.entries) {
        s.first_moment.push_back(Array::zeros(e.value.shape));
        s.second_moment.push_back(Array::zeros(e.value.shape));
    }
    return s;
}

std::pair<OptimizerState, nn::ParamSet> apply(const OptimizerState& state,
                                              const nn::ParamSet& params,
                                              const nn::ParamSet& grads) {
    if (!params.same_layout(grads)) throw Error("optimizer apply: gradient layout mismatch");
    if (state.first_moment.size() != params.entries.size()) {
        throw Error("optimizer apply: state layout mismatch");
    }
    OptimizerState next = state;
    nn::ParamSet out = params;
    next.step_count = state.step_count + 1;
    double t = static_cast<double>(next.step_count);
    const OptimizerConfig& c = state.cfg;

    for (std::size_t p = 0; p < params.entries.size(); ++p) {
        auto& theta = out.entries[p].value.data;
        const auto& g = grads.entries[p].value.data;
        auto& m = next.first_moment[p].data;
        if (theta.size() != g.size()) {
            throw Error("optimizer apply: shape mismatch in " + params.entries[p].name);
        }
        if (c.kind == OptKind::adam) {
            auto& v = next.second_moment[p].data;
            double bc1 = 1.0 - std::pow(c.beta1, t);
            double bc2 = 1.0 - std::pow(c.beta2, t);
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                double m_hat = m[i] / bc1;
                double v_hat = v[i] / bc2;
                theta[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
            }
        } else {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = c.momentum * m[i] + g[i];
                theta[i] -= c.learning_rate * m[i];
            }
        }
    }
    return {std::move(next), std::move(out)};
}

}  // namespace drift::optim
