#pragma once

#include <string>
#include <utility>
#include <vector>

#include "drift/model.hpp"

namespace drift::optim {

enum class OptKind { adam, sgd_momentum };

struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double momentum = 0.0;

    void validate() const;
};

// Value-semantics optimizer state; apply() is pure.
struct OptimizerState {
    OptimizerConfig cfg;
    std::vector<Array> first_moment;   // Adam m / SGD velocity
    std::vector<Array> second_moment;  // Adam v (unused for SGD)
    long step_count = 0;

    static OptimizerState init(const OptimizerConfig& cfg, const nn::ParamSet& layout);
};

// One update step; returns (new state, new params).
std::pair<OptimizerState, nn::ParamSet> apply(const OptimizerState& state,
                                              const nn::ParamSet& params,
                                              const nn::ParamSet& grads);

}  // namespace drift::optim
