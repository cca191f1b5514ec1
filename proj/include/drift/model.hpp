#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drift/array.hpp"
#include "drift/autodiff.hpp"

namespace drift::nn {

// Two-layer tanh MLP with a softmax head. Activation is fixed; the spec
// of the classifier is just its dimensions.
struct MlpSpec {
    std::size_t input_dim = 2;
    std::size_t hidden_dim = 50;
    std::size_t num_classes = 2;

    void validate() const;
    std::size_t param_count() const;
};

// Flat named collection of parameter arrays. Immutable by convention:
// updates produce new ParamSets.
struct ParamSet {
    struct Entry {
        std::string name;
        Array value;
    };
    std::vector<Entry> entries;

    std::size_t total_size() const;
    std::vector<double> flatten() const;
    // Same names/shapes, data replaced from a flat vector.
    ParamSet with_flat(const std::vector<double>& flat) const;
    bool same_layout(const ParamSet& other) const;

    std::string to_json() const;  // {name: {shape, data}}, bit-exact doubles
    static ParamSet from_json(const std::string& text);
};

// Glorot-uniform weights, zero biases; deterministic per seed.
ParamSet init_params(const MlpSpec& spec, std::uint64_t seed);

// Parameters bound onto a tape, in ParamSet order (W1, b1, W2, b2).
struct BoundParams {
    std::vector<ad::Node*> nodes;
};

BoundParams bind_leaves(ad::Tape& tape, const ParamSet& params);
BoundParams bind_constants(ad::Tape& tape, const ParamSet& params);

// Adjoints of bound leaves, shaped like `layout`.
ParamSet gradients(const BoundParams& bound, const ParamSet& layout);

// softmax(W2·tanh(W1·x + b1) + b2), rows on the simplex.
ad::Node* forward(ad::Tape& tape, const MlpSpec& spec, const BoundParams& params,
                  const Array& x_batch);

// Plain (no-tape) evaluation for prediction and metrics.
Array forward_probs(const MlpSpec& spec, const ParamSet& params, const Array& x_batch);

// alpha·teacher + (1-alpha)·student, elementwise; inputs untouched.
ParamSet ema_update(const ParamSet& teacher, const ParamSet& student, double alpha);

// The same combination built inside the graph: teacher history enters as
// constants, so gradients reach the student scaled by exactly (1-alpha).
BoundParams ema_tracked(ad::Tape& tape, const ParamSet& teacher_prev,
                        const BoundParams& student, double alpha);

ad::Node* teacher_forward_tracked(ad::Tape& tape, const MlpSpec& spec,
                                  const ParamSet& teacher_prev,
                                  const BoundParams& student, double alpha,
                                  const Array& x_batch);

}  // namespace drift::nn
