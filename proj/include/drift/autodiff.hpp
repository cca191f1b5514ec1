#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "drift/array.hpp"

namespace drift::ad {

// 0*log(0) convention and division guards: operands are clamped at this
// floor before log/div so entropy and KL terms stay finite.
inline constexpr double kEps = 1e-12;

struct Node;
class Tape;

// Pulls this node's adjoint into its parents' adjoints.
using BackwardRule = std::function<void(Node&)>;

struct Node {
    Array value;
    Array adjoint;  // same shape as value, zero until backward() runs
    std::vector<Node*> parents;
    BackwardRule backward_rule;
    bool requires_grad = false;
    std::uint64_t generation = 0;

    void accumulate(const Array& grad_in);
};

// Owns nodes in creation order. One tape per training iteration; clear()
// bumps the generation so stale Node pointers are rejected by backward().
class Tape {
public:
    Node* leaf(Array value);      // requires_grad
    Node* constant(Array value);  // no gradient path

    // Internal: append an op node. Used by the op builders below.
    Node* emplace(Array value, std::vector<Node*> parents, BackwardRule rule);

    void clear();
    std::uint64_t generation() const { return generation_; }
    std::size_t size() const { return nodes_.size(); }

    // Reverse accumulation from a scalar root. Zeroes all adjoints first,
    // then visits nodes once each in reverse creation order.
    void backward(Node* root);

private:
    std::deque<Node> nodes_;
    std::uint64_t generation_ = 0;
};

// Elementwise ops (operands must match in shape).
Node* add(Tape& t, Node* a, Node* b);
Node* sub(Tape& t, Node* a, Node* b);
Node* mul(Tape& t, Node* a, Node* b);
Node* div(Tape& t, Node* a, Node* b);  // denominator clamped at kEps

Node* pow_scalar(Tape& t, Node* a, double exponent);
Node* exp(Tape& t, Node* a);
Node* log(Tape& t, Node* a);  // log(max(x, kEps))
Node* tanh(Tape& t, Node* a);

Node* scale(Tape& t, Node* a, double s);

// matmul with optional transposes; result (m x n) from (m x k)·(k x n).
Node* matmul(Tape& t, Node* a, Node* b, bool transpose_a = false,
             bool transpose_b = false);

Node* sum(Tape& t, Node* a);   // -> scalar
Node* mean(Tape& t, Node* a);  // -> scalar

Node* softmax_rows(Tape& t, Node* a);
Node* max_rows(Tape& t, Node* a);  // (n x c) -> (n x 1), grad to first argmax

// (1 x c) or (c) row vector replicated to (rows x c).
Node* broadcast_row(Tape& t, Node* a, std::size_t rows);

// Derived helpers (compositions of the primitives above).
Node* row_sums(Tape& t, Node* a);                  // (n x c) -> (n x 1)
Node* col_sums(Tape& t, Node* a);                  // (n x c) -> (1 x c)
Node* tile_cols(Tape& t, Node* a, std::size_t c);  // (n x 1) -> (n x c)

// Central finite differences over a flat coordinate vector; the oracle
// used by gradient checks. Throws if any evaluation is non-finite.
std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::vector<double>& x, double step);

}  // namespace drift::ad
