#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "drift/autodiff.hpp"

using namespace drift;
using namespace drift::ad;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
        m = std::max(m, std::abs(a[i] - b[i]) / scale);
    }
    return m;
}

}  // namespace

TEST_CASE("elementwise op values") {
    Tape t;
    Node* a = t.constant(Array({2}, {1, 2}));
    Node* b = t.constant(Array({2}, {3, 4}));
    Node* s = add(t, a, b);
    CHECK(s->value.data[0] == 4);
    CHECK(s->value.data[1] == 6);

    Node* th = tanh(t, t.constant(Array({1}, {0})));
    CHECK(th->value.data[0] == 0.0);

    Node* sm = softmax_rows(t, t.constant(Array({1, 2}, {0, 0})));
    CHECK(sm->value.data[0] == doctest::Approx(0.5));
    CHECK(sm->value.data[1] == doctest::Approx(0.5));
}

TEST_CASE("op shape mismatch names the op and shapes") {
    Tape t;
    Node* a = t.constant(Array({2}, {1, 2}));
    Node* b = t.constant(Array({3}, {1, 2, 3}));
    CHECK_THROWS_WITH_AS(add(t, a, b), doctest::Contains("add"), Error);
    CHECK_THROWS_AS(matmul(t, t.constant(Array::zeros({2, 3})),
                           t.constant(Array::zeros({2, 3}))),
                    Error);
}

TEST_CASE("backward of sum(w*w) gives 2w") {
    Tape t;
    Node* w = t.leaf(Array({1}, {3}));
    Node* loss = sum(t, mul(t, w, w));
    t.backward(loss);
    CHECK(w->adjoint.data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar root and stale generation") {
    Tape t;
    Node* w = t.leaf(Array({2}, {1, 2}));
    CHECK_THROWS_AS(t.backward(w), Error);
    Node* loss = sum(t, w);
    t.clear();
    CHECK_THROWS_AS(t.backward(loss), Error);
}

TEST_CASE("matmul with transposes matches a naive loop") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    Array A = Array::zeros({3, 4});
    Array B = Array::zeros({4, 2});
    for (double& v : A.data) v = g(rng);
    for (double& v : B.data) v = g(rng);
    Array At = Array::zeros({4, 3});
    Array Bt = Array::zeros({2, 4});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) At.at(j, i) = A.at(i, j);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 2; ++j) Bt.at(j, i) = B.at(i, j);

    Array expect = Array::zeros({3, 2});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t j = 0; j < 2; ++j) expect.at(i, j) += A.at(i, k) * B.at(k, j);

    Tape t;
    Node* plain = matmul(t, t.constant(A), t.constant(B));
    Node* ta = matmul(t, t.constant(At), t.constant(B), true, false);
    Node* tb = matmul(t, t.constant(A), t.constant(Bt), false, true);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(plain->value.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
        CHECK(ta->value.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
        CHECK(tb->value.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("KL-style chain matches finite differences") {
    // w (2) -> softmax -> KL(target || p), checked per coordinate.
    Array target({1, 2}, {0.7, 0.3});
    auto loss_fn = [&](const std::vector<double>& w) {
        Tape t;
        Node* leaf = t.leaf(Array({1, 2}, w));
        Node* p = softmax_rows(t, leaf);
        Node* tgt = t.constant(target);
        Node* lr = sub(t, log(t, tgt), log(t, p));
        return sum(t, mul(t, tgt, lr))->value.data[0];
    };
    std::vector<double> w = {0.4, -1.1};
    std::vector<double> fd = finite_difference_gradient(loss_fn, w, 1e-5);

    Tape t;
    Node* leaf = t.leaf(Array({1, 2}, w));
    Node* p = softmax_rows(t, leaf);
    Node* tgt = t.constant(target);
    Node* loss = sum(t, mul(t, tgt, sub(t, log(t, tgt), log(t, p))));
    t.backward(loss);
    CHECK(max_rel_diff(fd, leaf->adjoint.data) < 1e-6);
}

TEST_CASE("gradient correctness across random composite graphs") {
    // Mixed-primitive graphs over <= 20 parameters, 20 seeds.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<double> w(6);
        for (double& v : w) v = g(rng);
        Array c = Array::zeros({2, 3});
        for (double& v : c.data) v = std::abs(g(rng)) + 0.1;

        auto loss_fn = [&](const std::vector<double>& x) {
            Tape t;
            Node* leaf = t.leaf(Array({2, 3}, x));
            Node* e = exp(t, scale(t, tanh(t, leaf), 0.7));
            Node* d = div(t, e, add(t, e, t.constant(c)));
            Node* p = pow_scalar(t, d, 1.7);
            Node* m = matmul(t, p, p, false, true);
            return mean(t, m)->value.data[0];
        };
        std::vector<double> fd = finite_difference_gradient(loss_fn, w, 1e-5);

        Tape t;
        Node* leaf = t.leaf(Array({2, 3}, w));
        Node* e = exp(t, scale(t, tanh(t, leaf), 0.7));
        Node* d = div(t, e, add(t, e, t.constant(c)));
        Node* p = pow_scalar(t, d, 1.7);
        Node* m = matmul(t, p, p, false, true);
        Node* loss = mean(t, m);
        t.backward(loss);
        CHECK(max_rel_diff(fd, leaf->adjoint.data) < 1e-4);
    }
}

TEST_CASE("linearity of adjoints") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> w(4);
    for (double& v : w) v = g(rng);
    double a = 1.3, b = -0.6;

    auto grads_of = [&](bool combined, std::vector<double>& g1, std::vector<double>& g2,
                        std::vector<double>& gc) {
        Tape t;
        Node* leaf = t.leaf(Array({2, 2}, w));
        Node* l1 = sum(t, mul(t, leaf, leaf));
        Node* l2 = mean(t, tanh(t, leaf));
        if (combined) {
            Node* loss = add(t, scale(t, l1, a), scale(t, l2, b));
            t.backward(loss);
            gc = leaf->adjoint.data;
        } else {
            t.backward(l1);
            g1 = leaf->adjoint.data;
            t.backward(l2);
            g2 = leaf->adjoint.data;
        }
    };
    std::vector<double> g1, g2, gc;
    grads_of(false, g1, g2, gc);
    grads_of(true, g1, g2, gc);
    std::vector<double> expect(4);
    for (std::size_t i = 0; i < 4; ++i) expect[i] = a * g1[i] + b * g2[i];
    CHECK(max_abs_diff(expect, gc) < 1e-10);
}

TEST_CASE("determinism: identical construction gives bit-identical results") {
    auto build = [](std::vector<double>& value, std::vector<double>& adjoint) {
        Tape t;
        Node* leaf = t.leaf(Array({2, 2}, {0.3, -0.8, 1.5, 0.2}));
        Node* loss = mean(t, exp(t, tanh(t, matmul(t, leaf, leaf))));
        t.backward(loss);
        value = loss->value.data;
        adjoint = leaf->adjoint.data;
    };
    std::vector<double> v1, a1, v2, a2;
    build(v1, a1);
    build(v2, a2);
    CHECK(v1 == v2);
    CHECK(a1 == a2);
}

TEST_CASE("finite differences: quadratic, constant, and positivity of step") {
    auto quad = [](const std::vector<double>& x) { return x[0] * x[0]; };
    auto fd = finite_difference_gradient(quad, {3.0}, 1e-5);
    CHECK(fd[0] == doctest::Approx(6.0).epsilon(1e-9));

    auto constant = [](const std::vector<double>&) { return 2.5; };
    auto zero = finite_difference_gradient(constant, {1.0, 2.0, 3.0}, 1e-5);
    for (double v : zero) CHECK(v == 0.0);

    CHECK_THROWS_AS(finite_difference_gradient(quad, {1.0}, 0.0), Error);
}

TEST_CASE("finite differences flags non-finite evaluations by coordinate") {
    auto bad = [](const std::vector<double>& x) { return std::log(x[0]); };
    CHECK_THROWS_WITH_AS(finite_difference_gradient(bad, {-1.0}, 1e-5),
                         doctest::Contains("coordinate 0"), Error);
}

TEST_CASE("log and div honor the epsilon clamp") {
    Tape t;
    Node* z = t.constant(Array({1}, {0.0}));
    Node* l = log(t, z);
    CHECK(l->value.data[0] == doctest::Approx(std::log(1e-12)));
    Node* d = div(t, t.constant(Array({1}, {1.0})), z);
    CHECK(d->value.data[0] == doctest::Approx(1e12));
}

TEST_CASE("broadcast_row and reductions") {
    Tape t;
    Node* row = t.leaf(Array({1, 3}, {1, 2, 3}));
    Node* b = broadcast_row(t, row, 4);
    CHECK(b->value.rows() == 4);
    Node* loss = sum(t, b);
    t.backward(loss);
    for (double v : row->adjoint.data) CHECK(v == doctest::Approx(4.0));

    Node* rs = row_sums(t, t.constant(Array({2, 2}, {1, 2, 3, 4})));
    CHECK(rs->value.data[0] == 3);
    CHECK(rs->value.data[1] == 7);
    Node* cs = col_sums(t, t.constant(Array({2, 2}, {1, 2, 3, 4})));
    CHECK(cs->value.data[0] == 4);
    CHECK(cs->value.data[1] == 6);
    Node* mr = max_rows(t, t.constant(Array({2, 2}, {1, 5, 7, 2})));
    CHECK(mr->value.data[0] == 5);
    CHECK(mr->value.data[1] == 7);
}
