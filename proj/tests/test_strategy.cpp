#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "drift/strategy.hpp"

using namespace drift;
using namespace drift::strat;

namespace {

Array random_simplex_rows(std::size_t n, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Array p = Array::zeros({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            p.at(i, j) = u(rng);
            s += p.at(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) p.at(i, j) /= s;
    }
    return p;
}

double row_entropy(const Array& a, std::size_t row) {
    double h = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double p = a.at(row, j);
        if (p > 1e-12) h -= p * std::log(p);
    }
    return h;
}

StrategyConfig cfg_with(double tau, bool freq) {
    StrategyConfig c;
    c.tau = tau;
    c.freq_normalize = freq;
    return c;
}

}  // namespace

TEST_CASE("hard pseudo-labels with lowest-index tie-break") {
    CHECK(hard_pseudo_label(Array({1, 3}, {0.2, 0.5, 0.3}))[0] == 1);
    CHECK(hard_pseudo_label(Array({1, 2}, {0.5, 0.5}))[0] == 0);

    Array batch = random_simplex_rows(40, 5, 17);
    std::vector<int> got = hard_pseudo_label(batch);
    for (std::size_t i = 0; i < 40; ++i) {
        int best = 0;
        for (int j = 1; j < 5; ++j) {
            if (batch.at(i, static_cast<std::size_t>(j)) >
                batch.at(i, static_cast<std::size_t>(best))) {
                best = j;
            }
        }
        CHECK(got[i] == best);
    }
}

TEST_CASE("single-sample batch with frequency normalization is uniform") {
    for (double tau : {0.1, 0.5, 1.0, 2.0}) {
        ad::Tape t;
        ad::Node* p = t.constant(Array({1, 3}, {0.7, 0.2, 0.1}));
        ad::Node* y = soft_pseudo_labels(t, p, cfg_with(tau, true));
        for (double v : y->value.data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-9));
    }
}

TEST_CASE("tau=1 without frequency normalization is the identity") {
    ad::Tape t;
    Array p = random_simplex_rows(6, 4, 3);
    ad::Node* y = soft_pseudo_labels(t, t.constant(p), cfg_with(1.0, false));
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(y->value.data[i] == doctest::Approx(p.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("tau=0.5 squares and renormalizes") {
    ad::Tape t;
    ad::Node* y = soft_pseudo_labels(t, t.constant(Array({1, 2}, {0.8, 0.2})),
                                     cfg_with(0.5, false));
    CHECK(y->value.data[0] == doctest::Approx(0.9412).epsilon(1e-4));
    CHECK(y->value.data[1] == doctest::Approx(0.0588).epsilon(2e-3));
}

TEST_CASE("soft labels reject bad inputs") {
    ad::Tape t;
    ad::Node* p = t.constant(Array({1, 2}, {0.5, 0.5}));
    CHECK_THROWS_AS(soft_pseudo_labels(t, p, cfg_with(0.0, true)), Error);
    CHECK_THROWS_AS(soft_pseudo_labels(t, t.constant(Array::zeros({0, 2})),
                                       cfg_with(1.0, true)),
                    Error);
}

TEST_CASE("row-stochasticity across temperatures") {
    for (double tau : {0.1, 0.5, 1.0, 2.0}) {
        for (bool freq : {false, true}) {
            ad::Tape t;
            Array p = random_simplex_rows(20, 3, 100 + static_cast<std::uint64_t>(tau * 10));
            ad::Node* y = soft_pseudo_labels(t, t.constant(p), cfg_with(tau, freq));
            for (std::size_t i = 0; i < 20; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < 3; ++j) s += y->value.at(i, j);
                CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("sharpening monotonicity in freq-off mode") {
    const double taus[] = {2.0, 1.0, 0.5, 0.1};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Array row = random_simplex_rows(1, 4, 1000 + seed);
        int argmax_in = hard_pseudo_label(row)[0];
        double prev_entropy = 1e300;
        for (double tau : taus) {
            ad::Tape t;
            ad::Node* y = soft_pseudo_labels(t, t.constant(row), cfg_with(tau, false));
            double h = row_entropy(y->value, 0);
            CHECK(h <= prev_entropy + 1e-12);
            prev_entropy = h;
            CHECK(hard_pseudo_label(y->value)[0] == argmax_in);
        }
    }
}

TEST_CASE("sample weight endpoints and hand value") {
    ad::Tape t;
    ad::Node* uniform = t.constant(Array({1, 2}, {0.5, 0.5}));
    CHECK(sample_weights(t, uniform, 2)->value.data[0] == doctest::Approx(0.0).epsilon(1e-9));

    ad::Node* onehot = t.constant(Array({1, 2}, {1.0, 0.0}));
    CHECK(sample_weights(t, onehot, 2)->value.data[0] == doctest::Approx(1.0).epsilon(1e-6));

    ad::Node* skew = t.constant(Array({1, 2}, {0.9, 0.1}));
    CHECK(sample_weights(t, skew, 2)->value.data[0] == doctest::Approx(0.5310).epsilon(1e-4));
}

TEST_CASE("sample weight bounds property") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Array batch = random_simplex_rows(10, 3, 2000 + seed);
        ad::Tape t;
        ad::Node* w = sample_weights(t, t.constant(batch), 3);
        for (std::size_t i = 0; i < 10; ++i) {
            double wi = w->value.at(i, 0);
            CHECK(wi >= -1e-12);
            CHECK(wi <= 1.0 + 1e-12);
            bool uniform = true;
            for (std::size_t j = 0; j < 3; ++j) {
                if (std::abs(batch.at(i, j) - 1.0 / 3) > 1e-9) uniform = false;
            }
            if (wi < 1e-9) CHECK(uniform);
        }
    }
}

TEST_CASE("student loss: identical rows contribute zero, closed-form KL") {
    ad::Tape t;
    Array p = random_simplex_rows(3, 2, 5);
    FollowerStrategy st;
    st.pseudo_labels = t.constant(p);
    ad::Node* same = t.constant(p);
    CHECK(student_loss(t, same, st)->value.data[0] == doctest::Approx(0.0).epsilon(1e-12));

    FollowerStrategy one;
    one.pseudo_labels = t.constant(Array({1, 2}, {1.0, 0.0}));
    ad::Node* student = t.constant(Array({1, 2}, {0.5, 0.5}));
    CHECK(student_loss(t, student, one)->value.data[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("zero weights annihilate loss and gradient") {
    ad::Tape t;
    ad::Node* leaf = t.leaf(Array({2, 2}, {0.1, -0.2, 0.4, 0.3}));
    ad::Node* student = ad::softmax_rows(t, leaf);
    FollowerStrategy st;
    st.pseudo_labels = t.constant(random_simplex_rows(2, 2, 9));
    st.weights = t.constant(Array::zeros({2, 1}));
    ad::Node* loss = student_loss(t, student, st);
    CHECK(loss->value.data[0] == 0.0);
    t.backward(loss);
    for (double g : leaf->adjoint.data) CHECK(g == 0.0);
}

TEST_CASE("supervised loss values and validation") {
    ad::Tape t;
    ad::Node* uniform = t.constant(Array({2, 4}, std::vector<double>(8, 0.25)));
    CHECK(supervised_loss(t, uniform, {1, 3})->value.data[0] ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Array probs({3, 2}, {0.9, 0.1, 0.3, 0.7, 0.6, 0.4});
    double expect = -(std::log(0.9) + std::log(0.7) + std::log(0.6)) / 3.0;
    CHECK(supervised_loss(t, t.constant(probs), {0, 1, 0})->value.data[0] ==
          doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS(supervised_loss(t, t.constant(probs), {0, 2, 0}), Error);
}

namespace {

nn::ParamSet student_grad(const nn::MlpSpec& spec, const nn::ParamSet& student,
                          const nn::ParamSet& teacher, double alpha,
                          const ObjectiveBatch& batch, const StrategyConfig& cfg,
                          TrainMode mode, TeacherPath path) {
    ad::Tape t;
    nn::BoundParams bound = nn::bind_leaves(t, student);
    Objective obj = drift_objective(t, spec, bound, teacher, alpha, batch, cfg, mode, path);
    t.backward(obj.loss);
    return nn::gradients(bound, student);
}

ObjectiveBatch toy_batch(std::uint64_t seed, std::size_t n_unlabeled) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    ObjectiveBatch b;
    b.x_labeled = Array::zeros({2, 2});
    for (double& v : b.x_labeled.data) v = g(rng);
    b.y_labeled = {0, 1};
    b.x_strategy = Array::zeros({n_unlabeled, 2});
    for (double& v : b.x_strategy.data) v = g(rng);
    return b;
}

}  // namespace

TEST_CASE("weak mode with teacher == student, tau=1, no reweighting gives zero loss") {
    nn::MlpSpec spec{2, 4, 2};
    nn::ParamSet params = nn::init_params(spec, 3);
    ObjectiveBatch batch = toy_batch(4, 5);
    StrategyConfig cfg = cfg_with(1.0, false);
    cfg.use_sample_weights = false;
    cfg.track_weights = false;

    ad::Tape t;
    nn::BoundParams bound = nn::bind_leaves(t, params);
    Objective obj = drift_objective(t, spec, bound, params, 0.5, batch, cfg,
                                    TrainMode::weak, TeacherPath::tracked);
    CHECK(std::abs(obj.loss->value.data[0]) < 1e-12);
}

TEST_CASE("alpha=1 tracked gradient equals the detached gradient") {
    nn::MlpSpec spec{2, 4, 2};
    nn::ParamSet student = nn::init_params(spec, 11);
    nn::ParamSet teacher = nn::init_params(spec, 12);
    ObjectiveBatch batch = toy_batch(13, 6);
    StrategyConfig cfg;

    nn::ParamSet tracked = student_grad(spec, student, teacher, 1.0, batch, cfg,
                                        TrainMode::semi, TeacherPath::tracked);
    nn::ParamSet detached = student_grad(spec, student, teacher, 1.0, batch, cfg,
                                         TrainMode::semi, TeacherPath::detached);
    for (std::size_t i = 0; i < tracked.entries.size(); ++i) {
        for (std::size_t k = 0; k < tracked.entries[i].value.size(); ++k) {
            CHECK(tracked.entries[i].value.data[k] ==
                  doctest::Approx(detached.entries[i].value.data[k]).epsilon(1e-14));
        }
    }
}

TEST_CASE("semi mode full gradient matches finite differences") {
    nn::MlpSpec spec{2, 3, 2};
    nn::ParamSet student = nn::init_params(spec, 21);
    nn::ParamSet teacher = nn::init_params(spec, 22);
    ObjectiveBatch batch = toy_batch(23, 4);
    StrategyConfig cfg;
    double alpha = 0.5;

    auto loss_at = [&](const std::vector<double>& flat) {
        nn::ParamSet probe = student.with_flat(flat);
        ad::Tape t;
        nn::BoundParams bound = nn::bind_leaves(t, probe);
        Objective obj = drift_objective(t, spec, bound, teacher, alpha, batch, cfg,
                                        TrainMode::semi, TeacherPath::tracked);
        return obj.loss->value.data[0];
    };
    std::vector<double> fd = ad::finite_difference_gradient(loss_at, student.flatten(), 1e-5);
    std::vector<double> got = student_grad(spec, student, teacher, alpha, batch, cfg,
                                           TrainMode::semi, TeacherPath::tracked)
                                  .flatten();
    for (std::size_t i = 0; i < fd.size(); ++i) {
        double scale = std::max({std::abs(fd[i]), std::abs(got[i]), 1e-6});
        CHECK(std::abs(fd[i] - got[i]) / scale < 1e-4);
    }
}

TEST_CASE("gradient-path separation: tracking off reduces to the leader term") {
    nn::MlpSpec spec{2, 3, 2};
    nn::ParamSet student = nn::init_params(spec, 31);
    nn::ParamSet teacher = nn::init_params(spec, 32);
    ObjectiveBatch batch = toy_batch(33, 5);

    StrategyConfig off;
    off.track_labels = false;
    off.track_weights = false;
    nn::ParamSet g_off = student_grad(spec, student, teacher, 0.5, batch, off,
                                      TrainMode::semi, TeacherPath::tracked);
    nn::ParamSet g_leader = student_grad(spec, student, teacher, 0.5, batch, off,
                                         TrainMode::semi, TeacherPath::detached);
    for (std::size_t i = 0; i < g_off.entries.size(); ++i) {
        CHECK(g_off.entries[i].value.data == g_leader.entries[i].value.data);
    }
}

TEST_CASE("strategy config validation") {
    StrategyConfig c;
    c.use_soft_labels = false;
    CHECK_THROWS_AS(c.validate(), Error);  // track_labels still on
    c.track_labels = false;
    c.use_sample_weights = false;
    CHECK_THROWS_AS(c.validate(), Error);  // track_weights still on
    c.track_weights = false;
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("hard-label strategy produces one-hot detached labels") {
    ad::Tape t;
    Array p = random_simplex_rows(4, 3, 77);
    StrategyConfig cfg;
    cfg.use_soft_labels = false;
    cfg.track_labels = false;
    cfg.track_weights = false;
    FollowerStrategy st = build_strategy(t, t.constant(p), cfg,
                                         ProducedFrom::tracked_teacher);
    std::vector<int> hard = hard_pseudo_label(p);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double expect = static_cast<int>(j) == hard[i] ? 1.0 : 0.0;
            CHECK(st.pseudo_labels->value.at(i, j) == expect);
        }
        // One-hot labels carry weight 1.
        CHECK(st.weights->value.at(i, 0) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK_FALSE(st.pseudo_labels->requires_grad);
}
