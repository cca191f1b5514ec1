#pragma once

#include <string>
#include <vector>

#include "drift/dataset.hpp"
#include "drift/model.hpp"
#include "drift/optimizer.hpp"
#include "drift/strategy.hpp"

namespace drift::engine {

enum class Method { drift, conventional };

// One training run: warmup on the (possibly noisy) labels, then the
// self-training loop. `total_steps` is the Algorithm-style horizon T:
// the loop performs T-1 update iterations, so T=1 is warmup only.
struct RunConfig {
    strat::TrainMode mode = strat::TrainMode::semi;
    Method method = Method::drift;
    double alpha = 0.5;
    strat::StrategyConfig strategy;
    optim::OptimizerConfig optimizer;
    std::size_t hidden_dim = 50;
    long warmup_steps = 50;
    long total_steps = 301;
    std::uint64_t seed = 0;
    long eval_every = 10;
    // Minibatch sizes for the self-training loop; 0 means full batch.
    // Oversized requests are clipped to the pool.
    std::size_t batch_labeled = 0;
    std::size_t batch_unlabeled = 0;
    data::SamplingMode sampling = data::SamplingMode::epoch_shuffle;

    // Enforces invariants; conventional runs get all tracking flags cleared.
    void normalize();

    // Strict parsing: unknown keys are collected and reported together.
    static RunConfig from_json(const std::string& text);
    std::string to_json() const;
};

struct EvalRecord {
    long step = 0;
    double train_loss = 0.0;
    double accuracy = 0.0;       // on hidden true labels, all samples
    double mean_weight = 0.0;
    double mean_label_entropy = 0.0;
};

struct RunMetrics {
    std::vector<EvalRecord> records;
    nn::ParamSet final_params;
    double final_accuracy = 0.0;

    std::string metrics_jsonl() const;
};

enum class EvalSplit { labeled, unlabeled, all };

nn::MlpSpec spec_from_params(const nn::ParamSet& params);

// Supervised fit on the labeled pool (Eq-1-style warmup); returns theta_init.
nn::ParamSet warmup(const RunConfig& cfg, const data::Dataset& ds);

RunMetrics train(const RunConfig& cfg, const data::Dataset& ds);

// Self-training loop starting from a given theta_init (skips warmup).
RunMetrics train_from(const RunConfig& cfg, const data::Dataset& ds,
                      const nn::ParamSet& theta_init);

// Fraction of argmax predictions matching hidden true labels.
double evaluate(const nn::ParamSet& params, const data::Dataset& ds, EvalSplit split);

struct CompareReport {
    double mean_a = 0.0, std_a = 0.0;
    double mean_b = 0.0, std_b = 0.0;
    double t_statistic = 0.0;
    double p_value = 0.0;     // one-sided, H1: mean(a) > mean(b)
    bool degenerate = false;  // zero variance of the differences
    std::size_t n = 0;
};

CompareReport compare_runs(const std::vector<double>& finals_a,
                           const std::vector<double>& finals_b);
CompareReport compare_runs(const std::vector<RunMetrics>& a,
                           const std::vector<RunMetrics>& b);

struct CurvePoint {
    long step = 0;
    double mean = 0.0;
    double stddev = 0.0;
};
std::vector<CurvePoint> learning_curve(const std::vector<RunMetrics>& runs);

// Student gradient of the full objective, split per the Stackelberg
// decomposition: full = leader + (1-alpha) * interaction.
struct GradientDecomposition {
    std::vector<double> full;
    std::vector<double> leader;
    std::vector<double> interaction;
    double loss_value = 0.0;
};

GradientDecomposition gradient_decomposition(const nn::MlpSpec& spec,
                                             const nn::ParamSet& student,
                                             const nn::ParamSet& teacher_prev, double alpha,
                                             const strat::ObjectiveBatch& batch,
                                             const strat::StrategyConfig& cfg,
                                             strat::TrainMode mode);

struct GradCheckReport {
    double max_rel_vs_fd = 0.0;       // backward vs central finite differences
    double max_err_decomposition = 0.0;  // full vs leader + (1-alpha)*interaction
    double interaction_norm = 0.0;
};

// Random small model + batch; the verification entry point behind the
// gradcheck command.
GradCheckReport gradcheck(std::uint64_t seed, std::size_t batch_size, double alpha);

}  // namespace drift::engine
