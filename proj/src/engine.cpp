#include "drift/engine.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"

namespace drift::engine {

void RunConfig::normalize() {
    if (alpha < 0.0 || alpha > 1.0) throw Error("RunConfig: alpha must be in [0,1]");
    if (warmup_steps < 0) throw Error("RunConfig: warmup_steps must be >= 0");
    if (total_steps < 1) throw Error("RunConfig: total_steps must be >= 1");
    if (eval_every < 1) throw Error("RunConfig: eval_every must be >= 1");
    if (method == Method::conventional) {
        strategy.track_labels = false;
        strategy.track_weights = false;
    }
    strategy.validate();
    optimizer.validate();
}

namespace {

const char* mode_name(strat::TrainMode m) {
    return m == strat::TrainMode::semi ? "semi" : "weak";
}
const char* method_name(Method m) { return m == Method::drift ? "drift" : "conventional"; }
const char* opt_name(optim::OptKind k) {
    return k == optim::OptKind::adam ? "adam" : "sgd_momentum";
}

void reject_unknown_keys(const nlohmann::json& j,
                         const std::vector<std::string>& known, const std::string& where) {
    std::vector<std::string> bad;
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known) {
            if (it.key() == k) ok = true;
        }
        if (!ok) bad.push_back(it.key());
    }
    if (!bad.empty()) {
        std::string msg = "unknown key(s) in " + where + ":";
        for (const auto& k : bad) msg += " '" + k + "'";
        throw Error(msg);
    }
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw Error(std::string("RunConfig: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error("RunConfig: expected a JSON object");
    reject_unknown_keys(j,
                        {"mode", "method", "alpha", "tau", "freq_normalize",
                         "use_soft_labels", "use_sample_weights", "track_labels",
                         "track_weights", "hidden_dim", "optimizer", "warmup_steps",
                         "total_steps", "seed", "eval_every", "batch_labeled",
                         "batch_unlabeled", "sampling"},
                        "run config");
    RunConfig cfg;
    if (j.contains("mode")) {
        std::string m = j["mode"].get<std::string>();
        if (m == "semi") cfg.mode = strat::TrainMode::semi;
        else if (m == "weak") cfg.mode = strat::TrainMode::weak;
        else throw Error("RunConfig: mode must be 'semi' or 'weak', got '" + m + "'");
    }
    if (j.contains("method")) {
        std::string m = j["method"].get<std::string>();
        if (m == "drift") cfg.method = Method::drift;
        else if (m == "conventional") cfg.method = Method::conventional;
        else throw Error("RunConfig: method must be 'drift' or 'conventional', got '" + m + "'");
    }
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("tau")) cfg.strategy.tau = j["tau"].get<double>();
    if (j.contains("freq_normalize")) cfg.strategy.freq_normalize = j["freq_normalize"].get<bool>();
    if (j.contains("use_soft_labels")) cfg.strategy.use_soft_labels = j["use_soft_labels"].get<bool>();
    if (j.contains("use_sample_weights"))
        cfg.strategy.use_sample_weights = j["use_sample_weights"].get<bool>();
    if (j.contains("track_labels")) cfg.strategy.track_labels = j["track_labels"].get<bool>();
    if (j.contains("track_weights")) cfg.strategy.track_weights = j["track_weights"].get<bool>();
    if (j.contains("hidden_dim")) cfg.hidden_dim = j["hidden_dim"].get<std::size_t>();
    if (j.contains("warmup_steps")) cfg.warmup_steps = j["warmup_steps"].get<long>();
    if (j.contains("total_steps")) cfg.total_steps = j["total_steps"].get<long>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("eval_every")) cfg.eval_every = j["eval_every"].get<long>();
    if (j.contains("batch_labeled")) cfg.batch_labeled = j["batch_labeled"].get<std::size_t>();
    if (j.contains("batch_unlabeled")) cfg.batch_unlabeled = j["batch_unlabeled"].get<std::size_t>();
    if (j.contains("sampling")) {
        std::string s = j["sampling"].get<std::string>();
        if (s == "epoch_shuffle") cfg.sampling = data::SamplingMode::epoch_shuffle;
        else if (s == "with_replacement_uniform")
            cfg.sampling = data::SamplingMode::with_replacement_uniform;
        else
            throw Error("RunConfig: sampling must be 'epoch_shuffle' or "
                        "'with_replacement_uniform', got '" + s + "'");
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        reject_unknown_keys(o, {"kind", "learning_rate", "beta1", "beta2", "eps", "momentum"},
                            "run config optimizer");
        if (o.contains("kind")) {
            std::string k = o["kind"].get<std::string>();
            if (k == "adam") cfg.optimizer.kind = optim::OptKind::adam;
            else if (k == "sgd_momentum") cfg.optimizer.kind = optim::OptKind::sgd_momentum;
            else throw Error("RunConfig: optimizer kind must be 'adam' or 'sgd_momentum'");
        }
        if (o.contains("learning_rate")) cfg.optimizer.learning_rate = o["learning_rate"].get<double>();
        if (o.contains("beta1")) cfg.optimizer.beta1 = o["beta1"].get<double>();
        if (o.contains("beta2")) cfg.optimizer.beta2 = o["beta2"].get<double>();
        if (o.contains("eps")) cfg.optimizer.eps = o["eps"].get<double>();
        if (o.contains("momentum")) cfg.optimizer.momentum = o["momentum"].get<double>();
    }
    cfg.normalize();
    return cfg;
}

std::string RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["mode"] = mode_name(mode);
    j["method"] = method_name(method);
    j["alpha"] = alpha;
    j["tau"] = strategy.tau;
    j["freq_normalize"] = strategy.freq_normalize;
    j["use_soft_labels"] = strategy.use_soft_labels;
    j["use_sample_weights"] = strategy.use_sample_weights;
    j["track_labels"] = strategy.track_labels;
    j["track_weights"] = strategy.track_weights;
    j["hidden_dim"] = hidden_dim;
    j["optimizer"] = {{"kind", opt_name(optimizer.kind)},
                      {"learning_rate", optimizer.learning_rate},
                      {"beta1", optimizer.beta1},
                      {"beta2", optimizer.beta2},
                      {"eps", optimizer.eps},
                      {"momentum", optimizer.momentum}};
    j["warmup_steps"] = warmup_steps;
    j["total_steps"] = total_steps;
    j["seed"] = seed;
    j["eval_every"] = eval_every;
    j["batch_labeled"] = batch_labeled;
    j["batch_unlabeled"] = batch_unlabeled;
    j["sampling"] = sampling == data::SamplingMode::epoch_shuffle ? "epoch_shuffle"
                                                                  : "with_replacement_uniform";
    return j.dump();
}

std::string RunMetrics::metrics_jsonl() const {
    std::ostringstream os;
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["step"] = r.step;
        j["train_loss"] = r.train_loss;
        j["accuracy"] = r.accuracy;
        j["mean_weight"] = r.mean_weight;
        j["mean_label_entropy"] = r.mean_label_entropy;
        os << j.dump() << "\n";
    }
    return os.str();
}

nn::MlpSpec spec_from_params(const nn::ParamSet& params) {
    nn::MlpSpec spec;
    for (const auto& e : params.entries) {
        if (e.name == "W1") {
            spec.hidden_dim = e.value.shape.at(0);
            spec.input_dim = e.value.shape.at(1);
        } else if (e.name == "W2") {
            spec.num_classes = e.value.shape.at(0);
        }
    }
    spec.validate();
    return spec;
}

double evaluate(const nn::ParamSet& params, const data::Dataset& ds, EvalSplit split) {
    std::vector<std::size_t> indices;
    switch (split) {
        case EvalSplit::labeled: indices = ds.labeled_indices; break;
        case EvalSplit::unlabeled: indices = ds.unlabeled_indices; break;
        case EvalSplit::all:
            indices.resize(ds.size());
            for (std::size_t i = 0; i < ds.size(); ++i) indices[i] = i;
            break;
    }
    if (indices.empty()) throw Error("evaluate: empty split");
    for (std::size_t i : indices) {
        if (ds.true_labels[i] < 0) {
            throw Error("evaluate: hidden true label missing for sample " + std::to_string(i));
        }
    }
    nn::MlpSpec spec = spec_from_params(params);
    Array probs = nn::forward_probs(spec, params, ds.features_at(indices));
    std::vector<int> pred = strat::hard_pseudo_label(probs);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (pred[k] == ds.true_labels[indices[k]]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

nn::ParamSet warmup(const RunConfig& cfg, const data::Dataset& ds) {
    if (ds.labeled_indices.empty()) throw Error("warmup: no labeled data");
    nn::MlpSpec spec{ds.dim(), cfg.hidden_dim, ds.num_classes};
    nn::ParamSet params = nn::init_params(spec, cfg.seed);
    if (cfg.warmup_steps == 0) return params;

    Array x = ds.features_at(ds.labeled_indices);
    std::vector<int> y = ds.labels_at(ds.labeled_indices);
    optim::OptimizerState opt = optim::OptimizerState::init(cfg.optimizer, params);
    for (long step = 0; step < cfg.warmup_steps; ++step) {
        ad::Tape tape;
        nn::BoundParams bound = nn::bind_leaves(tape, params);
        ad::Node* loss =
            strat::supervised_loss(tape, nn::forward(tape, spec, bound, x), y);
        tape.backward(loss);
        auto [next_opt, next_params] = optim::apply(opt, params, nn::gradients(bound, params));
        opt = std::move(next_opt);
        params = std::move(next_params);
    }
    return params;
}

namespace {

strat::ObjectiveBatch batch_from_indices(const data::Dataset& ds, strat::TrainMode mode,
                                         const std::vector<std::size_t>& labeled,
                                         const std::vector<std::size_t>& unlabeled) {
    strat::ObjectiveBatch b;
    if (mode == strat::TrainMode::semi) {
        b.x_labeled = ds.features_at(labeled);
        b.y_labeled = ds.labels_at(labeled);
        b.x_strategy = ds.features_at(unlabeled);
    } else {
        // Weak mode: pseudo-labels cover the union batch; noisy labels are
        // discarded after warmup and never consulted here.
        std::vector<std::size_t> all = labeled;
        all.insert(all.end(), unlabeled.begin(), unlabeled.end());
        b.x_strategy = ds.features_at(all);
    }
    return b;
}

strat::ObjectiveBatch full_batch(const data::Dataset& ds, strat::TrainMode mode) {
    return batch_from_indices(ds, mode, ds.labeled_indices, ds.unlabeled_indices);
}

}  // namespace

RunMetrics train(const RunConfig& cfg_in, const data::Dataset& ds) {
    RunConfig cfg = cfg_in;
    cfg.normalize();
    return train_from(cfg, ds, warmup(cfg, ds));
}

RunMetrics train_from(const RunConfig& cfg_in, const data::Dataset& ds,
                      const nn::ParamSet& theta_init) {
    RunConfig cfg = cfg_in;
    cfg.normalize();
    nn::MlpSpec spec{ds.dim(), cfg.hidden_dim, ds.num_classes};
    if (!theta_init.same_layout(nn::init_params(spec, 0))) {
        throw Error("train_from: theta_init layout does not match the dataset/config");
    }
    nn::ParamSet student = theta_init;
    nn::ParamSet teacher = student;  // theta_T0 = theta_S0 = theta_init
    optim::OptimizerState opt = optim::OptimizerState::init(cfg.optimizer, student);
    strat::TeacherPath path = cfg.method == Method::drift ? strat::TeacherPath::tracked
                                                          : strat::TeacherPath::detached;
    const bool minibatch = cfg.batch_labeled > 0 || cfg.batch_unlabeled > 0;
    std::size_t bl = cfg.batch_labeled == 0
                         ? ds.labeled_indices.size()
                         : std::min(cfg.batch_labeled, ds.labeled_indices.size());
    std::size_t bu = cfg.batch_unlabeled == 0
                         ? ds.unlabeled_indices.size()
                         : std::min(cfg.batch_unlabeled, ds.unlabeled_indices.size());
    data::BatchSampler sampler(cfg.seed ^ 0x5dee3a9d34c1f0b7ULL, bl, bu, cfg.sampling);
    strat::ObjectiveBatch batch = full_batch(ds, cfg.mode);

    RunMetrics metrics;
    auto record = [&](long step, double loss, const strat::FollowerStrategy& st) {
        EvalRecord r;
        r.step = step;
        r.train_loss = loss;
        r.accuracy = evaluate(student, ds, EvalSplit::all);
        r.mean_weight = st.mean_weight();
        r.mean_label_entropy = st.mean_label_entropy();
        metrics.records.push_back(r);
    };

    {
        // Step-0 record: objective value at theta_init, no update.
        ad::Tape tape;
        nn::BoundParams bound = nn::bind_leaves(tape, student);
        strat::Objective obj =
            strat::drift_objective(tape, spec, bound, teacher, cfg.alpha, batch,
                                   cfg.strategy, cfg.mode, path);
        record(0, obj.loss->value.data[0], obj.strategy);
    }

    for (long t = 1; t < cfg.total_steps; ++t) {
        if (minibatch) {
            data::Batch idx = sampler.next(ds);
            batch = batch_from_indices(ds, cfg.mode, idx.labeled, idx.unlabeled);
        }
        ad::Tape tape;
        nn::BoundParams bound = nn::bind_leaves(tape, student);
        strat::Objective obj =
            strat::drift_objective(tape, spec, bound, teacher, cfg.alpha, batch,
                                   cfg.strategy, cfg.mode, path);
        double loss = obj.loss->value.data[0];
        if (!std::isfinite(loss)) {
            throw Error("train: non-finite loss at step " + std::to_string(t));
        }
        tape.backward(obj.loss);
        auto [next_opt, next_params] =
            optim::apply(opt, student, nn::gradients(bound, student));
        opt = std::move(next_opt);
        student = std::move(next_params);

        // The stored teacher is the EMA base. This iteration's in-graph
        // teacher value alpha*base + (1-alpha)*student becomes the next
        // base, so the next graph rebuilds exactly the EMA recursion.
        for (std::size_t i = 0; i < teacher.entries.size(); ++i) {
            teacher.entries[i].value = obj.teacher.nodes[i]->value;
        }

        if (t % cfg.eval_every == 0 || t == cfg.total_steps - 1) {
            record(t, loss, obj.strategy);
        }
    }

    metrics.final_params = student;
    metrics.final_accuracy = evaluate(student, ds, EvalSplit::all);
    return metrics;
}

CompareReport compare_runs(const std::vector<double>& finals_a,
                           const std::vector<double>& finals_b) {
    if (finals_a.size() != finals_b.size()) {
        throw Error("compare_runs: unpaired run counts " + std::to_string(finals_a.size()) +
                    " vs " + std::to_string(finals_b.size()));
    }
    std::size_t n = finals_a.size();
    if (n < 2) throw Error("compare_runs: need at least 2 paired runs");

    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double acc = 0.0;
        for (double x : v) acc += (x - mean) * (x - mean);
        sd = std::sqrt(acc / static_cast<double>(v.size() - 1));
    };

    CompareReport r;
    r.n = n;
    mean_std(finals_a, r.mean_a, r.std_a);
    mean_std(finals_b, r.mean_b, r.std_b);

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = finals_a[i] - finals_b[i];
    double d_mean = 0.0, d_sd = 0.0;
    mean_std(d, d_mean, d_sd);
    if (d_sd == 0.0) {
        r.degenerate = true;
        r.t_statistic = 0.0;
        r.p_value = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    r.t_statistic = d_mean * std::sqrt(static_cast<double>(n)) / d_sd;
    boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.t_statistic));
    return r;
}

CompareReport compare_runs(const std::vector<RunMetrics>& a,
                           const std::vector<RunMetrics>& b) {
    std::vector<double> fa, fb;
    for (const auto& m : a) fa.push_back(m.final_accuracy);
    for (const auto& m : b) fb.push_back(m.final_accuracy);
    return compare_runs(fa, fb);
}

std::vector<CurvePoint> learning_curve(const std::vector<RunMetrics>& runs) {
    if (runs.empty()) return {};
    std::size_t count = runs.front().records.size();
    for (const auto& m : runs) {
        if (m.records.size() != count) {
            throw Error("learning_curve: runs have mismatched eval schedules");
        }
    }
    std::vector<CurvePoint> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        out[k].step = runs.front().records[k].step;
        double mean = 0.0;
        for (const auto& m : runs) mean += m.records[k].accuracy;
        mean /= static_cast<double>(runs.size());
        double acc = 0.0;
        for (const auto& m : runs) {
            double dlt = m.records[k].accuracy - mean;
            acc += dlt * dlt;
        }
        out[k].mean = mean;
        out[k].stddev = runs.size() > 1
                            ? std::sqrt(acc / static_cast<double>(runs.size() - 1))
                            : 0.0;
    }
    return out;
}

GradientDecomposition gradient_decomposition(const nn::MlpSpec& spec,
                                             const nn::ParamSet& student,
                                             const nn::ParamSet& teacher_prev, double alpha,
                                             const strat::ObjectiveBatch& batch,
                                             const strat::StrategyConfig& cfg,
                                             strat::TrainMode mode) {
    GradientDecomposition out;
    {
        ad::Tape tape;
        nn::BoundParams bound = nn::bind_leaves(tape, student);
        strat::Objective obj = strat::drift_objective(
            tape, spec, bound, teacher_prev, alpha, batch, cfg, mode,
            strat::TeacherPath::tracked);
        out.loss_value = obj.loss->value.data[0];
        tape.backward(obj.loss);
        out.full = nn::gradients(bound, student).flatten();
    }
    {
        ad::Tape tape;
        nn::BoundParams bound = nn::bind_leaves(tape, student);
        strat::Objective obj = strat::drift_objective(
            tape, spec, bound, teacher_prev, alpha, batch, cfg, mode,
            strat::TeacherPath::detached);
        tape.backward(obj.loss);
        out.leader = nn::gradients(bound, student).flatten();
    }
    {
        ad::Tape tape;
        nn::BoundParams bound = nn::bind_leaves(tape, student);
        strat::Objective obj = strat::drift_objective(
            tape, spec, bound, teacher_prev, alpha, batch, cfg, mode,
            strat::TeacherPath::leaf_teacher);
        tape.backward(obj.loss);
        out.interaction = nn::gradients(obj.teacher, student).flatten();
    }
    return out;
}

GradCheckReport gradcheck(std::uint64_t seed, std::size_t batch_size, double alpha) {
    nn::MlpSpec spec{2, 5, 3};
    nn::ParamSet student = nn::init_params(spec, seed);
    nn::ParamSet teacher_prev = nn::init_params(spec, seed + 1);

    std::mt19937_64 rng(seed + 2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, static_cast<int>(spec.num_classes) - 1);
    auto random_batch = [&](std::size_t n) {
        Array x = Array::zeros({n, spec.input_dim});
        for (double& v : x.data) v = gauss(rng);
        return x;
    };
    strat::ObjectiveBatch batch;
    batch.x_labeled = random_batch(std::max<std::size_t>(2, batch_size / 2));
    for (std::size_t i = 0; i < batch.x_labeled.rows(); ++i) {
        batch.y_labeled.push_back(label(rng));
    }
    batch.x_strategy = random_batch(batch_size);

    strat::StrategyConfig cfg;
    strat::TrainMode mode = strat::TrainMode::semi;

    GradientDecomposition dec =
        gradient_decomposition(spec, student, teacher_prev, alpha, batch, cfg, mode);

    auto loss_at = [&](const std::vector<double>& flat) {
        nn::ParamSet probe = student.with_flat(flat);
        ad::Tape tape;
        nn::BoundParams bound = nn::bind_leaves(tape, probe);
        strat::Objective obj = strat::drift_objective(
            tape, spec, bound, teacher_prev, alpha, batch, cfg, mode,
            strat::TeacherPath::tracked);
        return obj.loss->value.data[0];
    };
    std::vector<double> fd =
        ad::finite_difference_gradient(loss_at, student.flatten(), 1e-5);

    GradCheckReport rep;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        double scale = std::max({std::abs(fd[i]), std::abs(dec.full[i]), 1e-6});
        rep.max_rel_vs_fd = std::max(rep.max_rel_vs_fd, std::abs(fd[i] - dec.full[i]) / scale);
        double recomposed = dec.leader[i] + (1.0 - alpha) * dec.interaction[i];
        double err = std::abs(dec.full[i] - recomposed) / std::max(1.0, std::abs(dec.full[i]));
        rep.max_err_decomposition = std::max(rep.max_err_decomposition, err);
        rep.interaction_norm =
            std::max(rep.interaction_norm, std::abs((1.0 - alpha) * dec.interaction[i]));
    }
    return rep;
}

}  // namespace drift::engine
