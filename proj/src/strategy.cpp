#include "drift/strategy.hpp"

#include <cmath>

namespace drift::strat {

void StrategyConfig::validate() const {
    if (!(tau > 0.0)) throw Error("StrategyConfig: tau must be positive");
    if (track_labels && !use_soft_labels) {
        throw Error("StrategyConfig: track_labels requires use_soft_labels");
    }
    if (track_weights && !use_sample_weights) {
        throw Error("StrategyConfig: track_weights requires use_sample_weights");
    }
}

double FollowerStrategy::mean_weight() const {
    if (!pseudo_labels) return 0.0;
    std::size_t n = pseudo_labels->value.rows();
    if (!weights) return 1.0;
    double s = 0.0;
    for (double w : weights->value.data) s += w;
    return s / static_cast<double>(n);
}

double FollowerStrategy::mean_label_entropy() const {
    if (!pseudo_labels) return 0.0;
    const Array& y = pseudo_labels->value;
    double total = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        for (std::size_t j = 0; j < y.cols(); ++j) {
            double p = y.at(i, j);
            if (p > ad::kEps) total -= p * std::log(p);
        }
    }
    return total / static_cast<double>(y.rows());
}

std::vector<int> hard_pseudo_label(const Array& probs) {
    std::vector<int> out(probs.rows(), 0);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double best = probs.at(i, 0);
        for (std::size_t j = 1; j < probs.cols(); ++j) {
            if (probs.at(i, j) > best) {
                best = probs.at(i, j);
                out[i] = static_cast<int>(j);
            }
        }
    }
    return out;
}

ad::Node* soft_pseudo_labels(ad::Tape& tape, ad::Node* teacher_probs,
                             const StrategyConfig& cfg) {
    cfg.validate();
    std::size_t n = teacher_probs->value.rows();
    std::size_t c = teacher_probs->value.cols();
    if (n == 0) throw Error("soft_pseudo_labels: empty batch");
    ad::Node* sharpened = ad::pow_scalar(tape, teacher_probs, 1.0 / cfg.tau);
    ad::Node* q = sharpened;
    if (cfg.freq_normalize) {
        // f_j = batch sum of sharpened column j
        ad::Node* freq = ad::broadcast_row(tape, ad::col_sums(tape, sharpened), n);
        q = ad::div(tape, sharpened, freq);
    }
    ad::Node* norm = ad::tile_cols(tape, ad::row_sums(tape, q), c);
    return ad::div(tape, q, norm);
}

ad::Node* sample_weights(ad::Tape& tape, ad::Node* pseudo_labels, std::size_t num_classes) {
    std::size_t n = pseudo_labels->value.rows();
    // sum_j y log y = -H; w = 1 + (-H)/log(C)
    ad::Node* ply = ad::mul(tape, pseudo_labels, ad::log(tape, pseudo_labels));
    ad::Node* neg_entropy = ad::row_sums(tape, ply);
    ad::Node* scaled = ad::scale(tape, neg_entropy, 1.0 / std::log(static_cast<double>(num_classes)));
    return ad::add(tape, tape.constant(Array::full({n, 1}, 1.0)), scaled);
}

ad::Node* student_loss(ad::Tape& tape, ad::Node* student_probs,
                       const FollowerStrategy& strategy) {
    ad::Node* y = strategy.pseudo_labels;
    if (!y->value.same_shape(student_probs->value)) {
        throw Error("student_loss: label/prediction shape mismatch " + y->value.shape_str() +
                    " vs " + student_probs->value.shape_str());
    }
    ad::Node* log_ratio = ad::sub(tape, ad::log(tape, y), ad::log(tape, student_probs));
    ad::Node* kl = ad::row_sums(tape, ad::mul(tape, y, log_ratio));
    ad::Node* weighted = strategy.weights ? ad::mul(tape, strategy.weights, kl) : kl;
    return ad::mean(tape, weighted);
}

ad::Node* supervised_loss(ad::Tape& tape, ad::Node* student_probs,
                          const std::vector<int>& labels) {
    std::size_t n = student_probs->value.rows();
    std::size_t c = student_probs->value.cols();
    if (labels.size() != n) throw Error("supervised_loss: label count mismatch");
    Array onehot = Array::zeros({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw Error("supervised_loss: label " + std::to_string(labels[i]) +
                        " out of range [0," + std::to_string(c) + ")");
        }
        onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    ad::Node* picked = ad::mul(tape, tape.constant(std::move(onehot)),
                               ad::log(tape, student_probs));
    return ad::scale(tape, ad::sum(tape, picked), -1.0 / static_cast<double>(n));
}

FollowerStrategy build_strategy(ad::Tape& tape, ad::Node* teacher_probs,
                                const StrategyConfig& cfg, ProducedFrom origin) {
    cfg.validate();
    std::size_t n = teacher_probs->value.rows();
    std::size_t c = teacher_probs->value.cols();
    FollowerStrategy out;
    out.produced_from = origin;
    bool detached = origin == ProducedFrom::detached_teacher;

    if (cfg.use_soft_labels) {
        ad::Node* soft = soft_pseudo_labels(tape, teacher_probs, cfg);
        out.pseudo_labels = (cfg.track_labels && !detached)
                                ? soft
                                : tape.constant(soft->value);
        if (cfg.use_sample_weights) {
            ad::Node* src = (cfg.track_weights && !detached)
                                ? soft
                                : tape.constant(soft->value);
            out.weights = sample_weights(tape, src, c);
        }
    } else {
        // Hard labels: one-hot rows, no gradient path by construction.
        std::vector<int> hard = hard_pseudo_label(teacher_probs->value);
        Array onehot = Array::zeros({n, c});
        for (std::size_t i = 0; i < n; ++i) {
            onehot.at(i, static_cast<std::size_t>(hard[i])) = 1.0;
        }
        out.pseudo_labels = tape.constant(std::move(onehot));
        if (cfg.use_sample_weights) {
            out.weights = sample_weights(tape, out.pseudo_labels, c);
        }
    }
    return out;
}

Objective drift_objective(ad::Tape& tape, const nn::MlpSpec& spec,
                          const nn::BoundParams& student,
                          const nn::ParamSet& teacher_prev, double alpha,
                          const ObjectiveBatch& batch, const StrategyConfig& cfg,
                          TrainMode mode, TeacherPath path) {
    cfg.validate();
    if (mode == TrainMode::semi && batch.x_labeled.rows() == 0) {
        throw Error("drift_objective: semi mode requires a labeled batch");
    }
    if (batch.x_strategy.rows() == 0) {
        throw Error("drift_objective: empty strategy batch");
    }

    // Student parameter values, for the detached/leaf constructions.
    nn::ParamSet student_values = teacher_prev;
    for (std::size_t i = 0; i < student.nodes.size(); ++i) {
        student_values.entries[i].value = student.nodes[i]->value;
    }

    Objective out;
    nn::BoundParams student_side = student;
    switch (path) {
        case TeacherPath::tracked:
            out.teacher = nn::ema_tracked(tape, teacher_prev, student, alpha);
            break;
        case TeacherPath::detached:
            out.teacher = nn::bind_constants(
                tape, nn::ema_update(teacher_prev, student_values, alpha));
            break;
        case TeacherPath::leaf_teacher:
            out.teacher =
                nn::bind_leaves(tape, nn::ema_update(teacher_prev, student_values, alpha));
            student_side = nn::bind_constants(tape, student_values);
            break;
    }

    ad::Node* teacher_probs = nn::forward(tape, spec, out.teacher, batch.x_strategy);
    ProducedFrom origin = path == TeacherPath::detached ? ProducedFrom::detached_teacher
                                                        : ProducedFrom::tracked_teacher;
    out.strategy = build_strategy(tape, teacher_probs, cfg, origin);

    ad::Node* student_probs = nn::forward(tape, spec, student_side, batch.x_strategy);
    ad::Node* self_train = student_loss(tape, student_probs, out.strategy);

    if (mode == TrainMode::semi) {
        ad::Node* sup_probs = nn::forward(tape, spec, student_side, batch.x_labeled);
        out.loss = ad::add(tape, supervised_loss(tape, sup_probs, batch.y_labeled), self_train);
    } else {
        out.loss = self_train;
    }
    return out;
}

}  // namespace drift::strat
