#pragma once

#include <vector>

#include "drift/autodiff.hpp"
#include "drift/model.hpp"

namespace drift::strat {

// Ablation axes and temperature for the teacher's strategy.
//  - use_soft_labels off: hard one-hot pseudo-labels (necessarily detached)
//  - use_sample_weights off: every sample weighted 1
//  - track_labels / track_weights: whether the corresponding piece keeps
//    its gradient path to the student (the DrPL / DrW switches)
struct StrategyConfig {
    double tau = 0.5;
    bool freq_normalize = true;
    bool use_soft_labels = true;
    bool use_sample_weights = true;
    bool track_labels = true;
    bool track_weights = true;

    void validate() const;
};

enum class ProducedFrom { tracked_teacher, detached_teacher };

// Pseudo-labels (n x C, rows on the simplex) and sample weights (n x 1,
// entries in [0,1]) for one batch.
struct FollowerStrategy {
    ad::Node* pseudo_labels = nullptr;
    ad::Node* weights = nullptr;  // null means all-one weights
    ProducedFrom produced_from = ProducedFrom::tracked_teacher;

    double mean_weight() const;
    double mean_label_entropy() const;
};

// Per-row argmax with lowest-index tie-break.
std::vector<int> hard_pseudo_label(const Array& probs);

// Temperature-sharpened labels; with freq_normalize, each class column is
// divided by its batch frequency f_j before row renormalization.
ad::Node* soft_pseudo_labels(ad::Tape& tape, ad::Node* teacher_probs,
                             const StrategyConfig& cfg);

// w_i = 1 - H(y_i)/log(C), natural-log entropy, 0*log0 = 0.
ad::Node* sample_weights(ad::Tape& tape, ad::Node* pseudo_labels, std::size_t num_classes);

// (1/n) * sum_i w_i * KL(y_i || student_i).
ad::Node* student_loss(ad::Tape& tape, ad::Node* student_probs,
                       const FollowerStrategy& strategy);

// Mean cross-entropy against integer labels.
ad::Node* supervised_loss(ad::Tape& tape, ad::Node* student_probs,
                          const std::vector<int>& labels);

// Assembles pseudo-labels and weights from teacher probabilities,
// detaching the pieces the config does not track.
FollowerStrategy build_strategy(ad::Tape& tape, ad::Node* teacher_probs,
                                const StrategyConfig& cfg, ProducedFrom origin);

enum class TrainMode { semi, weak };

// How teacher parameters enter the objective graph:
//  - tracked: EMA of (constant history, student leaves); gradients reach
//    the student scaled by (1-alpha)
//  - detached: EMA values as constants (conventional baseline / leader term)
//  - leaf_teacher: EMA values as independent leaves, student side constant
//    (isolates the interaction term of the gradient decomposition)
enum class TeacherPath { tracked, detached, leaf_teacher };

struct ObjectiveBatch {
    Array x_labeled;              // may be empty in weak mode
    std::vector<int> y_labeled;   // labels for x_labeled
    Array x_strategy;             // unlabeled batch (semi) or union batch (weak)
};

struct Objective {
    ad::Node* loss = nullptr;
    FollowerStrategy strategy;
    nn::BoundParams teacher;  // teacher parameter nodes used by the strategy
};

// The full training objective: supervised term plus weighted-KL
// self-training term in semi mode, weighted-KL over the union in weak mode.
Objective drift_objective(ad::Tape& tape, const nn::MlpSpec& spec,
                          const nn::BoundParams& student,
                          const nn::ParamSet& teacher_prev, double alpha,
                          const ObjectiveBatch& batch, const StrategyConfig& cfg,
                          TrainMode mode, TeacherPath path);

}  // namespace drift::strat
