#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "drift/array.hpp"

namespace drift::data {

// Feature matrix plus labels. labels[i] == -1 marks an unlabeled sample;
// true_labels keeps the hidden ground truth for evaluation only.
struct Dataset {
    Array features;  // N x d
    std::vector<int> labels;
    std::vector<int> true_labels;
    std::vector<std::size_t> labeled_indices;
    std::vector<std::size_t> unlabeled_indices;
    std::size_t num_classes = 2;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }

    // Checks the labeled/unlabeled partition and label ranges.
    void validate() const;

    Array features_at(const std::vector<std::size_t>& indices) const;
    std::vector<int> labels_at(const std::vector<std::size_t>& indices) const;
};

// Two interleaving unit half-circles (the second moon mirrored and offset
// by (1, -0.5)) with isotropic Gaussian noise. Unlabeled points keep their
// true class hidden.
Dataset make_two_moons(std::size_t n_labeled_per_class, std::size_t n_unlabeled_per_class,
                       double noise_std, std::uint64_t seed);

// Two spherical Gaussian blobs at (-separation/2, 0) and (+separation/2, 0).
Dataset make_gaussian_blobs(std::size_t n_labeled_per_class,
                            std::size_t n_unlabeled_per_class, double separation,
                            double noise_std, std::uint64_t seed);

// Each labeled sample's label is replaced, independently with probability
// flip_rate, by a uniform draw over the other classes. Features, unlabeled
// entries and hidden true labels are untouched.
Dataset inject_label_noise(const Dataset& ds, double flip_rate, std::uint64_t seed);

// CSV with header row; label column by name, sentinel cell value marks
// unlabeled (default: empty cell). If a sidecar JSON written by write_csv
// exists at <path>.meta.json it supplies hidden true labels.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::string& unlabeled_sentinel = "");

// Writes the CSV plus the <path>.meta.json sidecar (generator metadata and
// hidden true labels).
void write_csv(const Dataset& ds, const std::string& path,
               const std::string& generator_info_json = "{}");

enum class SamplingMode { with_replacement_uniform, epoch_shuffle };

struct Batch {
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
};

// Deterministic minibatch stream over a dataset's two index pools.
class BatchSampler {
public:
    BatchSampler(std::uint64_t seed, std::size_t labeled_batch, std::size_t unlabeled_batch,
                 SamplingMode mode);

    Batch next(const Dataset& ds);

private:
    std::vector<std::size_t> draw(const std::vector<std::size_t>& pool, std::size_t count,
                                  std::vector<std::size_t>& perm, std::size_t& pos);

    std::mt19937_64 rng_;
    std::size_t labeled_batch_;
    std::size_t unlabeled_batch_;
    SamplingMode mode_;
    std::vector<std::size_t> perm_labeled_, perm_unlabeled_;
    std::size_t pos_labeled_ = 0, pos_unlabeled_ = 0;
};

}  // namespace drift::data
