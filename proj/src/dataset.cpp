#include "drift/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace drift::data {

namespace {
constexpr double kPi = 3.14159265358979323846;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

void Dataset::validate() const {
    if (features.rows() != labels.size() || labels.size() != true_labels.size()) {
        throw Error("Dataset: row count mismatch between features and labels");
    }
    std::vector<char> seen(size(), 0);
    for (std::size_t i : labeled_indices) {
        if (i >= size() || seen[i]) throw Error("Dataset: bad labeled index");
        seen[i] = 1;
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw Error("Dataset: labeled sample with out-of-range label");
        }
    }
    for (std::size_t i : unlabeled_indices) {
        if (i >= size() || seen[i]) throw Error("Dataset: bad unlabeled index");
        seen[i] = 1;
        if (labels[i] != -1) throw Error("Dataset: unlabeled sample with a label");
    }
    for (char s : seen) {
        if (!s) throw Error("Dataset: indices do not partition the dataset");
    }
}

Array Dataset::features_at(const std::vector<std::size_t>& indices) const {
    std::size_t d = dim();
    Array out = Array::zeros({indices.size(), d});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) = features.at(indices[r], c);
    }
    return out;
}

std::vector<int> Dataset::labels_at(const std::vector<std::size_t>& indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels[i]);
    return out;
}

namespace {

Dataset assemble_two_class(std::vector<std::array<double, 2>> points,
                           std::vector<int> classes, std::size_t n_labeled_per_class,
                           std::mt19937_64& rng) {
    std::size_t n = points.size();
    Dataset ds;
    ds.num_classes = 2;
    ds.features = Array::zeros({n, 2});
    ds.true_labels.resize(n);
    ds.labels.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        ds.features.at(i, 0) = points[i][0];
        ds.features.at(i, 1) = points[i][1];
        ds.true_labels[i] = classes[i];
    }
    // Pick the labeled subset per class by shuffling class member indices.
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (classes[i] == cls) members.push_back(i);
        }
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t k = 0; k < members.size(); ++k) {
            if (k < n_labeled_per_class) {
                ds.labels[members[k]] = cls;
                ds.labeled_indices.push_back(members[k]);
            } else {
                ds.unlabeled_indices.push_back(members[k]);
            }
        }
    }
    std::sort(ds.labeled_indices.begin(), ds.labeled_indices.end());
    std::sort(ds.unlabeled_indices.begin(), ds.unlabeled_indices.end());
    ds.validate();
    return ds;
}

}  // namespace

Dataset make_two_moons(std::size_t n_labeled_per_class, std::size_t n_unlabeled_per_class,
                       double noise_std, std::uint64_t seed) {
    if (n_labeled_per_class + n_unlabeled_per_class < 1) {
        throw Error("make_two_moons: need at least one point per class");
    }
    if (noise_std < 0.0) throw Error("make_two_moons: noise_std must be >= 0");
    std::size_t per_class = n_labeled_per_class + n_unlabeled_per_class;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<std::array<double, 2>> points;
    std::vector<int> classes;
    for (std::size_t k = 0; k < per_class; ++k) {
        double theta = per_class > 1
                           ? kPi * static_cast<double>(k) / static_cast<double>(per_class - 1)
                           : 0.0;
        points.push_back({std::cos(theta), std::sin(theta)});
        classes.push_back(0);
    }
    for (std::size_t k = 0; k < per_class; ++k) {
        double theta = per_class > 1
                           ? kPi * static_cast<double>(k) / static_cast<double>(per_class - 1)
                           : 0.0;
        points.push_back({1.0 - std::cos(theta), 0.5 - std::sin(theta)});
        classes.push_back(1);
    }
    if (noise_std > 0.0) {
        for (auto& p : points) {
            p[0] += noise_std * noise(rng);
            p[1] += noise_std * noise(rng);
        }
    }
    return assemble_two_class(std::move(points), std::move(classes), n_labeled_per_class, rng);
}

Dataset make_gaussian_blobs(std::size_t n_labeled_per_class,
                            std::size_t n_unlabeled_per_class, double separation,
                            double noise_std, std::uint64_t seed) {
    std::size_t per_class = n_labeled_per_class + n_unlabeled_per_class;
    if (per_class < 1) throw Error("make_gaussian_blobs: need at least one point per class");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::array<double, 2>> points;
    std::vector<int> classes;
    for (int cls = 0; cls < 2; ++cls) {
        double cx = (cls == 0 ? -0.5 : 0.5) * separation;
        for (std::size_t k = 0; k < per_class; ++k) {
            points.push_back({cx + noise_std * noise(rng), noise_std * noise(rng)});
            classes.push_back(cls);
        }
    }
    return assemble_two_class(std::move(points), std::move(classes), n_labeled_per_class, rng);
}

Dataset inject_label_noise(const Dataset& ds, double flip_rate, std::uint64_t seed) {
    if (flip_rate < 0.0 || flip_rate > 1.0) {
        throw Error("inject_label_noise: flip_rate must be in [0,1]");
    }
    if (ds.labeled_indices.empty()) {
        throw Error("inject_label_noise: dataset has no labeled samples");
    }
    Dataset out = ds;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> other(0, static_cast<int>(ds.num_classes) - 2);
    for (std::size_t i : out.labeled_indices) {
        if (coin(rng) < flip_rate) {
            int offset = other(rng);
            out.labels[i] = (out.labels[i] + 1 + offset) % static_cast<int>(ds.num_classes);
        }
    }
    return out;
}

void write_csv(const Dataset& ds, const std::string& path,
               const std::string& generator_info_json) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("write_csv: cannot open " + path);
    std::size_t d = ds.dim();
    for (std::size_t c = 0; c < d; ++c) f << "x" << c << ",";
    f << "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t c = 0; c < d; ++c) f << format_double(ds.features.at(i, c)) << ",";
        if (ds.labels[i] >= 0) f << ds.labels[i];
        f << "\n";
    }
    if (!f) throw Error("write_csv: write failed for " + path);

    nlohmann::ordered_json meta;
    meta["generator"] = nlohmann::json::parse(generator_info_json);
    meta["num_classes"] = ds.num_classes;
    meta["true_labels"] = ds.true_labels;
    std::ofstream side(path + ".meta.json", std::ios::trunc);
    if (!side) throw Error("write_csv: cannot open sidecar for " + path);
    side << meta.dump(2) << "\n";
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::string& unlabeled_sentinel) {
    std::ifstream f(path);
    if (!f) throw Error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw Error("load_csv: empty file " + path);

    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cur;
        std::istringstream is(s);
        while (std::getline(is, cur, ',')) cells.push_back(cur);
        if (!s.empty() && s.back() == ',') cells.push_back("");
        return cells;
    };

    std::vector<std::string> header = split(line);
    std::size_t label_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == label_column) label_col = i;
    }
    if (label_col == header.size()) {
        throw Error("load_csv: unknown label column '" + label_column + "' in " + path);
    }

    Dataset ds;
    std::vector<double> flat;
    std::size_t d = header.size() - 1;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells = split(line);
        if (cells.size() != header.size()) {
            throw Error("load_csv: line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i == label_col) {
                if (cells[i] == unlabeled_sentinel) {
                    ds.labels.push_back(-1);
                } else {
                    try {
                        std::size_t used = 0;
                        int lab = std::stoi(cells[i], &used);
                        if (used != cells[i].size()) throw std::invalid_argument("");
                        ds.labels.push_back(lab);
                    } catch (const std::exception&) {
                        throw Error("load_csv: non-integer label '" + cells[i] + "' at line " +
                                    std::to_string(line_no));
                    }
                }
            } else {
                try {
                    std::size_t used = 0;
                    double v = std::stod(cells[i], &used);
                    if (used != cells[i].size()) throw std::invalid_argument("");
                    flat.push_back(v);
                } catch (const std::exception&) {
                    throw Error("load_csv: non-numeric cell '" + cells[i] + "' at line " +
                                std::to_string(line_no));
                }
            }
        }
    }
    if (ds.labels.empty()) throw Error("load_csv: no data rows in " + path);
    ds.features = Array({ds.labels.size(), d}, std::move(flat));

    int max_label = 1;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (ds.labels[i] >= 0) {
            ds.labeled_indices.push_back(i);
            max_label = std::max(max_label, ds.labels[i]);
        } else {
            ds.unlabeled_indices.push_back(i);
        }
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    ds.true_labels = ds.labels;

    // Sidecar restores hidden truth and class count when present.
    std::ifstream side(path + ".meta.json");
    if (side) {
        auto meta = nlohmann::json::parse(side);
        ds.num_classes = meta.at("num_classes").get<std::size_t>();
        auto truth = meta.at("true_labels").get<std::vector<int>>();
        if (truth.size() != ds.size()) {
            throw Error("load_csv: sidecar true_labels length mismatch for " + path);
        }
        ds.true_labels = std::move(truth);
    }
    ds.validate();
    return ds;
}

BatchSampler::BatchSampler(std::uint64_t seed, std::size_t labeled_batch,
                           std::size_t unlabeled_batch, SamplingMode mode)
    : rng_(seed), labeled_batch_(labeled_batch), unlabeled_batch_(unlabeled_batch),
      mode_(mode) {}

std::vector<std::size_t> BatchSampler::draw(const std::vector<std::size_t>& pool,
                                            std::size_t count, std::vector<std::size_t>& perm,
                                            std::size_t& pos) {
    std::vector<std::size_t> out;
    if (count == 0 || pool.empty()) return out;
    if (mode_ == SamplingMode::with_replacement_uniform) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t k = 0; k < count; ++k) out.push_back(pool[pick(rng_)]);
        return out;
    }
    if (count > pool.size()) {
        throw Error("BatchSampler: batch size " + std::to_string(count) +
                    " exceeds pool size " + std::to_string(pool.size()));
    }
    for (std::size_t k = 0; k < count; ++k) {
        if (pos >= perm.size()) {
            perm = pool;
            std::shuffle(perm.begin(), perm.end(), rng_);
            pos = 0;
        }
        out.push_back(perm[pos++]);
    }
    return out;
}

Batch BatchSampler::next(const Dataset& ds) {
    Batch b;
    b.labeled = draw(ds.labeled_indices, labeled_batch_, perm_labeled_, pos_labeled_);
    b.unlabeled = draw(ds.unlabeled_indices, unlabeled_batch_, perm_unlabeled_, pos_unlabeled_);
    return b;
}

}  // namespace drift::data
