#include "drift/model.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

namespace drift::nn {

void MlpSpec::validate() const {
    if (input_dim == 0 || hidden_dim == 0) throw Error("MlpSpec: dimensions must be positive");
    if (num_classes < 2) throw Error("MlpSpec: num_classes must be >= 2");
}

std::size_t MlpSpec::param_count() const {
    return hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes;
}

std::size_t ParamSet::total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
}

std::vector<double> ParamSet::flatten() const {
    std::vector<double> flat;
    flat.reserve(total_size());
    for (const auto& e : entries) {
        flat.insert(flat.end(), e.value.data.begin(), e.value.data.end());
    }
    return flat;
}

ParamSet ParamSet::with_flat(const std::vector<double>& flat) const {
    if (flat.size() != total_size()) {
        throw Error("ParamSet::with_flat: length mismatch");
    }
    ParamSet out = *this;
    std::size_t pos = 0;
    for (auto& e : out.entries) {
        std::copy(flat.begin() + pos, flat.begin() + pos + e.value.size(),
                  e.value.data.begin());
        pos += e.value.size();
    }
    return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
    if (entries.size() != other.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name != other.entries[i].name) return false;
        if (entries[i].value.shape != other.entries[i].value.shape) return false;
    }
    return true;
}

std::string ParamSet::to_json() const {
    nlohmann::ordered_json j;
    for (const auto& e : entries) {
        j[e.name] = {{"shape", e.value.shape}, {"data", e.value.data}};
    }
    return j.dump();
}

ParamSet ParamSet::from_json(const std::string& text) {
    ParamSet out;
    auto j = nlohmann::ordered_json::parse(text);
    for (auto it = j.begin(); it != j.end(); ++it) {
        Array a(it.value().at("shape").get<std::vector<std::size_t>>(),
                it.value().at("data").get<std::vector<double>>());
        out.entries.push_back({it.key(), std::move(a)});
    }
    return out;
}

ParamSet init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    auto glorot = [&rng](std::vector<std::size_t> shape, std::size_t fan_in,
                         std::size_t fan_out) {
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Array a = Array::zeros(std::move(shape));
        for (double& v : a.data) v = dist(rng);
        return a;
    };
    ParamSet p;
    p.entries.push_back(
        {"W1", glorot({spec.hidden_dim, spec.input_dim}, spec.input_dim, spec.hidden_dim)});
    p.entries.push_back({"b1", Array::zeros({spec.hidden_dim})});
    p.entries.push_back(
        {"W2", glorot({spec.num_classes, spec.hidden_dim}, spec.hidden_dim, spec.num_classes)});
    p.entries.push_back({"b2", Array::zeros({spec.num_classes})});
    return p;
}

BoundParams bind_leaves(ad::Tape& tape, const ParamSet& params) {
    BoundParams b;
    for (const auto& e : params.entries) b.nodes.push_back(tape.leaf(e.value));
    return b;
}

BoundParams bind_constants(ad::Tape& tape, const ParamSet& params) {
    BoundParams b;
    for (const auto& e : params.entries) b.nodes.push_back(tape.constant(e.value));
    return b;
}

ParamSet gradients(const BoundParams& bound, const ParamSet& layout) {
    if (bound.nodes.size() != layout.entries.size()) {
        throw Error("gradients: bound parameter count mismatch");
    }
    ParamSet out = layout;
    for (std::size_t i = 0; i < bound.nodes.size(); ++i) {
        const Array& adj = bound.nodes[i]->adjoint;
        out.entries[i].value =
            adj.data.empty() ? Array::zeros(layout.entries[i].value.shape) : adj;
    }
    return out;
}

ad::Node* forward(ad::Tape& tape, const MlpSpec& spec, const BoundParams& params,
                  const Array& x_batch) {
    if (x_batch.rows() == 0 || x_batch.cols() != spec.input_dim) {
        throw Error("forward: batch shape " + x_batch.shape_str() + " does not match input_dim " +
                    std::to_string(spec.input_dim));
    }
    if (params.nodes.size() != 4) throw Error("forward: expected 4 parameter nodes");
    ad::Node* x = tape.constant(x_batch);
    std::size_t n = x_batch.rows();
    ad::Node* z1 = ad::add(tape, ad::matmul(tape, x, params.nodes[0], false, true),
                           ad::broadcast_row(tape, params.nodes[1], n));
    ad::Node* h = ad::tanh(tape, z1);
    ad::Node* logits = ad::add(tape, ad::matmul(tape, h, params.nodes[2], false, true),
                               ad::broadcast_row(tape, params.nodes[3], n));
    return ad::softmax_rows(tape, logits);
}

Array forward_probs(const MlpSpec& spec, const ParamSet& params, const Array& x_batch) {
    ad::Tape scratch;
    return forward(scratch, spec, bind_constants(scratch, params), x_batch)->value;
}

ParamSet ema_update(const ParamSet& teacher, const ParamSet& student, double alpha) {
    if (!teacher.same_layout(student)) throw Error("ema_update: parameter layout mismatch");
    if (alpha < 0.0 || alpha > 1.0) throw Error("ema_update: alpha must be in [0,1]");
    ParamSet out = teacher;
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        auto& dst = out.entries[i].value.data;
        const auto& s = student.entries[i].value.data;
        for (std::size_t k = 0; k < dst.size(); ++k) {
            dst[k] = dst[k] * alpha + s[k] * (1.0 - alpha);
        }
    }
    return out;
}

BoundParams ema_tracked(ad::Tape& tape, const ParamSet& teacher_prev,
                        const BoundParams& student, double alpha) {
    if (teacher_prev.entries.size() != student.nodes.size()) {
        throw Error("ema_tracked: parameter layout mismatch");
    }
    BoundParams out;
    for (std::size_t i = 0; i < student.nodes.size(); ++i) {
        ad::Node* hist = ad::scale(tape, tape.constant(teacher_prev.entries[i].value), alpha);
        ad::Node* cur = ad::scale(tape, student.nodes[i], 1.0 - alpha);
        out.nodes.push_back(ad::add(tape, hist, cur));
    }
    return out;
}

ad::Node* teacher_forward_tracked(ad::Tape& tape, const MlpSpec& spec,
                                  const ParamSet& teacher_prev,
                                  const BoundParams& student, double alpha,
                                  const Array& x_batch) {
    return forward(tape, spec, ema_tracked(tape, teacher_prev, student, alpha), x_batch);
}

}  // namespace drift::nn
