#include "drift/autodiff.hpp"

#include <cmath>
#include <string>

namespace drift::ad {

void Node::accumulate(const Array& grad_in) {
    if (adjoint.data.empty()) adjoint = Array::zeros(value.shape);
    for (std::size_t i = 0; i < adjoint.data.size(); ++i) {
        adjoint.data[i] += grad_in.data[i];
    }
}

Node* Tape::leaf(Array value) {
    Node* n = emplace(std::move(value), {}, nullptr);
    n->requires_grad = true;
    return n;
}

Node* Tape::constant(Array value) { return emplace(std::move(value), {}, nullptr); }

Node* Tape::emplace(Array value, std::vector<Node*> parents, BackwardRule rule) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward_rule = std::move(rule);
    n.generation = generation_;
    for (Node* p : n.parents) {
        if (p->requires_grad) {
            n.requires_grad = true;
            break;
        }
    }
    return &n;
}

void Tape::clear() {
    nodes_.clear();
    ++generation_;
}

void Tape::backward(Node* root) {
    if (root->value.size() != 1) {
        throw Error("backward: root must be scalar, got shape " + root->value.shape_str());
    }
    if (root->generation != generation_) {
        throw Error("backward: root belongs to a cleared tape generation");
    }
    for (Node& n : nodes_) {
        n.adjoint = Array::zeros(n.value.shape);
    }
    root->adjoint.data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->backward_rule && it->requires_grad) {
            it->backward_rule(*it);
        }
    }
}

namespace {

void check_same_shape(const char* op, const Node* a, const Node* b) {
    if (!a->value.same_shape(b->value)) {
        throw Error(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
                    b->value.shape_str());
    }
}

Node* finish(Tape& t, const char* op, Array value, std::vector<Node*> parents,
             BackwardRule rule) {
    value.check_finite(std::string("op ") + op);
    return t.emplace(std::move(value), std::move(parents), std::move(rule));
}

}  // namespace

Node* add(Tape& t, Node* a, Node* b) {
    check_same_shape("add", a, b);
    Array v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] += b->value.data[i];
    return finish(t, "add", std::move(v), {a, b}, [](Node& n) {
        n.parents[0]->accumulate(n.adjoint);
        n.parents[1]->accumulate(n.adjoint);
    });
}

Node* sub(Tape& t, Node* a, Node* b) {
    check_same_shape("sub", a, b);
    Array v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] -= b->value.data[i];
    return finish(t, "sub", std::move(v), {a, b}, [](Node& n) {
        n.parents[0]->accumulate(n.adjoint);
        Array g = n.adjoint;
        for (double& x : g.data) x = -x;
        n.parents[1]->accumulate(g);
    });
}

Node* mul(Tape& t, Node* a, Node* b) {
    check_same_shape("mul", a, b);
    Array v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] *= b->value.data[i];
    return finish(t, "mul", std::move(v), {a, b}, [](Node& n) {
        Array ga = n.adjoint;
        Array gb = n.adjoint;
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga.data[i] *= n.parents[1]->value.data[i];
            gb.data[i] *= n.parents[0]->value.data[i];
        }
        n.parents[0]->accumulate(ga);
        n.parents[1]->accumulate(gb);
    });
}

Node* div(Tape& t, Node* a, Node* b) {
    check_same_shape("div", a, b);
    Array v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v.data[i] /= std::max(b->value.data[i], kEps);
    }
    return finish(t, "div", std::move(v), {a, b}, [](Node& n) {
        Array ga = n.adjoint;
        Array gb = n.adjoint;
        for (std::size_t i = 0; i < ga.size(); ++i) {
            double denom = n.parents[1]->value.data[i];
            if (denom > kEps) {
                ga.data[i] /= denom;
                gb.data[i] *= -n.parents[0]->value.data[i] / (denom * denom);
            } else {
                ga.data[i] /= kEps;
                gb.data[i] = 0.0;  // clamped region: value constant in denom
            }
        }
        n.parents[0]->accumulate(ga);
        n.parents[1]->accumulate(gb);
    });
}

Node* pow_scalar(Tape& t, Node* a, double exponent) {
    Array v = a->value;
    for (double& x : v.data) x = std::pow(std::max(x, 0.0), exponent);
    return finish(t, "pow_scalar", std::move(v), {a}, [exponent](Node& n) {
        Array g = n.adjoint;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double x = std::max(n.parents[0]->value.data[i], kEps);
            g.data[i] *= exponent * std::pow(x, exponent - 1.0);
        }
        n.parents[0]->accumulate(g);
    });
}

Node* exp(Tape& t, Node* a) {
    Array v = a->value;
    for (double& x : v.data) x = std::exp(x);
    return finish(t, "exp", std::move(v), {a}, [](Node& n) {
        Array g = n.adjoint;
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= n.value.data[i];
        n.parents[0]->accumulate(g);
    });
}

Node* log(Tape& t, Node* a) {
    Array v = a->value;
    for (double& x : v.data) x = std::log(std::max(x, kEps));
    return finish(t, "log", std::move(v), {a}, [](Node& n) {
        Array g = n.adjoint;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double x = n.parents[0]->value.data[i];
            g.data[i] = x > kEps ? g.data[i] / x : 0.0;
        }
        n.parents[0]->accumulate(g);
    });
}

Node* tanh(Tape& t, Node* a) {
    Array v = a->value;
    for (double& x : v.data) x = std::tanh(x);
    return finish(t, "tanh", std::move(v), {a}, [](Node& n) {
        Array g = n.adjoint;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double y = n.value.data[i];
            g.data[i] *= 1.0 - y * y;
        }
        n.parents[0]->accumulate(g);
    });
}

Node* scale(Tape& t, Node* a, double s) {
    return mul(t, a, t.constant(Array::full(a->value.shape, s)));
}

namespace {

// C (m x n) += op(A) · op(B); plain loops, sizes here are tiny.
void matmul_into(Array& c, const Array& a, bool ta, const Array& b, bool tb) {
    std::size_t m = ta ? a.cols() : a.rows();
    std::size_t k = ta ? a.rows() : a.cols();
    std::size_t n = tb ? b.rows() : b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double av = ta ? a.at(p, i) : a.at(i, p);
            for (std::size_t j = 0; j < n; ++j) {
                double bv = tb ? b.at(j, p) : b.at(p, j);
                c.at(i, j) += av * bv;
            }
        }
    }
}

}  // namespace

Node* matmul(Tape& t, Node* a, Node* b, bool transpose_a, bool transpose_b) {
    std::size_t m = transpose_a ? a->value.cols() : a->value.rows();
    std::size_t ka = transpose_a ? a->value.rows() : a->value.cols();
    std::size_t kb = transpose_b ? b->value.cols() : b->value.rows();
    std::size_t n = transpose_b ? b->value.rows() : b->value.cols();
    if (ka != kb) {
        throw Error("matmul: inner dimension mismatch " + a->value.shape_str() + " vs " +
                    b->value.shape_str());
    }
    Array v = Array::zeros({m, n});
    matmul_into(v, a->value, transpose_a, b->value, transpose_b);
    return finish(t, "matmul", std::move(v), {a, b},
                  [transpose_a, transpose_b](Node& n_) {
                      Node* a_ = n_.parents[0];
                      Node* b_ = n_.parents[1];
                      Array ga = Array::zeros(a_->value.shape);
                      Array gb = Array::zeros(b_->value.shape);
                      // dA = dC·Bᵀ (modulo transposes), dB = Aᵀ·dC.
                      if (!transpose_a) {
                          matmul_into(ga, n_.adjoint, false, b_->value, !transpose_b);
                      } else {
                          matmul_into(ga, b_->value, transpose_b, n_.adjoint, true);
                      }
                      if (!transpose_b) {
                          matmul_into(gb, a_->value, !transpose_a, n_.adjoint, false);
                      } else {
                          matmul_into(gb, n_.adjoint, true, a_->value, transpose_a);
                      }
                      a_->accumulate(ga);
                      b_->accumulate(gb);
                  });
}

Node* sum(Tape& t, Node* a) {
    double s = 0.0;
    for (double x : a->value.data) s += x;
    return finish(t, "sum", Array::scalar(s), {a}, [](Node& n) {
        Array g = Array::full(n.parents[0]->value.shape, n.adjoint.data[0]);
        n.parents[0]->accumulate(g);
    });
}

Node* mean(Tape& t, Node* a) {
    double s = 0.0;
    for (double x : a->value.data) s += x;
    double count = static_cast<double>(a->value.size());
    return finish(t, "mean", Array::scalar(s / count), {a}, [count](Node& n) {
        Array g = Array::full(n.parents[0]->value.shape, n.adjoint.data[0] / count);
        n.parents[0]->accumulate(g);
    });
}

Node* softmax_rows(Tape& t, Node* a) {
    std::size_t rows = a->value.rows();
    std::size_t cols = a->value.cols();
    Array v = Array::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        double mx = a->value.at(i, 0);
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, a->value.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            v.at(i, j) = std::exp(a->value.at(i, j) - mx);
            z += v.at(i, j);
        }
        for (std::size_t j = 0; j < cols; ++j) v.at(i, j) /= z;
    }
    return finish(t, "softmax_rows", std::move(v), {a}, [rows, cols](Node& n) {
        Array g = Array::zeros({rows, cols});
        for (std::size_t i = 0; i < rows; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                dot += n.adjoint.at(i, j) * n.value.at(i, j);
            }
            for (std::size_t j = 0; j < cols; ++j) {
                g.at(i, j) = n.value.at(i, j) * (n.adjoint.at(i, j) - dot);
            }
        }
        n.parents[0]->accumulate(g);
    });
}

Node* max_rows(Tape& t, Node* a) {
    std::size_t rows = a->value.rows();
    std::size_t cols = a->value.cols();
    Array v = Array::zeros({rows, 1});
    std::vector<std::size_t> argmax(rows, 0);
    for (std::size_t i = 0; i < rows; ++i) {
        double best = a->value.at(i, 0);
        for (std::size_t j = 1; j < cols; ++j) {
            if (a->value.at(i, j) > best) {
                best = a->value.at(i, j);
                argmax[i] = j;
            }
        }
        v.at(i, 0) = best;
    }
    return finish(t, "max_rows", std::move(v), {a}, [rows, cols, argmax](Node& n) {
        Array g = Array::zeros({rows, cols});
        for (std::size_t i = 0; i < rows; ++i) {
            g.at(i, argmax[i]) = n.adjoint.at(i, 0);
        }
        n.parents[0]->accumulate(g);
    });
}

Node* broadcast_row(Tape& t, Node* a, std::size_t rows) {
    if (a->value.rows() != 1) {
        throw Error("broadcast_row: expected a row vector, got " + a->value.shape_str());
    }
    std::size_t cols = a->value.cols();
    Array v = Array::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) v.at(i, j) = a->value.data[j];
    }
    return finish(t, "broadcast_row", std::move(v), {a}, [rows, cols](Node& n) {
        Array g = Array::zeros(n.parents[0]->value.shape);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) g.data[j] += n.adjoint.at(i, j);
        }
        n.parents[0]->accumulate(g);
    });
}

Node* row_sums(Tape& t, Node* a) {
    return matmul(t, a, t.constant(Array::full({a->value.cols(), 1}, 1.0)));
}

Node* col_sums(Tape& t, Node* a) {
    return matmul(t, t.constant(Array::full({1, a->value.rows()}, 1.0)), a);
}

Node* tile_cols(Tape& t, Node* a, std::size_t c) {
    return matmul(t, a, t.constant(Array::full({1, c}, 1.0)));
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::vector<double>& x, double step) {
    if (step <= 0.0) throw Error("finite_difference_gradient: step must be positive");
    std::vector<double> grad(x.size());
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        double up = loss(probe);
        probe[i] = x[i] - step;
        double down = loss(probe);
        probe[i] = x[i];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw Error("finite_difference_gradient: non-finite loss at coordinate " +
                        std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

}  // namespace drift::ad
