#pragma once

// Minimal reverse-mode differentiation over dense 2-D matrices.
//
// A Tape records every operation in execution order; Var is a handle into it.
// Parameters live in a ParamStore outside the tape and are attached either as
// trainable leaves (tape.param) or as constants (tape.constant), which is how
// one player is frozen while the other is differentiated. backward() may run
// once per tape.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "core.hpp"
#include "graph.hpp"

namespace infoadv {

struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
    bool has_grad = false;
};

/// Named trainable matrices with Adam state. Names are unique and shapes are
/// fixed at registration.
class ParamStore {
public:
    Parameter& add(const std::string& name, Mat init) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        index_.emplace(name, params_.size());
        Parameter& p = params_.emplace_back();
        p.name = name;
        p.grad = Mat::Zero(init.rows(), init.cols());
        p.adam_m = Mat::Zero(init.rows(), init.cols());
        p.adam_v = Mat::Zero(init.rows(), init.cols());
        p.value = std::move(init);
        return p;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Parameter& get(const std::string& name) {
        const auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return params_[it->second];
    }
    const Parameter& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }

    /// Replace a value keeping the registered shape.
    void set(const std::string& name, const Mat& value) {
        Parameter& p = get(name);
        if (value.rows() != p.value.rows() || value.cols() != p.value.cols())
            throw ShapeError("parameter '" + name + "' has shape " + shape_str(p.value) + ", got " + shape_str(value));
        p.value = value;
    }

    std::deque<Parameter>& all() { return params_; }
    const std::deque<Parameter>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }

    void zero_grad() {
        for (auto& p : params_) {
            p.grad.setZero();
            p.has_grad = false;
        }
    }

    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        for (const auto& p : params_) h = hash_matrix(p.value, h);
        return h;
    }

    long long step_count = 0;

private:
    std::deque<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a recorded value.
class Var {
public:
    Var() = default;
    Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

    const Mat& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Mat& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Mat v) { return push("constant", std::move(v), false, {}); }

    /// Trainable leaf bound to a parameter; gradients flow back into p.grad.
    Var param(Parameter& p) {
        Var v = push("param:" + p.name, p.value, true, {});
        nodes_[v.id()].param = &p;
        return v;
    }

    Var leaf(Parameter& p, bool trainable) { return trainable ? param(p) : constant(p.value); }

    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    bool requires_grad(std::initializer_list<Var> vs) const {
        return std::any_of(vs.begin(), vs.end(), [&](Var v) { return requires_grad(v); });
    }

    const Mat& value(Var v) const { return nodes_[v.id()].value; }

    /// Record an op result. The value is checked for NaN/Inf.
    Var push(const std::string& op, Mat value, bool requires_grad, BackwardFn fn) {
        if (consumed_) throw Error("tape already consumed by backward()");
        if (!value.allFinite()) throw NumericError("non-finite value produced by " + op);
        Node& n = nodes_.emplace_back();
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad) n.backward = std::move(fn);
        return Var(this, nodes_.size() - 1);
    }

    /// Add g into the gradient of v (no-op for constants).
    void accumulate(Var v, const Mat& g) {
        Node& n = nodes_[v.id()];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        n.grad += g;
    }

    /// Reverse sweep from a 1x1 loss; parameter gradients are added to Parameter::grad.
    void backward(Var loss) {
        if (consumed_) throw Error("backward() called twice on the same tape");
        if (loss.tape() != this) throw Error("backward(): loss belongs to another tape");
        Node& root = nodes_[loss.id()];
        if (root.value.rows() != 1 || root.value.cols() != 1)
            throw ShapeError("backward() needs a scalar loss, got " + shape_str(root.value));
        consumed_ = true;
        if (!root.requires_grad) return;
        root.grad = Mat::Ones(1, 1);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || n.grad.size() == 0) continue;
            if (n.backward) n.backward(*this, n.grad);
            if (n.param) {
                n.param->grad += n.grad;
                n.param->has_grad = true;
            }
            if (!n.param && i != loss.id()) n.grad.resize(0, 0);
        }
    }

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };
    std::deque<Node> nodes_;
    bool consumed_ = false;
};

inline const Mat& Var::value() const { return tape_->value(*this); }

namespace ad {

namespace detail {

inline void same_shape(const char* op, const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Elementwise unary op with derivative expressed through (input, output).
template <typename F, typename D>
Var unary(const char* name, Var a, F f, D df) {
    Tape& t = *a.tape();
    Mat out = a.value().unaryExpr(f);
    return t.push(name, std::move(out), t.requires_grad(a), [a, df](Tape& tp, const Mat& g) {
        const Mat& x = a.value();
        Mat dx(x.rows(), x.cols());
        for (Index i = 0; i < x.size(); ++i) dx.data()[i] = g.data()[i] * df(x.data()[i]);
        tp.accumulate(a, dx);
    });
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_str(a.value()) + " x " + shape_str(b.value()));
    Tape& t = *a.tape();
    Mat out = a.value() * b.value();
    return t.push("matmul", std::move(out), t.requires_grad({a, b}), [a, b](Tape& tp, const Mat& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
        if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
    });
}

inline Var transpose(Var a) {
    Tape& t = *a.tape();
    Mat out = a.value().transpose();
    return t.push("transpose", std::move(out), t.requires_grad(a), [a](Tape& tp, const Mat& g) { tp.accumulate(a, g.transpose()); });
}

/// Constant sparse matrix times dense Var. The sparse matrix must outlive the tape.
inline Var spmm(const SparseMatrix& s, Var x) {
    Tape& t = *x.tape();
    Mat out = s.multiply(x.value());
    const SparseMatrix* sp = &s;
    return t.push("spmm", std::move(out), t.requires_grad(x), [sp, x](Tape& tp, const Mat& g) { tp.accumulate(x, sp->multiply_transpose(g)); });
}

/// Y = D^{-1/2}(A_w + I)D^{-1/2} X with A_w built from one weight per canonical
/// edge; differentiable in both the edge weights (|E|x1) and X.
/// The edge list must outlive the tape.
inline Var gcn_propagate(const std::vector<Edge>& edges, Var weights, Var x) {
    const auto m = static_cast<Index>(edges.size());
    if (weights.rows() != m || weights.cols() != 1) throw ShapeError("gcn_propagate: weights must be |E|x1, got " + shape_str(weights.value()));
    Tape& t = *x.tape();
    const Index n = x.rows();
    const Mat& w = weights.value();
    const Mat& xv = x.value();
    Eigen::VectorXd deg = Eigen::VectorXd::Ones(n);
    for (Index e = 0; e < m; ++e) {
        if (edges[e].u >= n || edges[e].v >= n) throw ShapeError("gcn_propagate: edge index exceeds rows of X");
        deg[edges[e].u] += w(e, 0);
        deg[edges[e].v] += w(e, 0);
    }
    for (Index i = 0; i < n; ++i)
        if (!(deg[i] > 0)) throw NumericError("gcn_propagate: non-positive augmented degree");
    Mat out(n, xv.cols());
    for (Index i = 0; i < n; ++i) out.row(i) = xv.row(i) / deg[i];
    for (Index e = 0; e < m; ++e) {
        const auto [u, v] = edges[e];
        const double c = w(e, 0) / std::sqrt(deg[u] * deg[v]);
        out.row(u) += c * xv.row(v);
        out.row(v) += c * xv.row(u);
    }
    const std::vector<Edge>* ep = &edges;
    return t.push("gcn_propagate", std::move(out), t.requires_grad({weights, x}), [ep, weights, x, deg](Tape& tp, const Mat& g) {
        const auto& es = *ep;
        const Mat& w = weights.value();
        const Mat& xv = x.value();
        const Index n = xv.rows();
        if (tp.requires_grad(x)) {
            Mat dx(n, xv.cols());
            for (Index i = 0; i < n; ++i) dx.row(i) = g.row(i) / deg[i];
            for (std::size_t e = 0; e < es.size(); ++e) {
                const auto [u, v] = es[e];
                const double c = w(static_cast<Index>(e), 0) / std::sqrt(deg[u] * deg[v]);
                dx.row(u) += c * g.row(v);
                dx.row(v) += c * g.row(u);
            }
            tp.accumulate(x, dx);
        }
        if (tp.requires_grad(weights)) {
            // dL/dA_rc = <g_r, x_c>; the degrees couple every entry of a row.
            Eigen::VectorXd d_deg(n);
            for (Index k = 0; k < n; ++k) d_deg[k] = -g.row(k).dot(xv.row(k)) / (deg[k] * deg[k]);
            Mat dw(static_cast<Index>(es.size()), 1);
            std::vector<double> s_sym(es.size());
            for (std::size_t e = 0; e < es.size(); ++e) {
                const auto [u, v] = es[e];
                const double s = g.row(u).dot(xv.row(v)) + g.row(v).dot(xv.row(u));
                const double c = w(static_cast<Index>(e), 0) / std::sqrt(deg[u] * deg[v]);
                s_sym[e] = s;
                d_deg[u] -= 0.5 * s * c / deg[u];
                d_deg[v] -= 0.5 * s * c / deg[v];
            }
            for (std::size_t e = 0; e < es.size(); ++e) {
                const auto [u, v] = es[e];
                dw(static_cast<Index>(e), 0) = s_sym[e] / std::sqrt(deg[u] * deg[v]) + d_deg[u] + d_deg[v];
            }
            tp.accumulate(weights, dw);
        }
    });
}

inline Var add(Var a, Var b) {
    detail::same_shape("add", a.value(), b.value());
    Tape& t = *a.tape();
    Mat out = a.value() + b.value();
    return t.push("add", std::move(out), t.requires_grad({a, b}), [a, b](Tape& tp, const Mat& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

inline Var sub(Var a, Var b) {
    detail::same_shape("sub", a.value(), b.value());
    Tape& t = *a.tape();
    Mat out = a.value() - b.value();
    return t.push("sub", std::move(out), t.requires_grad({a, b}), [a, b](Tape& tp, const Mat& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(b)) tp.accumulate(b, -g);
    });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
    detail::same_shape("mul", a.value(), b.value());
    Tape& t = *a.tape();
    Mat out = a.value().cwiseProduct(b.value());
    return t.push("mul", std::move(out), t.requires_grad({a, b}), [a, b](Tape& tp, const Mat& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
        if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
    });
}

/// a (N x C) plus a broadcast row vector (1 x C).
inline Var add_row(Var a, Var row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: " + shape_str(a.value()) + " + " + shape_str(row.value()));
    Tape& t = *a.tape();
    Mat out = a.value().rowwise() + row.value().row(0);
    return t.push("add_row", std::move(out), t.requires_grad({a, row}), [a, row](Tape& tp, const Mat& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
    });
}

inline Var scale(Var a, double s) {
    Tape& t = *a.tape();
    Mat out = a.value() * s;
    return t.push("scale", std::move(out), t.requires_grad(a), [a, s](Tape& tp, const Mat& g) { tp.accumulate(a, g * s); });
}

inline Var add_scalar(Var a, double s) {
    Tape& t = *a.tape();
    Mat out = a.value().array() + s;
    return t.push("add_scalar", std::move(out), t.requires_grad(a), [a](Tape& tp, const Mat& g) { tp.accumulate(a, g); });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var relu(Var a) {
    return detail::unary("relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(Var a, double slope) {
    return detail::unary("leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
                         [slope](double x) { return x > 0 ? 1.0 : slope; });
}

/// PReLU with a single learnable slope (1x1 Var).
inline Var prelu(Var a, Var slope) {
    if (slope.rows() != 1 || slope.cols() != 1) throw ShapeError("prelu: slope must be 1x1");
    Tape& t = *a.tape();
    const double s = slope.scalar();
    Mat out = a.value().unaryExpr([s](double x) { return x > 0 ? x : s * x; });
    return t.push("prelu", std::move(out), t.requires_grad({a, slope}), [a, slope](Tape& tp, const Mat& g) {
        const Mat& x = a.value();
        const double s = slope.scalar();
        if (tp.requires_grad(a)) {
            Mat dx = g;
            for (Index i = 0; i < x.size(); ++i)
                if (x.data()[i] <= 0) dx.data()[i] *= s;
            tp.accumulate(a, dx);
        }
        if (tp.requires_grad(slope)) {
            double ds = 0;
            for (Index i = 0; i < x.size(); ++i)
                if (x.data()[i] <= 0) ds += g.data()[i] * x.data()[i];
            tp.accumulate(slope, Mat::Constant(1, 1, ds));
        }
    });
}

inline Var sigmoid(Var a) {
    return detail::unary("sigmoid", a, detail::stable_sigmoid, [](double x) {
        const double s = detail::stable_sigmoid(x);
        return s * (1.0 - s);
    });
}

inline Var softplus(Var a) { return detail::unary("softplus", a, detail::stable_softplus, detail::stable_sigmoid); }

inline Var log(Var a) {
    if ((a.value().array() <= 0).any()) throw NumericError("log of non-positive value");
    return detail::unary("log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

inline Var exp(Var a) {
    return detail::unary("exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

inline Var square(Var a) {
    return detail::unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

inline Var sqrt(Var a) {
    if ((a.value().array() <= 0).any()) throw NumericError("sqrt of non-positive value");
    return detail::unary("sqrt", a, [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

/// Clamp to [lo, hi]; gradient is zero where the bound is active.
inline Var clamp(Var a, double lo, double hi) {
    return detail::unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                         [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

/// Forward: 1 where a > threshold else 0. Backward: identity (straight-through).
inline Var straight_through_hard(Var a, double threshold = 0.5) {
    Tape& t = *a.tape();
    Mat out = a.value().unaryExpr([threshold](double x) { return x > threshold ? 1.0 : 0.0; });
    return t.push("straight_through", std::move(out), t.requires_grad(a), [a](Tape& tp, const Mat& g) { tp.accumulate(a, g); });
}

/// Divide each row by max(||row||, floor).
inline Var row_normalize_l2(Var a, double floor = 1e-12) {
    Tape& t = *a.tape();
    const Mat& x = a.value();
    Eigen::VectorXd norms(x.rows());
    for (Index i = 0; i < x.rows(); ++i) norms[i] = std::max(x.row(i).norm(), floor);
    Mat out = norms.cwiseInverse().asDiagonal() * x;
    return t.push("row_normalize_l2", std::move(out), t.requires_grad(a), [a, norms, floor](Tape& tp, const Mat& g) {
        const Mat& x = a.value();
        Mat dx(x.rows(), x.cols());
        for (Index i = 0; i < x.rows(); ++i) {
            const double n = norms[i];
            if (x.row(i).norm() > floor) {
                const auto y = x.row(i) / n;
                dx.row(i) = (g.row(i) - y * y.dot(g.row(i))) / n;
            } else {
                dx.row(i) = g.row(i) / floor;
            }
        }
        tp.accumulate(a, dx);
    });
}

inline Var concat_cols(Var a, Var b) {
    if (a.rows() != b.rows()) throw ShapeError("concat_cols: row mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
    Tape& t = *a.tape();
    Mat out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const Index ca = a.cols();
    return t.push("concat_cols", std::move(out), t.requires_grad({a, b}), [a, b, ca](Tape& tp, const Mat& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, g.leftCols(ca));
        if (tp.requires_grad(b)) tp.accumulate(b, g.rightCols(g.cols() - ca));
    });
}

/// Rows of a selected by index (duplicates allowed; backward scatter-adds).
inline Var gather_rows(Var a, std::vector<Index> idx) {
    Tape& t = *a.tape();
    const Mat& x = a.value();
    Mat out(static_cast<Index>(idx.size()), x.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= x.rows()) throw ShapeError("gather_rows: index out of range");
        out.row(static_cast<Index>(k)) = x.row(idx[k]);
    }
    return t.push("gather_rows", std::move(out), t.requires_grad(a), [a, idx = std::move(idx)](Tape& tp, const Mat& g) {
        Mat dx = Mat::Zero(a.rows(), a.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) dx.row(idx[k]) += g.row(static_cast<Index>(k));
        tp.accumulate(a, dx);
    });
}

inline Var sum(Var a) {
    Tape& t = *a.tape();
    Mat out = Mat::Constant(1, 1, a.value().sum());
    return t.push("sum", std::move(out), t.requires_grad(a),
                  [a](Tape& tp, const Mat& g) { tp.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0))); });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Row sums: N x C -> N x 1.
inline Var sum_rows(Var a) {
    Tape& t = *a.tape();
    Mat out = a.value().rowwise().sum();
    return t.push("sum_rows", std::move(out), t.requires_grad(a), [a](Tape& tp, const Mat& g) {
        Mat dx(a.rows(), a.cols());
        dx.colwise() = g.col(0);
        tp.accumulate(a, dx);
    });
}

/// Per-row log-sum-exp over the column-concatenation of blocks (all N rows).
/// Blocks flagged in skip_diagonal must be square and have their diagonal
/// excluded from the sum. Result is N x 1.
inline Var row_logsumexp(std::vector<Var> blocks, std::vector<bool> skip_diagonal) {
    if (blocks.empty() || blocks.size() != skip_diagonal.size()) throw ShapeError("row_logsumexp: one flag per block required");
    Tape& t = *blocks.front().tape();
    const Index n = blocks.front().rows();
    bool needs_grad = false;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].rows() != n) throw ShapeError("row_logsumexp: row mismatch");
        if (skip_diagonal[b] && blocks[b].cols() != n) throw ShapeError("row_logsumexp: diagonal skip needs a square block");
        needs_grad = needs_grad || t.requires_grad(blocks[b]);
    }
    auto included = [&](std::size_t b, Index i, Index j) { return !(skip_diagonal[b] && i == j); };
    Mat out(n, 1);
    for (Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const Mat& x = blocks[b].value();
            for (Index j = 0; j < x.cols(); ++j)
                if (included(b, i, j)) mx = std::max(mx, x(i, j));
        }
        if (!std::isfinite(mx)) throw ShapeError("row_logsumexp: empty row");
        double s = 0;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const Mat& x = blocks[b].value();
            for (Index j = 0; j < x.cols(); ++j)
                if (included(b, i, j)) s += std::exp(x(i, j) - mx);
        }
        out(i, 0) = mx + std::log(s);
    }
    Mat lse = out;
    return t.push("row_logsumexp", std::move(out), needs_grad, [blocks, skip_diagonal, lse](Tape& tp, const Mat& g) {
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            if (!tp.requires_grad(blocks[b])) continue;
            const Mat& x = blocks[b].value();
            Mat dx(x.rows(), x.cols());
            for (Index i = 0; i < x.rows(); ++i)
                for (Index j = 0; j < x.cols(); ++j)
                    dx(i, j) = (skip_diagonal[b] && i == j) ? 0.0 : g(i, 0) * std::exp(x(i, j) - lse(i, 0));
            tp.accumulate(blocks[b], dx);
        }
    });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Optimization and gradient verification
// ---------------------------------------------------------------------------

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Decoupled weight decay followed by a bias-corrected Adam update; zeroes
/// the gradients afterwards.
inline void adam_step(ParamStore& store, const AdamOptions& opt) {
    const bool any = std::any_of(store.all().begin(), store.all().end(), [](const Parameter& p) { return p.has_grad; });
    if (!any) throw Error("adam_step called before backward populated any gradient");
    ++store.step_count;
    const double t = static_cast<double>(store.step_count);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    for (auto& p : store.all()) {
        if (opt.weight_decay != 0.0) p.value -= opt.lr * opt.weight_decay * p.value;
        p.adam_m = opt.beta1 * p.adam_m + (1.0 - opt.beta1) * p.grad;
        p.adam_v = opt.beta2 * p.adam_v + (1.0 - opt.beta2) * p.grad.cwiseProduct(p.grad);
        p.value.array() -= opt.lr * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + opt.eps);
    }
    store.zero_grad();
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    Index worst_index = 0;
    std::size_t entries = 0;
};

/// Compare reverse-mode gradients against central differences for every entry
/// of every parameter in `stores`. `build_loss` must attach parameters with
/// tape.param() and return a 1x1 loss.
inline GradCheckResult grad_check(std::span<ParamStore* const> stores, const std::function<Var(Tape&)>& build_loss, double eps = 1e-4) {
    auto evaluate = [&] {
        Tape t;
        return build_loss(t).scalar();
    };
    for (ParamStore* s : stores) s->zero_grad();
    {
        Tape t;
        Var loss = build_loss(t);
        t.backward(loss);
    }
    const double f0 = evaluate();
    if (f0 != evaluate()) throw Error("grad_check: loss closure is not deterministic");

    GradCheckResult r;
    for (ParamStore* s : stores) {
        for (auto& p : s->all()) {
            const Mat analytic = p.grad;
            for (Index k = 0; k < p.value.size(); ++k) {
                const double orig = p.value.data()[k];
                p.value.data()[k] = orig + eps;
                const double fp = evaluate();
                p.value.data()[k] = orig - eps;
                const double fm = evaluate();
                p.value.data()[k] = orig;
                const double numeric = (fp - fm) / (2.0 * eps);
                const double a = analytic.data()[k];
                const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
                ++r.entries;
                if (rel > r.max_rel_error) {
                    r.max_rel_error = rel;
                    r.worst_param = p.name;
                    r.worst_index = k;
                }
            }
        }
    }
    for (ParamStore* s : stores) s->zero_grad();
    return r;
}

inline GradCheckResult grad_check(ParamStore& store, const std::function<Var(Tape&)>& build_loss, double eps = 1e-4) {
    ParamStore* s[] = {&store};
    return grad_check(std::span<ParamStore* const>(s), build_loss, eps);
}

}  // namespace infoadv
