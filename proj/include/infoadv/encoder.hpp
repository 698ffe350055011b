#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "autodiff.hpp"
#include "graph.hpp"
#include "rng.hpp"

namespace infoadv {

/// Hidden-layer nonlinearity. RReLU is realized as a fixed-slope leaky ReLU
/// so that forward passes stay deterministic.
enum class Activation { relu, prelu, rrelu };

inline constexpr double kRreluSlope = 0.2;
inline constexpr double kPreluInit = 0.25;

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::prelu: return "prelu";
        case Activation::rrelu: return "rrelu";
    }
    return "relu";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "relu" || s == "ReLU") return Activation::relu;
    if (s == "prelu" || s == "PReLU") return Activation::prelu;
    if (s == "rrelu" || s == "RReLU") return Activation::rrelu;
    throw ConfigError("unknown activation '" + s + "'");
}

/// Uniform Glorot initialization, bound sqrt(6 / (fan_in + fan_out)).
inline Mat glorot_uniform(Index fan_in, Index fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Mat w(fan_in, fan_out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return w;
}

/// Apply the configured activation; `slope` is only read for PReLU.
inline Var activate(Var x, Activation act, Var slope = {}) {
    switch (act) {
        case Activation::relu: return ad::relu(x);
        case Activation::prelu: return ad::prelu(x, slope);
        case Activation::rrelu: return ad::leaky_relu(x, kRreluSlope);
    }
    return ad::relu(x);
}

struct EncoderDims {
    Index in_dim = 0;
    Index hidden_dim = 128;
    Index out_dim = 128;
    Activation activation = Activation::relu;
};

/// Target encoder: a shared first GCN layer feeding separate mean and
/// variance GCN heads.
struct TargetEncoder {
    EncoderDims dims;
    ParamStore params;  // "w1", "w_mu", "w_sigma" and "prelu" when used

    static TargetEncoder init(const EncoderDims& dims, std::uint64_t seed) {
        if (dims.in_dim <= 0 || dims.hidden_dim <= 0 || dims.out_dim <= 0) throw ConfigError("encoder dims must be positive");
        Rng rng(derive_seed(seed, 0x656e63ULL));
        TargetEncoder enc;
        enc.dims = dims;
        enc.params.add("w1", glorot_uniform(dims.in_dim, dims.hidden_dim, rng));
        enc.params.add("w_mu", glorot_uniform(dims.hidden_dim, dims.out_dim, rng));
        enc.params.add("w_sigma", glorot_uniform(dims.hidden_dim, dims.out_dim, rng));
        if (dims.activation == Activation::prelu) enc.params.add("prelu", Mat::Constant(1, 1, kPreluInit));
        return enc;
    }
};

/// Two dense layers out_dim -> out_dim -> out_dim with a ReLU between.
struct ProjectionHead {
    ParamStore params;  // "w1", "b1", "w2", "b2"

    static ProjectionHead init(Index dim, std::uint64_t seed) {
        if (dim <= 0) throw ConfigError("projection dim must be positive");
        Rng rng(derive_seed(seed, 0x70726f6aULL));
        ProjectionHead h;
        h.params.add("w1", glorot_uniform(dim, dim, rng));
        h.params.add("b1", Mat::Zero(1, dim));
        h.params.add("w2", glorot_uniform(dim, dim, rng));
        h.params.add("b2", Mat::Zero(1, dim));
        return h;
    }
};

/// Propagation operator for one view: either a fixed normalized adjacency or
/// the canonical edge list with differentiable per-edge weights.
struct ViewAdjacency {
    const SparseMatrix* fixed = nullptr;
    const std::vector<Edge>* edges = nullptr;
    Var weights;

    static ViewAdjacency of(const SparseMatrix& adj) { return {&adj, nullptr, {}}; }
    static ViewAdjacency weighted(const std::vector<Edge>& edges, Var w) { return {nullptr, &edges, w}; }

    Var apply(Var x) const { return fixed ? ad::spmm(*fixed, x) : ad::gcn_propagate(*edges, weights, x); }
};

struct Encoding {
    Var u;        // sampled representation
    Var u_mu;     // mean head
    Var u_sigma;  // positive scale head
};

inline constexpr double kSigmaFloor = 1e-6;

/// hidden = act(A X W1); U_mu = A hidden W_mu; U_sigma = softplus(A hidden W_sigma) + 1e-6;
/// U = U_mu + noise * U_sigma. `noise` is a constant N x out_dim matrix.
inline Encoding encode(Tape& tape, TargetEncoder& enc, const ViewAdjacency& adj, Var x, const Mat& noise, bool trainable) {
    if (x.cols() != enc.dims.in_dim) throw ShapeError("encode: features have " + std::to_string(x.cols()) + " columns, encoder expects " +
                                                      std::to_string(enc.dims.in_dim));
    if (noise.rows() != x.rows() || noise.cols() != enc.dims.out_dim) throw ShapeError("encode: noise shape " + shape_str(noise));
    Var w1 = tape.leaf(enc.params.get("w1"), trainable);
    Var w_mu = tape.leaf(enc.params.get("w_mu"), trainable);
    Var w_sigma = tape.leaf(enc.params.get("w_sigma"), trainable);
    Var slope;
    if (enc.dims.activation == Activation::prelu) slope = tape.leaf(enc.params.get("prelu"), trainable);

    // Multiply by W1 first: cheaper when in_dim > hidden_dim and identical in value.
    Var hidden = activate(adj.apply(ad::matmul(x, w1)), enc.dims.activation, slope);
    Var propagated = adj.apply(hidden);  // shared by both heads
    Encoding out;
    out.u_mu = ad::matmul(propagated, w_mu);
    out.u_sigma = ad::add_scalar(ad::softplus(ad::matmul(propagated, w_sigma)), kSigmaFloor);
    out.u = ad::add(out.u_mu, ad::mul(tape.constant(noise), out.u_sigma));
    return out;
}

inline Var project(Tape& tape, ProjectionHead& head, Var z, bool trainable) {
    Var w1 = tape.leaf(head.params.get("w1"), trainable);
    if (z.cols() != w1.rows()) throw ShapeError("project: input has " + std::to_string(z.cols()) + " columns");
    Var b1 = tape.leaf(head.params.get("b1"), trainable);
    Var w2 = tape.leaf(head.params.get("w2"), trainable);
    Var b2 = tape.leaf(head.params.get("b2"), trainable);
    return ad::add_row(ad::matmul(ad::relu(ad::add_row(ad::matmul(z, w1), b1)), w2), b2);
}

/// Deterministic inference embedding: U_mu on the given (clean) graph.
inline Mat embed(TargetEncoder& enc, const SparseMatrix& adj, const Mat& x) {
    Tape tape;
    const Mat zero = Mat::Zero(x.rows(), enc.dims.out_dim);
    return encode(tape, enc, ViewAdjacency::of(adj), tape.constant(x), zero, false).u_mu.value();
}

}  // namespace infoadv
