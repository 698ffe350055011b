#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "autodiff.hpp"
#include "encoder.hpp"
#include "graph.hpp"
#include "rng.hpp"

namespace infoadv {

/// Learnable edge-dropping augmenter: a GCN layer, an edge-score MLP over
/// [h_i ; h_j] (canonical i < j), and a relaxed Bernoulli edge sampler.
/// Scores are drop probabilities squashed into [lo, hi].
struct ViewGenerator {
    Index in_dim = 0;
    Index hidden_dim = 64;
    double lo = 0.0;
    double hi = 1.0;
    double temperature = 0.5;
    ParamStore params;  // "gnn", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"

    static ViewGenerator init(Index in_dim, Index hidden_dim, double lo, double hi, double temperature, std::uint64_t seed) {
        if (!(0.0 <= lo && lo <= hi && hi <= 1.0)) throw ConfigError("view generator: need 0 <= a <= b <= 1");
        if (!(temperature > 0.0)) throw ConfigError("view generator: temperature must be positive");
        if (in_dim <= 0 || hidden_dim <= 0) throw ConfigError("view generator: dims must be positive");
        Rng rng(derive_seed(seed, 0x67656eULL));
        ViewGenerator g;
        g.in_dim = in_dim;
        g.hidden_dim = hidden_dim;
        g.lo = lo;
        g.hi = hi;
        g.temperature = temperature;
        g.params.add("gnn", glorot_uniform(in_dim, hidden_dim, rng));
        g.params.add("mlp_w1", glorot_uniform(2 * hidden_dim, hidden_dim, rng));
        g.params.add("mlp_b1", Mat::Zero(1, hidden_dim));
        g.params.add("mlp_w2", glorot_uniform(hidden_dim, 1, rng));
        g.params.add("mlp_b2", Mat::Zero(1, 1));
        return g;
    }
};

/// Unnormalized MLP output per canonical edge (|E| x 1).
inline Var edge_logits(Tape& tape, ViewGenerator& gen, const std::vector<Edge>& edges, const SparseMatrix& adj_norm, Var x,
                       bool trainable) {
    if (x.cols() != gen.in_dim) throw ShapeError("edge_scores: feature width mismatch");
    Var h = ad::relu(ad::spmm(adj_norm, ad::matmul(x, tape.leaf(gen.params.get("gnn"), trainable))));
    std::vector<Index> src(edges.size()), dst(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        src[e] = edges[e].u;
        dst[e] = edges[e].v;
    }
    Var pair = ad::concat_cols(ad::gather_rows(h, std::move(src)), ad::gather_rows(h, std::move(dst)));
    Var hidden = ad::relu(ad::add_row(ad::matmul(pair, tape.leaf(gen.params.get("mlp_w1"), trainable)),
                                      tape.leaf(gen.params.get("mlp_b1"), trainable)));
    return ad::add_row(ad::matmul(hidden, tape.leaf(gen.params.get("mlp_w2"), trainable)), tape.leaf(gen.params.get("mlp_b2"), trainable));
}

/// Squash raw scores into the drop-probability interval: lo + (hi - lo) * sigmoid(raw).
inline Var squash_scores(Var raw, double lo, double hi) { return ad::add_scalar(ad::scale(ad::sigmoid(raw), hi - lo), lo); }

/// Drop probabilities s_ij in [lo, hi], one per canonical edge.
inline Var edge_scores(Tape& tape, ViewGenerator& gen, const std::vector<Edge>& edges, const SparseMatrix& adj_norm, Var x,
                       bool trainable) {
    return squash_scores(edge_logits(tape, gen, edges, adj_norm, x, trainable), gen.lo, gen.hi);
}

inline constexpr double kScoreClamp = 1e-6;

/// Binary-concrete edge sampler. With L = log u - log(1-u):
///   drop = sigmoid((logit(s) + L) / t),  keep = 1 - drop.
/// When `hard`, the forward value is thresholded at 0.5 and the backward pass
/// uses the relaxed value (straight-through). `logistic_noise` is |E| x 1.
inline Var sample_mask(Var scores, double temperature, const Mat& logistic_noise, bool hard) {
    if (!(temperature > 0)) throw ConfigError("sample_mask: temperature must be positive");
    if (logistic_noise.rows() != scores.rows() || logistic_noise.cols() != scores.cols()) throw ShapeError("sample_mask: noise shape");
    Tape& t = *scores.tape();
    Var s = ad::clamp(scores, kScoreClamp, 1.0 - kScoreClamp);
    Var logit = ad::sub(ad::log(s), ad::log(ad::add_scalar(ad::neg(s), 1.0)));
    Var drop = ad::sigmoid(ad::scale(ad::add(logit, t.constant(logistic_noise)), 1.0 / temperature));
    Var keep = ad::add_scalar(ad::neg(drop), 1.0);
    return hard ? ad::straight_through_hard(keep, 0.5) : keep;
}

inline Var sample_mask(Var scores, double temperature, std::uint64_t seed, bool hard) {
    Rng rng(derive_seed(seed, 0x67756d62656cULL));
    return sample_mask(scores, temperature, rng.logistic_matrix(scores.rows(), scores.cols()), hard);
}

struct GeneratedView {
    Var scores;         // drop probabilities, |E| x 1
    Var mask;           // keep mask, |E| x 1
    ViewAdjacency adj;  // A masked edge-wise, normalized inside propagation
};

/// Score and sample a view of the graph. The masked adjacency shares one
/// mask value per undirected edge, so it stays symmetric.
inline GeneratedView generate_view(Tape& tape, ViewGenerator& gen, const Graph& g, const SparseMatrix& adj_norm, const Mat& logistic_noise,
                                   bool hard, bool trainable) {
    GeneratedView v;
    v.scores = edge_scores(tape, gen, g.edges(), adj_norm, tape.constant(g.features()), trainable);
    v.mask = sample_mask(v.scores, gen.temperature, logistic_noise, hard);
    v.adj = ViewAdjacency::weighted(g.edges(), v.mask);
    return v;
}

/// Fraction of edges kept (mask > 0.5).
inline double edge_preserve_rate(const Mat& mask) {
    if (mask.size() == 0) return 1.0;
    const auto kept = (mask.array() > 0.5).count();
    return static_cast<double>(kept) / static_cast<double>(mask.size());
}

/// Concrete normalized adjacency for a given mask (for inspection and tests).
inline SparseMatrix masked_adjacency(const Graph& g, const Mat& mask) {
    std::vector<double> w(mask.data(), mask.data() + mask.size());
    return normalize_weighted(g.num_nodes(), g.edges(), w);
}

}  // namespace infoadv
