#pragma once

// Exact-enumeration checks of the identities and inequalities behind the
// generalization analysis: class-collision probability, the decomposition of
// the contrastive risk by whether the negative shares the positive's latent
// class, mean-initialized logistic regression never ending above its start,
// and the data processing inequality on discrete channels.

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "core.hpp"
#include "evaluation.hpp"

namespace infoadv::theory {

inline void check_distribution(const std::vector<double>& p, const char* what, double tol = 1e-9) {
    if (p.empty()) throw ShapeError(std::string(what) + ": empty distribution");
    double s = 0;
    for (double v : p) {
        if (!(v >= 0)) throw ShapeError(std::string(what) + ": negative probability");
        s += v;
    }
    if (std::abs(s - 1.0) > tol) throw ShapeError(std::string(what) + ": probabilities sum to " + std::to_string(s));
}

/// Probability that two independent draws from rho coincide: Σ_c rho(c)².
inline double tau(const std::vector<double>& rho) {
    check_distribution(rho, "tau");
    double t = 0;
    for (double p : rho) t += p * p;
    return t;
}

/// Latent classes with explicit within-class node distributions over a shared
/// embedding table (classes may overlap).
struct LatentClassSpec {
    std::vector<double> rho;
    std::vector<std::vector<std::pair<Index, double>>> support;  // per class: (node, probability)
    Mat embeddings;                                              // one row per node

    void validate() const {
        check_distribution(rho, "rho");
        if (support.size() != rho.size()) throw ShapeError("one node distribution per latent class required");
        for (const auto& d : support) {
            std::vector<double> p;
            for (const auto& [v, w] : d) {
                if (v < 0 || v >= embeddings.rows()) throw ShapeError("support node out of range");
                p.push_back(w);
            }
            check_distribution(p, "class distribution");
        }
    }
};

enum class ContrastiveLoss { logistic, hinge };

inline double apply_loss(ContrastiveLoss l, double margin) {
    if (l == ContrastiveLoss::hinge) return std::max(0.0, 1.0 - margin);
    return margin >= 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

struct ContrastiveRisk {
    double total = 0;      // L_P
    double distinct = 0;   // conditional on c+ != c- (0 when that event has probability 0)
    double same = 0;       // conditional on c+ == c- (0 when that event has probability 0)
    double tau = 0;
};

/// Exact expectation of loss(f(v)ᵀ(f(v+) − f(v−))) over (c+, c−) ~ rho², (v, v+) ~ D_{c+}², v− ~ D_{c−}.
inline ContrastiveRisk contrastive_risk(const LatentClassSpec& spec, ContrastiveLoss loss = ContrastiveLoss::logistic,
                                        std::size_t max_terms = 50'000'000) {
    spec.validate();
    std::size_t support_total = 0, terms = 0;
    for (const auto& d : spec.support) support_total += d.size();
    for (const auto& dp : spec.support) terms += dp.size() * dp.size() * support_total;
    if (support_total > 50 || terms > max_terms) throw ShapeError("contrastive_risk: support too large for exact enumeration");

    const Mat& f = spec.embeddings;
    // risk(c+, c−) = E_{v,v+ ~ D_{c+}, v− ~ D_{c−}} loss
    auto pair_risk = [&](std::size_t cp, std::size_t cn) {
        double r = 0;
        for (const auto& [v, pv] : spec.support[cp])
            for (const auto& [vp, pvp] : spec.support[cp])
                for (const auto& [vn, pvn] : spec.support[cn]) r += pv * pvp * pvn * apply_loss(loss, f.row(v).dot(f.row(vp) - f.row(vn)));
        return r;
    };
    ContrastiveRisk out;
    out.tau = tau(spec.rho);
    double mass_eq = 0, mass_neq = 0, sum_eq = 0, sum_neq = 0;
    for (std::size_t cp = 0; cp < spec.rho.size(); ++cp) {
        for (std::size_t cn = 0; cn < spec.rho.size(); ++cn) {
            const double w = spec.rho[cp] * spec.rho[cn];
            const double r = pair_risk(cp, cn);
            out.total += w * r;
            (cp == cn ? sum_eq : sum_neq) += w * r;
            (cp == cn ? mass_eq : mass_neq) += w;
        }
    }
    out.same = mass_eq > 0 ? sum_eq / mass_eq : 0.0;
    out.distinct = mass_neq > 0 ? sum_neq / mass_neq : 0.0;
    return out;
}

/// |L_P − ((1−τ) L_P^≠ + τ L_P^=)|.
inline double decomposition_gap(const ContrastiveRisk& r) { return std::abs(r.total - ((1.0 - r.tau) * r.distinct + r.tau * r.same)); }

/// Random spec with up to `max_classes` classes and up to `max_nodes` support
/// nodes each (disjoint supports), Gaussian embeddings.
inline LatentClassSpec random_spec(Rng& rng, int max_classes = 4, int max_nodes = 5, Index dim = 3) {
    LatentClassSpec s;
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_classes)));
    auto simplex = [&](int n) {
        std::vector<double> p(static_cast<std::size_t>(n));
        for (auto& v : p) v = -std::log(rng.uniform_open());
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : p) v /= total;
        return p;
    };
    s.rho = simplex(k);
    Index next = 0;
    std::vector<int> sizes;
    for (int c = 0; c < k; ++c) sizes.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_nodes))));
    s.embeddings = rng.normal_matrix(std::accumulate(sizes.begin(), sizes.end(), 0), dim);
    for (int c = 0; c < k; ++c) {
        const auto p = simplex(sizes[c]);
        std::vector<std::pair<Index, double>> d;
        for (int j = 0; j < sizes[c]; ++j) d.emplace_back(next++, p[j]);
        s.support.push_back(std::move(d));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Mean Classifier vs logistic regression
// ---------------------------------------------------------------------------

struct MeanVsLr {
    double initial_loss = 0;  // loss with W[:, k] = mu_k
    double final_loss = 0;
    int steps_taken = 0;
    bool monotone = true;
    bool holds = false;  // final <= initial
};

/// Logistic regression without bias, logits = h W, initialized with the class
/// means as columns of W and optimized by gradient descent with Armijo
/// backtracking (each accepted step does not increase the loss).
inline MeanVsLr check_mean_vs_lr(const Mat& h, const std::vector<int>& y, int max_steps = 200, double initial_step = 1.0) {
    if (static_cast<Index>(y.size()) != h.rows() || y.empty()) throw ShapeError("check_mean_vs_lr: size mismatch");
    const int k = *std::max_element(y.begin(), y.end()) + 1;
    std::vector<Index> all(static_cast<std::size_t>(h.rows()));
    std::iota(all.begin(), all.end(), Index{0});
    Mat w = MeanClassifier::fit(h, y, all, k).means.transpose();  // D x K

    auto loss = [&](const Mat& wm) { return softmax_cross_entropy(h * wm, y); };
    auto grad = [&](const Mat& wm) {
        Mat p = h * wm;
        for (Index i = 0; i < p.rows(); ++i) {
            const double mx = p.row(i).maxCoeff();
            p.row(i) = (p.row(i).array() - mx).exp();
            p.row(i) /= p.row(i).sum();
            p(i, y[i]) -= 1.0;
        }
        return Mat(h.transpose() * p / static_cast<double>(h.rows()));
    };

    MeanVsLr r;
    r.initial_loss = loss(w);
    double current = r.initial_loss;
    for (int s = 0; s < max_steps; ++s) {
        const Mat g = grad(w);
        const double gn2 = g.squaredNorm();
        if (gn2 < 1e-24) break;
        double step = initial_step;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Mat cand = w - step * g;
            const double lc = loss(cand);
            if (lc <= current - 1e-4 * step * gn2) {
                if (lc > current) r.monotone = false;
                w = cand;
                current = lc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        ++r.steps_taken;
    }
    r.final_loss = current;
    r.holds = r.final_loss <= r.initial_loss;
    return r;
}

/// Labeled Gaussian blobs: 2..max_classes centers with spread 2, unit noise.
struct Blobs {
    Mat h;
    std::vector<int> y;
};

inline Blobs random_blobs(Rng& rng, int max_classes = 4, int per_class = 10, Index dim = 4) {
    const int k = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_classes - 1)));
    const Mat centers = rng.normal_matrix(k, dim) * 2.0;
    Blobs b;
    b.h.resize(k * per_class, dim);
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < per_class; ++i) {
            b.h.row(c * per_class + i) = centers.row(c) + rng.normal_matrix(1, dim);
            b.y.push_back(c);
        }
    return b;
}

// ---------------------------------------------------------------------------
// Data processing inequality
// ---------------------------------------------------------------------------

/// X -> Y -> Z with p(x), P(y|x) (rows sum to 1) and P(z|y).
struct DiscreteChannelChain {
    std::vector<double> px;
    Mat y_given_x;
    Mat z_given_y;

    void validate() const {
        check_distribution(px, "p(x)");
        auto stochastic = [](const Mat& m, const char* what) {
            for (Index i = 0; i < m.rows(); ++i) {
                if ((m.row(i).array() < 0).any() || std::abs(m.row(i).sum() - 1.0) > 1e-9)
                    throw ShapeError(std::string(what) + ": row " + std::to_string(i) + " is not stochastic");
            }
        };
        if (y_given_x.rows() != static_cast<Index>(px.size())) throw ShapeError("P(y|x) needs one row per x symbol");
        if (z_given_y.rows() != y_given_x.cols()) throw ShapeError("P(z|y) needs one row per y symbol");
        if (px.size() > 16 || y_given_x.cols() > 16 || z_given_y.cols() > 16) throw ShapeError("alphabets limited to 16 symbols");
        stochastic(y_given_x, "P(y|x)");
        stochastic(z_given_y, "P(z|y)");
    }
};

/// I(A;B) in nats from a joint probability table, with 0 log 0 = 0.
inline double mutual_information(const Mat& joint) {
    const Eigen::VectorXd pa = joint.rowwise().sum();
    const Eigen::RowVectorXd pb = joint.colwise().sum();
    double mi = 0;
    for (Index a = 0; a < joint.rows(); ++a)
        for (Index b = 0; b < joint.cols(); ++b) {
            const double p = joint(a, b);
            if (p > 0) mi += p * std::log(p / (pa[a] * pb[b]));
        }
    return mi;
}

struct DpiResult {
    double i_xy = 0;
    double i_yz = 0;
    double i_xz = 0;
    bool holds = false;
};

inline DpiResult check_dpi(const DiscreteChannelChain& chain, double slack = 1e-12) {
    chain.validate();
    const Eigen::VectorXd px = Eigen::Map<const Eigen::VectorXd>(chain.px.data(), static_cast<Index>(chain.px.size()));
    const Mat joint_xy = px.asDiagonal() * chain.y_given_x;
    const Eigen::RowVectorXd py = joint_xy.colwise().sum();
    const Mat joint_yz = py.transpose().asDiagonal() * chain.z_given_y;
    const Mat joint_xz = joint_xy * chain.z_given_y;
    DpiResult r;
    r.i_xy = mutual_information(joint_xy);
    r.i_yz = mutual_information(joint_yz);
    r.i_xz = mutual_information(joint_xz);
    r.holds = r.i_xz <= std::min(r.i_xy, r.i_yz) + slack;
    return r;
}

/// Random chain over k-symbol alphabets with Dirichlet(1)-like rows.
inline DiscreteChannelChain random_chain(Rng& rng, Index k = 4) {
    auto row = [&] {
        Eigen::RowVectorXd r(k);
        for (Index i = 0; i < k; ++i) r[i] = -std::log(rng.uniform_open());
        return Eigen::RowVectorXd(r / r.sum());
    };
    DiscreteChannelChain c;
    const auto p = row();
    c.px.assign(p.data(), p.data() + k);
    c.y_given_x.resize(k, k);
    c.z_given_y.resize(k, k);
    for (Index i = 0; i < k; ++i) {
        c.y_given_x.row(i) = row();
        c.z_given_y.row(i) = row();
    }
    return c;
}

}  // namespace infoadv::theory
