#pragma once

#include <cmath>
#include <string>

#include "autodiff.hpp"
#include "encoder.hpp"

namespace infoadv {

inline constexpr double kNormFloor = 1e-12;

/// Cosine similarity of two row vectors with a norm floor.
inline double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y) {
    if (x.size() != y.size()) throw ShapeError("similarity: dimension mismatch");
    return x.dot(y) / (std::max(x.norm(), kNormFloor) * std::max(y.norm(), kNormFloor));
}

/// Pairwise cosine similarities: rows of a against rows of b (N x M).
inline Var cosine_matrix(Var a, Var b) {
    return ad::matmul(ad::row_normalize_l2(a, kNormFloor), ad::transpose(ad::row_normalize_l2(b, kNormFloor)));
}

/// Per-node InfoNCE term for one anchor view (N x 1):
///   -log e^{θ(a_mu_i, b_mu_i)/τ} / (e^{θ(a_mu_i, b_mu_i)/τ} + Σ_{k≠i} e^{θ(a_i, b_mu_k)/τ} + Σ_{k≠i} e^{θ(a_mu_i, a_mu_k)/τ})
/// Inputs are already projected. The inter-view negatives use the sampled
/// anchor a_i while the intra-view negatives use its mean a_mu_i.
inline Var infonce_rows(Var a, Var a_mu, Var b_mu, double tau) {
    if (a.rows() < 2) throw ShapeError("InfoNCE needs at least two nodes");
    if (!(tau > 0)) throw ConfigError("InfoNCE temperature must be positive");
    Var na = ad::row_normalize_l2(a, kNormFloor);
    Var na_mu = ad::row_normalize_l2(a_mu, kNormFloor);
    Var nb_mu = ad::row_normalize_l2(b_mu, kNormFloor);
    const double inv_tau = 1.0 / tau;
    Var pos = ad::scale(ad::sum_rows(ad::mul(na_mu, nb_mu)), inv_tau);
    Var inter = ad::scale(ad::matmul(na, ad::transpose(nb_mu)), inv_tau);
    Var intra = ad::scale(ad::matmul(na_mu, ad::transpose(na_mu)), inv_tau);
    Var lse = ad::row_logsumexp({pos, inter, intra}, {false, true, true});
    return ad::sub(lse, pos);
}

/// Per-node KL(N(mu, sigma^2) || N(0, 1)) summed over dimensions (N x 1):
///   Σ_d ½[σ_d² + μ_d² − 2 log σ_d − 1].
inline Var kl_rows(Var mu, Var sigma) {
    if ((sigma.value().array() <= 0).any()) throw NumericError("KL term needs strictly positive sigma");
    Var inner = ad::add_scalar(ad::sub(ad::add(ad::square(sigma), ad::square(mu)), ad::scale(ad::log(sigma), 2.0)), -1.0);
    return ad::scale(ad::sum_rows(inner), 0.5);
}

/// Plain-value version of the per-node KL term.
inline double l2_value(const Eigen::Ref<const Eigen::RowVectorXd>& mu, const Eigen::Ref<const Eigen::RowVectorXd>& sigma) {
    if (mu.size() != sigma.size()) throw ShapeError("l2: dimension mismatch");
    double s = 0;
    for (Index d = 0; d < mu.size(); ++d) {
        if (!(sigma[d] > 0)) throw NumericError("l2: sigma must be positive");
        s += 0.5 * (sigma[d] * sigma[d] + mu[d] * mu[d] - 2.0 * std::log(sigma[d]) - 1.0);
    }
    return s;
}

/// J1 = 1/(2N) Σ_i [ℓ1(u_mu_i, v_mu_i, u_i) + ℓ1(v_mu_i, u_mu_i, v_i)], computed on
/// projected representations. With head == nullptr the projection is the identity.
inline Var j1_loss(Tape& tape, ProjectionHead* head, const Encoding& u, const Encoding& v, double tau, bool head_trainable) {
    auto p = [&](Var z) { return head ? project(tape, *head, z, head_trainable) : z; };
    Var pu = p(u.u), pu_mu = p(u.u_mu), pv = p(v.u), pv_mu = p(v.u_mu);
    Var both = ad::add(infonce_rows(pu, pu_mu, pv_mu, tau), infonce_rows(pv, pv_mu, pu_mu, tau));
    return ad::scale(ad::sum(both), 0.5 / static_cast<double>(u.u.rows()));
}

/// J2 = 1/(2N) Σ_i [ℓ2(u_i) + ℓ2(v_i)].
inline Var j2_loss(const Encoding& u, const Encoding& v) {
    return ad::scale(ad::sum(ad::add(kl_rows(u.u_mu, u.u_sigma), kl_rows(v.u_mu, v.u_sigma))), 0.5 / static_cast<double>(u.u.rows()));
}

/// J2' = 1/N Σ_i ℓ2(u_i), first (generated) view only.
inline Var j2_prime_loss(const Encoding& u) { return ad::mean(kl_rows(u.u_mu, u.u_sigma)); }

enum class GeneratorObjective { kl, infonce };

inline std::string to_string(GeneratorObjective o) { return o == GeneratorObjective::kl ? "kl" : "infonce"; }

inline GeneratorObjective parse_generator_objective(const std::string& s) {
    if (s == "kl") return GeneratorObjective::kl;
    if (s == "infonce") return GeneratorObjective::infonce;
    throw ConfigError("unknown generator_objective '" + s + "' (expected kl or infonce)");
}

struct LossBundle {
    Var j1;
    Var j2;
    Var j2_prime;
    double lambda = 0.0;
    double tau = 0.5;
};

/// J1 + λ J2.
inline Var encoder_loss(const LossBundle& b) { return b.lambda == 0.0 ? b.j1 : ad::add(b.j1, ad::scale(b.j2, b.lambda)); }

/// J2' for the KL objective; −J1 (minimizing the InfoNCE estimate of agreement) otherwise.
inline Var generator_loss(const LossBundle& b, GeneratorObjective obj = GeneratorObjective::kl) {
    return obj == GeneratorObjective::kl ? b.j2_prime : ad::neg(b.j1);
}

}  // namespace infoadv
