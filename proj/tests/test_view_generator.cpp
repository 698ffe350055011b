#include <cmath>

#include <gtest/gtest.h>

#include "infoadv/encoder.hpp"
#include "infoadv/losses.hpp"
#include "infoadv/view_generator.hpp"

using namespace infoadv;

namespace {

Graph toy_graph() {
    Rng rng(21);
    return Graph::from_edges(4, {{0, 1}, {1, 2}, {2, 3}, {0, 2}}, rng.normal_matrix(4, 3));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(ViewGenerator, InitValidatesBounds) {
    EXPECT_THROW(ViewGenerator::init(3, 4, 0.5, 0.2, 0.5, 1), ConfigError);
    EXPECT_THROW(ViewGenerator::init(3, 4, 0.0, 1.2, 0.5, 1), ConfigError);
    EXPECT_THROW(ViewGenerator::init(3, 4, 0.0, 0.5, 0.0, 1), ConfigError);
    EXPECT_NO_THROW(ViewGenerator::init(3, 4, 0.0, 0.0, 0.5, 1));
}

TEST(ViewGenerator, ScoresMatchHandRolledForward) {
    const Graph g = toy_graph();
    const SparseMatrix adj = sym_normalize(g);
    ViewGenerator gen = ViewGenerator::init(3, 2, 0.1, 0.7, 0.5, 4);
    Rng rng(5);
    gen.params.set("mlp_b1", rng.normal_matrix(1, 2));
    gen.params.set("mlp_b2", rng.normal_matrix(1, 1));
    Tape t;
    const Mat s = edge_scores(t, gen, g.edges(), adj, t.constant(g.features()), false).value();

    // Oracle: explicit loops over nodes and edges.
    const Mat a = adj.to_dense(), x = g.features();
    const Mat& w = gen.params.get("gnn").value;
    Mat h = Mat::Zero(4, 2);
    for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 4; ++j)
            for (Index d = 0; d < 3; ++d)
                for (Index k = 0; k < 2; ++k) h(i, k) += a(i, j) * x(j, d) * w(d, k);
    h = h.cwiseMax(0.0);
    const Mat& w1 = gen.params.get("mlp_w1").value;
    const Mat& b1 = gen.params.get("mlp_b1").value;
    const Mat& w2 = gen.params.get("mlp_w2").value;
    const double b2 = gen.params.get("mlp_b2").value(0, 0);
    for (std::size_t e = 0; e < g.edges().size(); ++e) {
        const auto [u, v] = g.edges()[e];
        double out = b2;
        for (Index k = 0; k < 2; ++k) {
            double z = b1(0, k);
            for (Index c = 0; c < 2; ++c) z += h(u, c) * w1(c, k) + h(v, c) * w1(2 + c, k);
            out += std::max(z, 0.0) * w2(k, 0);
        }
        EXPECT_NEAR(s(static_cast<Index>(e), 0), 0.1 + 0.6 * sigmoid(out), 1e-10);
    }
}

TEST(ViewGenerator, ZeroIntervalKeepsEverything) {
    const Graph g = toy_graph();
    const SparseMatrix adj = sym_normalize(g);
    ViewGenerator gen = ViewGenerator::init(3, 4, 0.0, 0.0, 0.5, 1);
    Tape t;
    Rng rng(3);
    const GeneratedView v = generate_view(t, gen, g, adj, rng.logistic_matrix(4, 1), true, false);
    EXPECT_TRUE(v.scores.value().isZero(0));
    EXPECT_EQ(v.mask.value(), Mat::Ones(4, 1));
    EXPECT_EQ(edge_preserve_rate(v.mask.value()), 1.0);
    const Mat x = rng.normal_matrix(4, 2);
    EXPECT_LE((v.adj.apply(t.constant(x)).value() - adj.multiply(x)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ViewGenerator, SaturatedScoreReachesUpperBound) {
    Tape t;
    Mat raw(2, 1);
    raw << 50.0, -50.0;
    const Mat s = squash_scores(t.constant(raw), 0.2, 0.6).value();
    EXPECT_NEAR(s(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(s(1, 0), 0.2, 1e-15);
}

TEST(SampleMask, KeepRateCalibration) {
    Rng rng(7);
    const int n = 10000;
    for (double s : {0.1, 0.5, 0.9}) {
        Tape t;
        const Mat mask = sample_mask(t.constant(Mat::Constant(n, 1, s)), 0.5, rng.logistic_matrix(n, 1), true).value();
        const double rate = edge_preserve_rate(mask);
        EXPECT_LE(std::abs(rate - (1 - s)), 4 * std::sqrt(s * (1 - s) / n)) << s;
        EXPECT_TRUE(((mask.array() == 0.0) || (mask.array() == 1.0)).all());
    }
    Tape t;
    const Mat tiny = sample_mask(t.constant(Mat::Constant(1000, 1, 0.0)), 0.5, 11, false).value();
    EXPECT_GT(tiny.minCoeff(), 0.99);
}

TEST(SampleMask, LowTemperatureHardMasksAreBinary) {
    Rng rng(8);
    Tape t;
    const Mat s = (rng.normal_matrix(500, 1).array() * 0.2 + 0.5).cwiseMax(0.01).cwiseMin(0.99).matrix();
    const Mat m = sample_mask(t.constant(s), 0.1, rng.logistic_matrix(500, 1), true).value();
    EXPECT_TRUE(((m.array() == 0.0) || (m.array() == 1.0)).all());
}

TEST(SampleMask, ExpectedPreserveRateEqualsOneMinusMeanScore) {
    const Graph g = toy_graph();
    const SparseMatrix adj = sym_normalize(g);
    ViewGenerator gen = ViewGenerator::init(3, 4, 0.0, 0.8, 0.5, 2);
    double kept = 0, mean_score = 0;
    const int draws = 5000;
    Rng rng(9);
    for (int k = 0; k < draws; ++k) {
        Tape t;
        const GeneratedView v = generate_view(t, gen, g, adj, rng.logistic_matrix(4, 1), true, false);
        kept += edge_preserve_rate(v.mask.value());
        mean_score = v.scores.value().mean();
    }
    const double p = 1 - mean_score;
    EXPECT_LE(std::abs(kept / draws - p), 4 * std::sqrt(p * (1 - p) / (4.0 * draws)));
}

TEST(SampleMask, RelaxedGradientCheck) {
    Rng rng(10);
    ParamStore s;
    s.add("raw", rng.normal_matrix(6, 1));
    const Mat noise = rng.logistic_matrix(6, 1);
    const auto r = grad_check(s, [&](Tape& t) {
        return ad::mean(sample_mask(squash_scores(t.param(s.get("raw")), 0.0, 0.8), 0.5, noise, false));
    });
    EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GenerateView, ZeroMaskRemovesEdgeContribution) {
    const Graph g = toy_graph();
    Mat mask = Mat::Ones(4, 1);
    mask(0, 0) = 0.0;  // edge (0,1)
    const SparseMatrix a = masked_adjacency(g, mask);
    EXPECT_EQ(a.at(0, 1), 0.0);
    EXPECT_EQ(a.at(1, 0), 0.0);
    const Mat dense = a.to_dense();
    EXPECT_LE((dense - dense.transpose()).cwiseAbs().maxCoeff(), 0.0);
    const SparseMatrix without = sym_normalize(g.with_edges({{1, 2}, {2, 3}, {0, 2}}));
    EXPECT_LE((dense - without.to_dense()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GenerateView, GradientsReachGenerator) {
    const Graph g = toy_graph();
    const SparseMatrix adj = sym_normalize(g);
    ViewGenerator gen = ViewGenerator::init(3, 4, 0.0, 0.8, 0.5, 3);
    TargetEncoder enc = TargetEncoder::init({3, 4, 4, Activation::relu}, 4);
    Rng rng(12);
    gen.params.set("mlp_b1", rng.normal_matrix(1, 4));
    const Mat noise = rng.logistic_matrix(4, 1), eps = rng.normal_matrix(4, 4);
    auto loss = [&](Tape& t) {
        const GeneratedView v = generate_view(t, gen, g, adj, noise, false, true);
        const Encoding u = encode(t, enc, v.adj, t.constant(g.features()), eps, false);
        return j2_prime_loss(u);
    };
    EXPECT_LT(grad_check(gen.params, loss).max_rel_error, 1e-4);
    Tape t;
    t.backward(loss(t));
    for (const auto& p : gen.params.all()) EXPECT_GT(p.grad.cwiseAbs().maxCoeff(), 0.0) << p.name;
}

TEST(EdgePreserveRate, Definition) {
    EXPECT_EQ(edge_preserve_rate(Mat::Ones(5, 1)), 1.0);
    EXPECT_EQ(edge_preserve_rate(Mat::Zero(5, 1)), 0.0);
    Mat m = Mat::Zero(8, 1);
    m(1, 0) = m(4, 0) = m(6, 0) = 1.0;
    EXPECT_EQ(edge_preserve_rate(m), 3.0 / 8.0);
}
