#include <cmath>

#include <gtest/gtest.h>

#include "infoadv/encoder.hpp"
#include "infoadv/losses.hpp"

using namespace infoadv;

namespace {

struct Fixture {
    Graph g;
    SparseMatrix adj;
    Fixture() {
        Rng rng(5);
        g = Graph::from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}, {1, 4}}, rng.normal_matrix(6, 4));
        adj = sym_normalize(g);
    }
};

}  // namespace

TEST(Encoder, ZeroNoiseGivesMean) {
    Fixture f;
    TargetEncoder enc = TargetEncoder::init({4, 8, 5, Activation::relu}, 1);
    Tape t;
    const Encoding e = encode(t, enc, ViewAdjacency::of(f.adj), t.constant(f.g.features()), Mat::Zero(6, 5), false);
    EXPECT_EQ(e.u.value(), e.u_mu.value());
    EXPECT_GT(e.u_sigma.value().minCoeff(), 0.0);
    EXPECT_EQ(embed(enc, f.adj, f.g.features()), e.u_mu.value());
}

TEST(Encoder, MatchesHandForward) {
    Fixture f;
    for (Activation act : {Activation::relu, Activation::prelu, Activation::rrelu}) {
        TargetEncoder enc = TargetEncoder::init({4, 6, 3, act}, 2);
        Rng rng(3);
        const Mat noise = rng.normal_matrix(6, 3);
        Tape t;
        const Encoding e = encode(t, enc, ViewAdjacency::of(f.adj), t.constant(f.g.features()), noise, false);

        const Mat a = f.adj.to_dense();
        Mat pre = a * f.g.features() * enc.params.get("w1").value;
        const double slope = act == Activation::relu ? 0.0 : act == Activation::prelu ? 0.25 : 0.2;
        Mat hidden = pre.unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
        const Mat mu = a * hidden * enc.params.get("w_mu").value;
        const Mat sig = (a * hidden * enc.params.get("w_sigma").value).unaryExpr([](double x) { return std::log1p(std::exp(x)) + 1e-6; });
        EXPECT_LE((e.u_mu.value() - mu).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((e.u_sigma.value() - sig).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((e.u.value() - (mu + noise.cwiseProduct(sig))).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Encoder, MonteCarloVarianceMatchesSigmaSquared) {
    Fixture f;
    TargetEncoder enc = TargetEncoder::init({4, 8, 3, Activation::relu}, 4);
    Rng rng(6);
    const int draws = 10000;
    Mat sum = Mat::Zero(6, 3), sum2 = Mat::Zero(6, 3), sigma;
    for (int k = 0; k < draws; ++k) {
        Tape t;
        const Encoding e = encode(t, enc, ViewAdjacency::of(f.adj), t.constant(f.g.features()), rng.normal_matrix(6, 3), false);
        sum += e.u.value();
        sum2 += e.u.value().cwiseProduct(e.u.value());
        sigma = e.u_sigma.value();
    }
    const Mat mean = sum / draws;
    const Mat var = (sum2 / draws - mean.cwiseProduct(mean)) * draws / (draws - 1.0);
    const Mat expected = sigma.cwiseProduct(sigma);
    EXPECT_LE(((var - expected).array() / expected.array()).abs().maxCoeff(), 0.05);
}

TEST(Encoder, InitDeterministicWithGlorotVariance) {
    const EncoderDims dims{1433, 128, 128, Activation::relu};
    const TargetEncoder a = TargetEncoder::init(dims, 7), b = TargetEncoder::init(dims, 7), c = TargetEncoder::init(dims, 8);
    EXPECT_EQ(a.params.hash(), b.params.hash());
    EXPECT_NE(a.params.hash(), c.params.hash());
    const Mat& w = a.params.get("w1").value;
    const double var = w.array().square().mean() - std::pow(w.mean(), 2);
    const double expected = 2.0 / (1433 + 128);
    EXPECT_NEAR(var, expected, 0.1 * expected);
    const double bound = std::sqrt(6.0 / (1433 + 128));
    EXPECT_LE(w.cwiseAbs().maxCoeff(), bound);
    EXPECT_THROW(TargetEncoder::init({0, 4, 4, Activation::relu}, 1), ConfigError);
}

TEST(Encoder, ShapeErrors) {
    Fixture f;
    TargetEncoder enc = TargetEncoder::init({3, 4, 4, Activation::relu}, 1);
    Tape t;
    EXPECT_THROW(encode(t, enc, ViewAdjacency::of(f.adj), t.constant(f.g.features()), Mat::Zero(6, 4), false), ShapeError);
}

TEST(ProjectionHead, ZeroWeightsShapeAndGradient) {
    ProjectionHead h = ProjectionHead::init(5, 1);
    Rng rng(2);
    const Mat z = rng.normal_matrix(7, 5);
    {
        Tape t;
        EXPECT_EQ(project(t, h, t.constant(z), false).value().rows(), 7);
        EXPECT_EQ(project(t, h, t.constant(z), false).value().cols(), 5);
    }
    ProjectionHead zero = ProjectionHead::init(5, 1);
    for (auto& p : zero.params.all()) p.value.setZero();
    {
        Tape t;
        EXPECT_TRUE(project(t, zero, t.constant(z), false).value().isZero(0));
    }
    // Nonzero biases keep the ReLU away from its kink.
    h.params.set("b1", rng.normal_matrix(1, 5));
    const auto r = grad_check(h.params, [&](Tape& t) { return ad::sum(ad::square(project(t, h, t.constant(z), true))); });
    EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Encoder, GradientCheckAndNoDeadParameters) {
    Fixture f;
    for (Activation act : {Activation::prelu, Activation::rrelu}) {
        TargetEncoder enc = TargetEncoder::init({4, 5, 3, act}, 9);
        ProjectionHead head = ProjectionHead::init(3, 10);
        Rng rng(11);
        const Mat n1 = rng.normal_matrix(6, 3), n2 = rng.normal_matrix(6, 3);
        const Mat x2 = feature_mask(f.g.features(), 0.3, 1);
        auto loss = [&](Tape& t) {
            const Encoding u = encode(t, enc, ViewAdjacency::of(f.adj), t.constant(f.g.features()), n1, true);
            const Encoding v = encode(t, enc, ViewAdjacency::of(f.adj), t.constant(x2), n2, true);
            return ad::add(j1_loss(t, &head, u, v, 0.5, true), ad::scale(j2_loss(u, v), 0.3));
        };
        ParamStore* stores[] = {&enc.params, &head.params};
        EXPECT_LT(grad_check(std::span<ParamStore* const>(stores), loss).max_rel_error, 1e-4);

        Tape t;
        t.backward(loss(t));
        for (const ParamStore* s : stores)
            for (const auto& p : s->all()) EXPECT_GT(p.grad.cwiseAbs().maxCoeff(), 0.0) << p.name;
    }
}

TEST(Activation, ParseRoundTrip) {
    for (Activation a : {Activation::relu, Activation::prelu, Activation::rrelu}) EXPECT_EQ(parse_activation(to_string(a)), a);
    EXPECT_EQ(parse_activation("PReLU"), Activation::prelu);
    EXPECT_THROW(parse_activation("gelu"), ConfigError);
}
