#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "infoadv/autodiff.hpp"
#include "infoadv/graph.hpp"

using namespace infoadv;

namespace {

constexpr double kTol = 1e-4;

// Random positive/negative values bounded away from kinks at 0.
Mat away_from_zero(Rng& rng, Index r, Index c) {
    Mat m = rng.normal_matrix(r, c);
    for (Index k = 0; k < m.size(); ++k) {
        double& v = m.data()[k];
        if (std::abs(v) < 0.1) v = v < 0 ? -0.1 - std::abs(v) : 0.1 + v;
    }
    return m;
}

// Scalarize an arbitrary output with a fixed random weighting so every output entry matters.
Var weighted_sum(Tape& t, Var y, std::uint64_t seed) {
    Rng rng(seed);
    return ad::sum(ad::mul(y, t.constant(rng.normal_matrix(y.rows(), y.cols()))));
}

double check_unary(const std::function<Var(Var)>& op, Mat init, std::uint64_t seed = 99) {
    ParamStore s;
    s.add("a", std::move(init));
    return grad_check(s, [&](Tape& t) { return weighted_sum(t, op(t.param(s.get("a"))), seed); }).max_rel_error;
}

double check_binary(const std::function<Var(Var, Var)>& op, Mat a, Mat b, std::uint64_t seed = 98) {
    ParamStore s;
    s.add("a", std::move(a));
    s.add("b", std::move(b));
    return grad_check(s, [&](Tape& t) { return weighted_sum(t, op(t.param(s.get("a")), t.param(s.get("b"))), seed); }).max_rel_error;
}

}  // namespace

TEST(Autodiff, ForwardExamples) {
    Tape t;
    Rng rng(1);
    const Mat x = rng.normal_matrix(3, 2);
    EXPECT_EQ(ad::matmul(t.constant(Mat::Identity(3, 3)), t.constant(x)).value(), x);
    Mat v(1, 2);
    v << -1, 2;
    const Mat r = ad::relu(t.constant(v)).value();
    EXPECT_EQ(r(0, 0), 0.0);
    EXPECT_EQ(r(0, 1), 2.0);
}

TEST(Autodiff, SpmmMatchesDense) {
    Rng rng(2);
    std::vector<std::pair<Index, Index>> pairs;
    for (Index i = 0; i < 20; ++i)
        for (Index j = i + 1; j < 20; ++j)
            if (rng.bernoulli(0.2)) pairs.emplace_back(i, j);
    const Graph g = Graph::from_edges(20, pairs, Mat::Zero(20, 1));
    const SparseMatrix a = sym_normalize(g);
    const Mat x = rng.normal_matrix(20, 5);
    Tape t;
    EXPECT_LE((ad::spmm(a, t.constant(x)).value() - a.to_dense() * x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autodiff, SimpleBackwardExamples) {
    Rng rng(3);
    ParamStore s;
    Parameter& w = s.add("w", rng.normal_matrix(3, 4));
    {
        Tape t;
        t.backward(ad::sum(t.param(w)));
    }
    EXPECT_EQ(w.grad, Mat::Ones(3, 4));
    s.zero_grad();
    {
        Tape t;
        t.backward(ad::sum(ad::square(t.param(w))));
    }
    EXPECT_LE((w.grad - 2 * w.value).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Autodiff, BackwardErrors) {
    ParamStore s;
    Parameter& w = s.add("w", Mat::Ones(2, 2));
    Tape t;
    Var x = t.param(w);
    EXPECT_THROW(t.backward(x), ShapeError);
    Var l = ad::sum(x);
    t.backward(l);
    EXPECT_THROW(t.backward(l), Error);
    EXPECT_THROW(t.constant(Mat::Ones(1, 1)), Error);
}

TEST(Autodiff, NonFiniteDetected) {
    Tape t;
    Mat v = Mat::Constant(1, 1, -1.0);
    EXPECT_THROW(ad::log(t.constant(v)), NumericError);
    EXPECT_THROW(ad::matmul(t.constant(Mat::Ones(2, 3)), t.constant(Mat::Ones(2, 3))), ShapeError);
}

TEST(Autodiff, LinearLossIsExact) {
    Rng rng(4);
    ParamStore s;
    s.add("w", rng.normal_matrix(4, 3));
    const Mat c = rng.normal_matrix(4, 3);
    const auto r = grad_check(s, [&](Tape& t) { return ad::sum(ad::mul(t.param(s.get("w")), t.constant(c))); });
    EXPECT_LT(r.max_rel_error, 1e-10);
}

TEST(Autodiff, NonDeterministicClosureRejected) {
    ParamStore s;
    s.add("w", Mat::Ones(1, 1));
    int calls = 0;
    EXPECT_THROW(grad_check(s, [&](Tape& t) { return ad::scale(ad::sum(t.param(s.get("w"))), 1.0 + ++calls); }), Error);
}

// Property: every primitive matches central differences over random shapes.
TEST(Autodiff, PrimitiveGradientsProperty) {
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        Rng rng(100 + trial);
        const Index r = 1 + static_cast<Index>(rng.below(4)), c = 1 + static_cast<Index>(rng.below(4)), k = 1 + static_cast<Index>(rng.below(3));
        const Mat a = away_from_zero(rng, r, c), b = away_from_zero(rng, r, c), pos = a.cwiseAbs().array() + 0.5;
        const Mat rhs = rng.normal_matrix(c, k), row = rng.normal_matrix(1, c);

        EXPECT_LT(check_binary(ad::matmul, a, rhs), kTol);
        EXPECT_LT(check_unary(ad::transpose, a), kTol);
        EXPECT_LT(check_binary(ad::add, a, b), kTol);
        EXPECT_LT(check_binary(ad::sub, a, b), kTol);
        EXPECT_LT(check_binary(ad::mul, a, b), kTol);
        EXPECT_LT(check_binary(ad::add_row, a, row), kTol);
        EXPECT_LT(check_unary([](Var x) { return ad::scale(x, -2.5); }, a), kTol);
        EXPECT_LT(check_unary([](Var x) { return ad::add_scalar(x, 0.7); }, a), kTol);
        EXPECT_LT(check_unary(ad::neg, a), kTol);
        EXPECT_LT(check_unary(ad::relu, a), kTol);
        EXPECT_LT(check_unary([](Var x) { return ad::leaky_relu(x, 0.2); }, a), kTol);
        EXPECT_LT(check_binary(ad::prelu, a, Mat::Constant(1, 1, 0.25)), kTol);
        EXPECT_LT(check_unary(ad::sigmoid, a), kTol);
        EXPECT_LT(check_unary(ad::softplus, a), kTol);
        EXPECT_LT(check_unary(ad::log, pos), kTol);
        EXPECT_LT(check_unary(ad::exp, a), kTol);
        EXPECT_LT(check_unary(ad::square, a), kTol);
        EXPECT_LT(check_unary(ad::sqrt, pos), kTol);
        EXPECT_LT(check_unary([](Var x) { return ad::row_normalize_l2(x); }, a), kTol);
        EXPECT_LT(check_binary(ad::concat_cols, a, b), kTol);
        EXPECT_LT(check_unary([r](Var x) { return ad::gather_rows(x, {0, r - 1, 0}); }, a), kTol);
        EXPECT_LT(check_unary(ad::sum, a), kTol);
        EXPECT_LT(check_unary(ad::mean, a), kTol);
        EXPECT_LT(check_unary(ad::sum_rows, a), kTol);
        const Mat sq = rng.normal_matrix(r, r);
        EXPECT_LT(check_binary([](Var x, Var y) { return ad::row_logsumexp({x, y}, {true, false}); }, sq, rng.normal_matrix(r, c)), kTol);
    }
}

TEST(Autodiff, SparseAndWeightedPropagation) {
    Rng rng(7);
    const Graph g = Graph::from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {3, 4}}, Mat::Zero(5, 1));
    const SparseMatrix a = sym_normalize(g);
    EXPECT_LT(check_unary([&](Var x) { return ad::spmm(a, x); }, rng.normal_matrix(5, 3)), kTol);

    const Mat w = (rng.normal_matrix(5, 1).array().abs() + 0.2).matrix();
    EXPECT_LT(check_binary([&](Var wt, Var x) { return ad::gcn_propagate(g.edges(), wt, x); }, w, rng.normal_matrix(5, 3)), kTol);

    // Unit weights reproduce the fixed normalized adjacency.
    Tape t;
    const Mat x = rng.normal_matrix(5, 2);
    const Mat via_weights = ad::gcn_propagate(g.edges(), t.constant(Mat::Ones(5, 1)), t.constant(x)).value();
    EXPECT_LE((via_weights - a.multiply(x)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Autodiff, BackwardIsLinear) {
    Rng rng(8);
    ParamStore s;
    Parameter& w = s.add("w", rng.normal_matrix(3, 3));
    auto f = [](Var x) { return ad::sum(ad::sigmoid(ad::matmul(x, x))); };
    auto g = [](Var x) { return ad::sum(ad::square(ad::softplus(x))); };
    auto grad_of = [&](const std::function<Var(Tape&, Var)>& build) {
        s.zero_grad();
        Tape t;
        t.backward(build(t, t.param(w)));
        return Mat(w.grad);
    };
    const double alpha = 1.7, beta = -0.4;
    const Mat gf = grad_of([&](Tape&, Var x) { return f(x); });
    const Mat gg = grad_of([&](Tape&, Var x) { return g(x); });
    const Mat both = grad_of([&](Tape&, Var x) { return ad::add(ad::scale(f(x), alpha), ad::scale(g(x), beta)); });
    EXPECT_LE((both - (alpha * gf + beta * gg)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autodiff, ForwardIsDeterministic) {
    Rng rng(9);
    const Mat x = rng.normal_matrix(6, 4);
    auto run = [&] {
        Tape t;
        return Mat(ad::row_normalize_l2(ad::softplus(ad::matmul(t.constant(x), t.constant(x.transpose())))).value());
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParameters) {
    ParamStore s;
    Parameter& w = s.add("w", Mat::Constant(2, 2, 3.0));
    EXPECT_THROW(adam_step(s, {}), Error);
    {
        Tape t;
        t.backward(ad::scale(ad::sum(t.param(w)), 0.0));
    }
    adam_step(s, {1e-2, 0.9, 0.999, 1e-8, 0.0});
    EXPECT_EQ(w.value, Mat::Constant(2, 2, 3.0));
}

TEST(Adam, ConstantGradientStepApproachesLr) {
    ParamStore s;
    Parameter& w = s.add("w", Mat::Zero(1, 3));
    const double lr = 1e-3;
    Mat g(1, 3);
    g << 0.5, -2.0, 1e-3;
    Mat prev = w.value;
    for (int i = 0; i < 200; ++i) {
        w.grad = g;
        w.has_grad = true;
        adam_step(s, {lr, 0.9, 0.999, 1e-8, 0.0});
        const Mat step = w.value - prev;
        prev = w.value;
        for (Index k = 0; k < 3; ++k) {
            EXPECT_NEAR(std::abs(step(0, k)), lr, lr * 1e-4);
            EXPECT_LT(step(0, k) * g(0, k), 0.0);
        }
    }
    EXPECT_TRUE(w.grad.isZero(0));
}

TEST(Adam, DecoupledWeightDecay) {
    ParamStore s;
    Parameter& w = s.add("w", Mat::Constant(1, 1, 2.0));
    w.has_grad = true;  // zero gradient: only decay acts
    adam_step(s, {5e-4, 0.9, 0.999, 1e-8, 1e-5});
    EXPECT_DOUBLE_EQ(w.value(0, 0), 2.0 - 5e-4 * 1e-5 * 2.0);
}

TEST(ParamStore, UniqueNamesFixedShapes) {
    ParamStore s;
    s.add("a", Mat::Zero(2, 2));
    EXPECT_THROW(s.add("a", Mat::Zero(1, 1)), ConfigError);
    EXPECT_THROW(s.set("a", Mat::Zero(3, 2)), ShapeError);
    EXPECT_THROW(s.get("b"), ConfigError);
    const auto h = s.hash();
    s.set("a", Mat::Ones(2, 2));
    EXPECT_NE(h, s.hash());
}
