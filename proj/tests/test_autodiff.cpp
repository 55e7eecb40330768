#include "hsi/adam.hpp"
#include "hsi/autodiff.hpp"
#include "hsi/rng.hpp"
#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace hsi;
using namespace hsi::ad;

using namespace hsi::test;

namespace {
constexpr double kTol = 1e-6;
} // namespace

TEST(AutodiffValues, ClosedForms)
{
    TapeD t;
    const Var zero = t.constant(Md::Zero(1, 4));
    EXPECT_EQ(t.scalar(t.kl_normal(zero, zero)), 0.0);
    const Var one = t.constant(Md::Ones(1, 4));
    EXPECT_NEAR(t.scalar(t.kl_normal(one, zero)), 4 * 0.5, 1e-15);
    const Var half = t.constant(Md::Constant(1, 1, 0.5));
    EXPECT_NEAR(t.scalar(t.bce(half, Md::Ones(1, 1))), std::log(2.0), 1e-9);
}

TEST(AutodiffValues, ReparameterizeWithZeroNoiseIsMu)
{
    Rng rng(1);
    TapeD t;
    const Md mu = uniform_matrix(rng, 2, 5);
    const Var y = t.reparameterize(t.constant(mu), t.constant(uniform_matrix(rng, 2, 5)), Md::Zero(2, 5));
    EXPECT_EQ(t.value(y), mu);
}

TEST(AutodiffValues, SoftmaxNormalizedAndShiftInvariant)
{
    Rng rng(2);
    TapeD t;
    const Md x = uniform_matrix(rng, 6, 9, -20, 20);
    const Md a = t.value(t.softmax(t.constant(x)));
    const Md b = t.value(t.softmax(t.constant((x.array() + 123.0).matrix())));
    EXPECT_LT((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-6);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AutodiffValues, ClampKeepsLogsFinite)
{
    TapeD t;
    const Var p = t.constant(Md::Zero(1, 1));
    EXPECT_NEAR(t.scalar(t.bce(p, Md::Ones(1, 1))), -std::log(1e-7), 1e-6);
    EXPECT_TRUE(std::isfinite(t.scalar(t.cce(t.constant(Md::Zero(1, 3)), Md::Identity(1, 3)))));
}

TEST(AutodiffErrors, ShapeMismatchNamesTheOp)
{
    TapeD t;
    const Var a = t.constant(Md::Zero(2, 3));
    const Var b = t.constant(Md::Zero(3, 2));
    try {
        t.add(a, b);
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("add"), std::string::npos);
        EXPECT_NE(msg.find("2x3"), std::string::npos);
        EXPECT_NE(msg.find("3x2"), std::string::npos);
    }
    EXPECT_THROW(t.linear(a, a, t.constant(Md::Zero(1, 3))), Error);
}

TEST(AutodiffErrors, NonScalarLoss)
{
    TapeD t;
    const Var a = t.parameter(Md::Zero(2, 2));
    EXPECT_THROW(t.backward(a), Error);
}

TEST(AutodiffGrad, SumOfReluAtPositiveInputs)
{
    TapeD t;
    const Var x = t.parameter(Md::Constant(3, 4, 0.7));
    t.backward(t.sum(t.relu(x)));
    EXPECT_EQ(t.grad(x), Md::Ones(3, 4));
}

TEST(AutodiffGrad, SigmoidBceVanishesAtMatchingLogit)
{
    for (double target : {0.1, 0.5, 0.9}) {
        TapeD t;
        const Var x = t.parameter(Md::Constant(1, 1, std::log(target / (1 - target))));
        t.backward(t.bce(t.sigmoid(x), Md::Constant(1, 1, target)));
        EXPECT_NEAR(t.grad(x)(0, 0), 0.0, 1e-12);
    }
}

TEST(AutodiffGrad, EveryOperation)
{
    for (const OpCase& c : operation_cases(3)) {
        EXPECT_LT(gradient_error(c.graph, c.inputs), kTol) << c.name;
    }
}

TEST(AutodiffGrad, ThreeLayerNetwork)
{
    Rng rng(4);
    // 3 -> 4 -> 4 -> 2 with biases: 16 + 20 + 10 = 46 weights, plus 18
    // trainable input entries = 64 parameters.
    const Md target = uniform_matrix(rng, 6, 2, 0.1, 0.9);
    const Graph net = [&target](TapeD& t, const std::vector<Var>& v) {
        Var h = t.sigmoid(t.linear(v[0], v[1], v[2]));
        h = t.softmax(t.linear(h, v[3], v[4]));
        return t.bce(t.sigmoid(t.linear(h, v[5], v[6])), target);
    };
    const std::vector<Md> inputs = {uniform_matrix(rng, 6, 3), uniform_matrix(rng, 3, 4), uniform_matrix(rng, 1, 4),
                                    uniform_matrix(rng, 4, 4), uniform_matrix(rng, 1, 4), uniform_matrix(rng, 4, 2),
                                    uniform_matrix(rng, 1, 2)};
    std::size_t count = 0;
    for (const Md& m : inputs) {
        count += static_cast<std::size_t>(m.size());
    }
    EXPECT_EQ(count, 64u);
    EXPECT_LT(gradient_error(net, inputs), kTol);
}

TEST(AutodiffGrad, ReusedNodesAccumulate)
{
    TapeD t;
    const Var x = t.parameter(Md::Constant(1, 1, 3.0));
    // d/dx (x*x + x) = 2x + 1
    t.backward(t.sum(t.add(t.mul(x, x), x)));
    EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 7.0);
}

TEST(AutodiffGrad, ConstantsReceiveNoGradient)
{
    TapeD t;
    const Var c = t.constant(Md::Ones(2, 2));
    const Var p = t.parameter(Md::Ones(2, 2));
    t.backward(t.sum(t.mul(c, p)));
    EXPECT_EQ(t.grad(c).size(), 0);
    EXPECT_EQ(t.grad(p), Md::Ones(2, 2));
}

TEST(Adam, ZeroGradientLeavesParameters)
{
    AdamState<double> adam;
    Md p = Md::Constant(2, 2, 1.5);
    for (int i = 0; i < 5; ++i) {
        adam.update({&p}, {Md::Zero(2, 2)});
    }
    EXPECT_EQ(p, Md::Constant(2, 2, 1.5));
    EXPECT_EQ(adam.step, 5);
}

TEST(Adam, ConstantGradientDescends)
{
    AdamState<double> adam;
    Md p = Md::Zero(1, 2);
    Md g(1, 2);
    g << 2.0, -0.5;
    for (int i = 0; i < 100; ++i) {
        adam.update({&p}, {g});
    }
    EXPECT_LT(p(0, 0), 0.0);
    EXPECT_GT(p(0, 1), 0.0);
}

TEST(Adam, MatchesHandTrace)
{
    // f(x) = x^2 from x = 1, lr = 0.1, stepped by hand.
    double x = 1.0, m = 0.0, v = 0.0;
    std::vector<double> trace;
    for (int k = 1; k <= 10; ++k) {
        const double g = 2 * x;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mhat = m / (1 - std::pow(0.9, k));
        const double vhat = v / (1 - std::pow(0.999, k));
        x -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
        trace.push_back(x);
    }
    AdamState<double> adam(0.1);
    Md p = Md::Ones(1, 1);
    for (int k = 0; k < 10; ++k) {
        TapeD t;
        const Var xv = t.parameter(p);
        t.backward(t.sum(t.mul(xv, xv)));
        adam.update({&p}, {t.grad(xv)});
        EXPECT_NEAR(p(0, 0), trace[k], 1e-12) << "step " << k + 1;
    }
}

TEST(Adam, ShapeMismatch)
{
    AdamState<double> adam;
    Md p = Md::Zero(2, 2);
    EXPECT_THROW(adam.update({&p}, {Md::Zero(1, 2)}), Error);
    EXPECT_THROW(adam.update({&p}, {}), Error);
}
