#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "isqa/autodiff.hpp"
#include "isqa/errors.hpp"
#include "isqa/params.hpp"

using namespace isqa;
using ad::Graph;
using ad::Var;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, Real lo = -1, Real hi = 1) {
  Tensor t(std::move(shape));
  for (Real& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Keeps values at least `margin` away from zero so relu kinks are not crossed.
Tensor away_from_zero(Rng& rng, std::vector<int> shape, Real margin = 1e-2) {
  Tensor t = random_tensor(rng, std::move(shape));
  for (Real& v : t.data())
    if (std::abs(v) < margin) v = v < 0 ? -margin - 0.05 : margin + 0.05;
  return t;
}

}  // namespace

TEST(Matmul, IdentityTimesMatrix) {
  Graph g;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1;
  Tensor m({3, 2}, {1, 2, 3, 4, 5, 6});
  Var out = g.matmul(g.constant(eye), g.constant(m));
  EXPECT_EQ(g.value(out).storage(), m.storage());
}

TEST(Matmul, HandArithmetic) {
  Graph g;
  Var out = g.matmul(g.constant(Tensor({2, 2}, {1, 2, 3, 4})), g.constant(Tensor({2, 1}, {1, 1})));
  EXPECT_EQ(g.value(out).shape(), (std::vector<int>{2, 1}));
  EXPECT_EQ(g.value(out)[0], 3);
  EXPECT_EQ(g.value(out)[1], 7);
}

TEST(Matmul, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(g.matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  const Tensor b = random_tensor(rng, {4, 3});
  const Real err = ad::finite_diff_check(
      [&](Graph& g, Var a) { return g.sum(g.matmul(a, g.constant(b))); }, random_tensor(rng, {2, 4}), 1e-4);
  EXPECT_LT(err, 1e-4);
}

TEST(Conv2d, OneByOneIdentityKernel) {
  Rng rng(2);
  Tensor x = random_tensor(rng, {1, 5, 5});
  Graph g;
  Var out = g.conv2d(g.constant(x), g.constant(Tensor({1, 1, 1, 1}, {1})), 1, 0);
  EXPECT_EQ(g.value(out).storage(), x.storage());
}

TEST(Conv2d, OnesKernelOnConstantImage) {
  const Real c = 0.7;
  Graph g;
  Var out = g.conv2d(g.constant(Tensor({1, 6, 6}, c)), g.constant(Tensor::ones({1, 1, 3, 3})), 1, 1);
  const Tensor& v = g.value(out);
  for (int y = 1; y < 5; ++y)
    for (int x = 1; x < 5; ++x) EXPECT_NEAR(v.at(0, y, x), 9 * c, 1e-12);
  // corners see only a 2x2 patch under zero padding
  EXPECT_NEAR(v.at(0, 0, 0), 4 * c, 1e-12);
}

TEST(Conv2d, KernelGradientMatchesFiniteDifferences) {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {2, 7, 7});
  for (int stride : {1, 2}) {
    const Real err = ad::finite_diff_check(
        [&](Graph& g, Var k) { return g.sum(g.mul(g.conv2d(g.constant(x), k, stride, 1), g.conv2d(g.constant(x), k, stride, 1))); },
        random_tensor(rng, {3, 2, 3, 3}), 1e-4);
    EXPECT_LT(err, 1e-4) << "stride " << stride;
  }
}

TEST(Conv2d, InputAndBiasGradients) {
  Rng rng(4);
  const Tensor k = random_tensor(rng, {2, 3, 4, 4});
  const Tensor b = random_tensor(rng, {2});
  EXPECT_LT(ad::finite_diff_check(
                [&](Graph& g, Var x) {
                  Var y = g.conv2d(x, g.constant(k), g.constant(b), 4, 0);
                  return g.sum(g.mul(y, y));
                },
                random_tensor(rng, {3, 8, 8}), 1e-4),
            1e-4);
  const Tensor x = random_tensor(rng, {3, 8, 8});
  EXPECT_LT(ad::finite_diff_check(
                [&](Graph& g, Var bias) {
                  Var y = g.conv2d(g.constant(x), g.constant(k), bias, 2, 1);
                  return g.sum(g.mul(y, y));
                },
                b, 1e-4),
            1e-4);
}

TEST(Conv2d, ChannelMismatchThrows) {
  Graph g;
  EXPECT_THROW(g.conv2d(g.constant(Tensor({2, 4, 4})), g.constant(Tensor({1, 3, 3, 3})), 1, 1), DimensionError);
  EXPECT_THROW(g.conv2d(g.constant(Tensor({4, 4})), g.constant(Tensor({1, 1, 3, 3})), 1, 1), DimensionError);
}

TEST(Deconv2d, UnitKernelStrideOneIsIdentity) {
  Rng rng(5);
  Tensor x = random_tensor(rng, {1, 4, 4});
  Graph g;
  Var out = g.deconv2d(g.constant(x), g.constant(Tensor({1, 1, 1, 1}, {1})), 1);
  EXPECT_EQ(g.value(out).storage(), x.storage());
}

TEST(Deconv2d, StrideTwoScattersInput) {
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor k({1, 1, 2, 2}, {1, 0, 0, 0});
  Graph g;
  const Tensor& out = g.value(g.deconv2d(g.constant(x), g.constant(k), 2));
  ASSERT_EQ(out.shape(), (std::vector<int>{1, 4, 4}));
  // direct index oracle: out[2y][2x] = x[y][x], zero elsewhere
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx) {
      const Real expect = (y % 2 == 0 && xx % 2 == 0) ? x.at(0, y / 2, xx / 2) : 0;
      EXPECT_EQ(out.at(0, y, xx), expect);
    }
}

TEST(Deconv2d, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  const Tensor x = random_tensor(rng, {2, 3, 3});
  const Tensor k = random_tensor(rng, {2, 3, 2, 2});
  EXPECT_LT(ad::finite_diff_check(
                [&](Graph& g, Var kv) {
                  Var y = g.deconv2d(g.constant(x), kv, 2);
                  return g.sum(g.mul(y, y));
                },
                k, 1e-4),
            1e-4);
  EXPECT_LT(ad::finite_diff_check(
                [&](Graph& g, Var xv) {
                  Var y = g.deconv2d(xv, g.constant(k), g.constant(Tensor({3}, {0.1, -0.2, 0.3})), 2);
                  return g.sum(g.mul(y, y));
                },
                x, 1e-4),
            1e-4);
}

TEST(Elementwise, ReluAndSigmoidValues) {
  Graph g;
  const Tensor& r = g.value(g.relu(g.constant(Tensor({3}, {-1, 0, 2}))));
  EXPECT_EQ(r.storage(), (std::vector<Real>{0, 0, 2}));
  EXPECT_EQ(g.value(g.sigmoid(g.constant(Tensor::scalar(0)))).item(), 0.5);
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
  Graph g;
  Var x = g.input(Tensor({3}, {-1, 0, 2}));
  Tensor grad = g.backward(g.sum(g.relu(x))).of(x);
  EXPECT_EQ(grad.storage(), (std::vector<Real>{0, 0, 1}));
}

TEST(Elementwise, MulGradientMatchesFiniteDifferences) {
  Rng rng(7);
  const Tensor other = random_tensor(rng, {3, 4});
  EXPECT_LT(ad::finite_diff_check([&](Graph& g, Var x) { return g.sum(g.mul(g.mul(x, g.constant(other)), x)); },
                                  random_tensor(rng, {3, 4}), 1e-4),
            1e-4);
}

TEST(Elementwise, BroadcastShapes) {
  Graph g;
  Var a = g.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = g.input(Tensor({3}, {10, 20, 30}));
  Var s = g.add(a, b);
  EXPECT_EQ(g.value(s).storage(), (std::vector<Real>{11, 22, 33, 14, 25, 36}));
  auto grads = g.backward(g.sum(s));
  EXPECT_EQ(grads.of(b).storage(), (std::vector<Real>{2, 2, 2}));
  EXPECT_THROW(g.add(g.constant(Tensor({2, 3})), g.constant(Tensor({2}))), DimensionError);
}

TEST(Backward, SumGivesOnes) {
  Graph g;
  Var x = g.input(Tensor({2, 2}, {1, -2, 3, 4}));
  EXPECT_EQ(g.backward(g.sum(x)).of(x).storage(), (std::vector<Real>{1, 1, 1, 1}));
}

TEST(Backward, ConstantRootGivesZero) {
  Graph g;
  Var x = g.input(Tensor({3}, {1, 2, 3}));
  Var c = g.sum(g.constant(Tensor({2}, {4, 5})));
  EXPECT_EQ(g.backward(c).of(x).storage(), (std::vector<Real>{0, 0, 0}));
}

TEST(Backward, NonScalarRootThrows) {
  Graph g;
  Var x = g.input(Tensor({3}, {1, 2, 3}));
  EXPECT_THROW(g.backward(g.relu(x)), ContractError);
}

TEST(Backward, ConvReluSumPipeline) {
  Rng rng(8);
  const Tensor k = random_tensor(rng, {4, 1, 3, 3});
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor(rng, {1, 6, 6});
    // skip points where a pre-activation sits within 1e-2 of the relu kink
    Graph probe;
    const Tensor& pre = probe.value(probe.conv2d(probe.constant(x), probe.constant(k), 1, 1));
    bool near_kink = false;
    for (Real v : pre.data()) near_kink = near_kink || std::abs(v) < 1e-2;
    if (near_kink) continue;
    ++checked;
    EXPECT_LT(ad::finite_diff_check(
                  [&](Graph& g, Var xv) { return g.sum(g.relu(g.conv2d(xv, g.constant(k), 1, 1))); }, x, 1e-4),
              1e-3);
  }
  EXPECT_GT(checked, 0);
}

TEST(Backward, LinearityInRoots) {
  Rng rng(9);
  const Tensor xv = random_tensor(rng, {5});
  Graph g;
  Var x = g.input(xv);
  Var r1 = g.sum(g.mul(x, x));
  Var r2 = g.sum(g.sigmoid(x));
  Tensor both = g.backward(g.add(r1, r2)).of(x);
  Tensor a = g.backward(r1).of(x);
  a += g.backward(r2).of(x);
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_NEAR(both[i], a[i], 1e-14);
}

TEST(FiniteDiffCheck, QuadraticAtThree) {
  EXPECT_LT(ad::finite_diff_check([](Graph& g, Var x) { return g.sum(g.mul(x, x)); }, Tensor::scalar(3), 1e-4),
            1e-6);
}

TEST(FiniteDiffCheck, LinearIsExact) {
  EXPECT_LT(ad::finite_diff_check([](Graph& g, Var x) { return g.sum(g.scale(x, 2.5)); }, Tensor({3}, {1, -4, 2}),
                                  1e-4),
            1e-9);
}

TEST(FiniteDiffCheck, ReluAwayFromKink) {
  EXPECT_LT(ad::finite_diff_check([](Graph& g, Var x) { return g.sum(g.relu(x)); }, Tensor({2}, {0.5, -0.7}), 1e-4),
            1e-6);
}

TEST(FiniteDiffCheck, RejectsNonPositiveEps) {
  EXPECT_THROW(ad::finite_diff_check([](Graph& g, Var x) { return g.sum(x); }, Tensor::scalar(1), 0), ContractError);
}

// Every differentiable op against central differences at 100 random points.
TEST(GradientProperty, AllOpsAgreeWithFiniteDifferences) {
  Rng rng(10);
  using Builder = std::function<Var(Graph&, Var)>;
  const Tensor other = away_from_zero(rng, {2, 3});
  const Tensor positive = random_tensor(rng, {2, 3}, 0.5, 2.0);
  struct Case {
    const char* name;
    Builder fn;
    std::vector<int> shape;
    bool positive_input;
  };
  const Tensor k = random_tensor(rng, {2, 1, 2, 2});
  const Tensor kd = random_tensor(rng, {1, 2, 2, 2});
  std::vector<Case> cases = {
      {"relu", [](Graph& g, Var x) { return g.sum(g.mul(g.relu(x), g.relu(x))); }, {2, 3}, false},
      {"sigmoid", [](Graph& g, Var x) { return g.sum(g.sigmoid(x)); }, {2, 3}, false},
      {"tanh", [](Graph& g, Var x) { return g.sum(g.tanh(x)); }, {2, 3}, false},
      {"log", [](Graph& g, Var x) { return g.sum(g.log(x)); }, {2, 3}, true},
      {"sqrt", [](Graph& g, Var x) { return g.sum(g.sqrt(x)); }, {2, 3}, true},
      {"add", [&](Graph& g, Var x) { return g.sum(g.mul(g.add(x, g.constant(other)), x)); }, {2, 3}, false},
      {"sub", [&](Graph& g, Var x) { return g.sum(g.mul(g.sub(g.constant(other), x), x)); }, {2, 3}, false},
      {"div", [&](Graph& g, Var x) { return g.sum(g.div(g.constant(other), x)); }, {2, 3}, true},
      {"scale", [](Graph& g, Var x) { return g.sum(g.mul(g.scale(x, -1.5), x)); }, {2, 3}, false},
      {"mean", [](Graph& g, Var x) { return g.mean(g.mul(x, x)); }, {2, 3}, false},
      {"sum_rows", [](Graph& g, Var x) { Var r = g.sum_rows(x); return g.sum(g.mul(r, r)); }, {2, 3}, false},
      {"transpose", [&](Graph& g, Var x) { return g.sum(g.matmul(g.transpose(x), g.constant(other))); }, {2, 3}, false},
      {"concat", [](Graph& g, Var x) { Var p[2] = {x, g.scale(x, 2)}; Var c = g.concat(p); return g.sum(g.mul(c, c)); }, {2, 3}, false},
      {"gather", [](Graph& g, Var x) { Var s = g.gather(x, {0, 4, 4}); return g.sum(g.mul(s, s)); }, {2, 3}, false},
      {"gather_rows", [](Graph& g, Var x) { Var s = g.gather_rows(x, {1, 0, 1}); return g.sum(g.mul(s, s)); }, {2, 3}, false},
      {"pool", [](Graph& g, Var x) { Var p = g.avg_pool2d(g.reshape(x, {1, 2, 4}), 2); return g.sum(g.mul(p, p)); }, {2, 4}, false},
      {"conv", [&](Graph& g, Var x) { Var y = g.conv2d(g.reshape(x, {1, 2, 4}), g.constant(k), 1, 1); return g.sum(g.mul(y, y)); }, {2, 4}, false},
      {"deconv", [&](Graph& g, Var x) { Var y = g.deconv2d(g.reshape(x, {1, 2, 4}), g.constant(kd), 2); return g.sum(g.mul(y, y)); }, {2, 4}, false},
  };
  for (const auto& c : cases) {
    Real worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      Tensor p = c.positive_input ? random_tensor(rng, c.shape, 0.5, 2.0) : away_from_zero(rng, c.shape);
      worst = std::max(worst, ad::finite_diff_check(c.fn, p, 1e-5));
    }
    EXPECT_LT(worst, 1e-3) << c.name;
  }
}

TEST(Determinism, RepeatedEvaluationIsBitIdentical) {
  Rng rng(11);
  const Tensor x = random_tensor(rng, {2, 8, 8});
  const Tensor k = random_tensor(rng, {3, 2, 3, 3});
  auto run = [&] {
    Graph g;
    Var xv = g.input(x);
    Var y = g.sum(g.sigmoid(g.conv2d(xv, g.constant(k), 2, 1)));
    return g.backward(y).of(xv).storage();
  };
  EXPECT_EQ(run(), run());
}

TEST(TensorIo, SerializationRoundTripsThroughFloat32) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor t = random_tensor(rng, {rng.uniform_int(1, 4), rng.uniform_int(1, 5), rng.uniform_int(1, 3)}, -10, 10);
    std::stringstream ss;
    write_tensor(ss, t);
    EXPECT_EQ(ss.str().size(), 4 + 4 * 3 + 4 * t.size());
    Tensor back = read_tensor(ss);
    ASSERT_EQ(back.shape(), t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(back[i], static_cast<Real>(static_cast<float>(t[i])));
  }
}

TEST(TensorIo, LayoutIsLittleEndian) {
  std::stringstream ss;
  write_tensor(ss, Tensor({1}, {1.0}));
  const std::string b = ss.str();
  ASSERT_EQ(b.size(), 12u);
  EXPECT_EQ(static_cast<unsigned char>(b[0]), 1);  // rank
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);  // dim
  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(b[10]), 0x80);
  EXPECT_EQ(static_cast<unsigned char>(b[11]), 0x3f);
}

TEST(Graph, ValueReferencesSurviveLaterRecords) {
  ad::Graph g;
  ad::Var x = g.input(Tensor({2, 2}, 3.0));
  const Tensor& ref = g.value(x);
  for (int i = 0; i < 1000; ++i) g.add_scalar(x, 1.0);
  EXPECT_EQ(ref.storage(), std::vector<Real>(4, 3.0));
}
