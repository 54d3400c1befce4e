#include <gtest/gtest.h>

#include <cmath>

#include "rcnet/layers.hpp"
#include "support.hpp"

namespace rcnet {
namespace {

using testing::numeric_gradient;
using testing::probe;
using testing::random_tensor;
using testing::relative_error;

TEST(BatchNorm, TwoValueChannelNormalisesToUnitMagnitude) {
  Tensor4<double> x(Shape{1, 1, 1, 2}, {1, 3});
  BNParams<double> p(1);
  const auto y = bn_forward(x, p);
  // mean 2, biased variance 1
  const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], -expected, 1e-12);
  EXPECT_NEAR(y[1], expected, 1e-12);
  EXPECT_NEAR(y[1], 0.999995, 1e-6);
}

TEST(BatchNorm, RunningStatisticsUpdate) {
  Tensor4<double> x(Shape{1, 1, 1, 2}, {1, 3});
  BNParams<double> p(1);
  bn_forward(x, p);
  EXPECT_NEAR(p.running_mean[0], 0.1 * 2.0, 1e-15);
  // unbiased batch variance of {1, 3} is 2
  EXPECT_NEAR(p.running_var[0], 0.9 * 1.0 + 0.1 * 2.0, 1e-15);
}

TEST(BatchNorm, ZeroGammaGivesConstantBeta) {
  const auto x = random_tensor({2, 2, 3, 3}, 5);
  BNParams<double> p(2);
  p.gamma = {0.0, 0.0};
  p.beta = {0.5, -1.5};
  const auto y = bn_forward(x, p);
  for (std::size_t n = 0; n < 2; ++n) {
    for (double v : y.plane(n, 0)) EXPECT_EQ(v, 0.5);
    for (double v : y.plane(n, 1)) EXPECT_EQ(v, -1.5);
  }
}

TEST(BatchNorm, EvalWithIdentityStatisticsIsNearIdentity) {
  const auto x = random_tensor({2, 3, 4, 4}, 6, -5, 5);
  BNParams<double> p(3);
  p.mode = BNMode::eval;
  const auto y = bn_forward(x, p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-4);
  EXPECT_EQ(p.running_mean, (std::vector<double>{0, 0, 0}));
  // Eval output of a sample does not depend on the rest of the batch.
  Tensor4<double> first(Shape{1, 3, 4, 4});
  std::copy(x.sample(0).begin(), x.sample(0).end(), first.data().begin());
  const auto y1 = bn_infer(first, p);
  EXPECT_TRUE(std::equal(y1.data().begin(), y1.data().end(), y.sample(0).begin()));
}

TEST(BatchNorm, TrainOutputHasZeroMeanUnitVariance) {
  const auto x = random_tensor({4, 3, 6, 5}, 7, -3, 8);
  BNParams<double> p(3);
  const auto y = bn_forward(x, p);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (double v : y.plane(n, c)) {
        sum += v;
        sq += v * v;
        ++count;
      }
    const double mean = sum / count;
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(sq / count - mean * mean, 1.0, 1e-4);
  }
}

TEST(BatchNorm, Errors) {
  BNParams<double> p(2);
  EXPECT_THROW(bn_forward(random_tensor({1, 3, 2, 2}, 1), p), ShapeError);
  EXPECT_THROW(bn_forward(random_tensor({1, 2, 1, 1}, 1), p), ShapeError);
  EXPECT_THROW(bn_backward(p, std::optional<BNCache<double>>{}, random_tensor({1, 2, 2, 2}, 1)),
               Error);
}

TEST(BatchNorm, BackwardZeroGradAndProjection) {
  const auto x = random_tensor({2, 2, 3, 4}, 9);
  BNParams<double> p(2);
  std::optional<BNCache<double>> cache(BNCache<double>{Tensor4<double>(x.shape()), {}});
  bn_forward(x, p, &*cache);

  const auto zero = bn_backward(p, cache, Tensor4<double>(x.shape()));
  for (double v : zero.grad_x.data()) EXPECT_EQ(v, 0.0);
  for (double v : zero.grad_gamma) EXPECT_EQ(v, 0.0);
  for (double v : zero.grad_beta) EXPECT_EQ(v, 0.0);

  const auto r = bn_backward(p, cache, random_tensor(x.shape(), 10));
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (double v : r.grad_x.plane(n, c)) sum += v;
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  auto x = random_tensor({2, 3, 3, 4}, 11);
  BNParams<double> p(3);
  p.gamma = {0.7, 1.3, -0.4};
  p.beta = {0.1, -0.2, 0.3};
  const auto r = random_tensor(x.shape(), 12);
  const auto loss = [&] {
    BNParams<double> q = p;  // keep running statistics out of the probe
    return probe(bn_forward(x, q), r);
  };
  std::optional<BNCache<double>> cache(BNCache<double>{Tensor4<double>(x.shape()), {}});
  BNParams<double> q = p;
  bn_forward(x, q, &*cache);
  const auto analytic = bn_backward(p, cache, r);
  EXPECT_LT(relative_error(analytic.grad_x.data(), numeric_gradient(x.data(), loss)), 1e-4);
  EXPECT_LT(relative_error(analytic.grad_gamma, numeric_gradient(p.gamma, loss)), 1e-4);
  EXPECT_LT(relative_error(analytic.grad_beta, numeric_gradient(p.beta, loss)), 1e-4);
}

TEST(PReLU, Examples) {
  PReLUParams<double> p(1);
  Tensor4<double> x(Shape{1, 1, 1, 2}, {2.0, -2.0});
  EXPECT_EQ(prelu_forward(x, p).values(), (std::vector<double>{2.0, -0.5}));

  PReLUParams<double> one(2, 1.0);
  const auto xr = random_tensor({2, 2, 3, 3}, 3);
  const auto g = random_tensor({2, 2, 3, 3}, 4);
  EXPECT_EQ(prelu_forward(xr, one), xr);
  EXPECT_EQ(prelu_backward(xr, one, g).grad_x, g);
  EXPECT_THROW(prelu_forward(random_tensor({1, 3, 2, 2}, 1), one), ShapeError);
}

TEST(PReLU, SlopeGradientAccumulatesNegativePositions) {
  Tensor4<double> x(Shape{1, 1, 1, 4}, {-1.0, 2.0, -3.0, 4.0});
  Tensor4<double> g(Shape{1, 1, 1, 4}, {1.0, 1.0, 2.0, 1.0});
  PReLUParams<double> p(1, 0.1);
  const auto r = prelu_backward(x, p, g);
  EXPECT_DOUBLE_EQ(r.grad_slope[0], -1.0 - 6.0);
  EXPECT_EQ(r.grad_x.values(), (std::vector<double>{0.1, 1.0, 0.2, 1.0}));
}

TEST(PReLU, GradientsMatchFiniteDifferences) {
  auto x = random_tensor({2, 3, 4, 4}, 13);
  // Keep inputs away from the kink at zero.
  for (auto& v : x.data())
    if (std::abs(v) < 0.05) v = 0.1;
  PReLUParams<double> p(3);
  p.slope = {0.25, -0.1, 0.6};
  const auto r = random_tensor(x.shape(), 14);
  const auto loss = [&] { return probe(prelu_forward(x, p), r); };
  const auto analytic = prelu_backward(x, p, r);
  EXPECT_LT(relative_error(analytic.grad_x.data(), numeric_gradient(x.data(), loss)), 1e-5);
  EXPECT_LT(relative_error(analytic.grad_slope, numeric_gradient(p.slope, loss)), 1e-5);
}

TEST(Init, HeStandardDeviation) {
  EXPECT_DOUBLE_EQ(he_std(18), 1.0 / 3.0);
  // fan_in 18 with just over 10^5 weights
  ConvParams<double> p(ConvKind::conv, 2, 5556, 3, true);
  std::mt19937_64 rng(7);
  he_init(p, rng);
  double sum = 0, sq = 0;
  for (double v : p.weight.data()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(p.weight.size());
  const double mean = sum / n;
  const double sd = std::sqrt((sq - n * mean * mean) / (n - 1));
  EXPECT_EQ(p.weight.size(), 100008u);
  EXPECT_NEAR(sd, 1.0 / 3.0, 0.02 / 3.0);
  for (double b : p.bias) EXPECT_EQ(b, 0.0);
}

TEST(Init, DeterministicPerSeedAndDefaults) {
  const auto a = make_conv<double>(ConvKind::conv, 3, 4, 5, true, 99);
  const auto b = make_conv<double>(ConvKind::conv, 3, 4, 5, true, 99);
  const auto c = make_conv<double>(ConvKind::conv, 3, 4, 5, true, 100);
  EXPECT_EQ(a.weight, b.weight);
  EXPECT_NE(a.weight, c.weight);
  // Transposed layers use their input channel count for fan-in.
  const auto t = make_conv<double>(ConvKind::transposed, 128, 1, 3, true, 1);
  double sq = 0;
  for (double v : t.weight.data()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq / t.weight.size()), he_std(128 * 9), 0.15 * he_std(128 * 9));

  BNParams<double> bn(4);
  EXPECT_EQ(bn.gamma, std::vector<double>(4, 1.0));
  EXPECT_EQ(bn.beta, std::vector<double>(4, 0.0));
  PReLUParams<double> pr(4);
  EXPECT_EQ(pr.slope, std::vector<double>(4, 0.25));
}

}  // namespace
}  // namespace rcnet
