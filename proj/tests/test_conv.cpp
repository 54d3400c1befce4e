#include <gtest/gtest.h>

#include "rcnet/layers.hpp"
#include "rcnet/parallel.hpp"
#include "support.hpp"

namespace rcnet {
namespace {

using testing::naive_conv;
using testing::naive_tconv;
using testing::numeric_gradient;
using testing::probe;
using testing::random_tensor;
using testing::relative_error;

ConvParams<double> random_conv(ConvKind kind, std::size_t in, std::size_t out, std::size_t k,
                               bool bias, std::uint64_t seed) {
  ConvParams<double> p(kind, in, out, k, bias);
  testing::fill_random<double>(p.weight.data(), seed);
  testing::fill_random<double>(p.bias, seed + 1);
  return p;
}

TEST(Conv, AllOnesKernelHandExample) {
  Tensor4<double> x(Shape{1, 1, 3, 3});
  x.fill(1.0);
  ConvParams<double> p(ConvKind::conv, 1, 1, 3, false);
  p.weight.fill(1.0);
  const auto y = conv_forward(x, p);
  EXPECT_EQ(y.values(), (std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv, IdentityAndZeroKernels) {
  const auto x = random_tensor({2, 1, 4, 5}, 3);
  ConvParams<double> id(ConvKind::conv, 1, 1, 1, false);
  id.weight.fill(1.0);
  EXPECT_EQ(conv_forward(x, id), x);

  ConvParams<double> zero(ConvKind::conv, 1, 2, 3, true);
  zero.bias = {0.5, -2.0};
  const auto y = conv_forward(x, zero);
  for (std::size_t n = 0; n < 2; ++n) {
    for (double v : y.plane(n, 0)) EXPECT_EQ(v, 0.5);
    for (double v : y.plane(n, 1)) EXPECT_EQ(v, -2.0);
  }
}

TEST(Conv, RejectsEvenKernelAndChannelMismatch) {
  EXPECT_THROW(ConvParams<double>(ConvKind::conv, 1, 1, 2, false), ShapeError);
  ConvParams<double> p(ConvKind::conv, 2, 1, 3, false);
  EXPECT_THROW(conv_forward(random_tensor({1, 3, 4, 4}, 1), p), ShapeError);
  EXPECT_THROW(conv_backward(random_tensor({1, 2, 4, 4}, 1), p, random_tensor({1, 2, 4, 4}, 2)),
               ShapeError);
}

TEST(Conv, MatchesNaiveOracleOnRandomCases) {
  std::mt19937_64 rng(2024);
  const std::size_t ks[] = {1, 3, 5, 7};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = ks[trial % 4];
    const std::size_t n = 1 + rng() % 2, cin = 1 + rng() % 4, cout = 1 + rng() % 4;
    const std::size_t h = k + rng() % (10 - k), w = k + rng() % (10 - k);
    const bool bias = trial % 3 == 0;
    const auto x = random_tensor({n, cin, h, w}, 500 + trial);
    const auto p = random_conv(ConvKind::conv, cin, cout, k, bias, 900 + trial);
    const auto y = conv_forward(x, p);
    const auto ref = naive_conv(x, p.weight, p.bias);
    EXPECT_LT(relative_error(y.data(), ref.data()), 1e-6) << "trial " << trial << " k=" << k;

    const auto t = random_conv(ConvKind::transposed, cin, cout, k, bias, 1300 + trial);
    const auto ty = tconv_forward(x, t);
    const auto tref = naive_tconv(x, t.weight, t.bias);
    EXPECT_LT(relative_error(ty.data(), tref.data()), 1e-6) << "trial " << trial << " k=" << k;
  }
}

TEST(Conv, TransposedEqualsFlippedSwappedConvExactly) {
  for (std::size_t k : {1, 3, 5, 7}) {
    ConvParams<double> t(ConvKind::transposed, 3, 2, k, true);
    auto w = testing::integer_tensor(t.weight.shape(), k);
    std::copy(w.data().begin(), w.data().end(), t.weight.data().begin());
    t.bias = {1.0, -3.0};
    const auto x = testing::integer_tensor({2, 3, 9, 8}, 40 + k);
    const auto c = as_equivalent_conv(t);
    EXPECT_EQ(c.kind, ConvKind::conv);
    EXPECT_EQ(tconv_forward(x, t), conv_forward(x, c)) << "k=" << k;
    // Hand-built equivalent, independent of as_equivalent_conv.
    ConvParams<double> manual(ConvKind::conv, 3, 2, k, true);
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b)
            manual.weight.at(o, i, a, b) = t.weight.at(i, o, k - 1 - a, k - 1 - b);
    manual.bias = t.bias;
    EXPECT_EQ(tconv_forward(x, t), conv_forward(x, manual)) << "k=" << k;
  }
}

TEST(Conv, TransposedScalarAndZeroKernels) {
  const auto x = random_tensor({1, 1, 3, 4}, 8);
  ConvParams<double> s(ConvKind::transposed, 1, 1, 1, true);
  s.weight.fill(2.5);
  s.bias = {0.75};
  const auto y = tconv_forward(x, s);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], 2.5 * x[i] + 0.75);

  ConvParams<double> z(ConvKind::transposed, 1, 1, 3, true);
  const auto zero = tconv_forward(x, z);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv, BackwardZeroAndIdentityCases) {
  const auto x = random_tensor({1, 2, 5, 5}, 11);
  const auto p = random_conv(ConvKind::conv, 2, 3, 3, true, 12);
  const auto r = conv_backward(x, p, Tensor4<double>(Shape{1, 3, 5, 5}));
  for (double v : r.grad_x.data()) EXPECT_EQ(v, 0.0);
  for (double v : r.grads.weight.data()) EXPECT_EQ(v, 0.0);
  for (double v : r.grads.bias) EXPECT_EQ(v, 0.0);

  ConvParams<double> id(ConvKind::conv, 1, 1, 1, false);
  id.weight.fill(1.0);
  const auto g = random_tensor({2, 1, 4, 4}, 13);
  EXPECT_EQ(conv_backward(random_tensor({2, 1, 4, 4}, 14), id, g).grad_x, g);
}

TEST(Conv, BackwardIsLinearInGradOut) {
  const auto x = random_tensor({2, 2, 6, 5}, 21);
  const auto p = random_conv(ConvKind::conv, 2, 3, 5, true, 22);
  const auto g = random_tensor({2, 3, 6, 5}, 23);
  Tensor4<double> g2 = g;
  g2 *= 4.0;  // power of two keeps the comparison exact
  const auto a = conv_backward(x, p, g);
  const auto b = conv_backward(x, p, g2);
  for (std::size_t i = 0; i < a.grad_x.size(); ++i) EXPECT_EQ(4.0 * a.grad_x[i], b.grad_x[i]);
  for (std::size_t i = 0; i < a.grads.weight.size(); ++i)
    EXPECT_EQ(4.0 * a.grads.weight[i], b.grads.weight[i]);
}

void check_conv_gradients(ConvKind kind, std::size_t k) {
  auto x = random_tensor({1, 2, 5, 5}, 31 + k);
  auto p = random_conv(kind, 2, 3, k, true, 32 + k);
  const auto r = random_tensor({1, 3, 5, 5}, 33 + k);
  const auto loss = [&] { return probe(apply_conv(x, p), r); };
  const auto analytic = apply_conv_backward(x, p, r);

  EXPECT_LT(relative_error(analytic.grad_x.data(), numeric_gradient(x.data(), loss)), 1e-6);
  EXPECT_LT(relative_error(analytic.grads.weight.data(), numeric_gradient(p.weight.data(), loss)),
            1e-6);
  EXPECT_LT(relative_error(analytic.grads.bias, numeric_gradient(p.bias, loss)), 1e-6);
}

TEST(Conv, GradientsMatchFiniteDifferences) {
  for (std::size_t k : {1, 3, 5}) check_conv_gradients(ConvKind::conv, k);
}

TEST(Conv, TransposedGradientsMatchFiniteDifferences) {
  for (std::size_t k : {1, 3, 5}) check_conv_gradients(ConvKind::transposed, k);
}

TEST(Conv, SpatialDimsArePreserved) {
  for (std::size_t k : {1, 3, 5, 7})
    for (std::size_t h : {7, 8, 11}) {
      const auto x = random_tensor({1, 2, h, h + 1}, h);
      ConvParams<double> p(ConvKind::conv, 2, 3, k, false);
      EXPECT_EQ(conv_forward(x, p).shape(), (Shape{1, 3, h, h + 1}));
      ConvParams<double> t(ConvKind::transposed, 2, 3, k, false);
      EXPECT_EQ(tconv_forward(x, t).shape(), (Shape{1, 3, h, h + 1}));
    }
}

TEST(Conv, ResultsIndependentOfThreadCount) {
  const auto x = random_tensor<float>({9, 3, 12, 10}, 41);
  ConvParams<float> p(ConvKind::conv, 3, 4, 3, true);
  testing::fill_random<float>(p.weight.data(), 42);
  const auto g = random_tensor<float>({9, 4, 12, 10}, 43);
  const std::size_t saved = thread_count();
  set_thread_count(1);
  const auto y1 = conv_forward(x, p);
  const auto b1 = conv_backward(x, p, g);
  set_thread_count(3);
  const auto y3 = conv_forward(x, p);
  const auto b3 = conv_backward(x, p, g);
  set_thread_count(saved);
  EXPECT_EQ(y1, y3);
  EXPECT_EQ(b1.grad_x, b3.grad_x);
  EXPECT_EQ(b1.grads.weight, b3.grads.weight);
  EXPECT_EQ(b1.grads.bias, b3.grads.bias);
}

}  // namespace
}  // namespace rcnet
