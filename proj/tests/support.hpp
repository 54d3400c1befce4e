#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "rcnet/layers.hpp"
#include "rcnet/model.hpp"

namespace rcnet::testing {

template <typename T = double>
Tensor4<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor4<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

/// Integer values in [lo, hi], so sums of products are exact in double.
inline Tensor4<double> integer_tensor(Shape shape, std::uint64_t seed, int lo = -4, int hi = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(lo, hi);
  Tensor4<double> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

template <typename T>
void fill_random(std::span<T> values, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : values) v = static_cast<T>(dist(rng));
}

/// Direct cross-correlation with zero padding, written from the definition.
inline Tensor4<double> naive_conv(const Tensor4<double>& x, const Tensor4<double>& w,
                                  const std::vector<double>& bias) {
  const auto [n, cin, h, wd] = x.shape();
  const std::size_t cout = w.shape().n, k = w.shape().h;
  const long p = static_cast<long>(k / 2);
  Tensor4<double> y(Shape{n, cout, h, wd});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < wd; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b) {
                const long si = static_cast<long>(i + a) - p;
                const long sj = static_cast<long>(j + b) - p;
                if (si < 0 || sj < 0 || si >= static_cast<long>(h) || sj >= static_cast<long>(wd))
                  continue;
                acc += w.at(o, c, a, b) * x.at(s, c, static_cast<std::size_t>(si),
                                                static_cast<std::size_t>(sj));
              }
          y.at(s, o, i, j) = acc;
        }
  return y;
}

/// Transposed convolution in scatter form: every input pixel spreads
/// W[c, o, :, :] around its own location. Weights are (in, out, k, k).
inline Tensor4<double> naive_tconv(const Tensor4<double>& x, const Tensor4<double>& w,
                                   const std::vector<double>& bias) {
  const auto [n, cin, h, wd] = x.shape();
  const std::size_t cout = w.shape().c, k = w.shape().h;
  const long p = static_cast<long>(k / 2);
  Tensor4<double> y(Shape{n, cout, h, wd});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < cout; ++o)
      for (auto& v : y.plane(s, o)) v = bias.empty() ? 0.0 : bias[o];
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < wd; ++j)
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b) {
                const long ti = static_cast<long>(i + a) - p;
                const long tj = static_cast<long>(j + b) - p;
                if (ti < 0 || tj < 0 || ti >= static_cast<long>(h) || tj >= static_cast<long>(wd))
                  continue;
                y.at(s, o, static_cast<std::size_t>(ti), static_cast<std::size_t>(tj)) +=
                    w.at(c, o, a, b) * x.at(s, c, i, j);
              }
  return y;
}

/// ||a - b|| / max(||a||, ||b||), with a floor so all-zero pairs compare as 0.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

/// Central differences of a scalar function with respect to every entry
/// of `values`, step 1e-5 * (|x| + 1).
inline std::vector<double> numeric_gradient(std::span<double> values,
                                            const std::function<double()>& f) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = values[i];
    const double h = 1e-5 * (std::abs(x) + 1.0);
    values[i] = x + h;
    const double up = f();
    values[i] = x - h;
    const double down = f();
    values[i] = x;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Sum of out .* r: a scalar probe whose gradient wrt out is r.
inline double probe(const Tensor4<double>& out, const Tensor4<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
  return s;
}

/// Smallest valid network for whole-graph gradient checks.
inline NetConfig tiny_config() {
  NetConfig c;
  c.n_dense = 8;
  c.k_dense = 5;
  c.num_blocks = 1;
  c.block = {4, 5, 3};
  c.desk_scale = true;
  return c;
}

}  // namespace rcnet::testing
