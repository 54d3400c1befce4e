#include <Eigen/Core>
#include <cmath>

#include "rcnet/layers.hpp"

namespace rcnet {
namespace {

template <typename T>
void check_channels(const Tensor4<T>& x, std::size_t channels, const char* op) {
  if (x.shape().c != channels)
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.shape().c) +
                     " channels, layer expects " + std::to_string(channels));
}

template <typename T>
using ArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
ArrayMap<T> as_array(std::span<const T> s) {
  return ArrayMap<T>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace

template <typename T>
BNParams<T>::BNParams(std::size_t channels)
    : gamma(channels, T(1)),
      beta(channels, T(0)),
      running_mean(channels, T(0)),
      running_var(channels, T(1)) {}

template <typename T>
Tensor4<T> bn_infer(const Tensor4<T>& x, const BNParams<T>& p) {
  check_channels(x, p.channels(), "bn_forward");
  Tensor4<T> y(x.shape());
  for (std::size_t c = 0; c < p.channels(); ++c) {
    const T scale = p.gamma[c] / std::sqrt(p.running_var[c] + p.epsilon);
    const T mean = p.running_mean[c];
    for (std::size_t n = 0; n < x.shape().n; ++n) {
      auto in = x.plane(n, c);
      auto out = y.plane(n, c);
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - mean) * scale + p.beta[c];
    }
  }
  return y;
}

template <typename T>
Tensor4<T> bn_forward(const Tensor4<T>& x, BNParams<T>& p, BNCache<T>* cache) {
  if (p.mode == BNMode::eval) return bn_infer(x, p);
  check_channels(x, p.channels(), "bn_forward");
  const std::size_t count = x.shape().n * x.shape().plane();
  if (count < 2)
    throw ShapeError("bn_forward: train mode needs at least two values per channel, got " +
                     x.shape().to_string());

  Tensor4<T> y(x.shape());
  Tensor4<T> normalized(x.shape());
  std::vector<T> inv_std(p.channels());
  for (std::size_t c = 0; c < p.channels(); ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < x.shape().n; ++n) sum += as_array(x.plane(n, c)).sum();
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < x.shape().n; ++n)
      sq += (as_array(x.plane(n, c)) - static_cast<T>(mean)).square().sum();
    const double var = sq / static_cast<double>(count);
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(p.epsilon));
    inv_std[c] = static_cast<T>(istd);
    for (std::size_t n = 0; n < x.shape().n; ++n) {
      const T* in = x.plane(n, c).data();
      T* xh = normalized.plane(n, c).data();
      T* out = y.plane(n, c).data();
      const T tm = static_cast<T>(mean), ts = static_cast<T>(istd), g = p.gamma[c], b = p.beta[c];
      for (std::size_t i = 0; i < x.shape().plane(); ++i) {
        xh[i] = (in[i] - tm) * ts;
        out[i] = g * xh[i] + b;
      }
    }
    // Running variance tracks the unbiased batch estimate.
    const double unbiased = sq / static_cast<double>(count - 1);
    p.running_mean[c] = static_cast<T>((1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean);
    p.running_var[c] =
        static_cast<T>((1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased);
  }
  if (cache != nullptr) *cache = BNCache<T>{std::move(normalized), std::move(inv_std)};
  return y;
}

template <typename T>
BNBackward<T> bn_backward(const BNParams<T>& p, const std::optional<BNCache<T>>& cache,
                          const Tensor4<T>& grad_out) {
  if (!cache)
    throw Error("bn_backward: no cached batch statistics (forward was not run in train mode)");
  const Tensor4<T>& xhat = cache->normalized;
  require_same_shape(grad_out.shape(), xhat.shape(), "bn_backward");
  const std::size_t count = grad_out.shape().n * grad_out.shape().plane();
  BNBackward<T> r{Tensor4<T>(grad_out.shape()), std::vector<T>(p.channels(), T(0)),
                  std::vector<T>(p.channels(), T(0))};
  for (std::size_t c = 0; c < p.channels(); ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < grad_out.shape().n; ++n) {
      const auto dy = as_array(grad_out.plane(n, c));
      sum_dy += dy.sum();
      sum_dy_xhat += (dy * as_array(xhat.plane(n, c))).sum();
    }
    r.grad_beta[c] = static_cast<T>(sum_dy);
    r.grad_gamma[c] = static_cast<T>(sum_dy_xhat);
    // dx = gamma * inv_std / M * (M*dy - sum(dy) - xhat * sum(dy * xhat))
    const double m = static_cast<double>(count);
    const double scale = static_cast<double>(p.gamma[c]) * cache->inv_std[c] / m;
    const T ts = static_cast<T>(scale), tm = static_cast<T>(m), tsum = static_cast<T>(sum_dy),
            tdot = static_cast<T>(sum_dy_xhat);
    for (std::size_t n = 0; n < grad_out.shape().n; ++n) {
      const T* dy = grad_out.plane(n, c).data();
      const T* xh = xhat.plane(n, c).data();
      T* dx = r.grad_x.plane(n, c).data();
      for (std::size_t i = 0; i < grad_out.shape().plane(); ++i)
        dx[i] = ts * (tm * dy[i] - tsum - xh[i] * tdot);
    }
  }
  return r;
}

#define RCNET_INSTANTIATE_BN(T)                                                         \
  template struct BNParams<T>;                                                          \
  template Tensor4<T> bn_infer(const Tensor4<T>&, const BNParams<T>&);                  \
  template Tensor4<T> bn_forward(const Tensor4<T>&, BNParams<T>&, BNCache<T>*);         \
  template BNBackward<T> bn_backward(const BNParams<T>&, const std::optional<BNCache<T>>&, \
                                     const Tensor4<T>&);

RCNET_INSTANTIATE_BN(float)
RCNET_INSTANTIATE_BN(double)

}  // namespace rcnet
