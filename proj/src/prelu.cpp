#include <Eigen/Core>
#include <cmath>

#include "rcnet/layers.hpp"

namespace rcnet {
namespace {

template <typename T>
void check_channels(const Tensor4<T>& x, const PReLUParams<T>& p, const char* op) {
  if (x.shape().c != p.channels())
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.shape().c) +
                     " channels, layer expects " + std::to_string(p.channels()));
}

}  // namespace

template <typename T>
Tensor4<T> prelu_forward(const Tensor4<T>& x, const PReLUParams<T>& p) {
  check_channels(x, p, "prelu_forward");
  Tensor4<T> y(x.shape());
  for (std::size_t n = 0; n < x.shape().n; ++n)
    for (std::size_t c = 0; c < p.channels(); ++c) {
      const T* in = x.plane(n, c).data();
      T* out = y.plane(n, c).data();
      const std::size_t m = x.shape().plane();
      const T a = p.slope[c];
      for (std::size_t i = 0; i < m; ++i) out[i] = in[i] >= T(0) ? in[i] : a * in[i];
    }
  return y;
}

template <typename T>
PReLUBackward<T> prelu_backward(const Tensor4<T>& x, const PReLUParams<T>& p,
                                const Tensor4<T>& grad_out) {
  check_channels(x, p, "prelu_backward");
  require_same_shape(grad_out.shape(), x.shape(), "prelu_backward");
  PReLUBackward<T> r{Tensor4<T>(x.shape()), std::vector<T>(p.channels(), T(0))};
  for (std::size_t c = 0; c < p.channels(); ++c) {
    double slope_grad = 0.0;
    const T a = p.slope[c];
    const std::size_t m = x.shape().plane();
    for (std::size_t n = 0; n < x.shape().n; ++n) {
      const T* in = x.plane(n, c).data();
      const T* dy = grad_out.plane(n, c).data();
      T* dx = r.grad_x.plane(n, c).data();
      for (std::size_t i = 0; i < m; ++i) dx[i] = in[i] >= T(0) ? dy[i] : a * dy[i];
      const auto ain = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(in, m);
      const auto ady = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(dy, m);
      slope_grad += static_cast<double>((ain.min(T(0)) * ady).sum());
    }
    r.grad_slope[c] = static_cast<T>(slope_grad);
  }
  return r;
}

#define RCNET_INSTANTIATE_PRELU(T)                                                        \
  template Tensor4<T> prelu_forward(const Tensor4<T>&, const PReLUParams<T>&);            \
  template PReLUBackward<T> prelu_backward(const Tensor4<T>&, const PReLUParams<T>&,      \
                                           const Tensor4<T>&);

RCNET_INSTANTIATE_PRELU(float)
RCNET_INSTANTIATE_PRELU(double)

}  // namespace rcnet
