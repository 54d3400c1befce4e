#include <Eigen/Core>
#include <algorithm>
#include <cstring>

#include "rcnet/layers.hpp"
#include "rcnet/parallel.hpp"

namespace rcnet {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Weight gradients are accumulated in this many fixed sample groups and then
// reduced in group order, so the result is independent of the thread count.
constexpr std::size_t kGradGroups = 8;

// Valid output column range [lo, hi) for horizontal tap offset `shift`
// (source column j + shift must lie in [0, w)).
inline void valid_range(std::ptrdiff_t shift, std::size_t w, std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t sw = static_cast<std::ptrdiff_t>(w);
  lo = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(-shift, 0, sw));
  hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(sw - shift, 0, sw));
}

// col[(c*k + a)*k + b][i*w + j] = src[c][i + a - p][j + b - p], zero outside.
template <typename T>
void im2col(std::span<const T> src, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t k, T* col) {
  const std::ptrdiff_t p = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = src.data() + c * hw;
    for (std::size_t a = 0; a < k; ++a) {
      const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(a) - p;
      for (std::size_t b = 0; b < k; ++b) {
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(b) - p;
        T* row = col + ((c * k + a) * k + b) * hw;
        std::size_t j0, j1;
        valid_range(dx, w, j0, j1);
        for (std::size_t i = 0; i < h; ++i) {
          T* out = row + i * w;
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + dy;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h) || j0 >= j1) {
            std::fill(out, out + w, T(0));
            continue;
          }
          std::fill(out, out + j0, T(0));
          std::memcpy(out + j0, plane + static_cast<std::size_t>(si) * w + j0 + dx,
                      (j1 - j0) * sizeof(T));
          std::fill(out + j1, out + w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: dst[c][i + a - p][j + b - p] += col[(c*k + a)*k + b][i*w + j].
template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::span<T> dst) {
  const std::ptrdiff_t p = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::size_t hw = h * w;
  std::fill(dst.begin(), dst.end(), T(0));
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = dst.data() + c * hw;
    for (std::size_t a = 0; a < k; ++a) {
      const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(a) - p;
      for (std::size_t b = 0; b < k; ++b) {
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(b) - p;
        const T* row = col + ((c * k + a) * k + b) * hw;
        std::size_t j0, j1;
        valid_range(dx, w, j0, j1);
        for (std::size_t i = 0; i < h; ++i) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + dy;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
          T* __restrict out = plane + static_cast<std::size_t>(si) * w;
          const T* __restrict in = row + i * w;
          for (std::size_t j = j0; j < j1; ++j) out[j + dx] += in[j];
        }
      }
    }
  }
}

template <typename T>
void check_input(const Tensor4<T>& x, const ConvParams<T>& p, const char* op) {
  if (p.kernel() % 2 == 0)
    throw ShapeError(std::string(op) + ": kernel size must be odd, got " +
                     std::to_string(p.kernel()));
  if (x.shape().c != p.in_channels())
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.shape().c) +
                     " channels, layer expects " + std::to_string(p.in_channels()));
}

template <typename T>
void check_grad(const Tensor4<T>& x, const ConvParams<T>& p, const Tensor4<T>& grad_out,
                const char* op) {
  check_input(x, p, op);
  const Shape expected{x.shape().n, p.out_channels(), x.shape().h, x.shape().w};
  require_same_shape(grad_out.shape(), expected, op);
}

template <typename T>
void add_bias(Tensor4<T>& y, const std::vector<T>& bias, std::size_t n) {
  if (bias.empty()) return;
  for (std::size_t o = 0; o < bias.size(); ++o)
    for (auto& v : y.plane(n, o)) v += bias[o];
}

struct GroupRange {
  std::size_t begin, end;
};

inline GroupRange group_range(std::size_t group, std::size_t groups, std::size_t n) {
  const std::size_t per = (n + groups - 1) / groups;
  return {std::min(n, group * per), std::min(n, (group + 1) * per)};
}

template <typename T>
ConvGrads<T> reduce_groups(std::vector<RowMat<T>>& weight_parts,
                           std::vector<std::vector<T>>& bias_parts, const ConvParams<T>& p) {
  ConvGrads<T> g{Tensor4<T>(p.weight.shape()), std::vector<T>(p.bias.size(), T(0))};
  MatMap<T> dw(g.weight.data().data(), weight_parts[0].rows(), weight_parts[0].cols());
  for (std::size_t i = 0; i < weight_parts.size(); ++i) {
    dw += weight_parts[i];
    for (std::size_t o = 0; o < g.bias.size(); ++o) g.bias[o] += bias_parts[i][o];
  }
  return g;
}

}  // namespace

template <typename T>
ConvParams<T>::ConvParams(ConvKind kind_, std::size_t in_channels, std::size_t out_channels,
                          std::size_t k, bool with_bias)
    : kind(kind_),
      weight(kind_ == ConvKind::conv ? Shape{out_channels, in_channels, k, k}
                                     : Shape{in_channels, out_channels, k, k}),
      bias(with_bias ? out_channels : 0, T(0)) {
  if (k % 2 == 0) throw ShapeError("kernel size must be odd, got " + std::to_string(k));
}

template <typename T>
Tensor4<T> conv_forward(const Tensor4<T>& x, const ConvParams<T>& p) {
  check_input(x, p, "conv_forward");
  const auto [n, cin, h, w] = x.shape();
  const std::size_t cout = p.out_channels(), k = p.kernel(), hw = h * w, rows = cin * k * k;
  Tensor4<T> y(Shape{n, cout, h, w});
  ConstMatMap<T> wmat(p.weight.data().data(), cout, rows);
  parallel_for(n, [&](std::size_t s) {
    MatMap<T> out(y.sample(s).data(), cout, hw);
    if (k == 1) {
      out.noalias() = wmat * ConstMatMap<T>(x.sample(s).data(), cin, hw);
    } else {
      RowMat<T> col(rows, hw);
      im2col(x.sample(s), cin, h, w, k, col.data());
      out.noalias() = wmat * col;
    }
    add_bias(y, p.bias, s);
  });
  return y;
}

template <typename T>
ConvBackward<T> conv_backward(const Tensor4<T>& x, const ConvParams<T>& p,
                              const Tensor4<T>& grad_out) {
  check_grad(x, p, grad_out, "conv_backward");
  const auto [n, cin, h, w] = x.shape();
  const std::size_t cout = p.out_channels(), k = p.kernel(), hw = h * w, rows = cin * k * k;
  const std::size_t groups = std::min(n, kGradGroups);
  Tensor4<T> grad_x(x.shape());
  ConstMatMap<T> wmat(p.weight.data().data(), cout, rows);
  std::vector<RowMat<T>> dw(groups, RowMat<T>::Zero(cout, rows));
  std::vector<std::vector<T>> db(groups, std::vector<T>(p.bias.size(), T(0)));
  parallel_for(groups, [&](std::size_t g) {
    const auto [begin, end] = group_range(g, groups, n);
    RowMat<T> col(k == 1 ? 0 : rows, hw);
    RowMat<T> dcol(k == 1 ? 0 : rows, hw);
    for (std::size_t s = begin; s < end; ++s) {
      ConstMatMap<T> dy(grad_out.sample(s).data(), cout, hw);
      if (k == 1) {
        ConstMatMap<T> xs(x.sample(s).data(), cin, hw);
        dw[g].noalias() += dy * xs.transpose();
        MatMap<T>(grad_x.sample(s).data(), cin, hw).noalias() = wmat.transpose() * dy;
      } else {
        im2col(x.sample(s), cin, h, w, k, col.data());
        dw[g].noalias() += dy * col.transpose();
        dcol.noalias() = wmat.transpose() * dy;
        col2im(dcol.data(), cin, h, w, k, grad_x.sample(s));
      }
      for (std::size_t o = 0; o < db[g].size(); ++o) db[g][o] += dy.row(o).sum();
    }
  });
  return {std::move(grad_x), reduce_groups(dw, db, p)};
}

template <typename T>
Tensor4<T> tconv_forward(const Tensor4<T>& x, const ConvParams<T>& p) {
  check_input(x, p, "tconv_forward");
  const auto [n, cin, h, w] = x.shape();
  const std::size_t cout = p.out_channels(), k = p.kernel(), hw = h * w, rows = cout * k * k;
  Tensor4<T> y(Shape{n, cout, h, w});
  ConstMatMap<T> wmat(p.weight.data().data(), cin, rows);
  parallel_for(n, [&](std::size_t s) {
    ConstMatMap<T> xs(x.sample(s).data(), cin, hw);
    if (k == 1) {
      MatMap<T>(y.sample(s).data(), cout, hw).noalias() = wmat.transpose() * xs;
    } else {
      RowMat<T> col = wmat.transpose() * xs;
      col2im(col.data(), cout, h, w, k, y.sample(s));
    }
    add_bias(y, p.bias, s);
  });
  return y;
}

template <typename T>
ConvBackward<T> tconv_backward(const Tensor4<T>& x, const ConvParams<T>& p,
                               const Tensor4<T>& grad_out) {
  check_grad(x, p, grad_out, "tconv_backward");
  const auto [n, cin, h, w] = x.shape();
  const std::size_t cout = p.out_channels(), k = p.kernel(), hw = h * w, rows = cout * k * k;
  const std::size_t groups = std::min(n, kGradGroups);
  Tensor4<T> grad_x(x.shape());
  ConstMatMap<T> wmat(p.weight.data().data(), cin, rows);
  std::vector<RowMat<T>> dw(groups, RowMat<T>::Zero(cin, rows));
  std::vector<std::vector<T>> db(groups, std::vector<T>(p.bias.size(), T(0)));
  parallel_for(groups, [&](std::size_t g) {
    const auto [begin, end] = group_range(g, groups, n);
    RowMat<T> col(k == 1 ? 0 : rows, hw);
    for (std::size_t s = begin; s < end; ++s) {
      ConstMatMap<T> xs(x.sample(s).data(), cin, hw);
      ConstMatMap<T> dy(grad_out.sample(s).data(), cout, hw);
      MatMap<T> dx(grad_x.sample(s).data(), cin, hw);
      if (k == 1) {
        dw[g].noalias() += xs * dy.transpose();
        dx.noalias() = wmat * dy;
      } else {
        im2col(grad_out.sample(s), cout, h, w, k, col.data());
        dw[g].noalias() += xs * col.transpose();
        dx.noalias() = wmat * col;
      }
      for (std::size_t o = 0; o < db[g].size(); ++o) db[g][o] += dy.row(o).sum();
    }
  });
  return {std::move(grad_x), reduce_groups(dw, db, p)};
}

template <typename T>
ConvParams<T> as_equivalent_conv(const ConvParams<T>& t) {
  if (t.kind != ConvKind::transposed)
    throw ShapeError("as_equivalent_conv expects transposed-convolution weights");
  const std::size_t cin = t.in_channels(), cout = t.out_channels(), k = t.kernel();
  ConvParams<T> c(ConvKind::conv, cin, cout, k, t.has_bias());
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < cin; ++i)
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
          c.weight.at(o, i, a, b) = t.weight.at(i, o, k - 1 - a, k - 1 - b);
  c.bias = t.bias;
  return c;
}

#define RCNET_INSTANTIATE_CONV(T)                                                        \
  template struct ConvParams<T>;                                                         \
  template Tensor4<T> conv_forward(const Tensor4<T>&, const ConvParams<T>&);             \
  template ConvBackward<T> conv_backward(const Tensor4<T>&, const ConvParams<T>&,        \
                                         const Tensor4<T>&);                             \
  template Tensor4<T> tconv_forward(const Tensor4<T>&, const ConvParams<T>&);            \
  template ConvBackward<T> tconv_backward(const Tensor4<T>&, const ConvParams<T>&,       \
                                          const Tensor4<T>&);                            \
  template ConvParams<T> as_equivalent_conv(const ConvParams<T>&);

RCNET_INSTANTIATE_CONV(float)
RCNET_INSTANTIATE_CONV(double)

}  // namespace rcnet
