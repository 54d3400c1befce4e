#pragma once

// Layer primitives with forward and reverse-mode backward passes.
//
// All convolutions run at stride 1 with zero "same" padding of (k-1)/2, so
// spatial dimensions are preserved end to end. conv_forward computes a
// cross-correlation (no kernel flip):
//
//   y[n,o,i,j] = b[o] + sum_{c,a,b} W[o,c,a,b] * x[n,c,i+a-p,j+b-p]
//
// Transposed convolution is the adjoint of that map. Its weights are stored
// as (in_channels, out_channels, k, k), so tconv_forward(x, W) equals
// conv_forward(x, W') with W'[o,c,a,b] = W[c,o,k-1-a,k-1-b].

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "rcnet/tensor.hpp"

namespace rcnet {

enum class ConvKind : std::uint8_t { conv, transposed };

template <typename T>
struct ConvParams {
  ConvKind kind = ConvKind::conv;
  /// conv: (out, in, k, k); transposed: (in, out, k, k).
  Tensor4<T> weight;
  /// Empty when the layer has no bias.
  std::vector<T> bias;

  ConvParams(ConvKind kind, std::size_t in_channels, std::size_t out_channels, std::size_t k,
             bool with_bias);

  std::size_t kernel() const { return weight.shape().h; }
  std::size_t pad() const { return (kernel() - 1) / 2; }
  std::size_t in_channels() const {
    return kind == ConvKind::conv ? weight.shape().c : weight.shape().n;
  }
  std::size_t out_channels() const {
    return kind == ConvKind::conv ? weight.shape().n : weight.shape().c;
  }
  bool has_bias() const { return !bias.empty(); }
  std::size_t param_count() const { return weight.size() + bias.size(); }
};

template <typename T>
struct ConvGrads {
  Tensor4<T> weight;
  std::vector<T> bias;
};

template <typename T>
struct ConvBackward {
  Tensor4<T> grad_x;
  ConvGrads<T> grads;
};

template <typename T>
Tensor4<T> conv_forward(const Tensor4<T>& x, const ConvParams<T>& p);
template <typename T>
ConvBackward<T> conv_backward(const Tensor4<T>& x, const ConvParams<T>& p,
                              const Tensor4<T>& grad_out);

template <typename T>
Tensor4<T> tconv_forward(const Tensor4<T>& x, const ConvParams<T>& p);
template <typename T>
ConvBackward<T> tconv_backward(const Tensor4<T>& x, const ConvParams<T>& p,
                               const Tensor4<T>& grad_out);

/// Dispatches on p.kind.
template <typename T>
Tensor4<T> apply_conv(const Tensor4<T>& x, const ConvParams<T>& p) {
  return p.kind == ConvKind::conv ? conv_forward(x, p) : tconv_forward(x, p);
}
template <typename T>
ConvBackward<T> apply_conv_backward(const Tensor4<T>& x, const ConvParams<T>& p,
                                    const Tensor4<T>& grad_out) {
  return p.kind == ConvKind::conv ? conv_backward(x, p, grad_out)
                                  : tconv_backward(x, p, grad_out);
}

/// Rewrites transposed-convolution weights as the equivalent ordinary
/// convolution: spatial flip plus in/out channel swap.
template <typename T>
ConvParams<T> as_equivalent_conv(const ConvParams<T>& transposed);

enum class BNMode : std::uint8_t { train, eval };

template <typename T>
struct BNParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T epsilon = T(1e-5);
  /// Weight of the current batch in the running-statistics update.
  T momentum = T(0.1);
  BNMode mode = BNMode::train;

  explicit BNParams(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
};

/// Batch statistics retained by a train-mode forward pass.
template <typename T>
struct BNCache {
  Tensor4<T> normalized;
  std::vector<T> inv_std;
};

/// Train mode normalises with batch statistics over (n, h, w), updates the
/// running statistics and, when cache is non-null, stores what the
/// backward pass needs. Eval mode uses the running statistics only.
template <typename T>
Tensor4<T> bn_forward(const Tensor4<T>& x, BNParams<T>& p, BNCache<T>* cache = nullptr);

/// Eval-mode normalisation; never touches p.
template <typename T>
Tensor4<T> bn_infer(const Tensor4<T>& x, const BNParams<T>& p);

template <typename T>
struct BNBackward {
  Tensor4<T> grad_x;
  std::vector<T> grad_gamma;
  std::vector<T> grad_beta;
};

/// Full batch-norm gradient, including the dependence of the batch mean
/// and variance on x. Throws if no train-mode cache is supplied.
template <typename T>
BNBackward<T> bn_backward(const BNParams<T>& p, const std::optional<BNCache<T>>& cache,
                          const Tensor4<T>& grad_out);

template <typename T>
struct PReLUParams {
  /// Per-channel negative slope.
  std::vector<T> slope;

  explicit PReLUParams(std::size_t channels, T init = T(0.25)) : slope(channels, init) {}
  std::size_t channels() const { return slope.size(); }
};

template <typename T>
struct PReLUBackward {
  Tensor4<T> grad_x;
  std::vector<T> grad_slope;
};

template <typename T>
Tensor4<T> prelu_forward(const Tensor4<T>& x, const PReLUParams<T>& p);
template <typename T>
PReLUBackward<T> prelu_backward(const Tensor4<T>& x, const PReLUParams<T>& p,
                                const Tensor4<T>& grad_out);

/// Standard deviation of the He-normal initialisation, sqrt(2 / fan_in).
double he_std(std::size_t fan_in);

/// Draws conv weights from Normal(0, sqrt(2 / (in_channels * k^2))) and
/// zeroes the bias.
template <typename T>
void he_init(ConvParams<T>& p, std::mt19937_64& rng);

/// Builds and initialises a convolution layer from a fresh generator
/// seeded with `seed`.
template <typename T>
ConvParams<T> make_conv(ConvKind kind, std::size_t in_channels, std::size_t out_channels,
                        std::size_t k, bool with_bias, std::uint64_t seed);

}  // namespace rcnet
