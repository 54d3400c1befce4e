#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcnet/layers.hpp"

namespace rcnet {

enum class NetKind : std::uint8_t { rcnet, win };
enum class Activation : std::uint8_t { prelu, none };

std::string to_string(NetKind kind);

/// Filter sizes and width of one regulated block.
struct RCBlockSpec {
  std::size_t width = 64;
  std::size_t k_large = 7;
  std::size_t k_small = 3;
  friend bool operator==(const RCBlockSpec&, const RCBlockSpec&) = default;
};

/// Declarative description of an RC-Net, WIN baseline or ablation variant.
///
/// Full-size RC-Nets need k_dense >= 7 and n_dense >= 128, and each block's
/// large filter must satisfy width >= n_dense / 2 and k_large >= k_dense.
/// desk_scale turns those bounds into warnings so shrunken networks can be
/// trained on a CPU.
struct NetConfig {
  NetKind kind = NetKind::rcnet;
  std::size_t in_channels = 1;
  std::size_t n_dense = 128;
  std::size_t k_dense = 7;
  std::size_t num_blocks = 4;
  RCBlockSpec block;
  bool use_bn = true;
  bool remove_second_dense = false;
  bool desk_scale = false;

  static NetConfig rcnet_default() { return {}; }
  static NetConfig win_default() {
    NetConfig c;
    c.kind = NetKind::win;
    return c;
  }

  /// Throws ConfigError on a hard violation; returns the warnings that
  /// desk_scale downgraded.
  std::vector<std::string> validate() const;
  /// Largest filter size anywhere in the network.
  std::size_t largest_filter() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct CompositeSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t k = 3;
  bool use_bn = true;
  Activation activation = Activation::prelu;
};

enum class UnitRole : std::uint8_t {
  dense,
  shrink,
  block_reduce,
  block_large,
  block_regulate,
  block_small,
  expand
};

enum class SkipKind : std::uint8_t { in_block, block, global };

std::string to_string(SkipKind kind);

/// Identity connection. Activation index 0 is the network input and index
/// i + 1 is the output of unit i. The source activation is added to the
/// output of unit `target`; target == unit count denotes the final layer.
struct Skip {
  SkipKind kind;
  std::size_t source;
  std::size_t target;
};

/// Conv -> BN -> PReLU, with the learned state, its gradients and the
/// caches of the last train-mode forward pass.
template <typename T>
struct CompositeUnit {
  std::string name;
  UnitRole role;
  CompositeSpec spec;
  ConvParams<T> conv;
  std::optional<BNParams<T>> bn;
  std::optional<PReLUParams<T>> prelu;

  ConvGrads<T> conv_grad;
  std::vector<T> gamma_grad;
  std::vector<T> beta_grad;
  std::vector<T> slope_grad;

  std::optional<BNCache<T>> bn_cache;
  std::optional<Tensor4<T>> pre_activation;

  std::size_t param_count() const;
};

/// Mutable view of one learnable buffer and its gradient.
template <typename T>
struct ParamRef {
  std::string name;
  std::vector<std::size_t> dims;
  std::span<T> value;
  std::span<T> grad;
  bool weight_decay;
};

/// Named view of any persistent buffer (parameters and BN running stats).
template <typename T>
struct BufferRef {
  std::string name;
  std::vector<std::size_t> dims;
  std::span<T> value;
};

struct StructureRow {
  std::string name;
  std::string type;
  std::size_t k;
  std::size_t in_channels;
  std::size_t out_channels;
  bool bn;
  bool prelu;
  std::size_t params;
  std::string skips_in;
};

struct StructureReport {
  std::vector<StructureRow> rows;
  std::vector<Skip> skips;
  std::size_t total_params = 0;

  /// Fixed-width table followed by the skip list and total.
  std::string to_text() const;
};

enum class NetMode : std::uint8_t { train, eval };

template <typename T>
class Network {
 public:
  static Network build(const NetConfig& config, std::uint64_t seed);

  const NetConfig& config() const { return config_; }
  NetMode mode() const { return mode_; }
  void set_mode(NetMode mode);

  /// Train mode caches what backward() needs and updates BN running
  /// statistics; eval mode is equivalent to infer().
  Tensor4<T> forward(const Tensor4<T>& x);
  /// Eval-mode forward that never mutates the network.
  Tensor4<T> infer(const Tensor4<T>& x) const;
  /// Reverse pass for the last train-mode forward. Overwrites every
  /// parameter gradient and returns the gradient with respect to the input.
  Tensor4<T> backward(const Tensor4<T>& grad_out);

  std::size_t param_count() const;
  StructureReport summarize() const;

  std::vector<CompositeUnit<T>>& units() { return units_; }
  const std::vector<CompositeUnit<T>>& units() const { return units_; }
  ConvParams<T>& head() { return head_; }
  const ConvParams<T>& head() const { return head_; }
  const std::vector<Skip>& skips() const { return skips_; }
  std::size_t layer_count() const { return units_.size() + 1; }

  /// Learnable buffers in a fixed order.
  std::vector<ParamRef<T>> parameters();
  /// Every persisted buffer, parameters first.
  std::vector<BufferRef<T>> buffers();

  /// Activations cached by the last train-mode forward: index 0 is the
  /// input, i + 1 the output of unit i after its skip additions.
  const std::vector<Tensor4<T>>& activations() const { return activations_; }

  /// Name of activation index i ("input" or the producing unit's name).
  std::string activation_name(std::size_t index) const;

 private:
  Network(NetConfig config, ConvParams<T> head);
  void check_input(const Tensor4<T>& x) const;

  NetConfig config_;
  std::vector<CompositeUnit<T>> units_;
  ConvParams<T> head_;
  ConvGrads<T> head_grad_;
  std::vector<Skip> skips_;
  NetMode mode_ = NetMode::train;
  std::vector<Tensor4<T>> activations_;
  std::optional<Tensor4<T>> input_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace rcnet
