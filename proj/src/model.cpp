#include "rcnet/model.hpp"

#include <algorithm>
#include <iomanip>
#include <random>
#include <sstream>

namespace rcnet {

std::string to_string(NetKind kind) { return kind == NetKind::rcnet ? "rcnet" : "win"; }

std::string to_string(SkipKind kind) {
  switch (kind) {
    case SkipKind::in_block: return "in-block";
    case SkipKind::block: return "block";
    case SkipKind::global: return "global";
  }
  return "?";
}

std::vector<std::string> NetConfig::validate() const {
  std::vector<std::string> warnings;
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  auto bound = [&](bool ok, const std::string& msg) {
    if (ok) return;
    if (!desk_scale) throw ConfigError(msg + " (set desk_scale to relax)");
    warnings.push_back(msg);
  };
  require(in_channels >= 1, "in_channels must be >= 1");
  require(n_dense >= 1, "n_dense must be >= 1");
  require(k_dense % 2 == 1, "k_dense must be odd, got " + std::to_string(k_dense));
  if (kind == NetKind::win) return warnings;

  require(num_blocks >= 1, "num_blocks must be >= 1");
  require(block.width >= 1, "block width must be >= 1");
  require(block.k_large % 2 == 1 && block.k_small % 2 == 1,
          "block filter sizes must be odd, got k_large=" + std::to_string(block.k_large) +
              " k_small=" + std::to_string(block.k_small));
  require(block.k_large > block.k_small && block.k_small >= 1,
          "block filters need k_large > k_small >= 1, got k_large=" +
              std::to_string(block.k_large) + " k_small=" + std::to_string(block.k_small));
  bound(k_dense >= 7, "dense filter size " + std::to_string(k_dense) + " is below 7");
  bound(n_dense >= 128, "dense filter count " + std::to_string(n_dense) + " is below 128");
  bound(2 * block.width >= n_dense, "block width " + std::to_string(block.width) +
                                        " is below n_dense/2 = " + std::to_string(n_dense / 2.0));
  bound(block.k_large >= k_dense, "large block filter " + std::to_string(block.k_large) +
                                      " is smaller than dense filter " + std::to_string(k_dense));
  return warnings;
}

std::size_t NetConfig::largest_filter() const {
  std::size_t k = std::max<std::size_t>(k_dense, 3);
  if (kind == NetKind::rcnet) k = std::max(k, block.k_large);
  return k;
}

template <typename T>
std::size_t CompositeUnit<T>::param_count() const {
  std::size_t total = conv.param_count();
  if (bn) total += 2 * bn->channels();
  if (prelu) total += prelu->channels();
  return total;
}

namespace {

template <typename T>
CompositeUnit<T> make_unit(std::string name, UnitRole role, const CompositeSpec& spec,
                           std::mt19937_64& rng) {
  // BN's shift subsumes the conv bias.
  ConvParams<T> conv(ConvKind::conv, spec.in_channels, spec.out_channels, spec.k, !spec.use_bn);
  he_init(conv, rng);
  ConvGrads<T> grad{Tensor4<T>(conv.weight.shape()), std::vector<T>(conv.bias.size(), T(0))};
  CompositeUnit<T> unit{std::move(name), role, spec, std::move(conv), std::nullopt, std::nullopt,
                        std::move(grad), {}, {}, {}, std::nullopt, std::nullopt};
  if (spec.use_bn) {
    unit.bn.emplace(spec.out_channels);
    unit.gamma_grad.assign(spec.out_channels, T(0));
    unit.beta_grad.assign(spec.out_channels, T(0));
  }
  if (spec.activation == Activation::prelu) {
    unit.prelu.emplace(spec.out_channels);
    unit.slope_grad.assign(spec.out_channels, T(0));
  }
  return unit;
}

template <typename T>
Tensor4<T> composite_infer(const CompositeUnit<T>& u, const Tensor4<T>& x) {
  Tensor4<T> y = conv_forward(x, u.conv);
  if (u.bn) y = bn_infer(y, *u.bn);
  if (u.prelu) y = prelu_forward(y, *u.prelu);
  return y;
}

template <typename T>
Tensor4<T> composite_train(CompositeUnit<T>& u, const Tensor4<T>& x) {
  Tensor4<T> y = conv_forward(x, u.conv);
  if (u.bn) {
    BNCache<T> cache{Tensor4<T>(y.shape()), {}};
    y = bn_forward(y, *u.bn, &cache);
    u.bn_cache = std::move(cache);
  }
  if (u.prelu) {
    u.pre_activation = y;
    y = prelu_forward(y, *u.prelu);
  }
  return y;
}

template <typename T>
Tensor4<T> composite_backward(CompositeUnit<T>& u, const Tensor4<T>& x, Tensor4<T> grad) {
  if (u.prelu) {
    auto r = prelu_backward(*u.pre_activation, *u.prelu, grad);
    u.slope_grad = std::move(r.grad_slope);
    grad = std::move(r.grad_x);
  }
  if (u.bn) {
    auto r = bn_backward(*u.bn, u.bn_cache, grad);
    u.gamma_grad = std::move(r.grad_gamma);
    u.beta_grad = std::move(r.grad_beta);
    grad = std::move(r.grad_x);
  }
  auto r = conv_backward(x, u.conv, grad);
  u.conv_grad = std::move(r.grads);
  return std::move(r.grad_x);
}

std::vector<std::size_t> dims_of(const Shape& s) { return {s.n, s.c, s.h, s.w}; }

}  // namespace

template <typename T>
Network<T>::Network(NetConfig config, ConvParams<T> head)
    : config_(std::move(config)),
      head_(std::move(head)),
      head_grad_{Tensor4<T>(head_.weight.shape()), std::vector<T>(head_.bias.size(), T(0))} {}

template <typename T>
Network<T> Network<T>::build(const NetConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  std::vector<CompositeUnit<T>> units;
  std::vector<Skip> skips;
  auto composite = [&](std::string name, UnitRole role, std::size_t in, std::size_t out,
                       std::size_t k) {
    units.push_back(make_unit<T>(std::move(name), role,
                                 CompositeSpec{in, out, k, c.use_bn, Activation::prelu}, rng));
  };

  if (c.kind == NetKind::win) {
    composite("dense1", UnitRole::dense, c.in_channels, c.n_dense, c.k_dense);
    for (int i = 2; i <= 4; ++i)
      composite("dense" + std::to_string(i), UnitRole::dense, c.n_dense, c.n_dense, c.k_dense);
  } else {
    const std::size_t width = c.block.width;
    composite("dense1", UnitRole::dense, c.in_channels, c.n_dense, c.k_dense);
    if (!c.remove_second_dense)
      composite("dense2", UnitRole::dense, c.n_dense, c.n_dense, c.k_dense);
    composite("shrink", UnitRole::shrink, c.n_dense, width, 1);
    for (std::size_t b = 1; b <= c.num_blocks; ++b) {
      const std::string prefix = "block" + std::to_string(b) + ".";
      const std::size_t first = units.size();
      composite(prefix + "reduce", UnitRole::block_reduce, width, width, 1);
      composite(prefix + "large", UnitRole::block_large, width, width, c.block.k_large);
      composite(prefix + "regulate", UnitRole::block_regulate, width, width, 1);
      composite(prefix + "small", UnitRole::block_small, width, width, c.block.k_small);
      // Small-filter output is regulated against the large-filter output,
      // and the whole block is an identity-plus-correction of its input.
      skips.push_back({SkipKind::in_block, first + 2, first + 3});
      skips.push_back({SkipKind::block, first, first + 3});
    }
    composite("expand", UnitRole::expand, width, c.n_dense, 1);
  }

  const std::size_t head_in = c.n_dense;
  ConvParams<T> head(c.kind == NetKind::rcnet ? ConvKind::transposed : ConvKind::conv, head_in,
                     c.in_channels, 3, true);
  he_init(head, rng);

  Network net(c, std::move(head));
  net.units_ = std::move(units);
  skips.push_back({SkipKind::global, 0, net.units_.size()});
  net.skips_ = std::move(skips);

  for (const Skip& s : net.skips_) {
    const std::size_t src_channels =
        s.source == 0 ? c.in_channels : net.units_[s.source - 1].spec.out_channels;
    const std::size_t dst_channels = s.target == net.units_.size()
                                         ? net.head_.out_channels()
                                         : net.units_[s.target].spec.out_channels;
    if (src_channels != dst_channels)
      throw ConfigError("skip from " + net.activation_name(s.source) + " carries " +
                        std::to_string(src_channels) + " channels into a " +
                        std::to_string(dst_channels) + "-channel sum");
  }
  return net;
}

template <typename T>
void Network<T>::set_mode(NetMode mode) {
  mode_ = mode;
  for (auto& u : units_)
    if (u.bn) u.bn->mode = mode == NetMode::train ? BNMode::train : BNMode::eval;
}

template <typename T>
void Network<T>::check_input(const Tensor4<T>& x) const {
  if (x.shape().c != config_.in_channels)
    throw ShapeError("network expects " + std::to_string(config_.in_channels) +
                     " input channel(s), got " + std::to_string(x.shape().c));
  const std::size_t k = config_.largest_filter();
  if (x.shape().h < k || x.shape().w < k)
    throw ShapeError("input " + x.shape().to_string() +
                     " is smaller than the largest filter (" + std::to_string(k) + ")");
}

template <typename T>
Tensor4<T> Network<T>::infer(const Tensor4<T>& x) const {
  check_input(x);
  std::vector<Tensor4<T>> acts;
  acts.reserve(units_.size() + 1);
  acts.push_back(x);
  for (std::size_t u = 0; u < units_.size(); ++u) {
    Tensor4<T> y = composite_infer(units_[u], acts.back());
    for (const Skip& s : skips_)
      if (s.target == u) y += acts[s.source];
    acts.push_back(std::move(y));
  }
  return add(x, apply_conv(acts.back(), head_));
}

template <typename T>
Tensor4<T> Network<T>::forward(const Tensor4<T>& x) {
  if (mode_ == NetMode::eval) return infer(x);
  check_input(x);
  activations_.clear();
  activations_.reserve(units_.size() + 1);
  activations_.push_back(x);
  for (std::size_t u = 0; u < units_.size(); ++u) {
    Tensor4<T> y = composite_train(units_[u], activations_.back());
    for (const Skip& s : skips_)
      if (s.target == u) y += activations_[s.source];
    activations_.push_back(std::move(y));
  }
  input_ = x;
  return add(x, apply_conv(activations_.back(), head_));
}

template <typename T>
Tensor4<T> Network<T>::backward(const Tensor4<T>& grad_out) {
  if (!input_ || activations_.size() != units_.size() + 1)
    throw Error("backward called without a preceding train-mode forward pass");
  require_same_shape(grad_out.shape(), input_->shape(), "network backward");

  std::vector<std::optional<Tensor4<T>>> grads(activations_.size());
  auto accumulate = [&](std::size_t index, const Tensor4<T>& g) {
    if (grads[index])
      *grads[index] += g;
    else
      grads[index] = g;
  };

  auto head = apply_conv_backward(activations_.back(), head_, grad_out);
  head_grad_ = std::move(head.grads);
  accumulate(units_.size(), head.grad_x);
  for (const Skip& s : skips_)
    if (s.target == units_.size()) accumulate(s.source, grad_out);

  for (std::size_t u = units_.size(); u-- > 0;) {
    const Tensor4<T>& g = *grads[u + 1];
    for (const Skip& s : skips_)
      if (s.target == u) accumulate(s.source, g);
    Tensor4<T> gx = composite_backward(units_[u], activations_[u], g);
    accumulate(u, gx);
  }
  return std::move(*grads[0]);
}

template <typename T>
std::size_t Network<T>::param_count() const {
  std::size_t total = head_.param_count();
  for (const auto& u : units_) total += u.param_count();
  return total;
}

template <typename T>
std::string Network<T>::activation_name(std::size_t index) const {
  return index == 0 ? "input" : units_.at(index - 1).name;
}

template <typename T>
StructureReport Network<T>::summarize() const {
  StructureReport report;
  auto skips_into = [&](std::size_t target) {
    std::string s;
    for (const Skip& k : skips_) {
      if (k.target != target) continue;
      if (!s.empty()) s += ", ";
      s += "+" + activation_name(k.source) + " (" + to_string(k.kind) + ")";
    }
    return s;
  };
  for (std::size_t i = 0; i < units_.size(); ++i) {
    const auto& u = units_[i];
    report.rows.push_back({u.name, "composite", u.spec.k, u.spec.in_channels,
                           u.spec.out_channels, u.bn.has_value(), u.prelu.has_value(),
                           u.param_count(), skips_into(i)});
  }
  report.rows.push_back({config_.kind == NetKind::rcnet ? "deconv" : "conv_out",
                         head_.kind == ConvKind::transposed ? "deconv" : "conv", head_.kernel(),
                         head_.in_channels(), head_.out_channels(), false, false,
                         head_.param_count(), skips_into(units_.size())});
  report.skips = skips_;
  report.total_params = param_count();
  return report;
}

std::string StructureReport::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(4) << "#" << std::setw(18) << "layer" << std::setw(11) << "type"
     << std::setw(7) << "k" << std::setw(6) << "in" << std::setw(6) << "out" << std::setw(5)
     << "bn" << std::setw(7) << "prelu" << std::right << std::setw(10) << "params"
     << "  skips\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string k = std::to_string(r.k) + "x" + std::to_string(r.k);
    os << std::left << std::setw(4) << i + 1 << std::setw(18) << r.name << std::setw(11)
       << r.type << std::setw(7) << k << std::setw(6) << r.in_channels << std::setw(6)
       << r.out_channels << std::setw(5) << (r.bn ? "yes" : "no") << std::setw(7)
       << (r.prelu ? "yes" : "no") << std::right << std::setw(10) << r.params << "  "
       << r.skips_in << "\n";
  }
  std::size_t kinds[3] = {0, 0, 0};
  for (const Skip& s : skips) ++kinds[static_cast<int>(s.kind)];
  os << "layers: " << rows.size() << "\n";
  os << "skips: " << skips.size() << " (in-block " << kinds[0] << ", block " << kinds[1]
     << ", global " << kinds[2] << ")\n";
  os << "parameters: " << total_params << "\n";
  return os.str();
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::parameters() {
  std::vector<ParamRef<T>> out;
  for (auto& u : units_) {
    out.push_back({u.name + ".conv.weight", dims_of(u.conv.weight.shape()), u.conv.weight.data(),
                   u.conv_grad.weight.data(), true});
    if (u.conv.has_bias())
      out.push_back({u.name + ".conv.bias", {u.conv.bias.size()}, u.conv.bias, u.conv_grad.bias,
                     true});
    if (u.bn) {
      out.push_back({u.name + ".bn.gamma", {u.bn->channels()}, u.bn->gamma, u.gamma_grad, false});
      out.push_back({u.name + ".bn.beta", {u.bn->channels()}, u.bn->beta, u.beta_grad, false});
    }
    if (u.prelu)
      out.push_back({u.name + ".prelu.slope", {u.prelu->channels()}, u.prelu->slope,
                     u.slope_grad, false});
  }
  const std::string head = config_.kind == NetKind::rcnet ? "deconv" : "conv_out";
  out.push_back({head + ".weight", dims_of(head_.weight.shape()), head_.weight.data(),
                 head_grad_.weight.data(), true});
  out.push_back({head + ".bias", {head_.bias.size()}, head_.bias, head_grad_.bias, true});
  return out;
}

template <typename T>
std::vector<BufferRef<T>> Network<T>::buffers() {
  std::vector<BufferRef<T>> out;
  for (auto& p : parameters()) out.push_back({p.name, p.dims, p.value});
  for (auto& u : units_)
    if (u.bn) {
      out.push_back({u.name + ".bn.running_mean", {u.bn->channels()}, u.bn->running_mean});
      out.push_back({u.name + ".bn.running_var", {u.bn->channels()}, u.bn->running_var});
    }
  return out;
}

template struct CompositeUnit<float>;
template struct CompositeUnit<double>;
template class Network<float>;
template class Network<double>;

}  // namespace rcnet
