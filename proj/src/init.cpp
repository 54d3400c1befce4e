#include <algorithm>
#include <cmath>

#include "rcnet/layers.hpp"

namespace rcnet {

double he_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

template <typename T>
void he_init(ConvParams<T>& p, std::mt19937_64& rng) {
  const std::size_t fan_in = p.in_channels() * p.kernel() * p.kernel();
  std::normal_distribution<double> dist(0.0, he_std(fan_in));
  for (auto& v : p.weight.data()) v = static_cast<T>(dist(rng));
  std::fill(p.bias.begin(), p.bias.end(), T(0));
}

template <typename T>
ConvParams<T> make_conv(ConvKind kind, std::size_t in_channels, std::size_t out_channels,
                        std::size_t k, bool with_bias, std::uint64_t seed) {
  ConvParams<T> p(kind, in_channels, out_channels, k, with_bias);
  std::mt19937_64 rng(seed);
  he_init(p, rng);
  return p;
}

#define RCNET_INSTANTIATE_INIT(T)                                                         \
  template void he_init(ConvParams<T>&, std::mt19937_64&);                                \
  template ConvParams<T> make_conv(ConvKind, std::size_t, std::size_t, std::size_t, bool, \
                                   std::uint64_t);

RCNET_INSTANTIATE_INIT(float)
RCNET_INSTANTIATE_INIT(double)

}  // namespace rcnet
