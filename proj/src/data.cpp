#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rcnet/data.hpp"

namespace rcnet {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser applied to each input in turn.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

std::size_t patch_count(std::size_t h, std::size_t w, std::size_t size, std::size_t stride) {
  if (size == 0 || stride == 0) throw ConfigError("patch size and stride must be >= 1");
  if (h < size || w < size) return 0;
  return ((h - size) / stride + 1) * ((w - size) / stride + 1);
}

std::vector<PatchPosition> extract_patches(const GrayImage& img, std::size_t size,
                                           std::size_t stride) {
  if (size == 0 || stride == 0) throw ConfigError("patch size and stride must be >= 1");
  if (img.h < size || img.w < size)
    throw ShapeError("image " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                     " is smaller than the " + std::to_string(size) + "x" + std::to_string(size) +
                     " patch");
  std::vector<PatchPosition> out;
  for (std::size_t top = 0; top + size <= img.h; top += stride)
    for (std::size_t left = 0; left + size <= img.w; left += stride) out.push_back({top, left});
  return out;
}

GrayImage crop(const GrayImage& img, std::size_t top, std::size_t left, std::size_t h,
               std::size_t w) {
  if (top + h > img.h || left + w > img.w) throw ShapeError("crop window leaves the image");
  GrayImage out(h, w);
  for (std::size_t r = 0; r < h; ++r)
    std::copy_n(img.pixels.begin() + static_cast<std::ptrdiff_t>((top + r) * img.w + left), w,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(r * w));
  return out;
}

GrayImage augment(const GrayImage& patch, bool flip) {
  if (!flip) return patch;
  GrayImage out = patch;
  for (std::size_t r = 0; r < out.h; ++r) {
    auto row = out.pixels.begin() + static_cast<std::ptrdiff_t>(r * out.w);
    std::reverse(row, row + static_cast<std::ptrdiff_t>(out.w));
  }
  return out;
}

GrayImage add_gaussian_noise(const GrayImage& img, double sigma, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw ConfigError("noise sigma must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GrayImage out = img;
  for (auto& v : out.pixels) v += sigma * normal(rng);
  return out;
}

namespace {

double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::size_t index[4];
  double weight[4];
};

std::vector<Taps> resample_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const auto last = static_cast<std::ptrdiff_t>(in) - 1;
  for (std::size_t d = 0; d < out; ++d) {
    const double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    for (int t = 0; t < 4; ++t) {
      const double pos = base - 1.0 + t;
      taps[d].weight[t] = cubic_weight(src - pos);
      taps[d].index[t] = static_cast<std::size_t>(
          std::clamp(static_cast<std::ptrdiff_t>(pos), std::ptrdiff_t{0}, last));
    }
  }
  return taps;
}

}  // namespace

GrayImage bicubic_resize(const GrayImage& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("bicubic_resize: output dims must be >= 1");
  if (img.h == 0 || img.w == 0) throw ShapeError("bicubic_resize: empty input image");
  const auto col_taps = resample_taps(img.w, out_w);
  const auto row_taps = resample_taps(img.h, out_h);
  GrayImage horizontal(img.h, out_w);
  for (std::size_t r = 0; r < img.h; ++r)
    for (std::size_t c = 0; c < out_w; ++c) {
      double v = 0.0;
      for (int t = 0; t < 4; ++t) v += col_taps[c].weight[t] * img.at(r, col_taps[c].index[t]);
      horizontal.at(r, c) = v;
    }
  GrayImage out(out_h, out_w);
  for (std::size_t r = 0; r < out_h; ++r)
    for (std::size_t c = 0; c < out_w; ++c) {
      double v = 0.0;
      for (int t = 0; t < 4; ++t)
        v += row_taps[r].weight[t] * horizontal.at(row_taps[r].index[t], c);
      out.at(r, c) = v;
    }
  return out;
}

SrPair make_sr_pair(const GrayImage& img, int factor) {
  if (factor < 2 || factor > 4)
    throw ConfigError("scale factor must be 2, 3 or 4, got " + std::to_string(factor));
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t h = img.h - img.h % f, w = img.w - img.w % f;
  if (h == 0 || w == 0) throw ShapeError("image too small for scale factor " + std::to_string(f));
  GrayImage clean = crop(img, 0, 0, h, w);
  GrayImage low = bicubic_resize(clean, h / f, w / f);
  return {bicubic_resize(low, h, w), std::move(clean), factor};
}

void CorruptionSpec::validate() const {
  switch (kind) {
    case Kind::gaussian_noise:
      if (!(sigma > 0.0)) throw ConfigError("noise sigma must be > 0");
      return;
    case Kind::sr:
      if (factors.size() != 1) throw ConfigError("sr needs exactly one scale factor");
      break;
    case Kind::sr_blind:
      if (factors.empty()) throw ConfigError("sr_blind needs at least one scale factor");
      break;
  }
  for (int f : factors)
    if (f < 2 || f > 4)
      throw ConfigError("scale factor must be 2, 3 or 4, got " + std::to_string(f));
}

PatchSource make_patch_source(const GrayImage& img, std::string id, const CorruptionSpec& spec) {
  spec.validate();
  PatchSource source{std::move(id), {}, 0.0};
  if (spec.kind == CorruptionSpec::Kind::gaussian_noise) {
    source.variants.push_back({img, img, 1});
    source.noise_sigma = spec.sigma;
  } else {
    for (int f : spec.factors) source.variants.push_back(make_sr_pair(img, f));
  }
  return source;
}

template <typename T>
Batch<T> sample_batch(std::span<const PatchSource> sources, const SamplingSpec& sampling,
                      std::size_t batch_size, std::uint64_t seed, std::uint64_t iter) {
  if (sources.empty()) throw Error("sample_batch: no patch sources");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  const std::size_t size = sampling.patch_size;
  for (const auto& src : sources)
    for (const auto& pair : src.variants)
      if (pair.clean.h < size || pair.clean.w < size)
        throw ShapeError("image " + src.id + " is smaller than the " + std::to_string(size) +
                         "x" + std::to_string(size) + " patch");
  Batch<T> batch{Tensor4<T>(Shape{batch_size, 1, size, size}),
                 Tensor4<T>(Shape{batch_size, 1, size, size}), {}};
  std::mt19937_64 rng(derive_seed(seed, iter, 0x5a3c));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, sources.size() - 1)(rng);
    const PatchSource& src = sources[s];
    const std::size_t v =
        std::uniform_int_distribution<std::size_t>(0, src.variants.size() - 1)(rng);
    const SrPair& pair = src.variants[v];
    const std::size_t rows = (pair.clean.h - size) / sampling.stride + 1;
    const std::size_t cols = (pair.clean.w - size) / sampling.stride + 1;
    const std::size_t cell = std::uniform_int_distribution<std::size_t>(0, rows * cols - 1)(rng);
    const std::size_t top = (cell / cols) * sampling.stride;
    const std::size_t left = (cell % cols) * sampling.stride;
    const bool flip = std::bernoulli_distribution(0.5)(rng);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        const std::size_t sc = left + (flip ? size - 1 - c : c);
        double corrupted = pair.corrupted.at(top + r, sc);
        if (src.noise_sigma > 0.0) corrupted += src.noise_sigma * normal(rng);
        batch.input.at(b, 0, r, c) = static_cast<T>(corrupted / 255.0);
        batch.target.at(b, 0, r, c) = static_cast<T>(pair.clean.at(top + r, sc) / 255.0);
      }
    batch.provenance.push_back({s, top, left, flip, src.noise_sigma > 0.0 ? 0 : pair.factor});
  }
  return batch;
}

std::vector<EvalPair> make_eval_pairs(std::span<const GrayImage> images,
                                      std::span<const std::string> ids, const CorruptionSpec& spec,
                                      std::uint64_t seed) {
  spec.validate();
  if (images.size() != ids.size()) throw Error("make_eval_pairs: one id per image required");
  std::vector<EvalPair> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (spec.kind == CorruptionSpec::Kind::gaussian_noise) {
      out.push_back({ids[i], add_gaussian_noise(images[i], spec.sigma, derive_seed(seed, i, 0xe7a1)),
                     images[i]});
      continue;
    }
    for (int f : spec.factors) {
      SrPair p = make_sr_pair(images[i], f);
      const std::string id = spec.factors.size() > 1 ? ids[i] + "_x" + std::to_string(f) : ids[i];
      out.push_back({id, std::move(p.corrupted), std::move(p.clean)});
    }
  }
  return out;
}

template <typename T>
Tensor4<T> to_tensor(const GrayImage& img) {
  Tensor4<T> t(Shape{1, 1, img.h, img.w});
  for (std::size_t i = 0; i < img.size(); ++i) t[i] = static_cast<T>(img.pixels[i] / 255.0);
  return t;
}

template <typename T>
GrayImage to_image(const Tensor4<T>& t, std::size_t n) {
  GrayImage img(t.shape().h, t.shape().w);
  auto plane = t.plane(n, 0);
  for (std::size_t i = 0; i < img.size(); ++i)
    img.pixels[i] = static_cast<double>(plane[i]) * 255.0;
  return img;
}

GrayImage synthetic_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double base = 40.0 + 120.0 * unit(rng);
  const double gx = (unit(rng) - 0.5) * 80.0, gy = (unit(rng) - 0.5) * 80.0;
  GrayImage img(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      img.at(r, c) = base + gx * static_cast<double>(c) / static_cast<double>(w) +
                     gy * static_cast<double>(r) / static_cast<double>(h);

  const int shapes = 5 + static_cast<int>(unit(rng) * 6);
  for (int s = 0; s < shapes; ++s) {
    const double cy = unit(rng) * h, cx = unit(rng) * w;
    const double ry = (0.08 + 0.25 * unit(rng)) * h, rx = (0.08 + 0.25 * unit(rng)) * w;
    const double level = 255.0 * unit(rng);
    const bool ellipse = unit(rng) < 0.5;
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const double dy = (static_cast<double>(r) - cy) / ry;
        const double dx = (static_cast<double>(c) - cx) / rx;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1 && std::abs(dy) <= 1;
        if (inside) img.at(r, c) = level;
      }
  }

  // Oriented sinusoidal texture inside a horizontal band.
  const double top = unit(rng) * 0.6 * h, band = (0.15 + 0.2 * unit(rng)) * h;
  const double freq = 0.2 + 0.5 * unit(rng), angle = unit(rng) * std::numbers::pi;
  const double amplitude = 15.0 + 30.0 * unit(rng);
  for (std::size_t r = 0; r < h; ++r) {
    if (static_cast<double>(r) < top || static_cast<double>(r) > top + band) continue;
    for (std::size_t c = 0; c < w; ++c)
      img.at(r, c) += amplitude * std::sin(freq * (std::cos(angle) * static_cast<double>(c) +
                                                   std::sin(angle) * static_cast<double>(r)));
  }
  return round_pixels(clamp_pixels(img));
}

template Batch<float> sample_batch(std::span<const PatchSource>, const SamplingSpec&, std::size_t,
                                   std::uint64_t, std::uint64_t);
template Batch<double> sample_batch(std::span<const PatchSource>, const SamplingSpec&,
                                    std::size_t, std::uint64_t, std::uint64_t);
template Tensor4<float> to_tensor(const GrayImage&);
template Tensor4<double> to_tensor(const GrayImage&);
template GrayImage to_image(const Tensor4<float>&, std::size_t);
template GrayImage to_image(const Tensor4<double>&, std::size_t);

}  // namespace rcnet
