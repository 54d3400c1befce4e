#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rcnet/tensor.hpp"

namespace rcnet {

/// Single-channel image on the 0-255 scale. Values may leave [0, 255]
/// (noisy images are never clipped).
struct GrayImage {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t height, std::size_t width, double fill = 0.0);
  GrayImage(std::size_t height, std::size_t width, std::vector<double> values);

  double& at(std::size_t r, std::size_t c) { return pixels[r * w + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * w + c]; }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Loads binary PGM (P5, maxval <= 255) or PNG. Colour PNGs are reduced
/// to luminance 0.299 R + 0.587 G + 0.114 B and rounded.
GrayImage load_image(const std::filesystem::path& path);
/// Writes PGM or PNG (chosen by extension) after clamping to [0, 255] and
/// rounding to integers.
void save_image(const GrayImage& img, const std::filesystem::path& path);

GrayImage clamp_pixels(const GrayImage& img, double lo = 0.0, double hi = 255.0);
GrayImage round_pixels(const GrayImage& img);

/// Non-empty lines of a manifest, '#' starts a comment. Relative paths
/// resolve against the manifest's directory.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);
/// A manifest file, or every .pgm/.png in a directory (sorted).
std::vector<std::filesystem::path> list_images(const std::filesystem::path& source);

struct PatchPosition {
  std::size_t top;
  std::size_t left;
  friend bool operator==(const PatchPosition&, const PatchPosition&) = default;
};

/// Grid of fully contained size x size windows at the given stride.
std::vector<PatchPosition> extract_patches(const GrayImage& img, std::size_t size,
                                           std::size_t stride);
std::size_t patch_count(std::size_t h, std::size_t w, std::size_t size, std::size_t stride);

GrayImage crop(const GrayImage& img, std::size_t top, std::size_t left, std::size_t h,
               std::size_t w);
/// Horizontal mirror when flip is set, identity otherwise.
GrayImage augment(const GrayImage& patch, bool flip);

/// in + sigma * N(0, 1) per pixel, unclipped.
GrayImage add_gaussian_noise(const GrayImage& img, double sigma, std::uint64_t seed);

/// Cubic-convolution resampling with a = -0.5, clamped edges and
/// center-aligned coordinates src = (dst + 0.5) * in / out - 0.5.
GrayImage bicubic_resize(const GrayImage& img, std::size_t out_h, std::size_t out_w);

struct SrPair {
  GrayImage corrupted;
  GrayImage clean;
  int factor;
};

/// Crops to a multiple of factor, then bicubic down- and up-samples back to
/// the cropped size.
SrPair make_sr_pair(const GrayImage& img, int factor);

struct CorruptionSpec {
  enum class Kind { gaussian_noise, sr, sr_blind };
  Kind kind = Kind::gaussian_noise;
  double sigma = 25.0;
  std::vector<int> factors;

  static CorruptionSpec noise(double sigma) { return {Kind::gaussian_noise, sigma, {}}; }
  static CorruptionSpec sr(int factor) { return {Kind::sr, 0.0, {factor}}; }
  static CorruptionSpec sr_blind(std::vector<int> factors) {
    return {Kind::sr_blind, 0.0, std::move(factors)};
  }
  void validate() const;
};

/// Training pairs drawn from one image. Denoising keeps a single clean
/// variant and adds fresh noise to every sampled patch; super-resolution
/// keeps one precomputed (corrupted, clean) variant per scale factor.
struct PatchSource {
  std::string id;
  std::vector<SrPair> variants;
  double noise_sigma = 0.0;
};

PatchSource make_patch_source(const GrayImage& img, std::string id, const CorruptionSpec& spec);

struct SamplingSpec {
  std::size_t patch_size = 41;
  std::size_t stride = 14;
};

struct PatchProvenance {
  std::size_t source;
  std::size_t top;
  std::size_t left;
  bool flipped;
  int factor;
};

template <typename T>
struct Batch {
  Tensor4<T> input;
  Tensor4<T> target;
  std::vector<PatchProvenance> provenance;
};

/// Pure function of (sources, seed, iter): random source, scale variant,
/// grid position and flip per element, normalised to [0, 1].
template <typename T>
Batch<T> sample_batch(std::span<const PatchSource> sources, const SamplingSpec& sampling,
                      std::size_t batch_size, std::uint64_t seed, std::uint64_t iter);

/// Full-image evaluation pair.
struct EvalPair {
  std::string id;
  GrayImage corrupted;
  GrayImage clean;
};

/// Noise uses a per-image seed derived from `seed`; blind SR yields one
/// pair per factor.
std::vector<EvalPair> make_eval_pairs(std::span<const GrayImage> images,
                                      std::span<const std::string> ids, const CorruptionSpec& spec,
                                      std::uint64_t seed);

/// Deterministic 64-bit mixing of a seed with stream indices.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

template <typename T>
Tensor4<T> to_tensor(const GrayImage& img);
/// Rescales channel 0 of sample n back to the 0-255 scale (no clamping).
template <typename T>
GrayImage to_image(const Tensor4<T>& t, std::size_t n = 0);

/// Piecewise-smooth test image: gradient background, overlapping shapes
/// and a textured band, integer valued in [0, 255].
GrayImage synthetic_image(std::size_t h, std::size_t w, std::uint64_t seed);

}  // namespace rcnet
