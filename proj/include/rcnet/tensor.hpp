#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rcnet/error.hpp"

namespace rcnet {

enum class Precision : std::uint8_t { single = 1, double_ = 2 };

template <typename T>
constexpr Precision precision_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? Precision::single : Precision::double_;
}

std::string to_string(Precision p);

/// Dimensions of a 4-D tensor in (batch, channel, height, width) order.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  /// Element count; throws std::length_error if the product overflows.
  std::size_t size() const;
  std::size_t plane() const { return h * w; }
  std::string to_string() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Flat row-major NCHW offset: ((n*C + c)*H + h)*W + w.
inline std::size_t flat_index(const Shape& s, std::size_t n, std::size_t c, std::size_t h,
                              std::size_t w) {
  return ((n * s.c + c) * s.h + h) * s.w + w;
}

/// Inverse of flat_index.
std::array<std::size_t, 4> unflatten_index(const Shape& s, std::size_t flat);

/// Allocator handing out 64-byte aligned storage. Vectorized kernels pick
/// their summation order from pointer alignment, so a fixed alignment keeps
/// results reproducible from one allocation to the next.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense NCHW tensor. Every dimension is at least one and the buffer
/// always holds exactly shape().size() elements.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  explicit Tensor4(Shape shape);
  Tensor4(Shape shape, std::vector<T> data);

  static Tensor4 zeros(Shape shape) { return Tensor4(shape); }
  static Tensor4 zeros(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return Tensor4(Shape{n, c, h, w});
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  static constexpr Precision precision() { return precision_of<T>(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T> values() const { return {data_.begin(), data_.end()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[flat_index(shape_, n, c, h, w)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[flat_index(shape_, n, c, h, w)];
  }

  /// Contiguous H*W plane of sample n, channel c.
  std::span<T> plane(std::size_t n, std::size_t c) {
    return std::span<T>(data_).subspan((n * shape_.c + c) * shape_.plane(), shape_.plane());
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const {
    return std::span<const T>(data_).subspan((n * shape_.c + c) * shape_.plane(), shape_.plane());
  }

  /// All channels of sample n.
  std::span<T> sample(std::size_t n) {
    const std::size_t len = shape_.c * shape_.plane();
    return std::span<T>(data_).subspan(n * len, len);
  }
  std::span<const T> sample(std::size_t n) const {
    const std::size_t len = shape_.c * shape_.plane();
    return std::span<const T>(data_).subspan(n * len, len);
  }

  void fill(T value);
  Tensor4& operator+=(const Tensor4& other);
  Tensor4& operator*=(T scale);

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

template <typename T>
Tensor4<T> zeros_like(const Tensor4<T>& t) {
  return Tensor4<T>(t.shape());
}

/// Throws ShapeError naming both shapes unless a and b agree.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Elementwise sum of equally shaped tensors.
template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);

/// Mean of squared differences over all elements.
template <typename T>
double mse(const Tensor4<T>& a, const Tensor4<T>& b);

extern template class Tensor4<float>;
extern template class Tensor4<double>;

}  // namespace rcnet
