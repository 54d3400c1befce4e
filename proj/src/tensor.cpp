#include "rcnet/tensor.hpp"

#include <limits>
#include <stdexcept>

namespace rcnet {

std::string to_string(Precision p) { return p == Precision::single ? "single" : "double"; }

std::size_t Shape::size() const {
  std::size_t total = 1;
  for (std::size_t d : {n, c, h, w}) {
    if (d != 0 && total > std::numeric_limits<std::size_t>::max() / d)
      throw std::length_error("tensor size overflows: " + to_string());
    total *= d;
  }
  return total;
}

std::string Shape::to_string() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

std::array<std::size_t, 4> unflatten_index(const Shape& s, std::size_t flat) {
  const std::size_t w = flat % s.w;
  flat /= s.w;
  const std::size_t h = flat % s.h;
  flat /= s.h;
  const std::size_t c = flat % s.c;
  return {flat / s.c, c, h, w};
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.to_string() + " vs " +
                     b.to_string());
}

template <typename T>
Tensor4<T>::Tensor4(Shape shape) : shape_(shape) {
  if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0)
    throw ShapeError("tensor dimensions must be >= 1, got " + shape.to_string());
  data_.assign(shape.size(), T(0));
}

template <typename T>
Tensor4<T>::Tensor4(Shape shape, std::vector<T> data)
    : shape_(shape), data_(data.begin(), data.end()) {
  if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0)
    throw ShapeError("tensor dimensions must be >= 1, got " + shape.to_string());
  if (data_.size() != shape.size())
    throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements does not match " +
                     shape.to_string());
}

template <typename T>
void Tensor4<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor4<T>& Tensor4<T>::operator+=(const Tensor4& other) {
  require_same_shape(shape_, other.shape_, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template <typename T>
Tensor4<T>& Tensor4<T>::operator*=(T scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  Tensor4<T> out = a;
  out += b;
  return out;
}

template <typename T>
double mse(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

template class Tensor4<float>;
template class Tensor4<double>;
template Tensor4<float> add(const Tensor4<float>&, const Tensor4<float>&);
template Tensor4<double> add(const Tensor4<double>&, const Tensor4<double>&);
template double mse(const Tensor4<float>&, const Tensor4<float>&);
template double mse(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace rcnet
