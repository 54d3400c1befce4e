#pragma once

#include <stdexcept>
#include <string>

namespace rcnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or buffer shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violates a structural constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing an image, manifest, checkpoint or report failed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace rcnet
