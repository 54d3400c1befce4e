#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcnet/data.hpp"
#include "rcnet/model.hpp"

namespace rcnet {

/// SGD hyperparameters. Defaults are the full-scale training protocol.
struct SGDHyper {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t lr_drop_every = 150000;
  double lr_drop_factor = 10.0;
  std::size_t batch_size = 64;
  std::size_t max_iters = 250000;

  void validate() const;
  friend bool operator==(const SGDHyper&, const SGDHyper&) = default;
};

/// lr0 / lr_drop_factor^floor(iter / lr_drop_every).
double lr_at(std::size_t iter, const SGDHyper& hyper);

template <typename T>
struct SGDState {
  std::vector<std::vector<T>> velocity;
  std::size_t iteration = 0;
};

/// v <- momentum * v + grad + weight_decay * w (decay only where the
/// parameter opts in), then w <- w - lr_at(iteration) * v.
template <typename T>
void sgd_step(std::span<ParamRef<T>> params, SGDState<T>& state, const SGDHyper& hyper);

struct LogEntry {
  std::size_t iter;
  double lr;
  double train_loss;
  std::optional<double> val_loss;
  std::optional<double> val_psnr;
};

struct TrainLog {
  std::vector<LogEntry> entries;

  /// Header `iter,lr,train_loss,val_loss,val_psnr`, NA for absent values.
  std::string to_csv() const;
  std::vector<double> train_losses() const;
};

struct TrainData {
  std::vector<PatchSource> sources;
  SamplingSpec sampling;
  std::vector<EvalPair> validation;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  /// Validate every this many iterations (and after the last one); 0 disables.
  std::size_t val_interval = 0;
  std::function<void(const LogEntry&)> on_log;
  /// Called with the completed iteration count every checkpoint_interval
  /// iterations; 0 disables.
  std::size_t checkpoint_interval = 0;
  std::function<void(std::size_t)> on_checkpoint;
};

struct ValidationResult {
  double loss;
  double psnr_db;
};

/// Eval-mode pass over full-image pairs: MSE on the [0, 1] scale and PSNR of
/// the clamped prediction on the 0-255 scale.
template <typename T>
ValidationResult validate(const Network<T>& net, std::span<const EvalPair> pairs);

/// Runs hyper.max_iters steps of forward, MSE loss, backward and SGD.
/// Throws DivergenceError on a non-finite loss.
template <typename T>
TrainLog train(Network<T>& net, const TrainData& data, const SGDHyper& hyper,
               const TrainOptions& options, SGDState<T>& state);

/// Prediction as a clamped 0-255 image.
template <typename T>
GrayImage restore(const Network<T>& net, const GrayImage& corrupted);

}  // namespace rcnet
