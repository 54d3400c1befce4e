#include "rcnet/optim.hpp"

#include <fmt/format.h>

#include <cmath>
#include <sstream>

#include "rcnet/metrics.hpp"

namespace rcnet {

void SGDHyper::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("optim.lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optim.momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be >= 0");
  if (!(lr_drop_factor > 1.0)) throw ConfigError("optim.lr_drop_factor must be > 1");
  if (lr_drop_every == 0) throw ConfigError("optim.lr_drop_every must be >= 1");
  if (batch_size == 0) throw ConfigError("optim.batch_size must be >= 1");
}

double lr_at(std::size_t iter, const SGDHyper& hyper) {
  const auto drops = static_cast<double>(iter / hyper.lr_drop_every);
  return hyper.lr0 / std::pow(hyper.lr_drop_factor, drops);
}

template <typename T>
void sgd_step(std::span<ParamRef<T>> params, SGDState<T>& state, const SGDHyper& hyper) {
  if (state.velocity.empty())
    for (const auto& p : params) state.velocity.emplace_back(p.value.size(), T(0));
  if (state.velocity.size() != params.size())
    throw ShapeError(fmt::format("sgd_step: {} velocity buffers for {} parameters",
                                 state.velocity.size(), params.size()));
  const T lr = static_cast<T>(lr_at(state.iteration, hyper));
  const T mu = static_cast<T>(hyper.momentum);
  const T wd = static_cast<T>(hyper.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& v = state.velocity[i];
    if (v.size() != p.value.size() || p.grad.size() != p.value.size())
      throw ShapeError("sgd_step: buffer size mismatch for " + p.name);
    for (std::size_t j = 0; j < v.size(); ++j) {
      T g = p.grad[j];
      if (p.weight_decay) g += wd * p.value[j];
      v[j] = mu * v[j] + g;
      p.value[j] -= lr * v[j];
    }
  }
  ++state.iteration;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "iter,lr,train_loss,val_loss,val_psnr\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.9g}", *v) : std::string("NA");
  };
  for (const auto& e : entries)
    os << e.iter << ',' << fmt::format("{:.9g}", e.lr) << ',' << fmt::format("{:.9g}", e.train_loss)
       << ',' << opt(e.val_loss) << ',' << opt(e.val_psnr) << '\n';
  return os.str();
}

std::vector<double> TrainLog::train_losses() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.train_loss);
  return out;
}

template <typename T>
GrayImage restore(const Network<T>& net, const GrayImage& corrupted) {
  return clamp_pixels(to_image(net.infer(to_tensor<T>(corrupted))));
}

template <typename T>
ValidationResult validate(const Network<T>& net, std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw Error("validate: no validation pairs");
  double loss = 0.0, db = 0.0;
  for (const auto& p : pairs) {
    const Tensor4<T> out = net.infer(to_tensor<T>(p.corrupted));
    loss += mse(out, to_tensor<T>(p.clean));
    db += psnr(clamp_pixels(to_image(out)), p.clean);
  }
  const auto n = static_cast<double>(pairs.size());
  return {loss / n, db / n};
}

template <typename T>
TrainLog train(Network<T>& net, const TrainData& data, const SGDHyper& hyper,
               const TrainOptions& options, SGDState<T>& state) {
  hyper.validate();
  if (data.sources.empty()) throw Error("training dataset is empty");
  TrainLog log;
  net.set_mode(NetMode::train);
  const std::size_t start = state.iteration;
  for (std::size_t it = start; it < hyper.max_iters; ++it) {
    Batch<T> batch = sample_batch<T>(data.sources, data.sampling, hyper.batch_size, options.seed, it);
    Tensor4<T> out = net.forward(batch.input);
    const double loss = mse(out, batch.target);
    const double lr = lr_at(it, hyper);
    if (!std::isfinite(loss)) {
      std::string tail;
      const std::size_t n = log.entries.size();
      for (std::size_t i = n > 5 ? n - 5 : 0; i < n; ++i)
        tail += fmt::format(" {}:{:.6g}", log.entries[i].iter, log.entries[i].train_loss);
      throw DivergenceError(fmt::format("non-finite loss at iteration {} (lr={:.6g}); recent losses:{}",
                                        it + 1, lr, tail.empty() ? " none" : tail));
    }
    // d/d(out) of mean((out - target)^2)
    Tensor4<T> grad(out.shape());
    const T scale = static_cast<T>(2.0 / static_cast<double>(out.size()));
    for (std::size_t i = 0; i < out.size(); ++i) grad[i] = scale * (out[i] - batch.target[i]);
    net.backward(grad);
    auto params = net.parameters();
    sgd_step<T>(params, state, hyper);

    LogEntry entry{it + 1, lr, loss, std::nullopt, std::nullopt};
    const bool last = it + 1 == hyper.max_iters;
    if (options.val_interval > 0 && !data.validation.empty() &&
        ((it + 1) % options.val_interval == 0 || last)) {
      net.set_mode(NetMode::eval);
      const auto v = validate(net, data.validation);
      net.set_mode(NetMode::train);
      entry.val_loss = v.loss;
      entry.val_psnr = v.psnr_db;
    }
    log.entries.push_back(entry);
    if (options.on_log) options.on_log(entry);
    if (options.checkpoint_interval > 0 && options.on_checkpoint &&
        (it + 1) % options.checkpoint_interval == 0 && !last)
      options.on_checkpoint(it + 1);
  }
  return log;
}

#define RCNET_INSTANTIATE_OPTIM(T)                                                           \
  template void sgd_step(std::span<ParamRef<T>>, SGDState<T>&, const SGDHyper&);             \
  template GrayImage restore(const Network<T>&, const GrayImage&);                           \
  template ValidationResult validate(const Network<T>&, std::span<const EvalPair>);          \
  template TrainLog train(Network<T>&, const TrainData&, const SGDHyper&, const TrainOptions&, \
                          SGDState<T>&);

RCNET_INSTANTIATE_OPTIM(float)
RCNET_INSTANTIATE_OPTIM(double)

}  // namespace rcnet
