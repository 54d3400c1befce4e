#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rcnet/config.hpp"
#include "rcnet/metrics.hpp"
#include "rcnet/optim.hpp"

namespace rcnet {

struct TrainOutcome {
  std::filesystem::path checkpoint;
  std::filesystem::path log_csv;
  TrainLog log;
};

/// Trains per `config`, writing checkpoint_final.rcn, periodic
/// checkpoint_<iter>.rcn files, train_log.csv and the resolved config.cfg
/// into config.out_dir. Progress lines go to `progress`.
TrainOutcome cmd_train(const RunConfig& config, std::ostream& progress);

struct RestoreRequest {
  std::filesystem::path checkpoint;
  /// Image file, manifest or directory.
  std::filesystem::path input;
  std::filesystem::path out_dir;
  /// Clean references matched to the inputs by order.
  std::optional<std::filesystem::path> reference;
  /// Denoise: treat inputs as clean and add noise of this sigma first.
  std::optional<double> sigma;
  /// Super-resolution scale factor (defaults to the checkpoint's first).
  std::optional<int> factor;
  /// Super-resolution: treat inputs as high-resolution and degrade first.
  bool degrade = false;
  /// Evaluate: bicubic-resize clean images to (h, w) before corrupting.
  std::optional<std::pair<std::size_t, std::size_t>> resize;
  std::uint64_t seed = 1;
};

struct RestoreOutcome {
  std::vector<std::filesystem::path> outputs;
  /// Restored image vs clean reference (when a reference exists).
  std::optional<QualityReport> restored;
  /// Network input vs clean reference.
  std::optional<QualityReport> baseline;
};

RestoreOutcome cmd_denoise(const RestoreRequest& request, std::ostream& out);
RestoreOutcome cmd_superres(const RestoreRequest& request, std::ostream& out);
/// Corrupts clean images per the checkpoint's task, restores them and
/// reports both the restored and the corrupted-input quality.
RestoreOutcome cmd_evaluate(const RestoreRequest& request, std::ostream& out);

/// Structure table and parameter total for a config file or checkpoint.
std::string cmd_inspect(const std::filesystem::path& path);

/// Applies a named architecture variant: rcnet, win, no_second_dense or
/// blocks=<n>.
NetConfig apply_variant(NetConfig base, const std::string& variant);

struct StabilityOutcome {
  std::vector<std::string> variants;
  std::vector<TrainLog> logs;
  std::vector<std::vector<double>> rolling;
  std::filesystem::path rolling_csv;
  std::string summary;
};

/// Trains every variant in config.stability_variants on the same seeded
/// data stream and writes log_<variant>.csv, rolling_std.csv and summary.md.
StabilityOutcome cmd_stability(const RunConfig& config, std::ostream& progress);

/// Writes `count` synthetic PGM images and a manifest <prefix>.txt.
std::filesystem::path cmd_synth(const std::filesystem::path& out_dir, std::size_t count,
                                std::size_t h, std::size_t w, std::uint64_t seed,
                                const std::string& prefix);

/// Entry point shared by the rcnet executable and the CLI tests. Failures
/// print one `error: ...` line to err and return a nonzero code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rcnet
