#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rcnet/data.hpp"
#include "rcnet/model.hpp"
#include "rcnet/optim.hpp"

namespace rcnet {

enum class Task : std::uint8_t { denoise, sr, sr_blind };

std::string to_string(Task task);

/// Everything a run needs. Stored as flat `key = value` text with dotted
/// section prefixes, e.g. `optim.lr0 = 0.1`.
struct RunConfig {
  Task task = Task::denoise;
  Precision precision = Precision::single;
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";

  NetConfig net;
  SGDHyper optim;

  std::string train_source;
  std::string val_source;
  double sigma = 25.0;
  std::vector<int> scales{2};
  SamplingSpec sampling;

  std::size_t val_interval = 500;
  std::size_t checkpoint_interval = 0;
  std::size_t log_interval = 100;

  std::vector<std::string> stability_variants{"rcnet", "win", "no_second_dense"};
  std::size_t stability_window = 50;

  /// Directory that relative data paths resolve against (not serialised).
  std::filesystem::path base_dir;

  CorruptionSpec corruption() const;
  /// Cross-field checks: network, optimiser and task/corruption pairing.
  void validate() const;
  std::filesystem::path resolve(const std::string& path) const;

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

/// Parses config text. Errors name the offending line and field.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
/// Canonical text: every key, fixed order, shortest round-trip numbers.
std::string serialize_config(const RunConfig& config);
/// Applies a single `key = value` assignment (used for CLI overrides).
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace rcnet
