#pragma once

// RCN1 checkpoint layout (all integers little-endian):
//
//   "RCN1"                      magic, 4 bytes
//   u32 version                 currently 1
//   u64 len, bytes[len]         canonical run-config text
//   u64 iteration               completed training iterations
//   u32 count                   number of buffer records
//   count x record:
//     u32 len, bytes[len]       buffer name
//     u32 rank, u64 dims[rank]
//     u8 precision              1 = f32, 2 = f64
//     raw little-endian values  product(dims) elements
//
// Optimiser velocities, when present, are stored as records named
// "velocity/<parameter name>".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>

#include "rcnet/config.hpp"
#include "rcnet/model.hpp"
#include "rcnet/optim.hpp"

namespace rcnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  RunConfig config;
  std::size_t iteration = 0;
  Network<T> net;
  std::optional<SGDState<T>> optimizer;
};

using AnyCheckpoint = std::variant<Checkpoint<float>, Checkpoint<double>>;

/// Serialises to the byte layout above.
template <typename T>
std::string encode_checkpoint(const RunConfig& config, std::size_t iteration, Network<T>& net,
                              const SGDState<T>* optimizer = nullptr);

/// Rebuilds the network from the stored config and restores every buffer.
/// Throws IoError on a bad magic, unknown version, missing or mis-shaped
/// buffer, or truncated input.
AnyCheckpoint decode_checkpoint(const std::string& bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     std::size_t iteration, Network<T>& net,
                     const SGDState<T>* optimizer = nullptr);
AnyCheckpoint load_checkpoint(const std::filesystem::path& path);

/// True when the file starts with the checkpoint magic.
bool is_checkpoint_file(const std::filesystem::path& path);

}  // namespace rcnet
