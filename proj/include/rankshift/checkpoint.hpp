#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "rankshift/layers.hpp"

namespace rankshift {

/// Full training state: layer modes and payloads, optimizer velocities,
/// epoch index and RNG state, so resumed runs continue deterministically.
/// Payloads are little-endian 64-bit floats behind an 8-byte magic header
/// and a version byte; save/load round-trips bit-exactly.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::int64_t epoch = 0;
  std::array<std::uint64_t, 4> rng_state{};
  Network net;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

/// Throws std::runtime_error on malformed files. A config-hash mismatch is
/// the caller's concern (warning, not an error).
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rankshift
