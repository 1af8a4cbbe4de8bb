#ifndef POSEFUSE_CHECKPOINT_HPP
#define POSEFUSE_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "posefuse/params.hpp"

namespace posefuse::cli {

// Binary container: magic `PFCK`, u32 version, u32 config digest, the model
// config echo, RNG state, phase cursor, then repeated tensor records of
// (name length, name bytes, rank, dims as u64 LE, values as f64 LE) and a
// trailing CRC32 over everything before it. Adam moments and step counts ride
// along as `<name>!m`, `<name>!v` and `<name>!t` records so a load restores
// the optimizer bitwise.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string model_config;  // canonical echo, see canonical_model_config
  nn::ParameterStore params;
  std::string rng_state;
  std::uint64_t phase_cursor = 0;
};

constexpr std::uint32_t kCheckpointVersion = 1;

// Atomic: writes `<path>.tmp` then renames. Throws IoError.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Throws IoError, CorruptCheckpoint (bad magic/CRC/truncation/digest) or
// VersionMismatch. Shape validation against the config echo is the caller's
// job (it needs the model factory).
Checkpoint load_checkpoint(const std::string& path);

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

}  // namespace posefuse::cli

#endif
