#pragma once

// Binary model checkpoints exchanged between the cloud, edge and device tiers.
//
// Layout (all integers little-endian):
//   "DCPR"                      magic, 4 bytes
//   u16 version                 kCheckpointVersion
//   u8  kind                    0 global, 1 region, 2 patch
//   u32 n, n bytes              resolved configuration snapshot (key = value text)
//   u32 tensor count
//   per tensor:
//     u16 n, n bytes            name
//     u8  rank, rank x u32      dims
//     prod(dims) x f32          values
//   32 bytes                    SHA-256 of every preceding byte

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dcpr/denoisers.hpp"

namespace dcpr {

inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class ModelKind : std::uint8_t { kGlobal = 0, kRegion = 1, kPatch = 2 };

std::string to_string(ModelKind k);

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string hex(const Digest& d);

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  ModelKind kind = ModelKind::kGlobal;
  std::string config;
  std::vector<NamedTensor> tensors;

  const NamedTensor& tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
// Throws CheckpointError with kBadMagic, kVersion, kTruncated, kHash or kFormat.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Checkpoint to_checkpoint(const GlobalModel& m, const std::string& config);
Checkpoint to_checkpoint(const RegionModel& m, const std::string& config);
Checkpoint to_checkpoint(const PatchModel& m, const std::string& config);

GlobalModel global_from_checkpoint(const Checkpoint& c);
RegionModel region_from_checkpoint(const Checkpoint& c);
PatchModel patch_from_checkpoint(const Checkpoint& c);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

template <typename Model>
void save_checkpoint(const std::filesystem::path& path, const Model& m, const std::string& config) {
  write_bytes(path, encode_checkpoint(to_checkpoint(m, config)));
}
Checkpoint load_checkpoint(const std::filesystem::path& path);
GlobalModel load_global(const std::filesystem::path& path);
RegionModel load_region(const std::filesystem::path& path);
PatchModel load_patch(const std::filesystem::path& path);

// SHA-256 over the in-memory parameter values, for freeze audits.
Digest parameter_hash(const GlobalModel& m);
Digest parameter_hash(const RegionModel& m);
Digest parameter_hash(const PatchModel& m);

// Round every parameter (and stored scalar) to binary32 so that checkpoints
// are lossless.
void round_to_float(GlobalModel& m);
void round_to_float(RegionModel& m);
void round_to_float(PatchModel& m);

}  // namespace dcpr
