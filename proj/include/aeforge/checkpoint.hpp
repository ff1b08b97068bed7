#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace aeforge {

// Flat weight container. On-disk layout (all integers little-endian):
//   "AEFG"  u32 version  u32 count
//   per entry: u32 name_len, name bytes (UTF-8), u32 rank, rank x u64 dims,
//              numel x f32 data
struct CheckpointEntry {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;
  void add(std::string name, std::vector<std::uint64_t> dims, std::vector<float> data);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Hex FNV-1a of the encoded bytes; stable identity for a set of weights.
std::string checkpoint_hash(const Checkpoint& ckpt);

}  // namespace aeforge
