#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aeforge {

// 64-bit FNV-1a. Used for checkpoint ids and per-path seed derivation.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

std::string hex64(std::uint64_t value);

// SplitMix64 finalizer; derives independent child seeds from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::string file_hash_hex(const std::filesystem::path& path);

// Worker count from AEFORGE_THREADS, else hardware concurrency (at least 1).
unsigned worker_count();

// Runs body(i) for i in [0, count) on up to worker_count() threads.
// Callers write results into pre-sized slots so output order never depends
// on scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace aeforge
