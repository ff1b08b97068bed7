#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "aeforge/image.hpp"
#include "aeforge/models.hpp"

namespace aeforge {

enum class Texture { flat, gradient, noise_speckle, stripes };

std::string texture_name(Texture t);

struct SceneSpec {
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  int palette_size = 4;
  int shape_count = 4;
  Texture texture = Texture::flat;
  // Optional explicit palette; when empty, palette_size colors are drawn from
  // the seed. When set, its size must equal palette_size.
  std::vector<Rgb> palette;
};

// Filled rectangles, circles and triangles over a textured background.
// Every pixel takes a palette color (no anti-aliasing, no blending).
ImageRGB8 generate_scene(const SceneSpec& spec);

// Scene parameters drawn from a seed for a given size: palette of 2-8 colors,
// random texture, shape count proportional to area.
SceneSpec random_scene_spec(std::uint64_t seed, int width, int height);

// White background with black rectangles, circles, triangles and rings.
ImageRGB8 generate_test_card(std::uint64_t seed, int width = 256, int height = 256);

struct ResolutionBucket {
  int min_side = 64;
  int max_side = 96;
};

struct SampledResolution {
  int width = 0;
  int height = 0;
  std::size_t bucket = 0;
};

// Bucket by weighted draw, width uniform in [min_side, max_side], height =
// round(width * r) with r uniform in [3/4, 4/3].
SampledResolution sample_resolution(std::span<const ResolutionBucket> buckets, std::span<const double> weights,
                                    std::mt19937_64& rng);

// 64-96, 96-128, 128-192, 192-256, 256-384, 384-512.
std::vector<ResolutionBucket> desk_buckets();

enum class Label { original = 0, reconstructed = 1 };

std::string label_name(Label label);
Label parse_label(const std::string& name);

struct ManifestEntry {
  std::string path;  // relative to the manifest's root directory
  Label label = Label::original;
  std::string source;
  int bucket = -1;  // -1 when not bucket-sampled
  std::uint64_t seed = 0;
  std::string split;   // "train", "test" or "eval"
  std::string parent;  // originating original entry (reconstructed only)
  bool high_res = false;
};

// Newline-delimited JSON: a header line {"format_version":1,...} followed by
// one record per entry.
struct CorpusManifest {
  static constexpr int kFormatVersion = 1;

  std::vector<ManifestEntry> entries;

  void validate() const;
  std::string to_jsonl() const;
  static CorpusManifest from_jsonl(const std::string& text);

  void save(const std::filesystem::path& path) const;
  static CorpusManifest load(const std::filesystem::path& path);

  std::vector<const ManifestEntry*> select(const std::string& split) const;
  std::vector<std::string> sources() const;  // first-appearance order
};

struct CorpusConfig {
  int originals = 100;
  int crop_size = 32;
  double test_fraction = 0.25;
  std::uint64_t seed = 0;
  std::vector<ResolutionBucket> buckets = desk_buckets();
  std::vector<double> weights = {1, 1, 1, 1, 1, 1};
  std::string original_source = "scenes";
  std::string reconstructed_source = "surrogate";
};

// One random crop per scene; originals are written to disk before the
// autoencoder runs. The reconstruction is the same window cropped from the
// reconstructed scene (scene sides floored to multiples of 8). Pairs share a
// split.
// Layout: {train,test}/{original,reconstructed}/NNNNNN.ppm under root.
CorpusManifest build_corpus(const CorpusConfig& config, const Autoencoder<float>& ae,
                            const std::filesystem::path& root);

// Fixed-size scenes without any reconstruction (autoencoder training data).
CorpusManifest generate_scene_set(int count, int width, int height, std::uint64_t seed,
                                  const std::string& source, const std::filesystem::path& root,
                                  const std::string& subdir);

struct HoldoutSource {
  std::string name;
  std::filesystem::path checkpoint;
};

struct HoldoutConfig {
  std::uint64_t seed = 0;
  int count = 50;
  std::vector<ResolutionBucket> buckets = desk_buckets();
  std::vector<double> weights = {1, 1, 1, 1, 1, 0};
  // When > 0, every scene is this size instead of bucket-sampled.
  int fixed_side = 0;
};

// Source id: name + "-" + first 8 hex digits of the checkpoint hash.
std::string holdout_source_id(const std::string& name, const Checkpoint& ckpt);

// Fresh scenes (dims floored to multiples of 8) reconstructed through each
// holdout autoencoder. Files go to root/<source id>/NNNNNN.ppm.
CorpusManifest build_holdout_generators(const HoldoutConfig& config, std::span<const HoldoutSource> sources,
                                        const std::filesystem::path& root);

// Fresh untouched scenes for false-positive measurement.
CorpusManifest build_original_set(const HoldoutConfig& config, const std::string& source, bool high_res,
                                  const std::filesystem::path& root);

}  // namespace aeforge
