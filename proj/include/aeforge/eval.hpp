#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aeforge/datagen.hpp"
#include "aeforge/image.hpp"
#include "aeforge/inference.hpp"
#include "aeforge/models.hpp"

namespace aeforge {

// Positive class = reconstructed / not original.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

// std::nullopt marks 0/0.
struct Metrics {
  std::optional<double> precision, recall, f1, tpr, fpr;
};

Metrics metrics(const ConfusionCounts& counts);

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  double threshold = 0;  // score >= threshold counts as positive; +inf first
};

struct RocCurve {
  std::vector<RocPoint> points;
};

struct RocResult {
  RocCurve curve;
  double auc = 0;
};

// One point per distinct score (ties grouped), trapezoidal area.
RocResult roc_auc(std::span<const double> positives, std::span<const double> negatives);

// Largest TPR over thresholds whose FPR does not exceed fpr_cap.
double tpr_at_fpr(std::span<const double> positives, std::span<const double> negatives, double fpr_cap);

struct RobustnessTransform {
  enum class Kind { identity, jpeg, resize };
  std::string name;
  Kind kind = Kind::identity;
  int quality = 100;
  double scale = 1.0;

  ImageRGB8 apply(const ImageRGB8& image) const;
};

// "none", then "jpeg<q>" per quality, then "resize<pct>" per scale.
std::vector<RobustnessTransform> robustness_transforms(std::span<const int> jpeg_qualities,
                                                       std::span<const double> resize_scales);

struct RobustnessCell {
  std::string source;
  std::string transform;
  Label label = Label::original;
  std::optional<double> rate;  // empty = "-" cell
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::size_t errors = 0;
  std::string skip_reason;
};

struct RobustnessGrid {
  int tries = 10;
  double threshold = 0.5;
  std::vector<std::string> sources;
  std::vector<std::string> transforms;
  std::vector<RobustnessCell> cells;  // source-major

  const RobustnessCell* find(const std::string& source, const std::string& transform) const;
};

// Transforms full images, then crops; rate = TPR (reconstructed) or FPR
// (original) under config.tries crops at config.threshold.
RobustnessGrid robustness_sweep(const CorpusManifest& manifest, const std::filesystem::path& root,
                                const Detector<float>& detector, const DecisionConfig& config,
                                std::span<const int> jpeg_qualities = std::vector<int>{90, 80},
                                std::span<const double> resize_scales = std::vector<double>{0.75, 0.5});

struct ColorStats {
  std::size_t unique_colors = 0;
  double bw_fraction = 0;
};

ColorStats color_stats(const ImageRGB8& image);

struct ArtifactRow {
  std::string name;
  std::string kind;  // "original", "jpeg" or "autoencoder"
  ColorStats base;
  std::optional<ColorStats> jpeg85;
  std::optional<ColorStats> resize50;
};

struct NamedAutoencoder {
  std::string name;
  const Autoencoder<float>* model = nullptr;
};

// Rows: original, one per JPEG quality (base column only), one per
// autoencoder. When vis_dir is non-empty, writes <row>.ppm and
// <row>.randomized.ppm (color_randomize with vis_seed) there.
std::vector<ArtifactRow> artifact_report(const ImageRGB8& card, std::span<const NamedAutoencoder> autoencoders,
                                         std::span<const int> jpeg_qualities = std::vector<int>{100, 95, 75, 50},
                                         const std::filesystem::path& vis_dir = {}, std::uint64_t vis_seed = 0);

}  // namespace aeforge
