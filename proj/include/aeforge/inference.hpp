#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aeforge/datagen.hpp"
#include "aeforge/image.hpp"
#include "aeforge/models.hpp"

namespace aeforge {

struct DecisionConfig {
  int tries = 1;
  double threshold = 0.5;
  int crop_size = 32;
  std::uint64_t seed = 0;
  // Images smaller than the crop are bilinearly upscaled instead of rejected.
  bool upscale_small = false;

  void validate() const;
};

struct CropScore {
  CropCorner corner;
  double prob = 0;
};

struct Verdict {
  int decision = 0;  // 1 = not original
  double aggregate = 0;
  std::vector<CropScore> crops;
  std::uint64_t seed = 0;
  bool upscaled = false;
};

// Arithmetic mean, accumulated in extended precision so that e.g. ten
// values averaging exactly t compare equal to t.
double mean_probability(std::span<const double> probs);

// Strict comparison: aggregate > threshold.
inline int threshold_decision(double aggregate, double threshold) { return aggregate > threshold ? 1 : 0; }

// Per-image crop seed: mix of the global seed and a hash of the image key
// (usually its manifest path).
std::uint64_t image_seed(std::uint64_t global_seed, std::string_view key);

// Draws config.tries crops with config.seed, scores, averages, thresholds.
Verdict decide(const ImageRGB8& image, const Detector<float>& detector, const DecisionConfig& config);

struct Calibration {
  double threshold = 0.5;
  double achieved_fpr = 0;
  double achieved_recall = 0;
  double fpr_target = 0;
  std::size_t candidates = 0;
  bool target_met = true;
};

// Sorted distinct scores of both classes plus midpoints between neighbors.
std::vector<double> threshold_candidates(std::span<const double> original, std::span<const double> reconstructed);

// FPR / recall of the rule score > t.
double fpr_at(std::span<const double> original, double t);
double recall_at(std::span<const double> reconstructed, double t);

// Smallest candidate t with FPR(t) <= fpr_target. A negative target cannot be
// met; t is then the largest score and a warning is logged.
Calibration calibrate_threshold(std::span<const double> original, std::span<const double> reconstructed,
                                double fpr_target);

struct ItemError {
  std::string path;
  std::string message;
};

// One source of a manifest under the "1 try" and "N tries" rules. The
// single-crop verdict uses the same per-image seed, so its crop is the first
// of the N.
struct SourceDecisions {
  std::string source;
  Label label = Label::original;
  int tries = 10;
  std::size_t evaluated = 0;
  std::size_t positives_single = 0;
  std::size_t positives_multi = 0;
  std::vector<double> scores_single;
  std::vector<double> scores_multi;
  std::vector<std::string> paths;
  std::size_t skipped = 0;
  std::string skip_reason;
  std::vector<ItemError> errors;

  // TPR for reconstructed sources, FPR for original ones; empty when no
  // image was evaluated.
  std::optional<double> rate_single() const;
  std::optional<double> rate_multi() const;
};

using ImageTransform = std::function<ImageRGB8(const ImageRGB8&)>;

// Decides every manifest entry in the given split ("" = all) with
// config.tries crops. An optional transform is applied to the full image
// before cropping; images that end up below crop size are skipped (or
// upscaled with config.upscale_small). Unreadable files become ItemErrors.
std::vector<SourceDecisions> batch_decide(const CorpusManifest& manifest, const std::filesystem::path& root,
                                          const Detector<float>& detector, const DecisionConfig& config,
                                          const std::string& split = "", const ImageTransform& transform = {});

}  // namespace aeforge
