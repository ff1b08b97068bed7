#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aeforge/eval.hpp"
#include "aeforge/image.hpp"
#include "aeforge/models.hpp"

namespace aeforge {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double peak_lr = 1e-3;
  double weight_decay = 0.05;
  std::int64_t warmup_steps = 200;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  // When set, the best-validation checkpoint is written to
  // checkpoint_dir/<name>.aefg.
  std::filesystem::path checkpoint_dir;
  std::string name = "model";

  void validate(std::int64_t steps_per_epoch) const;
};

struct TrainHistory {
  std::vector<double> step_loss;
  std::vector<double> step_lr;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_val_loss;
  std::vector<double> epoch_val_accuracy;  // detector only
  int best_epoch = 0;                      // 1-based
  std::vector<std::size_t> trained_ids;    // sorted indices used in gradient steps
  std::vector<std::size_t> val_ids;

  std::string to_csv() const;  // step,lr,loss
  nlohmann::json summary() const;
};

// Indices held out for validation. Samples sharing a group id land on the
// same side.
std::vector<std::size_t> validation_indices(std::span<const std::size_t> groups, double fraction, std::uint64_t seed);

struct AutoencoderTraining {
  Autoencoder<float> model;
  TrainHistory history;
};

// MSE reconstruction training. All images must share one size divisible by 8.
AutoencoderTraining train_autoencoder(std::span<const ImageRGB8> images, const TrainConfig& config,
                                      const AutoencoderConfig& arch);

struct LabeledCrop {
  ImageRGB8 image;
  int label = 0;          // 0 original, 1 reconstructed
  std::size_t group = 0;  // pair id
};

struct DetectorTraining {
  Detector<float> model;
  TrainHistory history;
};

DetectorTraining train_detector(std::span<const LabeledCrop> crops, const TrainConfig& config,
                                const DetectorConfig& arch);

struct ClassReport {
  std::optional<double> precision, recall, f1;
  std::size_t support = 0;
};

// Per-class precision / recall / F1 ("Original" and "Reconstructed" rows).
struct SplitEvaluation {
  ClassReport original;
  ClassReport reconstructed;
  ConfusionCounts counts;
  double accuracy = 0;
};

SplitEvaluation evaluate_predictions(std::span<const int> labels, std::span<const int> predictions);

// Per-crop rule: prob > threshold.
SplitEvaluation evaluate_split(const Detector<float>& detector, std::span<const LabeledCrop> crops,
                               double threshold = 0.5);

}  // namespace aeforge
