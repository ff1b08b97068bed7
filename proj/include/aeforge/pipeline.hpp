#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aeforge/datagen.hpp"
#include "aeforge/report.hpp"
#include "aeforge/training.hpp"

namespace aeforge {

struct AutoencoderSpec {
  std::string name;
  int latent_channels = 4;
  Activation activation = Activation::silu;
  std::uint64_t seed_offset = 0;
  int scene_count = 0;  // 0 = all training scenes
  int epochs = 5;
  int batch_size = 32;
  double peak_lr = 1e-3;
  std::int64_t warmup_steps = 60;
};

struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 7;
  std::filesystem::path workdir = ".";

  struct Paths {
    std::string data = "data";
    std::string corpus = "corpus";
    std::string eval = "eval";
    std::string checkpoints = "checkpoints";
    std::string reports = "reports";
    std::string stages = "stages";
  } paths;

  int ae_scene_count = 2000;
  int ae_scene_size = 64;
  AutoencoderSpec surrogate;
  std::vector<AutoencoderSpec> holdouts;
  double weight_decay = 0.05;
  double val_fraction = 0.1;

  int corpus_originals = 2000;
  int crop_size = 32;
  double test_fraction = 0.25;
  std::vector<ResolutionBucket> buckets;
  std::vector<double> bucket_weights;

  int detector_epochs = 40;
  int detector_batch_size = 32;
  double detector_peak_lr = 1e-3;
  std::int64_t detector_warmup_steps = 200;

  double fpr_target = 0.001;

  int eval_originals = 300;
  int eval_high_res = 60;
  int eval_per_holdout = 150;
  int eval_small_side = 48;  // 0 disables the fixed-size source
  int tries = 10;
  bool upscale_small = false;

  std::vector<int> robustness_jpeg = {90, 80};
  std::vector<double> robustness_resize = {0.75, 0.5};

  int card_size = 256;
  std::uint64_t card_seed = 1;
  std::vector<int> artifact_jpeg = {100, 95, 75, 50};

  Json to_json() const;
  static RunConfig from_json(const Json& j);
  void validate() const;

  std::filesystem::path path(const std::string& dir) const { return workdir / dir; }
};

// Built-in profile as JSON ("desk" or "paper-shape").
Json profile_json(const std::string& name);

// Profile named by the file's "profile" field (or the argument), with the
// file merge-patched on top.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::optional<std::string>& profile = std::nullopt);

// Checkpoint locations.
std::filesystem::path autoencoder_checkpoint(const RunConfig& cfg, const std::string& name);
std::filesystem::path detector_checkpoint(const RunConfig& cfg);

TrainConfig detector_train_config(const RunConfig& cfg);

// Stages. Each writes its outputs plus stages/<name>.json (input hashes,
// seed, duration). Missing prerequisites raise ConfigError naming the
// subcommand to run first.
void stage_gen_data(const RunConfig& cfg);
// Trains the named autoencoder, or all of them when name is empty.
void stage_train_ae(const RunConfig& cfg, const std::string& name = "");
void stage_build_corpus(const RunConfig& cfg);
void stage_train_detector(const RunConfig& cfg);
Calibration stage_calibrate(const RunConfig& cfg);
Json stage_eval(const RunConfig& cfg);
Json stage_robustness(const RunConfig& cfg);
Json stage_artifacts(const RunConfig& cfg);
void run_all(const RunConfig& cfg);

// Crops of a corpus split with labels and pair groups.
std::vector<LabeledCrop> load_labeled_crops(const CorpusManifest& manifest, const std::filesystem::path& root,
                                            const std::string& split);

}  // namespace aeforge
