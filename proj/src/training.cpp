#include "aeforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "aeforge/error.hpp"
#include "aeforge/log.hpp"
#include "aeforge/ops.hpp"
#include "aeforge/optim.hpp"
#include "aeforge/util.hpp"

namespace aeforge {
namespace {

using Rng = std::mt19937_64;

std::int64_t ceil_div(std::size_t a, std::size_t b) { return static_cast<std::int64_t>((a + b - 1) / b); }

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

Split make_split(std::span<const std::size_t> groups, double fraction, std::uint64_t seed) {
  Split s;
  s.val = validation_indices(groups, fraction, seed);
  std::vector<bool> is_val(groups.size(), false);
  for (auto i : s.val) is_val[i] = true;
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (!is_val[i]) s.train.push_back(i);
  if (s.train.empty() || s.val.empty()) {
    throw ValidationError("training set of " + std::to_string(groups.size()) +
                          " samples is too small for a train/validation split");
  }
  return s;
}

template <typename Item, typename Get>
std::vector<ImageRGB8> gather(std::span<const Item> items, std::span<const std::size_t> idx, Get get) {
  std::vector<ImageRGB8> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(get(items[i]));
  return out;
}

void save_best(const TrainConfig& config, const Checkpoint& ckpt) {
  if (config.checkpoint_dir.empty()) return;
  save_checkpoint(ckpt, config.checkpoint_dir / (config.name + ".aefg"));
}

// Shared loop: shuffles the train indices each epoch and calls step_fn on
// every batch, returning its loss.
template <typename StepFn, typename EpochFn>
void run_epochs(const TrainConfig& config, const std::vector<std::size_t>& train, TrainHistory& history,
                StepFn step_fn, EpochFn epoch_fn) {
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::int64_t steps_per_epoch = ceil_div(train.size(), batch);
  LrSchedule schedule{config.warmup_steps, config.epochs * steps_per_epoch, config.peak_lr};
  schedule.validate();
  std::set<std::size_t> used;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    Rng rng(mix_seed(config.seed, 0xE0C0 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++step) {
      const std::span<const std::size_t> ids(order.data() + start, std::min(batch, order.size() - start));
      used.insert(ids.begin(), ids.end());
      const double lr = lr_at_step(schedule, step);
      double loss = 0;
      try {
        loss = step_fn(ids, lr);
      } catch (const NumericError& e) {
        throw NumericError(config.name + ": training diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(step) + " (lr " + fmt("%.3g", lr) + "): " + e.what());
      }
      history.step_loss.push_back(loss);
      history.step_lr.push_back(lr);
      loss_sum += loss * static_cast<double>(ids.size());
    }
    history.epoch_train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    epoch_fn(epoch);
  }
  history.trained_ids.assign(used.begin(), used.end());
}

}  // namespace

void TrainConfig::validate(std::int64_t steps_per_epoch) const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(peak_lr > 0)) throw ConfigError("peak_lr must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must be in (0,1)");
  if (warmup_steps < 1 || warmup_steps >= epochs * steps_per_epoch) {
    throw ConfigError("warmup_steps " + std::to_string(warmup_steps) + " must be in [1, " +
                      std::to_string(epochs * steps_per_epoch) + ") for " + std::to_string(epochs) + " epochs of " +
                      std::to_string(steps_per_epoch) + " steps");
  }
}

std::string TrainHistory::to_csv() const {
  std::string out = "step,lr,loss\n";
  char buf[96];
  for (std::size_t i = 0; i < step_loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", i, step_lr[i], step_loss[i]);
    out += buf;
  }
  return out;
}

nlohmann::json TrainHistory::summary() const {
  nlohmann::json j;
  j["steps"] = step_loss.size();
  j["epoch_train_loss"] = epoch_train_loss;
  j["epoch_val_loss"] = epoch_val_loss;
  if (!epoch_val_accuracy.empty()) j["epoch_val_accuracy"] = epoch_val_accuracy;
  j["best_epoch"] = best_epoch;
  j["trained_samples"] = trained_ids.size();
  j["validation_samples"] = val_ids.size();
  return j;
}

std::vector<std::size_t> validation_indices(std::span<const std::size_t> groups, double fraction,
                                            std::uint64_t seed) {
  std::vector<std::size_t> unique(groups.begin(), groups.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  Rng rng(mix_seed(seed, 0x7A1));
  std::shuffle(unique.begin(), unique.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(unique.size())));
  std::set<std::size_t> val_groups(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (val_groups.count(groups[i])) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------- autoencoder

AutoencoderTraining train_autoencoder(std::span<const ImageRGB8> images, const TrainConfig& config,
                                      const AutoencoderConfig& arch) {
  if (images.empty()) throw ValidationError("autoencoder training set is empty");
  const int w = images[0].width(), h = images[0].height();
  for (const auto& img : images) {
    if (img.width() != w || img.height() != h) throw ValidationError("autoencoder training images must share a size");
  }
  if (w % Autoencoder<float>::kDownsample != 0 || h % Autoencoder<float>::kDownsample != 0) {
    throw ValidationError("autoencoder training size " + std::to_string(w) + "x" + std::to_string(h) +
                          " is not divisible by " + std::to_string(Autoencoder<float>::kDownsample));
  }
  std::vector<std::size_t> groups(images.size());
  std::iota(groups.begin(), groups.end(), 0);
  const Split split = make_split(groups, config.val_fraction, config.seed);
  config.validate(ceil_div(split.train.size(), static_cast<std::size_t>(config.batch_size)));

  AutoencoderTraining result{Autoencoder<float>(arch), {}};
  auto& model = result.model;
  auto& history = result.history;
  history.val_ids = split.val;
  const auto train_images = gather(images, split.train, [](const ImageRGB8& i) { return i; });
  model.normalization = compute_normalization(train_images);

  auto params = model.parameters();
  AdamWHyper hyper;
  hyper.weight_decay = config.weight_decay;
  auto state = make_optimizer_state(params, hyper);

  const auto val_images = gather(images, split.val, [](const ImageRGB8& i) { return i; });
  auto val_loss = [&]() {
    NoGradGuard no_grad;
    double total = 0;
    const auto b = static_cast<std::size_t>(config.batch_size);
    for (std::size_t s = 0; s < val_images.size(); s += b) {
      const std::span<const ImageRGB8> chunk(val_images.data() + s, std::min(b, val_images.size() - s));
      const auto x = images_to_tensor<float>(chunk);
      total += mse(model.forward(x), x).item() * static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(val_images.size());
  };

  double best = std::numeric_limits<double>::infinity();
  Checkpoint best_ckpt;
  run_epochs(
      config, split.train, history,
      [&](std::span<const std::size_t> ids, double lr) {
        const auto batch = gather(images, ids, [](const ImageRGB8& i) { return i; });
        const auto x = images_to_tensor<float>(batch);
        zero_grad(params);
        auto loss = mse(model.forward(x), x);
        const double value = loss.item();
        backward(loss);
        adamw_step(params, state, lr);
        return value;
      },
      [&](int epoch) {
        const double v = val_loss();
        history.epoch_val_loss.push_back(v);
        log_info(config.name + " epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
                 ": train mse " + fmt("%.5f", history.epoch_train_loss.back()) + ", val mse " + fmt("%.5f", v));
        if (v < best) {
          best = v;
          history.best_epoch = epoch + 1;
          best_ckpt = model.to_checkpoint();
        }
      });
  model = Autoencoder<float>::from_checkpoint(best_ckpt);
  save_best(config, best_ckpt);
  return result;
}

// ------------------------------------------------------------------- detector

DetectorTraining train_detector(std::span<const LabeledCrop> crops, const TrainConfig& config,
                                const DetectorConfig& arch) {
  if (crops.empty()) throw ValidationError("detector training set is empty");
  std::size_t positives = 0;
  for (const auto& c : crops) {
    if (c.label != 0 && c.label != 1) throw ValidationError("detector labels must be 0 or 1");
    if (c.image.width() != arch.crop_size || c.image.height() != arch.crop_size) {
      throw ShapeError("training crop is " + std::to_string(c.image.width()) + "x" + std::to_string(c.image.height()) +
                       ", detector crop size is " + std::to_string(arch.crop_size));
    }
    positives += static_cast<std::size_t>(c.label);
  }
  if (positives == 0 || positives == crops.size()) {
    throw ValidationError("detector training set contains a single class");
  }
  std::vector<std::size_t> groups;
  groups.reserve(crops.size());
  for (const auto& c : crops) groups.push_back(c.group);
  const Split split = make_split(groups, config.val_fraction, config.seed);
  config.validate(ceil_div(split.train.size(), static_cast<std::size_t>(config.batch_size)));

  DetectorTraining result{Detector<float>(arch), {}};
  auto& model = result.model;
  auto& history = result.history;
  history.val_ids = split.val;
  auto image_of = [](const LabeledCrop& c) { return c.image; };
  model.normalization = compute_normalization(gather(crops, split.train, image_of));

  auto params = model.parameters();
  AdamWHyper hyper;
  hyper.weight_decay = config.weight_decay;
  auto state = make_optimizer_state(params, hyper);

  std::vector<LabeledCrop> val;
  for (auto i : split.val) val.push_back(crops[i]);

  double best_acc = -1, best_loss = std::numeric_limits<double>::infinity();
  Checkpoint best_ckpt;
  run_epochs(
      config, split.train, history,
      [&](std::span<const std::size_t> ids, double lr) {
        std::vector<float> labels;
        labels.reserve(ids.size());
        for (auto i : ids) labels.push_back(static_cast<float>(crops[i].label));
        const auto x = images_to_tensor<float>(gather(crops, ids, image_of));
        zero_grad(params);
        auto loss = bce_with_logits<float>(model.logits(x), labels);
        const double value = loss.item();
        backward(loss);
        adamw_step(params, state, lr);
        return value;
      },
      [&](int epoch) {
        std::vector<ImageRGB8> images;
        std::vector<int> labels;
        for (const auto& c : val) {
          images.push_back(c.image);
          labels.push_back(c.label);
        }
        const auto probs = detector_probabilities(model, images);
        double loss = 0;
        std::vector<int> pred;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
          loss -= labels[i] ? std::log(p) : std::log1p(-p);
          pred.push_back(probs[i] > 0.5 ? 1 : 0);
        }
        loss /= static_cast<double>(probs.size());
        const double acc = evaluate_predictions(labels, pred).accuracy;
        history.epoch_val_loss.push_back(loss);
        history.epoch_val_accuracy.push_back(acc);
        log_info(config.name + " epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
                 ": train bce " + fmt("%.5f", history.epoch_train_loss.back()) + ", val bce " + fmt("%.5f", loss) +
                 ", val acc " + fmt("%.4f", acc));
        if (acc > best_acc || (acc == best_acc && loss < best_loss)) {
          best_acc = acc;
          best_loss = loss;
          history.best_epoch = epoch + 1;
          best_ckpt = model.to_checkpoint();
        }
      });
  model = Detector<float>::from_checkpoint(best_ckpt);
  save_best(config, best_ckpt);
  return result;
}

// ----------------------------------------------------------------- evaluation

SplitEvaluation evaluate_predictions(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw ValidationError("labels and predictions differ in length");
  SplitEvaluation ev;
  ConfusionCounts& c = ev.counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool y = labels[i] == 1, p = predictions[i] == 1;
    if (y && p) ++c.tp;
    else if (!y && p) ++c.fp;
    else if (y && !p) ++c.fn;
    else ++c.tn;
  }
  const Metrics pos = metrics(c);
  ev.reconstructed = {pos.precision, pos.recall, pos.f1, c.tp + c.fn};
  // The original class is the positive class of the mirrored table.
  const Metrics neg = metrics(ConfusionCounts{c.tn, c.fn, c.fp, c.tp});
  ev.original = {neg.precision, neg.recall, neg.f1, c.tn + c.fp};
  ev.accuracy = c.total() ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
  return ev;
}

SplitEvaluation evaluate_split(const Detector<float>& detector, std::span<const LabeledCrop> crops,
                               double threshold) {
  std::vector<ImageRGB8> images;
  std::vector<int> labels;
  for (const auto& c : crops) {
    images.push_back(c.image);
    labels.push_back(c.label);
  }
  const auto probs = detector_probabilities(detector, images);
  std::vector<int> pred;
  for (double p : probs) pred.push_back(threshold_decision(p, threshold));
  return evaluate_predictions(labels, pred);
}

}  // namespace aeforge
