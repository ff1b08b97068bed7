#include "aeforge/inference.hpp"

#include <algorithm>
#include <cmath>

#include "aeforge/error.hpp"
#include "aeforge/log.hpp"
#include "aeforge/util.hpp"

namespace aeforge {

void DecisionConfig::validate() const {
  if (tries < 1) throw ValidationError("tries must be >= 1");
  if (!(threshold > 0 && threshold < 1)) throw ValidationError("threshold must be in (0,1)");
  if (crop_size < 1) throw ValidationError("crop size must be >= 1");
}

double mean_probability(std::span<const double> probs) {
  if (probs.empty()) throw ValidationError("cannot average an empty probability list");
  long double acc = 0;
  for (double p : probs) acc += p;
  return static_cast<double>(acc / static_cast<long double>(probs.size()));
}

std::uint64_t image_seed(std::uint64_t global_seed, std::string_view key) {
  return mix_seed(global_seed, fnv1a64(key));
}

namespace {

// Image ready for cropping, upscaled if allowed and needed.
ImageRGB8 prepare(const ImageRGB8& image, const DecisionConfig& config, bool& upscaled) {
  upscaled = false;
  const int side = std::min(image.width(), image.height());
  if (side >= config.crop_size) return image;
  if (!config.upscale_small) {
    throw TooSmallError("image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                        " is smaller than the " + std::to_string(config.crop_size) +
                        "px crop (enable upscale-small to resize it)");
  }
  upscaled = true;
  ImageRGB8 up = resize_bilinear(image, static_cast<double>(config.crop_size) / side);
  if (std::min(up.width(), up.height()) < config.crop_size) {
    up = resize_bilinear(image, static_cast<double>(config.crop_size + 1) / side);
  }
  return up;
}

}  // namespace

Verdict decide(const ImageRGB8& image, const Detector<float>& detector, const DecisionConfig& config) {
  config.validate();
  if (config.crop_size != detector.config().crop_size) {
    throw ShapeError("decision crop size " + std::to_string(config.crop_size) + " does not match the detector's " +
                     std::to_string(detector.config().crop_size));
  }
  Verdict v;
  v.seed = config.seed;
  const ImageRGB8 ready = prepare(image, config, v.upscaled);
  const CropSpec spec{config.crop_size, config.tries, config.seed};
  const auto corners = crop_corners(ready.width(), ready.height(), spec);
  std::vector<ImageRGB8> crops;
  crops.reserve(corners.size());
  for (const auto& c : corners) crops.push_back(crop(ready, c, config.crop_size));
  const auto probs = detector_probabilities(detector, crops);
  for (std::size_t i = 0; i < corners.size(); ++i) v.crops.push_back({corners[i], probs[i]});
  v.aggregate = mean_probability(probs);
  v.decision = threshold_decision(v.aggregate, config.threshold);
  return v;
}

// ---------------------------------------------------------------- calibration

std::vector<double> threshold_candidates(std::span<const double> original, std::span<const double> reconstructed) {
  std::vector<double> s(original.begin(), original.end());
  s.insert(s.end(), reconstructed.begin(), reconstructed.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> out;
  out.reserve(2 * s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.push_back(s[i]);
    if (i + 1 < s.size()) {
      const double mid = s[i] + (s[i + 1] - s[i]) / 2;
      if (mid > s[i] && mid < s[i + 1]) out.push_back(mid);
    }
  }
  return out;
}

double fpr_at(std::span<const double> original, double t) {
  if (original.empty()) return 0;
  const auto fp = std::count_if(original.begin(), original.end(), [t](double s) { return s > t; });
  return static_cast<double>(fp) / static_cast<double>(original.size());
}

double recall_at(std::span<const double> reconstructed, double t) {
  if (reconstructed.empty()) return 0;
  const auto tp = std::count_if(reconstructed.begin(), reconstructed.end(), [t](double s) { return s > t; });
  return static_cast<double>(tp) / static_cast<double>(reconstructed.size());
}

Calibration calibrate_threshold(std::span<const double> original, std::span<const double> reconstructed,
                                double fpr_target) {
  if (original.empty() || reconstructed.empty()) {
    throw ValidationError("calibration needs scores for both original and reconstructed samples");
  }
  if (std::isnan(fpr_target) || fpr_target > 1) throw ValidationError("fpr_target must be <= 1");
  const auto candidates = threshold_candidates(original, reconstructed);
  Calibration c;
  c.fpr_target = fpr_target;
  c.candidates = candidates.size();
  // FPR is non-increasing in t, so the first hit is the smallest feasible t
  // and therefore the recall-maximal one.
  auto it = std::find_if(candidates.begin(), candidates.end(),
                         [&](double t) { return fpr_at(original, t) <= fpr_target; });
  if (it == candidates.end()) {
    log_warn("no threshold reaches FPR <= " + std::to_string(fpr_target) + "; using the largest score");
    c.threshold = candidates.back();
    c.target_met = false;
  } else {
    c.threshold = *it;
  }
  c.achieved_fpr = fpr_at(original, c.threshold);
  c.achieved_recall = recall_at(reconstructed, c.threshold);
  return c;
}

// -------------------------------------------------------------- batch decide

std::optional<double> SourceDecisions::rate_single() const {
  if (evaluated == 0) return std::nullopt;
  return static_cast<double>(positives_single) / static_cast<double>(evaluated);
}

std::optional<double> SourceDecisions::rate_multi() const {
  if (evaluated == 0) return std::nullopt;
  return static_cast<double>(positives_multi) / static_cast<double>(evaluated);
}

std::vector<SourceDecisions> batch_decide(const CorpusManifest& manifest, const std::filesystem::path& root,
                                          const Detector<float>& detector, const DecisionConfig& config,
                                          const std::string& split, const ImageTransform& transform) {
  config.validate();
  std::vector<const ManifestEntry*> items;
  for (const auto& e : manifest.entries)
    if (split.empty() || e.split == split) items.push_back(&e);

  enum class Outcome { ok, skipped, error };
  struct Slot {
    Outcome outcome = Outcome::ok;
    double single = 0, multi = 0;
    std::string message;
  };
  std::vector<Slot> slots(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    Slot& slot = slots[i];
    ImageRGB8 image;
    try {
      image = load_ppm(root / items[i]->path);
    } catch (const Error& e) {
      slot.outcome = Outcome::error;
      slot.message = e.what();
      return;
    }
    if (transform) image = transform(image);
    if (!config.upscale_small && std::min(image.width(), image.height()) < config.crop_size) {
      slot.outcome = Outcome::skipped;
      slot.message = "image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                     " after transform, below the " + std::to_string(config.crop_size) + "px crop";
      return;
    }
    DecisionConfig c = config;
    c.seed = image_seed(config.seed, items[i]->path);
    const Verdict v = decide(image, detector, c);
    slot.single = v.crops.front().prob;
    slot.multi = v.aggregate;
  });

  std::vector<SourceDecisions> out;
  for (const auto& name : manifest.sources()) {
    SourceDecisions sd;
    sd.source = name;
    sd.tries = config.tries;
    bool seen = false;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i]->source != name) continue;
      seen = true;
      sd.label = items[i]->label;
      const Slot& slot = slots[i];
      switch (slot.outcome) {
        case Outcome::error:
          sd.errors.push_back({items[i]->path, slot.message});
          break;
        case Outcome::skipped:
          ++sd.skipped;
          if (sd.skip_reason.empty()) sd.skip_reason = slot.message;
          break;
        case Outcome::ok:
          ++sd.evaluated;
          sd.paths.push_back(items[i]->path);
          sd.scores_single.push_back(slot.single);
          sd.scores_multi.push_back(slot.multi);
          sd.positives_single += static_cast<std::size_t>(threshold_decision(slot.single, config.threshold));
          sd.positives_multi += static_cast<std::size_t>(threshold_decision(slot.multi, config.threshold));
          break;
      }
    }
    if (seen) out.push_back(std::move(sd));
  }
  return out;
}

}  // namespace aeforge
