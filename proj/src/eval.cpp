#include "aeforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aeforge/error.hpp"
#include "aeforge/jpeg.hpp"

namespace aeforge {

Metrics metrics(const ConfusionCounts& c) {
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.tpr = m.recall;
  m.fpr = ratio(c.fp, c.fp + c.tn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0) {
    m.f1 = 2 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

RocResult roc_auc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw ValidationError("roc_auc needs positive and negative scores");
  std::vector<std::pair<double, bool>> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.emplace_back(s, true);
  for (double s : negatives) all.emplace_back(s, false);
  for (const auto& [s, _] : all)
    if (std::isnan(s)) throw ValidationError("roc_auc scores must not be NaN");
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double np = static_cast<double>(positives.size()), nn = static_cast<double>(negatives.size());
  RocResult r;
  r.curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double score = all[i].first;
    for (; i < all.size() && all[i].first == score; ++i) (all[i].second ? tp : fp) += 1;
    const RocPoint prev = r.curve.points.back();
    const RocPoint cur{static_cast<double>(fp) / nn, static_cast<double>(tp) / np, score};
    r.auc += (cur.fpr - prev.fpr) * (cur.tpr + prev.tpr) / 2;
    r.curve.points.push_back(cur);
  }
  return r;
}

double tpr_at_fpr(std::span<const double> positives, std::span<const double> negatives, double fpr_cap) {
  if (!(fpr_cap >= 0 && fpr_cap <= 1)) throw ValidationError("fpr_cap must be in [0,1]");
  const auto roc = roc_auc(positives, negatives);
  double best = 0;
  for (const auto& p : roc.curve.points)
    if (p.fpr <= fpr_cap) best = std::max(best, p.tpr);
  return best;
}

// ---------------------------------------------------------------- robustness

ImageRGB8 RobustnessTransform::apply(const ImageRGB8& image) const {
  switch (kind) {
    case Kind::identity: return image;
    case Kind::jpeg: return jpeg_degrade(image, quality);
    case Kind::resize: return resize_bilinear(image, scale);
  }
  return image;
}

std::vector<RobustnessTransform> robustness_transforms(std::span<const int> jpeg_qualities,
                                                       std::span<const double> resize_scales) {
  std::vector<RobustnessTransform> out{{"none", RobustnessTransform::Kind::identity, 100, 1.0}};
  for (int q : jpeg_qualities) {
    if (q < 1 || q > 100) throw ValidationError("JPEG quality " + std::to_string(q) + " outside 1..100");
    out.push_back({"jpeg" + std::to_string(q), RobustnessTransform::Kind::jpeg, q, 1.0});
  }
  for (double s : resize_scales) {
    if (!(s > 0 && s <= 1)) throw ValidationError("resize scale must be in (0,1]");
    out.push_back({"resize" + std::to_string(static_cast<int>(std::lround(s * 100))),
                   RobustnessTransform::Kind::resize, 100, s});
  }
  return out;
}

const RobustnessCell* RobustnessGrid::find(const std::string& source, const std::string& transform) const {
  for (const auto& c : cells)
    if (c.source == source && c.transform == transform) return &c;
  return nullptr;
}

RobustnessGrid robustness_sweep(const CorpusManifest& manifest, const std::filesystem::path& root,
                                const Detector<float>& detector, const DecisionConfig& config,
                                std::span<const int> jpeg_qualities, std::span<const double> resize_scales) {
  RobustnessGrid grid;
  grid.tries = config.tries;
  grid.threshold = config.threshold;
  grid.sources = manifest.sources();
  const auto transforms = robustness_transforms(jpeg_qualities, resize_scales);
  std::vector<std::vector<SourceDecisions>> columns;
  for (const auto& t : transforms) {
    grid.transforms.push_back(t.name);
    ImageTransform fn;
    if (t.kind != RobustnessTransform::Kind::identity) fn = [&t](const ImageRGB8& img) { return t.apply(img); };
    columns.push_back(batch_decide(manifest, root, detector, config, "", fn));
  }
  for (const auto& source : grid.sources) {
    for (std::size_t k = 0; k < transforms.size(); ++k) {
      RobustnessCell cell;
      cell.source = source;
      cell.transform = transforms[k].name;
      for (const auto& sd : columns[k]) {
        if (sd.source != source) continue;
        cell.label = sd.label;
        cell.rate = sd.rate_multi();
        cell.evaluated = sd.evaluated;
        cell.skipped = sd.skipped;
        cell.errors = sd.errors.size();
        cell.skip_reason = sd.skip_reason;
      }
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

// ------------------------------------------------------------------ artifacts

ColorStats color_stats(const ImageRGB8& image) { return {unique_colors(image), bw_fraction(image)}; }

std::vector<ArtifactRow> artifact_report(const ImageRGB8& card, std::span<const NamedAutoencoder> autoencoders,
                                         std::span<const int> jpeg_qualities, const std::filesystem::path& vis_dir,
                                         std::uint64_t vis_seed) {
  std::vector<ArtifactRow> rows;
  auto visualize = [&](const std::string& name, const ImageRGB8& img) {
    if (vis_dir.empty()) return;
    save_ppm(img, vis_dir / (name + ".ppm"));
    save_ppm(color_randomize(img, vis_seed), vis_dir / (name + ".randomized.ppm"));
  };
  auto full_row = [&](const std::string& name, const std::string& kind, const ImageRGB8& img) {
    ArtifactRow row{name, kind, color_stats(img), color_stats(jpeg_degrade(img, 85)),
                    color_stats(resize_bilinear(img, 0.5))};
    visualize(name, img);
    rows.push_back(std::move(row));
  };
  full_row("original", "original", card);
  for (int q : jpeg_qualities) {
    const ImageRGB8 img = jpeg_degrade(card, q);
    const std::string name = "jpeg" + std::to_string(q);
    rows.push_back({name, "jpeg", color_stats(img), std::nullopt, std::nullopt});
    visualize(name, img);
  }
  for (const auto& ae : autoencoders) {
    if (!ae.model) throw ValidationError("artifact report: autoencoder '" + ae.name + "' is null");
    full_row(ae.name, "autoencoder", ae_reconstruct(*ae.model, card));
  }
  return rows;
}

}  // namespace aeforge
