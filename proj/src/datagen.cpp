#include "aeforge/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "aeforge/error.hpp"
#include "aeforge/log.hpp"
#include "aeforge/util.hpp"

namespace aeforge {
namespace {

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double uniform_real(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

constexpr int kBayer4[4][4] = {{0, 8, 2, 10}, {12, 4, 14, 6}, {3, 11, 1, 9}, {15, 7, 13, 5}};

struct Canvas {
  ImageRGB8& img;

  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < img.width() && y < img.height(); }

  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width());
    y1 = std::min(y1, img.height());
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) img.at(x, y) = c;
  }

  // Pixel centers within [r_in, r_out] of (cx, cy).
  void ring(double cx, double cy, double r_in, double r_out, Rgb c) {
    const int x0 = static_cast<int>(std::floor(cx - r_out)), x1 = static_cast<int>(std::ceil(cx + r_out));
    const int y0 = static_cast<int>(std::floor(cy - r_out)), y1 = static_cast<int>(std::ceil(cy + r_out));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!inside(x, y)) continue;
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= r_out * r_out && d2 >= r_in * r_in) img.at(x, y) = c;
      }
    }
  }

  void triangle(const double (&px)[3], const double (&py)[3], Rgb c) {
    const int x0 = static_cast<int>(std::floor(std::min({px[0], px[1], px[2]})));
    const int x1 = static_cast<int>(std::ceil(std::max({px[0], px[1], px[2]})));
    const int y0 = static_cast<int>(std::floor(std::min({py[0], py[1], py[2]})));
    const int y1 = static_cast<int>(std::ceil(std::max({py[0], py[1], py[2]})));
    auto edge = [&](int i, int j, double x, double y) {
      return (px[j] - px[i]) * (y - py[i]) - (py[j] - py[i]) * (x - px[i]);
    };
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!inside(x, y)) continue;
        const double sx = x + 0.5, sy = y + 0.5;
        const double e0 = edge(0, 1, sx, sy), e1 = edge(1, 2, sx, sy), e2 = edge(2, 0, sx, sy);
        if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) img.at(x, y) = c;
      }
    }
  }
};

// One shape of extent ~size centered somewhere in the image.
void draw_random_shape(Canvas& canvas, Rng& rng, int size, Rgb color, bool allow_ring) {
  const int w = canvas.img.width(), h = canvas.img.height();
  const double cx = uniform_real(rng, 0.0, w), cy = uniform_real(rng, 0.0, h);
  const int kind = uniform_int(rng, 0, allow_ring ? 3 : 2);
  switch (kind) {
    case 0: {
      const int rw = uniform_int(rng, std::max(1, size / 2), size);
      const int rh = uniform_int(rng, std::max(1, size / 2), size);
      const int x0 = static_cast<int>(cx) - rw / 2, y0 = static_cast<int>(cy) - rh / 2;
      canvas.rect(x0, y0, x0 + rw, y0 + rh, color);
      break;
    }
    case 1:
      canvas.ring(cx, cy, 0.0, size / 2.0, color);
      break;
    case 2: {
      double px[3], py[3];
      for (int i = 0; i < 3; ++i) {
        px[i] = cx + uniform_real(rng, -size / 2.0, size / 2.0);
        py[i] = cy + uniform_real(rng, -size / 2.0, size / 2.0);
      }
      canvas.triangle(px, py, color);
      break;
    }
    default: {
      const double r = size / 2.0;
      canvas.ring(cx, cy, r * uniform_real(rng, 0.4, 0.75), r, color);
      break;
    }
  }
}

void fill_background(ImageRGB8& img, Texture texture, const std::vector<Rgb>& palette, Rng& rng) {
  const int w = img.width(), h = img.height();
  const int n = static_cast<int>(palette.size());
  const Rgb a = palette[uniform_int(rng, 0, n - 1)];
  Rgb b = palette[uniform_int(rng, 0, n - 1)];
  if (b == a) b = palette[(std::find(palette.begin(), palette.end(), a) - palette.begin() + 1) % n];
  switch (texture) {
    case Texture::flat:
      std::fill(img.pixels().begin(), img.pixels().end(), a);
      break;
    case Texture::gradient: {
      // Two-color ordered dither along one axis, 8x8-pixel dither cells.
      const bool horizontal = uniform_int(rng, 0, 1) == 0;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int pos = horizontal ? x : y;
          const int len = horizontal ? w : h;
          const double t = len > 1 ? static_cast<double>(pos) / (len - 1) : 0.0;
          img.at(x, y) = t > (kBayer4[(y / 8) % 4][(x / 8) % 4] + 0.5) / 16.0 ? b : a;
        }
      }
      break;
    }
    case Texture::noise_speckle: {
      std::fill(img.pixels().begin(), img.pixels().end(), a);
      // 4x4 speckles on a 4-pixel grid.
      const double density = uniform_real(rng, 0.05, 0.25);
      std::bernoulli_distribution speckle(density);
      for (int y0 = 0; y0 < h; y0 += 4) {
        for (int x0 = 0; x0 < w; x0 += 4) {
          if (!speckle(rng)) continue;
          const Rgb c = palette[uniform_int(rng, 0, n - 1)];
          for (int y = y0; y < std::min(h, y0 + 4); ++y)
            for (int x = x0; x < std::min(w, x0 + 4); ++x) img.at(x, y) = c;
        }
      }
      break;
    }
    case Texture::stripes: {
      const int half_period = uniform_int(rng, 8, 16);
      const int orientation = uniform_int(rng, 0, 2);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int coord = orientation == 0 ? y : orientation == 1 ? x : x + y;
          img.at(x, y) = (coord / half_period) % 2 == 0 ? a : b;
        }
      }
      break;
    }
  }
}

std::string index_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu.ppm", i);
  return buf;
}

int floor8(int v) { return std::max(8, v / 8 * 8); }

// Pixels past the AE's padding reach on each side of a reconstructed window.
constexpr int kContextMargin = 32;

// Same pixels as cropping ae_reconstruct(scene), up to float summation order:
// the window is 8-aligned and extends kContextMargin past the crop.
ImageRGB8 reconstruct_window(const Autoencoder<float>& ae, const ImageRGB8& scene, CropCorner corner, int size) {
  const int x0 = std::max(0, (corner.x - kContextMargin) / 8 * 8);
  const int y0 = std::max(0, (corner.y - kContextMargin) / 8 * 8);
  const int x1 = std::min(scene.width(), (corner.x + size + kContextMargin + 7) / 8 * 8);
  const int y1 = std::min(scene.height(), (corner.y + size + kContextMargin + 7) / 8 * 8);
  ImageRGB8 window(x1 - x0, y1 - y0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) window.at(x - x0, y - y0) = scene.at(x, y);
  return crop(ae_reconstruct(ae, window), {corner.x - x0, corner.y - y0}, size);
}

nlohmann::json entry_to_json(const ManifestEntry& e) {
  return {{"path", e.path},     {"label", label_name(e.label)}, {"source", e.source}, {"bucket", e.bucket},
          {"seed", e.seed},     {"split", e.split},             {"parent", e.parent}, {"high_res", e.high_res}};
}

}  // namespace

std::string texture_name(Texture t) {
  switch (t) {
    case Texture::flat: return "flat";
    case Texture::gradient: return "gradient";
    case Texture::noise_speckle: return "noise-speckle";
    case Texture::stripes: return "stripes";
  }
  return "flat";
}

ImageRGB8 generate_scene(const SceneSpec& spec) {
  if (spec.width < 1 || spec.height < 1) throw ValidationError("scene dimensions must be positive");
  if (spec.palette_size < 2) throw ValidationError("palette_size must be >= 2");
  if (spec.shape_count < 1) throw ValidationError("shape_count must be >= 1");
  if (!spec.palette.empty() && static_cast<int>(spec.palette.size()) != spec.palette_size) {
    throw ValidationError("explicit palette has " + std::to_string(spec.palette.size()) + " colors, palette_size is " +
                          std::to_string(spec.palette_size));
  }
  Rng rng(spec.seed);
  std::vector<Rgb> palette = spec.palette;
  if (palette.empty()) {
    std::uniform_int_distribution<int> byte(0, 255);
    for (int i = 0; i < spec.palette_size; ++i) {
      palette.push_back({static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                         static_cast<std::uint8_t>(byte(rng))});
    }
  }
  ImageRGB8 img(spec.width, spec.height);
  fill_background(img, spec.texture, palette, rng);
  Canvas canvas{img};
  const int m = std::min(spec.width, spec.height);
  const int lo = std::min(6, std::max(1, m / 2));
  const int hi = std::max(lo, std::min(40, m / 2));
  for (int i = 0; i < spec.shape_count; ++i) {
    const Rgb color = palette[uniform_int(rng, 0, spec.palette_size - 1)];
    draw_random_shape(canvas, rng, uniform_int(rng, lo, hi), color, false);
  }
  return img;
}

SceneSpec random_scene_spec(std::uint64_t seed, int width, int height) {
  Rng rng(seed);
  SceneSpec spec;
  spec.seed = mix_seed(seed, 1);
  spec.width = width;
  spec.height = height;
  spec.palette_size = uniform_int(rng, 2, 8);
  spec.texture = static_cast<Texture>(uniform_int(rng, 0, 3));
  const double area = static_cast<double>(width) * height;
  const int lo = std::max(1, static_cast<int>(std::ceil(area / 1200.0)));
  const int hi = std::max(lo, static_cast<int>(std::ceil(area / 400.0)));
  spec.shape_count = uniform_int(rng, lo, hi);
  return spec;
}

ImageRGB8 generate_test_card(std::uint64_t seed, int width, int height) {
  if (width < 16 || height < 16) throw ValidationError("test card must be at least 16x16");
  Rng rng(seed);
  ImageRGB8 img(width, height, kWhite);
  Canvas canvas{img};
  const int m = std::min(width, height);
  // A fixed centered square guarantees black pixels regardless of the draws.
  canvas.rect(width / 2 - m / 8, height / 2 - m / 8, width / 2 + m / 8, height / 2 + m / 8, kBlack);
  for (int i = 0; i < 12; ++i) draw_random_shape(canvas, rng, uniform_int(rng, m / 10, m / 3), kBlack, true);
  const int frame = std::max(1, m / 64);
  canvas.rect(0, 0, width, frame, kWhite);
  canvas.rect(0, height - frame, width, height, kWhite);
  canvas.rect(0, 0, frame, height, kWhite);
  canvas.rect(width - frame, 0, width, height, kWhite);
  return img;
}

SampledResolution sample_resolution(std::span<const ResolutionBucket> buckets, std::span<const double> weights,
                                    std::mt19937_64& rng) {
  if (buckets.empty()) throw ValidationError("resolution bucket list is empty");
  if (weights.size() != buckets.size()) {
    throw ValidationError("got " + std::to_string(weights.size()) + " bucket weights for " +
                          std::to_string(buckets.size()) + " buckets");
  }
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw ValidationError("bucket weights must be finite and non-negative");
    total += w;
  }
  if (total <= 0) throw ValidationError("bucket weights are all zero");
  for (const auto& b : buckets) {
    if (b.min_side < 1 || b.max_side < b.min_side) throw ValidationError("invalid resolution bucket");
  }
  const double u = uniform_real(rng, 0.0, total);
  std::size_t k = 0;
  double acc = 0;
  for (; k < buckets.size(); ++k) {
    acc += weights[k];
    if (u < acc && weights[k] > 0) break;
  }
  if (k == buckets.size()) {
    k = buckets.size() - 1;
    while (weights[k] <= 0) --k;
  }
  SampledResolution out;
  out.bucket = k;
  out.width = uniform_int(rng, buckets[k].min_side, buckets[k].max_side);
  const double aspect = uniform_real(rng, 0.75, 4.0 / 3.0);
  out.height = std::max(1, static_cast<int>(std::round(out.width * aspect)));
  return out;
}

std::vector<ResolutionBucket> desk_buckets() {
  return {{64, 96}, {96, 128}, {128, 192}, {192, 256}, {256, 384}, {384, 512}};
}

std::string label_name(Label label) { return label == Label::original ? "original" : "reconstructed"; }

Label parse_label(const std::string& name) {
  if (name == "original") return Label::original;
  if (name == "reconstructed") return Label::reconstructed;
  throw ValidationError("unknown label '" + name + "'");
}

// ------------------------------------------------------------------ manifest

void CorpusManifest::validate() const {
  std::set<std::string> paths;
  for (const auto& e : entries) {
    if (e.path.empty()) throw ValidationError("manifest entry with empty path");
    if (!paths.insert(e.path).second) throw ValidationError("duplicate manifest path '" + e.path + "'");
    if (e.split != "train" && e.split != "test" && e.split != "eval") {
      throw ValidationError("manifest entry '" + e.path + "' has unknown split '" + e.split + "'");
    }
    if (e.label == Label::reconstructed && e.parent.empty()) {
      throw ValidationError("reconstructed entry '" + e.path + "' does not name its original");
    }
  }
}

std::string CorpusManifest::to_jsonl() const {
  std::string out = nlohmann::json{{"format_version", kFormatVersion}, {"kind", "aeforge-manifest"}}.dump() + "\n";
  for (const auto& e : entries) out += entry_to_json(e).dump() + "\n";
  return out;
}

CorpusManifest CorpusManifest::from_jsonl(const std::string& text) {
  CorpusManifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  bool header = false;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("manifest line is not valid JSON: ") + ex.what(), line_offset);
    }
    if (!header) {
      if (!j.contains("format_version") || j["format_version"] != kFormatVersion) {
        throw ParseError("manifest header missing or format_version != " + std::to_string(kFormatVersion), line_offset);
      }
      header = true;
      continue;
    }
    try {
      ManifestEntry e;
      e.path = j.at("path").get<std::string>();
      e.label = parse_label(j.at("label").get<std::string>());
      e.source = j.at("source").get<std::string>();
      e.bucket = j.at("bucket").get<int>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.split = j.at("split").get<std::string>();
      e.parent = j.value("parent", "");
      e.high_res = j.value("high_res", false);
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("bad manifest record: ") + ex.what(), line_offset);
    }
  }
  if (!header) throw ParseError("empty manifest", 0);
  m.validate();
  return m;
}

void CorpusManifest::save(const std::filesystem::path& path) const {
  validate();
  write_text_file(path, to_jsonl());
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) { return from_jsonl(read_text_file(path)); }

std::vector<const ManifestEntry*> CorpusManifest::select(const std::string& split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

std::vector<std::string> CorpusManifest::sources() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (std::find(out.begin(), out.end(), e.source) == out.end()) out.push_back(e.source);
  return out;
}

// -------------------------------------------------------------------- corpus

CorpusManifest build_corpus(const CorpusConfig& config, const Autoencoder<float>& ae,
                            const std::filesystem::path& root) {
  if (config.originals < 1) throw ValidationError("corpus needs at least one original");
  if (config.crop_size < 1 || config.crop_size % Autoencoder<float>::kDownsample != 0) {
    throw ValidationError("crop size " + std::to_string(config.crop_size) + " is not divisible by the autoencoder " +
                          "downsample factor " + std::to_string(Autoencoder<float>::kDownsample));
  }
  if (!(config.test_fraction > 0 && config.test_fraction < 1)) throw ValidationError("test_fraction must be in (0,1)");

  const auto n = static_cast<std::size_t>(config.originals);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(mix_seed(config.seed, 0x5b1d));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(n)));
  std::vector<std::string> split(n, "train");
  for (std::size_t k = 0; k < n_test; ++k) split[order[k]] = "test";

  // Reconstructions come from scene context around the crop, so crops carry
  // no AE border effects that full-size images would lack.
  std::vector<ManifestEntry> originals(n), reconstructed(n);
  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t scene_seed = mix_seed(config.seed, i);
    Rng rng(scene_seed);
    auto res = sample_resolution(config.buckets, config.weights, rng);
    const int w = floor8(std::max(res.width, config.crop_size));
    const int h = floor8(std::max(res.height, config.crop_size));
    const ImageRGB8 scene = generate_scene(random_scene_spec(mix_seed(scene_seed, 1), w, h));
    const CropCorner corner = crop_corners(w, h, {config.crop_size, 1, mix_seed(scene_seed, 2)}).front();

    auto& e = originals[i];
    e.path = split[i] + "/original/" + index_name(i);
    e.label = Label::original;
    e.source = config.original_source;
    e.bucket = static_cast<int>(res.bucket);
    e.seed = scene_seed;
    e.split = split[i];
    e.high_res = res.bucket + 1 == config.buckets.size();
    save_ppm(crop(scene, corner, config.crop_size), root / e.path);

    ManifestEntry& r = reconstructed[i];
    r = e;
    r.path = split[i] + "/reconstructed/" + index_name(i);
    r.label = Label::reconstructed;
    r.source = config.reconstructed_source;
    r.parent = e.path;
    save_ppm(reconstruct_window(ae, scene, corner, config.crop_size), root / r.path);
  });

  CorpusManifest manifest;
  for (std::size_t i = 0; i < n; ++i) {
    manifest.entries.push_back(std::move(originals[i]));
    manifest.entries.push_back(std::move(reconstructed[i]));
  }
  manifest.save(root / "manifest.jsonl");
  return manifest;
}

CorpusManifest generate_scene_set(int count, int width, int height, std::uint64_t seed, const std::string& source,
                                  const std::filesystem::path& root, const std::string& subdir) {
  if (count < 1) throw ValidationError("scene count must be >= 1");
  CorpusManifest manifest;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t scene_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    ManifestEntry e;
    e.path = subdir + "/" + index_name(static_cast<std::size_t>(i));
    e.source = source;
    e.seed = scene_seed;
    e.split = "train";
    save_ppm(generate_scene(random_scene_spec(scene_seed, width, height)), root / e.path);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::string holdout_source_id(const std::string& name, const Checkpoint& ckpt) {
  return name + "-" + checkpoint_hash(ckpt).substr(0, 8);
}

namespace {

SampledResolution eval_resolution(const HoldoutConfig& config, Rng& rng) {
  if (config.fixed_side > 0) return {config.fixed_side, config.fixed_side, 0};
  return sample_resolution(config.buckets, config.weights, rng);
}

}  // namespace

CorpusManifest build_holdout_generators(const HoldoutConfig& config, std::span<const HoldoutSource> sources,
                                        const std::filesystem::path& root) {
  if (sources.empty()) throw ConfigError("no holdout autoencoders configured");
  if (config.count < 1) throw ValidationError("holdout count must be >= 1");
  CorpusManifest manifest;
  std::set<std::string> ids;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const auto& src = sources[k];
    if (!std::filesystem::exists(src.checkpoint)) {
      throw ConfigError("holdout autoencoder checkpoint '" + src.checkpoint.string() + "' not found");
    }
    const Checkpoint ckpt = load_checkpoint(src.checkpoint);
    const auto ae = Autoencoder<float>::from_checkpoint(ckpt);
    const std::string id = holdout_source_id(src.name, ckpt);
    if (!ids.insert(id).second) throw ConfigError("duplicate holdout source id '" + id + "'");
    const std::uint64_t source_seed = mix_seed(config.seed, fnv1a64(src.name));
    for (int i = 0; i < config.count; ++i) {
      const std::uint64_t scene_seed = mix_seed(source_seed, static_cast<std::uint64_t>(i));
      Rng rng(scene_seed);
      const auto res = eval_resolution(config, rng);
      const ImageRGB8 scene =
          generate_scene(random_scene_spec(mix_seed(scene_seed, 1), floor8(res.width), floor8(res.height)));
      ManifestEntry e;
      e.path = id + "/" + index_name(static_cast<std::size_t>(i));
      e.label = Label::reconstructed;
      e.source = id;
      e.bucket = config.fixed_side > 0 ? -1 : static_cast<int>(res.bucket);
      e.seed = scene_seed;
      e.split = "eval";
      e.parent = "scene:" + hex64(scene_seed);
      save_ppm(ae_reconstruct(ae, scene), root / e.path);
      manifest.entries.push_back(std::move(e));
    }
  }
  return manifest;
}

CorpusManifest build_original_set(const HoldoutConfig& config, const std::string& source, bool high_res,
                                  const std::filesystem::path& root) {
  if (config.count < 1) throw ValidationError("original set count must be >= 1");
  CorpusManifest manifest;
  const std::uint64_t source_seed = mix_seed(config.seed, fnv1a64(source));
  for (int i = 0; i < config.count; ++i) {
    const std::uint64_t scene_seed = mix_seed(source_seed, static_cast<std::uint64_t>(i));
    Rng rng(scene_seed);
    const auto res = eval_resolution(config, rng);
    ManifestEntry e;
    e.path = source + "/" + index_name(static_cast<std::size_t>(i));
    e.source = source;
    e.bucket = config.fixed_side > 0 ? -1 : static_cast<int>(res.bucket);
    e.seed = scene_seed;
    e.split = "eval";
    e.high_res = high_res;
    save_ppm(generate_scene(random_scene_spec(mix_seed(scene_seed, 1), res.width, res.height)), root / e.path);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace aeforge
