#include "aeforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>

#include "aeforge/error.hpp"
#include "aeforge/log.hpp"
#include "aeforge/util.hpp"

namespace aeforge {
namespace fs = std::filesystem;

namespace {

constexpr const char* kSurrogateName = "ae-a";

std::string exact_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json bucket_json(const std::vector<ResolutionBucket>& buckets) {
  Json out = Json::array();
  for (const auto& b : buckets) out.push_back({b.min_side, b.max_side});
  return out;
}

Json ae_json(const AutoencoderSpec& s) {
  return {{"name", s.name},
          {"latent_channels", s.latent_channels},
          {"activation", activation_name(s.activation)},
          {"seed_offset", s.seed_offset},
          {"scene_count", s.scene_count},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"peak_lr", s.peak_lr},
          {"warmup_steps", s.warmup_steps}};
}

AutoencoderSpec ae_from_json(const Json& j) {
  AutoencoderSpec s;
  s.name = j.at("name").get<std::string>();
  s.latent_channels = j.at("latent_channels").get<int>();
  s.activation = parse_activation(j.at("activation").get<std::string>());
  s.seed_offset = j.at("seed_offset").get<std::uint64_t>();
  s.scene_count = j.at("scene_count").get<int>();
  s.epochs = j.at("epochs").get<int>();
  s.batch_size = j.at("batch_size").get<int>();
  s.peak_lr = j.at("peak_lr").get<double>();
  s.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
  return s;
}

std::uint64_t stream_seed(const RunConfig& cfg, std::string_view stream) { return mix_seed(cfg.seed, fnv1a64(stream)); }

// Writes stages/<name>.json when finished.
class StageRecord {
 public:
  StageRecord(const RunConfig& cfg, std::string name)
      : cfg_(cfg), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {
    log_info("stage " + name_ + ": start");
  }

  void input(const fs::path& p) { inputs_[fs::relative(p, cfg_.workdir).generic_string()] = file_hash_hex(p); }
  void output(const fs::path& p) { outputs_.push_back(fs::relative(p, cfg_.workdir).generic_string()); }

  void finish() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    Json j{{"stage", name_},      {"seed", cfg_.seed}, {"profile", cfg_.profile}, {"inputs", inputs_},
           {"outputs", outputs_}, {"duration_seconds", secs}};
    j["config"] = cfg_.to_json();
    write_text_file(cfg_.path(cfg_.paths.stages) / (name_ + ".json"), j.dump(2) + "\n");
    log_info("stage " + name_ + ": done in " + std::to_string(secs) + " s");
  }

 private:
  const RunConfig& cfg_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

void require_file(const fs::path& p, const std::string& what, const std::string& subcommand) {
  if (!fs::exists(p)) {
    throw ConfigError(what + " '" + p.string() + "' not found; run `aeforge " + subcommand + "` first");
  }
}

const AutoencoderSpec* find_ae(const RunConfig& cfg, const std::string& name) {
  if (cfg.surrogate.name == name) return &cfg.surrogate;
  for (const auto& h : cfg.holdouts)
    if (h.name == name) return &h;
  return nullptr;
}

Autoencoder<float> load_ae(const RunConfig& cfg, const std::string& name) {
  const auto p = autoencoder_checkpoint(cfg, name);
  require_file(p, "autoencoder checkpoint", "train-ae --name " + name);
  return Autoencoder<float>::from_checkpoint(load_checkpoint(p));
}

Detector<float> load_detector(const RunConfig& cfg) {
  const auto p = detector_checkpoint(cfg);
  require_file(p, "detector checkpoint", "train-detector");
  return Detector<float>::from_checkpoint(load_checkpoint(p));
}

fs::path corpus_manifest_path(const RunConfig& cfg) { return cfg.path(cfg.paths.corpus) / "manifest.jsonl"; }
fs::path eval_manifest_path(const RunConfig& cfg) { return cfg.path(cfg.paths.eval) / "manifest.jsonl"; }
fs::path data_manifest_path(const RunConfig& cfg) { return cfg.path(cfg.paths.data) / "manifest.jsonl"; }
fs::path calibration_path(const RunConfig& cfg) { return cfg.path(cfg.paths.reports) / "calibration.json"; }

CorpusManifest load_corpus_manifest(const RunConfig& cfg) {
  require_file(corpus_manifest_path(cfg), "corpus manifest", "build-corpus");
  return CorpusManifest::load(corpus_manifest_path(cfg));
}

CorpusManifest load_eval_manifest(const RunConfig& cfg) {
  require_file(eval_manifest_path(cfg), "evaluation manifest", "build-corpus");
  return CorpusManifest::load(eval_manifest_path(cfg));
}

DecisionConfig decision_config(const RunConfig& cfg, double threshold) {
  DecisionConfig dc;
  dc.tries = cfg.tries;
  dc.threshold = threshold;
  dc.crop_size = cfg.crop_size;
  dc.seed = stream_seed(cfg, "inference");
  dc.upscale_small = cfg.upscale_small;
  return dc;
}

double load_threshold(const RunConfig& cfg) {
  require_file(calibration_path(cfg), "calibration report", "calibrate");
  const auto cal = load_report(calibration_path(cfg)).at("calibration");
  if (cal.contains("threshold_exact")) return std::stod(cal.at("threshold_exact").get<std::string>());
  return cal.at("threshold").get<double>();
}

Json config_echo(const RunConfig& cfg, double threshold) {
  return {{"seed", cfg.seed},
          {"profile", cfg.profile},
          {"threshold", threshold},
          {"tries", cfg.tries},
          {"crop_size", cfg.crop_size},
          {"upscale_small", cfg.upscale_small},
          {"resize_filter", "bilinear, half-pixel centers"},
          {"rounding", "half away from zero"},
          {"transform_order", "transform full image, then crop"}};
}

std::vector<double> without_last(std::vector<double> w) {
  if (w.size() > 1) w.back() = 0;
  return w;
}

std::vector<double> only_last(std::size_t n) {
  std::vector<double> w(n, 0.0);
  if (n) w.back() = 1;
  return w;
}

}  // namespace

// --------------------------------------------------------------------- config

Json RunConfig::to_json() const {
  Json holdout = Json::array();
  for (const auto& h : holdouts) holdout.push_back(ae_json(h));
  return {{"profile", profile},
          {"seed", seed},
          {"paths",
           {{"data", paths.data},
            {"corpus", paths.corpus},
            {"eval", paths.eval},
            {"checkpoints", paths.checkpoints},
            {"reports", paths.reports},
            {"stages", paths.stages}}},
          {"scenes", {{"count", ae_scene_count}, {"size", ae_scene_size}}},
          {"autoencoder", ae_json(surrogate)},
          {"holdout_autoencoders", holdout},
          {"weight_decay", weight_decay},
          {"val_fraction", val_fraction},
          {"corpus",
           {{"originals", corpus_originals},
            {"crop_size", crop_size},
            {"test_fraction", test_fraction},
            {"buckets", bucket_json(buckets)},
            {"bucket_weights", bucket_weights}}},
          {"detector",
           {{"epochs", detector_epochs},
            {"batch_size", detector_batch_size},
            {"peak_lr", detector_peak_lr},
            {"warmup_steps", detector_warmup_steps}}},
          {"calibration", {{"fpr_target", fpr_target}}},
          {"eval",
           {{"originals", eval_originals},
            {"high_res", eval_high_res},
            {"per_holdout", eval_per_holdout},
            {"small_side", eval_small_side},
            {"tries", tries},
            {"upscale_small", upscale_small}}},
          {"robustness", {{"jpeg_qualities", robustness_jpeg}, {"resize_scales", robustness_resize}}},
          {"artifacts", {{"card_size", card_size}, {"card_seed", card_seed}, {"jpeg_qualities", artifact_jpeg}}}};
}

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  try {
    c.profile = j.at("profile").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("paths");
    c.paths.data = p.at("data").get<std::string>();
    c.paths.corpus = p.at("corpus").get<std::string>();
    c.paths.eval = p.at("eval").get<std::string>();
    c.paths.checkpoints = p.at("checkpoints").get<std::string>();
    c.paths.reports = p.at("reports").get<std::string>();
    c.paths.stages = p.at("stages").get<std::string>();
    c.ae_scene_count = j.at("scenes").at("count").get<int>();
    c.ae_scene_size = j.at("scenes").at("size").get<int>();
    c.surrogate = ae_from_json(j.at("autoencoder"));
    c.holdouts.clear();
    for (const auto& h : j.at("holdout_autoencoders")) c.holdouts.push_back(ae_from_json(h));
    c.weight_decay = j.at("weight_decay").get<double>();
    c.val_fraction = j.at("val_fraction").get<double>();
    const auto& corpus = j.at("corpus");
    c.corpus_originals = corpus.at("originals").get<int>();
    c.crop_size = corpus.at("crop_size").get<int>();
    c.test_fraction = corpus.at("test_fraction").get<double>();
    c.buckets.clear();
    for (const auto& b : corpus.at("buckets")) c.buckets.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
    c.bucket_weights = corpus.at("bucket_weights").get<std::vector<double>>();
    const auto& det = j.at("detector");
    c.detector_epochs = det.at("epochs").get<int>();
    c.detector_batch_size = det.at("batch_size").get<int>();
    c.detector_peak_lr = det.at("peak_lr").get<double>();
    c.detector_warmup_steps = det.at("warmup_steps").get<std::int64_t>();
    c.fpr_target = j.at("calibration").at("fpr_target").get<double>();
    const auto& ev = j.at("eval");
    c.eval_originals = ev.at("originals").get<int>();
    c.eval_high_res = ev.at("high_res").get<int>();
    c.eval_per_holdout = ev.at("per_holdout").get<int>();
    c.eval_small_side = ev.at("small_side").get<int>();
    c.tries = ev.at("tries").get<int>();
    c.upscale_small = ev.at("upscale_small").get<bool>();
    c.robustness_jpeg = j.at("robustness").at("jpeg_qualities").get<std::vector<int>>();
    c.robustness_resize = j.at("robustness").at("resize_scales").get<std::vector<double>>();
    const auto& art = j.at("artifacts");
    c.card_size = art.at("card_size").get<int>();
    c.card_seed = art.at("card_seed").get<std::uint64_t>();
    c.artifact_jpeg = art.at("jpeg_qualities").get<std::vector<int>>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("incomplete or malformed run config: ") + e.what());
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (crop_size < 8 || crop_size % 8 != 0) throw ConfigError("crop_size must be a positive multiple of 8");
  if (ae_scene_size % 8 != 0) throw ConfigError("scene size must be a multiple of 8");
  if (card_size % 8 != 0) throw ConfigError("card_size must be a multiple of 8");
  if (buckets.empty() || buckets.size() != bucket_weights.size()) {
    throw ConfigError("corpus buckets and bucket_weights must be non-empty and of equal length");
  }
  for (const auto& b : buckets) {
    if (b.min_side < crop_size || b.max_side < b.min_side) {
      throw ConfigError("resolution bucket " + std::to_string(b.min_side) + "-" + std::to_string(b.max_side) +
                        " is invalid for crop size " + std::to_string(crop_size));
    }
  }
  if (tries < 1) throw ConfigError("tries must be >= 1");
  if (surrogate.name.empty()) throw ConfigError("surrogate autoencoder needs a name");
  std::vector<std::string> names{surrogate.name};
  for (const auto& h : holdouts) {
    if (std::find(names.begin(), names.end(), h.name) != names.end()) {
      throw ConfigError("duplicate autoencoder name '" + h.name + "'");
    }
    names.push_back(h.name);
  }
  if (!(fpr_target <= 1)) throw ConfigError("fpr_target must be <= 1");
}

Json profile_json(const std::string& name) {
  RunConfig c;
  c.surrogate = {kSurrogateName, 4, Activation::silu, 0, 0, 5, 32, 5e-3, 60};
  c.holdouts = {{"ae-b", 8, Activation::silu, 101, 1200, 4, 32, 1e-3, 40},
                {"ae-c", 4, Activation::relu, 202, 1200, 4, 32, 1e-3, 40}};
  c.buckets = desk_buckets();
  c.bucket_weights = {4, 4, 3, 2, 1, 1};
  if (name == "desk") return c.to_json();
  if (name == "paper-shape") {
    c.profile = "paper-shape";
    c.ae_scene_size = 256;
    c.crop_size = 256;
    c.buckets = {{256, 300},   {300, 400},   {400, 500},   {600, 700},   {800, 900},  {900, 1000},
                 {1000, 1500}, {1500, 2000}, {2000, 2500}, {3000, 3500}, {4000, 6000}};
    c.bucket_weights = std::vector<double>(c.buckets.size(), 1.0);
    c.corpus_originals = 12000;
    c.detector_epochs = 10;
    c.detector_peak_lr = 5e-6;
    c.detector_warmup_steps = 5000;
    c.card_size = 1024;
    c.eval_small_side = 256;
    return c.to_json();
  }
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper-shape)");
}

RunConfig load_run_config(const std::optional<fs::path>& file, const std::optional<std::string>& profile) {
  Json patch = Json::object();
  if (file) {
    try {
      patch = Json::parse(read_text_file(*file));
    } catch (const Json::parse_error& e) {
      throw ParseError("config '" + file->string() + "' is not valid JSON: " + e.what(), e.byte);
    }
    if (!patch.is_object()) throw ConfigError("config file must hold a JSON object");
  }
  std::string name = profile.value_or(patch.value("profile", std::string("desk")));
  Json merged = profile_json(name);
  merged.merge_patch(patch);
  merged["profile"] = name;
  return RunConfig::from_json(merged);
}

fs::path autoencoder_checkpoint(const RunConfig& cfg, const std::string& name) {
  return cfg.path(cfg.paths.checkpoints) / (name + ".aefg");
}

fs::path detector_checkpoint(const RunConfig& cfg) { return cfg.path(cfg.paths.checkpoints) / "detector.aefg"; }

TrainConfig detector_train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.detector_epochs;
  tc.batch_size = cfg.detector_batch_size;
  tc.peak_lr = cfg.detector_peak_lr;
  tc.weight_decay = cfg.weight_decay;
  tc.warmup_steps = cfg.detector_warmup_steps;
  tc.seed = stream_seed(cfg, "detector");
  tc.val_fraction = cfg.val_fraction;
  tc.checkpoint_dir = cfg.path(cfg.paths.checkpoints);
  tc.name = "detector";
  return tc;
}

std::vector<LabeledCrop> load_labeled_crops(const CorpusManifest& manifest, const fs::path& root,
                                            const std::string& split) {
  std::map<std::string, std::size_t> pair_ids;
  for (const auto* e : manifest.select(split)) {
    if (e->label == Label::original) pair_ids.emplace(e->path, pair_ids.size());
  }
  std::vector<LabeledCrop> out;
  for (const auto* e : manifest.select(split)) {
    const std::string& key = e->label == Label::original ? e->path : e->parent;
    const auto it = pair_ids.find(key);
    LabeledCrop c;
    c.image = load_ppm(root / e->path);
    c.label = e->label == Label::reconstructed ? 1 : 0;
    c.group = it != pair_ids.end() ? it->second : pair_ids.size() + out.size();
    out.push_back(std::move(c));
  }
  return out;
}

// --------------------------------------------------------------------- stages

void stage_gen_data(const RunConfig& cfg) {
  StageRecord rec(cfg, "gen-data");
  const fs::path root = cfg.path(cfg.paths.data);
  auto manifest = generate_scene_set(cfg.ae_scene_count, cfg.ae_scene_size, cfg.ae_scene_size,
                                     stream_seed(cfg, "ae-scenes"), "scenes", root, "scenes");
  manifest.save(data_manifest_path(cfg));
  rec.output(data_manifest_path(cfg));
  rec.finish();
}

void stage_train_ae(const RunConfig& cfg, const std::string& name) {
  std::vector<const AutoencoderSpec*> specs;
  if (name.empty()) {
    specs.push_back(&cfg.surrogate);
    for (const auto& h : cfg.holdouts) specs.push_back(&h);
  } else {
    const auto* s = find_ae(cfg, name);
    if (!s) throw ConfigError("no autoencoder named '" + name + "' in the run config");
    specs.push_back(s);
  }
  require_file(data_manifest_path(cfg), "scene manifest", "gen-data");
  const auto manifest = CorpusManifest::load(data_manifest_path(cfg));
  std::vector<ImageRGB8> scenes;
  for (const auto& e : manifest.entries) scenes.push_back(load_ppm(cfg.path(cfg.paths.data) / e.path));

  for (const auto* spec : specs) {
    StageRecord rec(cfg, "train-ae." + spec->name);
    rec.input(data_manifest_path(cfg));
    std::span<const ImageRGB8> subset(scenes);
    if (spec->scene_count > 0 && static_cast<std::size_t>(spec->scene_count) < scenes.size()) {
      subset = subset.first(static_cast<std::size_t>(spec->scene_count));
    }
    TrainConfig tc;
    tc.epochs = spec->epochs;
    tc.batch_size = spec->batch_size;
    tc.peak_lr = spec->peak_lr;
    tc.weight_decay = cfg.weight_decay;
    tc.warmup_steps = spec->warmup_steps;
    tc.seed = mix_seed(stream_seed(cfg, spec->name), spec->seed_offset);
    tc.val_fraction = cfg.val_fraction;
    tc.checkpoint_dir = cfg.path(cfg.paths.checkpoints);
    tc.name = spec->name;
    AutoencoderConfig arch{spec->latent_channels, spec->activation, mix_seed(tc.seed, 1)};
    const auto result = train_autoencoder(subset, tc, arch);
    const fs::path dir = cfg.path(cfg.paths.checkpoints);
    write_text_file(dir / (spec->name + ".history.csv"), result.history.to_csv());
    Json summary = result.history.summary();
    summary["name"] = spec->name;
    summary["latent_channels"] = spec->latent_channels;
    summary["activation"] = activation_name(spec->activation);
    summary["checkpoint_hash"] = checkpoint_hash(result.model.to_checkpoint());
    write_text_file(dir / (spec->name + ".summary.json"), summary.dump(2) + "\n");
    rec.output(autoencoder_checkpoint(cfg, spec->name));
    rec.finish();
  }
}

void stage_build_corpus(const RunConfig& cfg) {
  StageRecord rec(cfg, "build-corpus");
  const auto surrogate_path = autoencoder_checkpoint(cfg, cfg.surrogate.name);
  const auto surrogate = load_ae(cfg, cfg.surrogate.name);
  rec.input(surrogate_path);

  CorpusConfig cc;
  cc.originals = cfg.corpus_originals;
  cc.crop_size = cfg.crop_size;
  cc.test_fraction = cfg.test_fraction;
  cc.seed = stream_seed(cfg, "corpus");
  cc.buckets = cfg.buckets;
  cc.weights = cfg.bucket_weights;
  cc.reconstructed_source = cfg.surrogate.name;
  build_corpus(cc, surrogate, cfg.path(cfg.paths.corpus));
  rec.output(corpus_manifest_path(cfg));

  // Evaluation images: untouched originals, a high-resolution original set,
  // full-scene reconstructions by the surrogate and every holdout.
  const fs::path eval_root = cfg.path(cfg.paths.eval);
  CorpusManifest eval;
  auto append = [&eval](CorpusManifest m) {
    for (auto& e : m.entries) eval.entries.push_back(std::move(e));
  };
  HoldoutConfig hc;
  hc.seed = stream_seed(cfg, "eval");
  hc.buckets = cfg.buckets;
  hc.count = cfg.eval_originals;
  hc.weights = without_last(cfg.bucket_weights);
  append(build_original_set(hc, "original", false, eval_root));
  if (cfg.eval_high_res > 0) {
    HoldoutConfig high = hc;
    high.count = cfg.eval_high_res;
    high.weights = only_last(cfg.buckets.size());
    append(build_original_set(high, "high_res_imgs", true, eval_root));
  }
  std::vector<HoldoutSource> sources{{cfg.surrogate.name, surrogate_path}};
  for (const auto& h : cfg.holdouts) {
    const auto p = autoencoder_checkpoint(cfg, h.name);
    require_file(p, "holdout autoencoder checkpoint", "train-ae --name " + h.name);
    rec.input(p);
    sources.push_back({h.name, p});
  }
  HoldoutConfig gen = hc;
  gen.count = cfg.eval_per_holdout;
  append(build_holdout_generators(gen, sources, eval_root));
  if (cfg.eval_small_side > 0) {
    HoldoutConfig small = gen;
    small.fixed_side = cfg.eval_small_side;
    const HoldoutSource src{cfg.surrogate.name + "-" + std::to_string(cfg.eval_small_side) + "px", surrogate_path};
    append(build_holdout_generators(small, std::span(&src, 1), eval_root));
  }
  eval.save(eval_manifest_path(cfg));
  rec.output(eval_manifest_path(cfg));
  rec.finish();
}

void stage_train_detector(const RunConfig& cfg) {
  StageRecord rec(cfg, "train-detector");
  const auto manifest = load_corpus_manifest(cfg);
  rec.input(corpus_manifest_path(cfg));
  const fs::path root = cfg.path(cfg.paths.corpus);
  const auto train = load_labeled_crops(manifest, root, "train");
  const TrainConfig tc = detector_train_config(cfg);
  const auto result = train_detector(train, tc, DetectorConfig{cfg.crop_size, mix_seed(tc.seed, 1)});

  const fs::path dir = cfg.path(cfg.paths.checkpoints);
  write_text_file(dir / "detector.history.csv", result.history.to_csv());
  Json summary = result.history.summary();
  summary["checkpoint_hash"] = checkpoint_hash(result.model.to_checkpoint());
  write_text_file(dir / "detector.summary.json", summary.dump(2) + "\n");

  // Audit trail: every sample that took part in a gradient step.
  const auto train_entries = manifest.select("train");
  std::vector<std::string> used;
  for (auto i : result.history.trained_ids) used.push_back(train_entries[i]->path);
  std::sort(used.begin(), used.end());
  std::string text;
  for (const auto& p : used) text += p + "\n";
  write_text_file(dir / "detector.trained_samples.txt", text);

  const auto test = load_labeled_crops(manifest, root, "test");
  const auto ev = evaluate_split(result.model, test);
  Json report = make_report("detector-test");
  report["crop_size"] = cfg.crop_size;
  report["threshold"] = 0.5;
  report["test_crops"] = test.size();
  report["table2"] = to_json(ev);
  save_report(report, cfg.path(cfg.paths.reports) / "detector_test.json");
  write_text_file(cfg.path(cfg.paths.reports) / "detector_test.csv", split_evaluation_csv(ev));
  log_info("detector test accuracy " + std::to_string(ev.accuracy));
  rec.output(detector_checkpoint(cfg));
  rec.finish();
}

Calibration stage_calibrate(const RunConfig& cfg) {
  StageRecord rec(cfg, "calibrate");
  const auto detector = load_detector(cfg);
  const auto manifest = load_corpus_manifest(cfg);
  rec.input(detector_checkpoint(cfg));
  rec.input(corpus_manifest_path(cfg));
  const auto train = load_labeled_crops(manifest, cfg.path(cfg.paths.corpus), "train");
  std::vector<std::size_t> groups;
  for (const auto& c : train) groups.push_back(c.group);
  const TrainConfig tc = detector_train_config(cfg);
  const auto val = validation_indices(groups, tc.val_fraction, tc.seed);
  std::vector<ImageRGB8> images;
  for (auto i : val) images.push_back(train[i].image);
  const auto probs = detector_probabilities(detector, images);
  std::vector<double> orig, recon;
  for (std::size_t k = 0; k < val.size(); ++k) (train[val[k]].label ? recon : orig).push_back(probs[k]);
  const Calibration cal = calibrate_threshold(orig, recon, cfg.fpr_target);

  Json report = make_report("calibration");
  report["calibration"] = to_json(cal);
  // Report floats keep 6 digits; the decision rule needs the exact value.
  report["calibration"]["threshold_exact"] = exact_text(cal.threshold);
  report["validation"] = {{"original", orig.size()}, {"reconstructed", recon.size()}, {"scores", "per-crop"}};
  report["detector_hash"] = file_hash_hex(detector_checkpoint(cfg));
  save_report(report, calibration_path(cfg));
  rec.output(calibration_path(cfg));
  rec.finish();
  return cal;
}

Json stage_eval(const RunConfig& cfg) {
  StageRecord rec(cfg, "eval");
  const auto detector = load_detector(cfg);
  const double threshold = load_threshold(cfg);
  const auto manifest = load_eval_manifest(cfg);
  const auto corpus = load_corpus_manifest(cfg);
  rec.input(detector_checkpoint(cfg));
  rec.input(calibration_path(cfg));
  rec.input(eval_manifest_path(cfg));
  rec.input(corpus_manifest_path(cfg));

  const auto decisions = batch_decide(manifest, cfg.path(cfg.paths.eval), detector, decision_config(cfg, threshold));
  Json report = make_report("eval");
  report["config"] = config_echo(cfg, threshold);
  report["detector_hash"] = file_hash_hex(detector_checkpoint(cfg));

  const auto test = load_labeled_crops(corpus, cfg.path(cfg.paths.corpus), "test");
  report["table2"] = to_json(evaluate_split(detector, test));

  Json table3 = Json::array();
  for (const auto& d : decisions) table3.push_back(to_json(d));
  report["table3"] = table3;

  const SourceDecisions* originals = nullptr;
  for (const auto& d : decisions)
    if (d.source == "original") originals = &d;
  Json table6 = Json::array();
  if (originals && !originals->scores_multi.empty()) {
    for (const auto& d : decisions) {
      if (d.label != Label::reconstructed || d.scores_multi.empty()) continue;
      const auto roc1 = roc_auc(d.scores_single, originals->scores_single);
      const auto rocn = roc_auc(d.scores_multi, originals->scores_multi);
      table6.push_back({{"source", d.source},
                        {"negatives", "original"},
                        {"auc_1_try", roc1.auc},
                        {"auc_n_tries", rocn.auc},
                        {"tpr_at_0.1pct_fpr_1_try", tpr_at_fpr(d.scores_single, originals->scores_single, 0.001)},
                        {"tpr_at_0.1pct_fpr_n_tries", tpr_at_fpr(d.scores_multi, originals->scores_multi, 0.001)},
                        {"roc_n_tries", to_json(rocn)}});
    }
  }
  report["table6"] = table6;

  const fs::path out = cfg.path(cfg.paths.reports) / "eval.json";
  save_report(report, out);
  write_text_file(cfg.path(cfg.paths.reports) / "eval_table3.csv", decisions_csv(decisions));
  rec.output(out);
  rec.finish();
  return report;
}

Json stage_robustness(const RunConfig& cfg) {
  StageRecord rec(cfg, "robustness");
  const auto detector = load_detector(cfg);
  const double threshold = load_threshold(cfg);
  const auto manifest = load_eval_manifest(cfg);
  rec.input(detector_checkpoint(cfg));
  rec.input(calibration_path(cfg));
  rec.input(eval_manifest_path(cfg));
  const auto grid = robustness_sweep(manifest, cfg.path(cfg.paths.eval), detector, decision_config(cfg, threshold),
                                     cfg.robustness_jpeg, cfg.robustness_resize);
  Json report = make_report("robustness");
  report["config"] = config_echo(cfg, threshold);
  report["grid"] = to_json(grid);
  const fs::path out = cfg.path(cfg.paths.reports) / "robustness.json";
  save_report(report, out);
  write_text_file(cfg.path(cfg.paths.reports) / "robustness.csv", robustness_csv(grid));
  rec.output(out);
  rec.finish();
  return report;
}

Json stage_artifacts(const RunConfig& cfg) {
  StageRecord rec(cfg, "artifacts");
  std::vector<Autoencoder<float>> models;
  std::vector<std::string> names{cfg.surrogate.name};
  for (const auto& h : cfg.holdouts) names.push_back(h.name);
  for (const auto& n : names) {
    models.push_back(load_ae(cfg, n));
    rec.input(autoencoder_checkpoint(cfg, n));
  }
  std::vector<NamedAutoencoder> aes;
  for (std::size_t i = 0; i < names.size(); ++i) aes.push_back({names[i], &models[i]});
  const ImageRGB8 card = generate_test_card(cfg.card_seed, cfg.card_size, cfg.card_size);
  const fs::path vis = cfg.path(cfg.paths.reports) / "artifacts";
  const auto rows = artifact_report(card, aes, cfg.artifact_jpeg, vis, stream_seed(cfg, "color-randomize"));

  Json report = make_report("artifacts");
  report["card"] = {{"seed", cfg.card_seed}, {"width", cfg.card_size}, {"height", cfg.card_size}};
  Json jr = Json::array();
  for (const auto& r : rows) jr.push_back(to_json(r));
  report["rows"] = jr;
  const fs::path out = cfg.path(cfg.paths.reports) / "artifacts.json";
  save_report(report, out);
  write_text_file(cfg.path(cfg.paths.reports) / "artifacts.csv", artifacts_csv(rows));
  rec.output(out);
  rec.finish();
  return report;
}

void run_all(const RunConfig& cfg) {
  stage_gen_data(cfg);
  stage_train_ae(cfg);
  stage_build_corpus(cfg);
  stage_train_detector(cfg);
  stage_calibrate(cfg);
  stage_eval(cfg);
  stage_robustness(cfg);
  stage_artifacts(cfg);
}

}  // namespace aeforge
