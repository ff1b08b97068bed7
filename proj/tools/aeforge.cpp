// aeforge command line: one subcommand per pipeline stage plus inference and
// inspection helpers. Exit codes: 0 ok, 1 validation/config error, 2 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "aeforge/error.hpp"
#include "aeforge/jpeg.hpp"
#include "aeforge/log.hpp"
#include "aeforge/pipeline.hpp"
#include "aeforge/util.hpp"

namespace fs = std::filesystem;
using namespace aeforge;

namespace {

struct GlobalOptions {
  std::string config;
  std::string profile;
  std::string workdir = ".";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

RunConfig resolve(const GlobalOptions& g) {
  std::optional<fs::path> file;
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw IoError("config file '" + g.config + "' not found");
    file = g.config;
  }
  std::optional<std::string> profile;
  if (!g.profile.empty()) profile = g.profile;
  RunConfig cfg = load_run_config(file, profile);
  cfg.workdir = g.workdir;
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

void print_table(const char* name, const Table8& t) {
  std::printf("%s\n", name);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) std::printf("%4d", t[r * 8 + c]);
    std::printf("\n");
  }
}

void model_info(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const std::string kind = checkpoint_kind(ckpt);
  Json info{{"path", path.string()}, {"kind", kind}, {"checkpoint_hash", checkpoint_hash(ckpt)}};
  auto norm = [](const Normalization& n) {
    return Json{{"mean", {n.mean[0], n.mean[1], n.mean[2]}}, {"std", {n.std[0], n.std[1], n.std[2]}}};
  };
  if (kind == "autoencoder") {
    const auto ae = Autoencoder<float>::from_checkpoint(ckpt);
    info["architecture"] =
        "conv autoencoder: 3 stride-2 3x3 convs 3->32->64->128, 1x1 to latent, mirror decoder, downsample 8";
    info["latent_channels"] = ae.config().latent_channels;
    info["activation"] = activation_name(ae.config().activation);
    info["parameters"] = ae.parameter_count();
    info["normalization"] = norm(ae.normalization);
  } else if (kind == "detector") {
    const auto det = Detector<float>::from_checkpoint(ckpt);
    info["architecture"] = "cnn detector: 4 stride-2 3x3 SiLU convs 3->16->32->64->128, global avg pool, linear";
    info["crop_size"] = det.config().crop_size;
    info["parameters"] = det.parameter_count();
    info["normalization"] = norm(det.normalization);
  } else {
    throw ValidationError("'" + path.string() + "' is not an aeforge model checkpoint");
  }
  std::cout << info.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aeforge: autoencoder-artifact detection of generated images"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "JSON run config (defaults; flags override)");
  app.add_option("--profile", g.profile, "built-in profile: desk or paper-shape");
  app.add_option("--workdir", g.workdir, "directory holding data, checkpoints and reports")->capture_default_str();
  app.add_option("--seed", g.seed, "global seed override");
  app.add_flag("--quiet", g.quiet, "only log warnings");

  auto* gen = app.add_subcommand("gen-data", "generate autoencoder training scenes");
  std::string ae_name;
  auto* train_ae = app.add_subcommand("train-ae", "train the surrogate and holdout autoencoders");
  train_ae->add_option("--name", ae_name, "train only this autoencoder");
  auto* corpus = app.add_subcommand("build-corpus", "build the paired crop corpus and the evaluation set");
  auto* train_det = app.add_subcommand("train-detector", "train the detector on the corpus train split");
  std::optional<double> fpr_target;
  auto* calibrate = app.add_subcommand("calibrate", "choose the decision threshold on validation crops");
  calibrate->add_option("--fpr-target", fpr_target, "maximum false-positive rate");
  std::optional<int> eval_tries;
  auto* eval = app.add_subcommand("eval", "decide every evaluation image (1 try and N tries)");
  eval->add_option("--tries", eval_tries, "crops per image in multi-crop mode");
  auto* robust = app.add_subcommand("robustness", "JPEG and resize sweep");
  auto* artifacts = app.add_subcommand("artifacts", "test-card color statistics");
  auto* run = app.add_subcommand("run", "run every stage in order");

  auto* infer = app.add_subcommand("infer", "decide one PPM image");
  std::string infer_image, infer_model;
  int infer_tries = 1;
  double infer_threshold = 0.5;
  std::uint64_t infer_seed = 0;
  bool infer_json = false, infer_upscale = false;
  infer->add_option("image", infer_image, "PPM image")->required();
  infer->add_option("--model", infer_model, "detector checkpoint")->required();
  infer->add_option("--tries", infer_tries, "number of random crops")->capture_default_str();
  infer->add_option("--threshold", infer_threshold, "decision threshold in (0,1)")->capture_default_str();
  infer->add_option("--seed", infer_seed, "seed mixed with the image path")->capture_default_str();
  infer->add_flag("--json", infer_json, "print the verdict as JSON");
  infer->add_flag("--upscale-small", infer_upscale, "upscale images smaller than the crop");

  auto* diff = app.add_subcommand("report-diff", "compare two reports");
  std::string diff_a, diff_b;
  double diff_tol = 0;
  std::vector<std::string> key_tols;
  bool fail_on_diff = false;
  diff->add_option("a", diff_a)->required();
  diff->add_option("b", diff_b)->required();
  diff->add_option("--tolerance", diff_tol, "absolute tolerance for numbers")->capture_default_str();
  diff->add_option("--key-tolerance", key_tols, "per-key tolerance, key=value");
  diff->add_flag("--fail-on-diff", fail_on_diff, "exit 1 when differences are found");

  auto* info = app.add_subcommand("model-info", "print architecture, parameter count and hash of a checkpoint");
  std::string info_path;
  info->add_option("checkpoint", info_path)->required();

  auto* tables = app.add_subcommand("dump-tables", "print the quantization tables for a JPEG quality");
  int table_quality = 50;
  tables->add_option("--quality", table_quality)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  set_quiet(g.quiet);

  try {
    if (*tables) {
      const auto q = quality_tables(table_quality);
      std::printf("quality %d\n", q.quality);
      print_table("luma", q.luma);
      print_table("chroma", q.chroma);
      return 0;
    }
    if (*info) {
      model_info(info_path);
      return 0;
    }
    if (*diff) {
      Tolerances tol;
      tol.default_abs = diff_tol;
      for (const auto& kv : key_tols) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ValidationError("--key-tolerance expects key=value, got '" + kv + "'");
        tol.by_key[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
      }
      const auto diffs = compare_reports(load_report(diff_a), load_report(diff_b), tol);
      for (const auto& d : diffs) {
        std::cout << d.what << " " << d.path;
        if (d.a) std::cout << " a=" << *d.a;
        if (d.b) std::cout << " b=" << *d.b;
        std::cout << "\n";
      }
      std::cout << diffs.size() << " difference(s)\n";
      return (fail_on_diff && !diffs.empty()) ? 1 : 0;
    }
    if (*infer) {
      const auto detector = Detector<float>::from_checkpoint(load_checkpoint(infer_model));
      DecisionConfig dc;
      dc.tries = infer_tries;
      dc.threshold = infer_threshold;
      dc.crop_size = detector.config().crop_size;
      dc.seed = image_seed(infer_seed, infer_image);
      dc.upscale_small = infer_upscale;
      const Verdict v = decide(load_ppm(infer_image), detector, dc);
      if (infer_json) {
        Json j = to_json(v);
        j["threshold"] = infer_threshold;
        j["tries"] = infer_tries;
        std::cout << j.dump(2) << "\n";
      } else {
        std::printf("decision %d aggregate %.6f tries %d threshold %g%s\n", v.decision, v.aggregate, infer_tries,
                    infer_threshold, v.upscaled ? " (upscaled)" : "");
      }
      return 0;
    }

    RunConfig cfg = resolve(g);
    if (*gen) stage_gen_data(cfg);
    if (*train_ae) stage_train_ae(cfg, ae_name);
    if (*corpus) stage_build_corpus(cfg);
    if (*train_det) stage_train_detector(cfg);
    if (*calibrate) {
      if (fpr_target) cfg.fpr_target = *fpr_target;
      const Calibration c = stage_calibrate(cfg);
      std::printf("threshold %.6g achieved_fpr %.6g achieved_recall %.6g\n", c.threshold, c.achieved_fpr,
                  c.achieved_recall);
    }
    if (*eval) {
      if (eval_tries) cfg.tries = *eval_tries;
      stage_eval(cfg);
    }
    if (*robust) stage_robustness(cfg);
    if (*artifacts) stage_artifacts(cfg);
    if (*run) run_all(cfg);
    return 0;
  } catch (const ValidationError& e) {
    log_warn(std::string("error: ") + e.what());
    return 1;
  } catch (const IoError& e) {
    log_warn(std::string("I/O error: ") + e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    log_warn(std::string("I/O error: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log_warn(std::string("error: ") + e.what());
    return 1;
  }
}
