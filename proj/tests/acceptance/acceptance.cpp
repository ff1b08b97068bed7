// Acceptance run: one PASS/FAIL line per criterion on stdout, details on
// stderr. Usage: aeforge_acceptance [workdir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aeforge/checkpoint.hpp"
#include "aeforge/error.hpp"
#include "aeforge/jpeg.hpp"
#include "aeforge/log.hpp"
#include "aeforge/pipeline.hpp"
#include "aeforge/util.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace aeforge;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, Outcome& o) {
  std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << name << ":" << o.detail.str() << std::endl;
  failures += o.pass ? 0 : 1;
}

template <typename Fn>
void criterion(int id, const std::string& name, Fn fn) {
  Outcome o;
  try {
    fn(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  report(id, name, o);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Json read_json(const fs::path& p) { return Json::parse(read_text_file(p)); }

bool is_holdout_source(const RunConfig& cfg, const std::string& source) {
  for (const auto& h : cfg.holdouts)
    if (source.rfind(h.name + "-", 0) == 0) return true;
  return false;
}

// Smallest config that still runs every stage.
Json tiny_config() {
  Json j = profile_json("desk");
  j["scenes"] = {{"count", 64}, {"size", 32}};
  auto ae = j["autoencoder"];
  ae["epochs"] = 1;
  ae["warmup_steps"] = 1;
  j["autoencoder"] = ae;
  for (auto& h : j["holdout_autoencoders"]) {
    h["scene_count"] = 40;
    h["epochs"] = 1;
    h["warmup_steps"] = 1;
  }
  j["corpus"]["originals"] = 40;
  j["corpus"]["buckets"] = Json::array({Json::array({32, 48}), Json::array({48, 64})});
  j["corpus"]["bucket_weights"] = Json::array({1.0, 1.0});
  j["detector"]["epochs"] = 1;
  j["detector"]["batch_size"] = 16;
  j["detector"]["warmup_steps"] = 2;
  j["eval"]["originals"] = 6;
  j["eval"]["high_res"] = 2;
  j["eval"]["per_holdout"] = 4;
  j["artifacts"]["card_size"] = 64;
  return j;
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root);
    if (*rel.begin() == "stages") continue;  // durations
    out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ------------------------------------------------------------- criteria

void gradient_integrity(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_name;
  std::size_t checked = 0;
  auto take = [&](const gradcheck::Result& r) {
    checked += r.checked;
    if (r.checked == 0) o.require(false, r.name + " checked nothing");
    if (!(r.max_rel <= worst)) {
      worst = r.max_rel;
      worst_name = r.name;
    }
  };
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& r : gradcheck::op_suite(seed)) take(r);
    take(gradcheck::autoencoder_check(seed, 4));
    take(gradcheck::detector_check(seed, 4));
  }
  const double secs = seconds_since(t0);
  o.detail << " 20 seeds, " << checked << " partials, max rel " << num(worst) << " (" << worst_name << "), "
           << num(secs) << " s";
  o.require(worst < 1e-4, "max rel < 1e-4");
  o.require(secs < 120, "runtime < 2 min");
}

void oracle_equivalence(Outcome& o) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> d14(1, 4), d13(1, 3), d02(0, 2), hw(3, 11);
  double conv_worst = 0;
  int configs = 0;
  auto values = [](const TensorD& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  while (configs < 50) {
    const int n = d13(rng), cin = d14(rng), cout = d14(rng), k = d13(rng), s = d13(rng), p = d02(rng);
    const int h = hw(rng), w = hw(rng);
    if (h + 2 * p < k || w + 2 * p < k) continue;
    auto x = gradcheck::random_tensor({std::size_t(n), std::size_t(cin), std::size_t(h), std::size_t(w)}, rng, false);
    auto wt = gradcheck::random_tensor({std::size_t(cout), std::size_t(cin), std::size_t(k), std::size_t(k)}, rng,
                                       false);
    auto b = gradcheck::random_tensor({std::size_t(cout)}, rng, false);
    const auto y = conv2d(x, wt, b, s, p);
    int oh, ow;
    const auto ref = oracle::conv2d(values(x), values(wt), values(b), n, cin, h, w, cout, k, k, s, p, oh, ow);
    if (y.numel() != ref.size()) o.require(false, "conv output size");
    for (std::size_t i = 0; i < ref.size() && i < y.numel(); ++i)
      conv_worst = std::max(conv_worst, std::abs(y.data()[i] - ref[i]));
    ++configs;
  }
  o.require(conv_worst <= 1e-6, "conv2d within 1e-6");

  std::normal_distribution<double> pos_d(0.8, 1.0), neg_d(0.0, 1.0);
  std::vector<double> pos(500), neg(500);
  for (auto& v : pos) v = std::round(pos_d(rng) * 20) / 20;
  for (auto& v : neg) v = std::round(neg_d(rng) * 20) / 20;
  const double auc_err = std::abs(roc_auc(pos, neg).auc - oracle::auc_pairs(pos, neg));
  double tpr_err = 0;
  for (double cap : {0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0})
    tpr_err = std::max(tpr_err, std::abs(tpr_at_fpr(pos, neg, cap) - oracle::tpr_at_fpr(pos, neg, cap)));
  o.require(auc_err <= 1e-12, "AUC within 1e-12");
  o.require(tpr_err <= 1e-12, "TPR@FPR within 1e-12");

  int blocks = 0, mismatched = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    ImageRGB8 block(8, 8);
    std::mt19937_64 r(seed * 77);
    std::uniform_int_distribution<int> u(0, 255);
    for (int yy = 0; yy < 8; ++yy)
      for (int xx = 0; xx < 8; ++xx)
        block.at(xx, yy) = {static_cast<std::uint8_t>(u(r)), static_cast<std::uint8_t>(u(r)),
                            static_cast<std::uint8_t>(u(r))};
    for (int q : {100, 95, 90, 80, 75, 50, 20}) {
      const auto t = quality_tables(q);
      ++blocks;
      mismatched += jpeg_degrade(block, q) == oracle::jpeg_block(block, t.luma, t.chroma) ? 0 : 1;
    }
  }
  o.require(mismatched == 0, "JPEG blocks exact");
  o.detail << " conv2d " << configs << " configs max abs " << num(conv_worst) << "; AUC err " << num(auc_err)
           << ", TPR@FPR err " << num(tpr_err) << " on 1000 scores; JPEG " << blocks - mismatched << "/" << blocks
           << " blocks exact";
}

void desk_training(Outcome& o, const RunConfig& cfg, double run_seconds, double train_seconds) {
  const auto ae = read_json(autoencoder_checkpoint(cfg, cfg.surrogate.name).replace_extension(".summary.json"));
  const auto val = ae.at("epoch_val_loss").get<std::vector<double>>();
  const double first = val.front(), fifth = val.size() >= 5 ? val[4] : val.back();
  const auto test = load_report(cfg.path(cfg.paths.reports) / "detector_test.json");
  const auto& t2 = test.at("table2");
  const double acc = t2.at("accuracy").get<double>();
  const double f1_o = t2.at("original").at("f1").get<double>();
  const double f1_r = t2.at("reconstructed").at("f1").get<double>();
  const auto crops = test.at("test_crops").get<int>();
  o.detail << " AE val mse epoch1 " << num(first) << " epoch5 " << num(fifth) << " (ratio " << num(fifth / first)
           << "); detector acc " << num(acc) << ", F1 original " << num(f1_o) << ", reconstructed " << num(f1_r)
           << " on " << crops << " crops; training " << num(train_seconds) << " s, full run " << num(run_seconds)
           << " s";
  o.require(val.size() >= 5, "five AE epochs");
  o.require(fifth < 0.5 * first, "AE epoch-5 val MSE < 0.5x epoch 1");
  o.require(acc >= 0.90, "accuracy >= 0.90");
  o.require(f1_o >= 0.85 && f1_r >= 0.85, "per-class F1 >= 0.85");
  o.require(crops >= 900 && crops <= 1100, "about 1000 held-out crops");
  o.require(train_seconds < 20 * 60, "runtime < 20 min");
}

void generalization(Outcome& o, const RunConfig& cfg) {
  const auto ev = load_report(cfg.path(cfg.paths.reports) / "eval.json");
  int holdouts = 0, originals = 0;
  for (const auto& row : ev.at("table3")) {
    const auto source = row.at("source").get<std::string>();
    if (row.at("rate_1_try").is_null() || row.at("rate_n_tries").is_null()) continue;
    const double one = row.at("rate_1_try").get<double>(), many = row.at("rate_n_tries").get<double>();
    if (row.at("label") == "original") {
      ++originals;
      o.detail << " FPR " << source << " " << num(one) << "->" << num(many) << ";";
      o.require(many <= one, "10-tries FPR <= 1-try FPR on " + source);
    } else if (is_holdout_source(cfg, source)) {
      ++holdouts;
      o.detail << " TPR " << source << " " << num(one) << "->" << num(many) << ";";
      // Counts avoid rounding at the margin.
      const double n = row.at("evaluated").get<double>();
      const double p1 = row.at("positives_1_try").get<double>(), pn = row.at("positives_n_tries").get<double>();
      o.require(pn >= p1 - 0.02 * n - 1e-9, "TPR(10) >= TPR(1) - 0.02 on " + source);
    }
  }
  o.detail << " threshold " << num(ev.at("config").at("threshold").get<double>());
  o.require(holdouts == static_cast<int>(cfg.holdouts.size()), "every holdout source evaluated");
  o.require(originals >= 1, "held-out originals evaluated");
}

void calibration_contract(Outcome& o, const RunConfig& cfg) {
  // Re-derive the validation scores exactly as the calibrate stage does.
  const auto detector = Detector<float>::from_checkpoint(load_checkpoint(detector_checkpoint(cfg)));
  const auto corpus = CorpusManifest::load(cfg.path(cfg.paths.corpus) / "manifest.jsonl");
  const auto train = load_labeled_crops(corpus, cfg.path(cfg.paths.corpus), "train");
  std::vector<std::size_t> groups;
  for (const auto& c : train) groups.push_back(c.group);
  const TrainConfig tc = detector_train_config(cfg);
  const auto val = validation_indices(groups, tc.val_fraction, tc.seed);
  std::vector<ImageRGB8> images;
  for (auto i : val) images.push_back(train[i].image);
  const auto probs = detector_probabilities(detector, images);
  std::vector<double> orig, recon;
  for (std::size_t k = 0; k < val.size(); ++k) (train[val[k]].label ? recon : orig).push_back(probs[k]);

  const auto rep = load_report(cfg.path(cfg.paths.reports) / "calibration.json").at("calibration");
  const double t = std::stod(rep.at("threshold_exact").get<std::string>());
  const double target = cfg.fpr_target;
  const double fpr = fpr_at(orig, t), recall = recall_at(recon, t);
  o.require(target == 0.001, "fpr_target 0.001");
  o.require(fpr <= target, "achieved FPR <= target");
  o.require(rep.at("target_met").get<bool>(), "target met");
  const auto candidates = threshold_candidates(orig, recon);
  std::size_t feasible = 0;
  bool maximal = true, smallest = true;
  for (double c : candidates) {
    if (fpr_at(orig, c) > target) continue;
    ++feasible;
    if (recall_at(recon, c) > recall) maximal = false;
    if (c < t) smallest = false;
  }
  o.require(std::find(candidates.begin(), candidates.end(), t) != candidates.end(), "threshold is a candidate");
  o.require(maximal, "recall-maximal among feasible candidates");
  o.require(smallest, "smallest feasible candidate");
  o.detail << " t " << num(t) << ", FPR " << num(fpr) << " on " << orig.size() << " originals, recall " << num(recall)
           << "; " << feasible << "/" << candidates.size() << " candidates feasible, none with higher recall";
}

void artifacts(Outcome& o, const RunConfig& cfg) {
  const auto rep = load_report(cfg.path(cfg.paths.reports) / "artifacts.json");
  std::map<std::string, Json> rows;
  for (const auto& r : rep.at("rows")) rows[r.at("name").get<std::string>()] = r;
  const auto& card = rows.at("original").at("default");
  o.require(card.at("unique_colors").get<int>() == 2, "card has 2 colors");
  o.require(card.at("bw_fraction").get<double>() == 1.0, "card bw_fraction 1.0");
  long prev = -1;
  o.detail << " JPEG colors";
  for (int q : {100, 95, 75, 50}) {
    const long u = rows.at("jpeg" + std::to_string(q)).at("default").at("unique_colors").get<long>();
    o.detail << " q" << q << "=" << u;
    o.require(u > prev, "JPEG colors strictly increase at q" + std::to_string(q));
    prev = u;
  }
  const long jpeg50 = prev;
  int aes = 0;
  for (const auto& [name, r] : rows) {
    if (r.at("kind") != "autoencoder") continue;
    ++aes;
    const long u = r.at("default").at("unique_colors").get<long>();
    const double bw = r.at("default").at("bw_fraction").get<double>();
    o.detail << "; " << name << " " << u << " colors, bw " << num(bw);
    o.require(u > jpeg50, name + " colors > JPEG-50");
    o.require(bw < 0.9, name + " bw < 0.9");
  }
  o.require(aes == 1 + static_cast<int>(cfg.holdouts.size()), "every autoencoder reported");
}

void robustness(Outcome& o, const RunConfig& cfg) {
  const auto rep = load_report(cfg.path(cfg.paths.reports) / "robustness.json");
  const auto& grid = rep.at("grid");
  std::map<std::pair<std::string, std::string>, Json> cells;
  int skipped_cells = 0;
  for (const auto& c : grid.at("cells")) {
    cells[{c.at("source").get<std::string>(), c.at("transform").get<std::string>()}] = c;
    if (c.at("rate").is_null()) {
      ++skipped_cells;
      o.require(!c.at("skip_reason").get<std::string>().empty(), "skipped cell has a reason");
    }
  }
  const auto transforms = grid.at("transforms").get<std::vector<std::string>>();
  for (const char* t : {"jpeg90", "jpeg80", "resize75", "resize50"}) {
    o.require(std::find(transforms.begin(), transforms.end(), t) != transforms.end(), std::string(t) + " ran");
  }
  for (const auto& source : grid.at("sources")) {
    const auto s = source.get<std::string>();
    if (!is_holdout_source(cfg, s)) continue;
    const auto& r75 = cells.at({s, "resize75"}).at("rate");
    const auto& r50 = cells.at({s, "resize50"}).at("rate");
    if (r75.is_null() || r50.is_null()) {
      o.require(false, s + " resize cells evaluated");
      continue;
    }
    o.detail << " " << s << " resize75 " << num(r75.get<double>()) << " resize50 " << num(r50.get<double>()) << ";";
    o.require(r50.get<double>() <= r75.get<double>(), "TPR(resize50) <= TPR(resize75) on " + s);
  }
  o.detail << " " << skipped_cells << " '-' cells with reasons";
  o.require(skipped_cells >= 1, "a below-crop-size cell is skipped");
}

void determinism(Outcome& o, const fs::path& base) {
  std::vector<fs::path> roots{base / "tiny_a", base / "tiny_b"};
  for (const auto& root : roots) {
    fs::remove_all(root);
    fs::create_directories(root);
    write_text_file(root / "config.json", tiny_config().dump(2));
    auto cfg = load_run_config(root / "config.json");
    cfg.workdir = root;
    run_all(cfg);
  }
  const auto a = files_under(roots[0]), b = files_under(roots[1]);
  o.require(a == b, "same file set");
  std::size_t same = 0, manifests = 0, checkpoints = 0, reports = 0;
  for (const auto& rel : a) {
    if (!fs::exists(roots[1] / rel)) continue;
    const bool eq = read_file_bytes(roots[0] / rel) == read_file_bytes(roots[1] / rel);
    o.require(eq, rel.generic_string() + " identical");
    same += eq;
    const auto ext = rel.extension();
    manifests += ext == ".jsonl";
    checkpoints += ext == ".aefg";
    reports += ext == ".json" && *rel.begin() == "reports";
  }
  o.require(manifests >= 3 && checkpoints >= 4 && reports >= 5, "manifests, checkpoints and reports present");
  o.detail << " two runs of a reduced config: " << same << "/" << a.size() << " files byte-identical (" << manifests
           << " manifests, " << checkpoints << " checkpoints, " << reports << " reports)";
}

void format_fidelity(Outcome& o, const RunConfig& cfg, const fs::path& base) {
  const auto dir = base / "fidelity";
  fs::remove_all(dir);
  fs::create_directories(dir);
  int ppm = 0;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> side(1, 70), u(0, 255);
  for (int i = 0; i < 20; ++i) {
    ImageRGB8 img(side(rng), side(rng));
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        img.at(x, y) = {static_cast<std::uint8_t>(u(rng)), static_cast<std::uint8_t>(u(rng)),
                        static_cast<std::uint8_t>(u(rng))};
    const auto p = dir / ("img" + std::to_string(i) + ".ppm");
    save_ppm(img, p);
    const auto back = load_ppm(p);
    save_ppm(back, dir / "again.ppm");
    const bool ok = back == img && read_file_bytes(p) == read_file_bytes(dir / "again.ppm");
    o.require(ok, "PPM round trip " + std::to_string(i));
    ppm += ok;
  }

  int ckpts = 0;
  for (const auto& e : fs::directory_iterator(cfg.path(cfg.paths.checkpoints))) {
    if (e.path().extension() != ".aefg") continue;
    const auto bytes = read_file_bytes(e.path());
    const auto ckpt = load_checkpoint(e.path());
    save_checkpoint(ckpt, dir / "again.aefg");
    const bool ok = encode_checkpoint(ckpt) == bytes && read_file_bytes(dir / "again.aefg") == bytes;
    o.require(ok, "checkpoint round trip " + e.path().filename().string());
    ckpts += ok;
  }

  int reports = 0;
  for (const auto& e : fs::directory_iterator(cfg.path(cfg.paths.reports))) {
    if (e.path().extension() != ".json") continue;
    const auto text = read_text_file(e.path());
    const auto once = serialize_report(load_report(e.path()));
    const bool ok = once == text && serialize_report(parse_report(once)) == once;
    o.require(ok, "report round trip " + e.path().filename().string());
    reports += ok;
  }
  o.require(ckpts >= 4 && reports >= 5, "desk checkpoints and reports found");
  o.detail << " " << ppm << " PPM, " << ckpts << " checkpoint and " << reports << " report round trips bit-identical";
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path base = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_work";
  fs::create_directories(base);
  set_quiet(true);

  criterion(1, "gradient integrity", gradient_integrity);
  criterion(2, "oracle equivalence", oracle_equivalence);

  RunConfig desk = load_run_config(std::nullopt, "desk");
  desk.workdir = base / "desk";
  double run_seconds = 0, train_seconds = 0;
  bool desk_ok = true;
  std::string desk_error;
  try {
    fs::remove_all(desk.workdir);
    fs::create_directories(desk.workdir);
    const auto t0 = Clock::now();
    stage_gen_data(desk);
    stage_train_ae(desk);
    stage_build_corpus(desk);
    stage_train_detector(desk);
    train_seconds = seconds_since(t0);
    stage_calibrate(desk);
    stage_eval(desk);
    stage_robustness(desk);
    stage_artifacts(desk);
    run_seconds = seconds_since(t0);
    std::cerr << "desk run finished in " << run_seconds << " s\n";
  } catch (const std::exception& e) {
    desk_ok = false;
    desk_error = e.what();
  }
  auto on_desk = [&](int id, const std::string& name, auto fn) {
    criterion(id, name, [&](Outcome& o) {
      if (!desk_ok) throw Error("desk run failed: " + desk_error);
      fn(o);
    });
  };
  on_desk(3, "desk training sanity", [&](Outcome& o) { desk_training(o, desk, run_seconds, train_seconds); });
  on_desk(4, "generalization trend", [&](Outcome& o) { generalization(o, desk); });
  on_desk(5, "calibration contract", [&](Outcome& o) { calibration_contract(o, desk); });
  on_desk(6, "artifact statistics", [&](Outcome& o) { artifacts(o, desk); });
  on_desk(7, "robustness sweep", [&](Outcome& o) { robustness(o, desk); });
  criterion(8, "determinism", [&](Outcome& o) { determinism(o, base); });
  on_desk(9, "format fidelity", [&](Outcome& o) { format_fidelity(o, desk, base); });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
