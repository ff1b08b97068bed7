#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "aeforge/error.hpp"
#include "aeforge/inference.hpp"
#include "aeforge/util.hpp"
#include "testutil.hpp"

using namespace aeforge;

namespace {

// Every crop scores p.
Detector<float> constant_detector(double p) {
  Detector<float> det;
  for (auto& param : det.parameters())
    for (auto& v : param.tensor.data()) v = 0.0f;
  for (auto& param : det.parameters())
    if (param.name == "detector.head.bias") param.tensor.data()[0] = static_cast<float>(std::log(p / (1 - p)));
  return det;
}

Detector<float> random_head_detector(std::uint64_t seed) {
  Detector<float> det(DetectorConfig{32, seed});
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0, 0.5f);
  for (auto& p : det.parameters())
    if (p.name.find("head") != std::string::npos)
      for (auto& v : p.tensor.data()) v = n(rng);
  return det;
}

void add(CorpusManifest& m, const std::filesystem::path& root, const std::string& path, Label label,
         const std::string& source, const ImageRGB8* image) {
  m.entries.push_back({path, label, source, 0, 1, "eval", "", false});
  if (image) save_ppm(*image, root / path);
}

}  // namespace

TEST(Decide, UniformProbabilityAggregates) {
  const auto det = constant_detector(0.9);
  const auto img = testutil::random_image(80, 60, 1);
  DecisionConfig c;
  c.tries = 10;
  const auto v = decide(img, det, c);
  ASSERT_EQ(v.crops.size(), 10u);
  EXPECT_NEAR(v.aggregate, 0.9, 1e-6);
  EXPECT_EQ(v.decision, 1);
  c.threshold = 0.95;
  EXPECT_EQ(decide(img, det, c).decision, 0);
}

TEST(Decide, EqualityIsNotPositive) {
  EXPECT_EQ(threshold_decision(0.5, 0.5), 0);
  EXPECT_EQ(threshold_decision(std::nextafter(0.5, 1.0), 0.5), 1);
  const std::vector<double> probs{0.3, 0.1, 0.3, 0.1, 0.2, 0.2, 0.1, 0.3, 0.2, 0.2};
  EXPECT_EQ(mean_probability(probs), 0.2);
  EXPECT_EQ(threshold_decision(mean_probability(probs), 0.2), 0);
}

TEST(Decide, MeanIsBoundedByExtremes) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(1 + trial % 17);
    for (auto& v : p) v = u(rng);
    const double m = mean_probability(p);
    EXPECT_GE(m, *std::min_element(p.begin(), p.end()));
    EXPECT_LE(m, *std::max_element(p.begin(), p.end()));
  }
  EXPECT_THROW(mean_probability(std::vector<double>{}), ValidationError);
}

TEST(Decide, SingleTryIsTheFirstCropOfTen) {
  const auto det = random_head_detector(4);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto img = testutil::random_image(70 + 5 * static_cast<int>(s), 64, s);
    DecisionConfig c;
    c.seed = s * 31;
    const auto one = decide(img, det, c);
    c.tries = 10;
    const auto ten = decide(img, det, c);
    EXPECT_EQ(one.crops[0].corner, ten.crops[0].corner);
    EXPECT_EQ(one.aggregate, ten.crops[0].prob);
    EXPECT_EQ(one.decision, threshold_decision(ten.crops[0].prob, c.threshold));
    const auto again = decide(img, det, c);
    EXPECT_EQ(again.aggregate, ten.aggregate);
  }
}

TEST(Decide, SmallImagesNeedUpscaling) {
  const auto det = constant_detector(0.7);
  const auto img = testutil::random_image(20, 40, 2);
  DecisionConfig c;
  EXPECT_THROW(decide(img, det, c), TooSmallError);
  c.upscale_small = true;
  const auto v = decide(img, det, c);
  EXPECT_TRUE(v.upscaled);
  EXPECT_EQ(v.decision, 1);
}

TEST(Decide, ConfigErrors) {
  const auto det = constant_detector(0.7);
  const auto img = testutil::random_image(64, 64, 2);
  DecisionConfig c;
  c.crop_size = 40;
  EXPECT_THROW(decide(img, det, c), ShapeError);
  c.crop_size = 32;
  c.tries = 0;
  EXPECT_THROW(decide(img, det, c), ValidationError);
  c.tries = 1;
  for (double t : {0.0, 1.0, -0.1, std::nan("")}) {
    c.threshold = t;
    EXPECT_THROW(decide(img, det, c), ValidationError) << t;
  }
}

TEST(ImageSeed, DependsOnKeyAndSeed) {
  EXPECT_EQ(image_seed(7, "a/b.ppm"), image_seed(7, "a/b.ppm"));
  EXPECT_NE(image_seed(7, "a/b.ppm"), image_seed(7, "a/c.ppm"));
  EXPECT_NE(image_seed(7, "a/b.ppm"), image_seed(8, "a/b.ppm"));
  EXPECT_EQ(image_seed(7, "a/b.ppm"), mix_seed(7, fnv1a64("a/b.ppm")));
}

TEST(Calibration, SeparableScores) {
  const std::vector<double> orig{0.1, 0.2, 0.3}, recon{0.7, 0.8};
  const auto c = calibrate_threshold(orig, recon, 0.001);
  EXPECT_EQ(c.threshold, 0.3);
  EXPECT_EQ(c.achieved_fpr, 0.0);
  EXPECT_EQ(c.achieved_recall, 1.0);
  EXPECT_TRUE(c.target_met);
  EXPECT_EQ(c.candidates, 9u);
}

TEST(Calibration, TargetOneTakesSmallestCandidate) {
  const std::vector<double> orig{0.4, 0.2}, recon{0.3, 0.9};
  const auto c = calibrate_threshold(orig, recon, 1.0);
  EXPECT_EQ(c.threshold, 0.2);
  EXPECT_EQ(c.achieved_recall, 1.0);
}

TEST(Calibration, NegativeTargetIsUnmet) {
  const std::vector<double> orig{0.4, 0.2}, recon{0.3, 0.9};
  const auto c = calibrate_threshold(orig, recon, -0.5);
  EXPECT_FALSE(c.target_met);
  EXPECT_EQ(c.threshold, 0.9);
}

TEST(Calibration, Errors) {
  const std::vector<double> some{0.5}, none;
  EXPECT_THROW(calibrate_threshold(none, some, 0.1), ValidationError);
  EXPECT_THROW(calibrate_threshold(some, none, 0.1), ValidationError);
  EXPECT_THROW(calibrate_threshold(some, some, std::nan("")), ValidationError);
  EXPECT_THROW(calibrate_threshold(some, some, 1.5), ValidationError);
}

TEST(Calibration, CandidatesAreScoresAndMidpoints) {
  const std::vector<double> a{0.5, 0.1, 0.5}, b{0.3};
  EXPECT_EQ(threshold_candidates(a, b), (std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5}));
}

TEST(Calibration, RecallMaximalByExhaustiveCheck) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> lo(0.35, 0.15), hi(0.65, 0.15);
  std::vector<double> orig(300), recon(250);
  for (auto& v : orig) v = std::clamp(std::round(lo(rng) * 200) / 200, 0.001, 0.999);
  for (auto& v : recon) v = std::clamp(std::round(hi(rng) * 200) / 200, 0.001, 0.999);
  const auto candidates = threshold_candidates(orig, recon);
  for (double target : {0.0, 0.001, 0.01, 0.05, 0.2, 0.5}) {
    const auto c = calibrate_threshold(orig, recon, target);
    ASSERT_TRUE(c.target_met);
    EXPECT_LE(c.achieved_fpr, target);
    EXPECT_EQ(c.achieved_fpr, fpr_at(orig, c.threshold));
    EXPECT_EQ(c.achieved_recall, recall_at(recon, c.threshold));
    for (double t : candidates) {
      if (fpr_at(orig, t) <= target) {
        EXPECT_LE(recall_at(recon, t), c.achieved_recall) << target << " " << t;
        EXPECT_GE(t, c.threshold);
      }
    }
  }
}

TEST(Calibration, RatesAreNonIncreasingInThreshold) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> orig(100), recon(100);
  for (auto& v : orig) v = u(rng);
  for (auto& v : recon) v = u(rng);
  double prev_fpr = 2, prev_recall = 2;
  for (double t : threshold_candidates(orig, recon)) {
    EXPECT_LE(fpr_at(orig, t), prev_fpr);
    EXPECT_LE(recall_at(recon, t), prev_recall);
    prev_fpr = fpr_at(orig, t);
    prev_recall = recall_at(recon, t);
  }
}

TEST(BatchDecide, CountsSkipsAndErrors) {
  const auto root = testutil::temp_dir("batch_decide");
  CorpusManifest m;
  std::vector<ImageRGB8> imgs;
  for (int i = 0; i < 3; ++i) imgs.push_back(testutil::random_image(64 + 8 * i, 48, 100 + i));
  const auto tiny = testutil::random_image(24, 24, 9);
  add(m, root, "orig/0.ppm", Label::original, "original", &imgs[0]);
  add(m, root, "orig/1.ppm", Label::original, "original", &imgs[1]);
  add(m, root, "orig/missing.ppm", Label::original, "original", nullptr);
  add(m, root, "rec/0.ppm", Label::reconstructed, "ae-x", &imgs[2]);
  add(m, root, "rec/tiny.ppm", Label::reconstructed, "ae-x", &tiny);

  DecisionConfig c;
  c.tries = 10;
  c.seed = 3;
  const auto out = batch_decide(m, root, constant_detector(0.9), c);
  ASSERT_EQ(out.size(), 2u);
  const auto& orig = out[0].source == "original" ? out[0] : out[1];
  const auto& rec = out[0].source == "original" ? out[1] : out[0];
  EXPECT_EQ(orig.evaluated, 2u);
  ASSERT_EQ(orig.errors.size(), 1u);
  EXPECT_EQ(orig.errors[0].path, "orig/missing.ppm");
  EXPECT_EQ(orig.positives_multi, 2u);
  EXPECT_EQ(orig.rate_multi().value(), 1.0);
  EXPECT_EQ(rec.label, Label::reconstructed);
  EXPECT_EQ(rec.evaluated, 1u);
  EXPECT_EQ(rec.skipped, 1u);
  EXPECT_NE(rec.skip_reason.find("below"), std::string::npos);

  c.upscale_small = true;
  const auto up = batch_decide(m, root, constant_detector(0.1), c);
  for (const auto& sd : up) {
    EXPECT_EQ(sd.skipped, 0u);
    EXPECT_EQ(sd.positives_single, 0u);
    EXPECT_EQ(sd.rate_single().value(), 0.0);
  }
}

TEST(BatchDecide, SingleTryUsesThePerImageSeed) {
  const auto root = testutil::temp_dir("batch_single");
  CorpusManifest m;
  std::vector<ImageRGB8> imgs;
  for (int i = 0; i < 6; ++i) imgs.push_back(testutil::random_image(60 + 7 * i, 50, 200 + i));
  for (int i = 0; i < 6; ++i) add(m, root, "x/" + std::to_string(i) + ".ppm", Label::reconstructed, "src", &imgs[i]);
  const auto det = random_head_detector(8);
  DecisionConfig c;
  c.tries = 10;
  c.seed = 77;
  const auto out = batch_decide(m, root, det, c);
  ASSERT_EQ(out.size(), 1u);
  ASSERT_EQ(out[0].evaluated, 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    DecisionConfig one = c;
    one.tries = 1;
    one.seed = image_seed(77, out[0].paths[i]);
    EXPECT_EQ(out[0].scores_single[i], decide(imgs[i], det, one).aggregate);
    one.tries = 10;
    EXPECT_EQ(out[0].scores_multi[i], decide(imgs[i], det, one).aggregate);
  }
  EXPECT_EQ(batch_decide(m, root, det, c)[0].scores_multi, out[0].scores_multi);
}

TEST(BatchDecide, EmptySourceHasNoRate) {
  SourceDecisions sd;
  EXPECT_FALSE(sd.rate_single().has_value());
  EXPECT_FALSE(sd.rate_multi().has_value());
}
