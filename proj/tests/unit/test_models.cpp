#include <gtest/gtest.h>

#include <cstring>

#include "aeforge/checkpoint.hpp"
#include "aeforge/error.hpp"
#include "aeforge/models.hpp"
#include "aeforge/ops.hpp"
#include "gradcheck.hpp"
#include "testutil.hpp"

using namespace aeforge;

namespace {

Tensor random_batch(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<float> v(n * 3 * h * w);
  for (auto& x : v) x = u(rng);
  return Tensor::from({n, 3, h, w}, std::move(v));
}

}  // namespace

TEST(Autoencoder, LatentShape) {
  const Autoencoder<float> ae;
  NoGradGuard g;
  EXPECT_EQ(ae.encode(random_batch(1, 32, 32, 1)).shape(), (Shape{1, 4, 4, 4}));
  const Autoencoder<float> wide(AutoencoderConfig{8, Activation::relu, 2});
  EXPECT_EQ(wide.encode(random_batch(2, 40, 24, 1)).shape(), (Shape{2, 8, 5, 3}));
}

TEST(Autoencoder, ShapeContractOverSizes) {
  const Autoencoder<float> ae;
  NoGradGuard g;
  for (std::size_t s : {32u, 40u, 64u, 128u}) {
    const auto x = random_batch(1, s, s, s);
    const auto z = ae.encode(x);
    EXPECT_EQ(ae.decode(z).shape(), x.shape()) << s;
    EXPECT_EQ(x.numel(), 48 * z.numel()) << s;  // 8*8*3 / 4
  }
}

TEST(Autoencoder, IndivisibleInputRejected) {
  const Autoencoder<float> ae;
  EXPECT_THROW(ae.encode(random_batch(1, 30, 32, 1)), ShapeError);
  EXPECT_THROW(ae_reconstruct(ae, ImageRGB8(33, 32)), ShapeError);
}

TEST(Autoencoder, BatchIndependence) {
  const Autoencoder<float> ae(AutoencoderConfig{4, Activation::silu, 5});
  NoGradGuard g;
  const auto both = random_batch(2, 32, 32, 9);
  const std::size_t half = both.numel() / 2;
  const auto first = Tensor::from({1, 3, 32, 32}, std::vector<float>(both.data().begin(), both.data().begin() + half));
  const auto second = Tensor::from({1, 3, 32, 32}, std::vector<float>(both.data().begin() + half, both.data().end()));
  const auto zb = ae.encode(both), z1 = ae.encode(first), z2 = ae.encode(second);
  const std::size_t lh = zb.numel() / 2;
  for (std::size_t i = 0; i < lh; ++i) {
    EXPECT_NEAR(zb.data()[i], z1.data()[i], 1e-6);
    EXPECT_NEAR(zb.data()[lh + i], z2.data()[i], 1e-6);
  }
}

TEST(Autoencoder, ZeroWeightsGiveZeroLatent) {
  Autoencoder<float> ae;
  for (auto& p : ae.parameters())
    for (auto& v : p.tensor.data()) v = 0.0f;
  NoGradGuard g;
  const auto z = ae.encode(random_batch(1, 16, 16, 3));
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Autoencoder, ReconstructKeepsDimensions) {
  const Autoencoder<float> ae;
  for (int s : {32, 64, 256}) {
    const auto img = testutil::random_image(s, s, 1);
    const auto out = ae_reconstruct(ae, img);
    EXPECT_EQ(out.width(), s);
    EXPECT_EQ(out.height(), s);
  }
  const auto img = testutil::random_image(48, 32, 2);
  std::vector<ImageRGB8> batch{img, img, img};
  const auto outs = ae_reconstruct_batch(ae, batch, 2);
  ASSERT_EQ(outs.size(), 3u);
  EXPECT_EQ(outs[0], ae_reconstruct(ae, img));
  EXPECT_EQ(outs[2], outs[0]);
}

TEST(Autoencoder, ParameterNamesUnique) {
  const Autoencoder<float> ae;
  std::set<std::string> names;
  for (const auto& p : ae.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  const Detector<float> det;
  names.clear();
  for (const auto& p : det.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}

TEST(Detector, FreshDetectorIsExactlyHalf) {
  const Detector<float> det;
  std::vector<ImageRGB8> crops{testutil::random_image(32, 32, 1), testutil::random_image(32, 32, 2)};
  for (double p : detector_probabilities(det, crops)) EXPECT_EQ(p, 0.5);
}

TEST(Detector, ProbabilitiesInRangeAndBatchInvariant) {
  Detector<float> det(DetectorConfig{32, 4});
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0, 0.3f);
  for (auto& p : det.parameters())
    if (p.name.find("head") != std::string::npos)
      for (auto& v : p.tensor.data()) v = n(rng);
  std::vector<ImageRGB8> crops;
  for (int i = 0; i < 5; ++i) crops.push_back(testutil::random_image(32, 32, 10 + i));
  crops.push_back(crops[1]);
  const auto probs = detector_probabilities(det, crops);
  for (double p : probs) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_EQ(probs[1], probs[5]);
  for (std::size_t i = 0; i < crops.size(); ++i) {
    std::vector<ImageRGB8> single{crops[i]};
    EXPECT_NEAR(detector_probabilities(det, single)[0], probs[i], 1e-6) << i;
  }
  std::vector<ImageRGB8> reordered{crops[3], crops[0]};
  const auto r = detector_probabilities(det, reordered);
  EXPECT_NEAR(r[0], probs[3], 1e-6);
  EXPECT_NEAR(r[1], probs[0], 1e-6);
}

TEST(Detector, WrongCropSizeRejected) {
  const Detector<float> det;
  std::vector<ImageRGB8> crops{testutil::random_image(40, 40, 1)};
  EXPECT_THROW(detector_probabilities(det, crops), ShapeError);
}

TEST(Checkpoint, LayoutIsAsDocumented) {
  Checkpoint c;
  c.add("w", {2}, {1.0f, -2.0f});
  const auto bytes = encode_checkpoint(c);
  std::vector<std::uint8_t> expected{'A', 'E', 'F', 'G', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 'w', 1, 0, 0, 0,
                                     2, 0, 0, 0, 0, 0, 0, 0};
  float f[2] = {1.0f, -2.0f};
  const auto* fb = reinterpret_cast<const std::uint8_t*>(f);
  expected.insert(expected.end(), fb, fb + 8);
  EXPECT_EQ(bytes, expected);
}

TEST(Checkpoint, ModelRoundTripIsBitIdentical) {
  Autoencoder<float> ae(AutoencoderConfig{8, Activation::relu, 7});
  ae.normalization = {{0.1f, 0.2f, 0.3f}, {0.4f, 0.5f, 0.6f}};
  const auto dir = testutil::temp_dir("ckpt");
  save_checkpoint(ae.to_checkpoint(), dir / "ae.aefg");
  const auto loaded = load_checkpoint(dir / "ae.aefg");
  EXPECT_EQ(encode_checkpoint(loaded), encode_checkpoint(ae.to_checkpoint()));
  EXPECT_EQ(checkpoint_hash(loaded), checkpoint_hash(ae.to_checkpoint()));
  EXPECT_EQ(checkpoint_kind(loaded), "autoencoder");
  const auto back = Autoencoder<float>::from_checkpoint(loaded);
  EXPECT_EQ(back.config().latent_channels, 8);
  EXPECT_EQ(back.config().activation, Activation::relu);
  EXPECT_EQ(back.normalization.std[2], 0.6f);
  const auto img = testutil::random_image(32, 32, 3);
  EXPECT_EQ(ae_reconstruct(back, img), ae_reconstruct(ae, img));

  const Detector<float> det(DetectorConfig{32, 9});
  const auto dc = det.to_checkpoint();
  EXPECT_EQ(checkpoint_kind(dc), "detector");
  EXPECT_EQ(encode_checkpoint(Detector<float>::from_checkpoint(dc).to_checkpoint()), encode_checkpoint(dc));
  EXPECT_THROW(Detector<float>::from_checkpoint(ae.to_checkpoint()), Error);
}

TEST(Checkpoint, CorruptInputs) {
  Checkpoint c;
  c.add("w", {3}, {1, 2, 3});
  auto bytes = encode_checkpoint(c);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 2);
  EXPECT_THROW(decode_checkpoint(truncated), ParseError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.aefg"), IoError);
}

class ModelGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(ModelGradients, AutoencoderMatchesCentralDifferences) {
  const auto r = gradcheck::autoencoder_check(GetParam(), 4);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel, 1e-4);
}

TEST_P(ModelGradients, DetectorMatchesCentralDifferences) {
  const auto r = gradcheck::detector_check(GetParam(), 4);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(TwentySeeds, ModelGradients, ::testing::Range<std::uint64_t>(1, 21));
