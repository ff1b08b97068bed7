#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aeforge/checkpoint.hpp"
#include "aeforge/image.hpp"
#include "aeforge/optim.hpp"
#include "aeforge/tensor.hpp"

namespace aeforge {

enum class Activation { silu, relu };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

// Per-channel standardization applied to [0,1] inputs: (x - mean) / std.
struct Normalization {
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> std{0.25f, 0.25f, 0.25f};
};

Normalization compute_normalization(std::span<const ImageRGB8> images);

template <typename T>
struct ConvLayer {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  int stride = 1;
  int padding = 0;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

struct AutoencoderConfig {
  int latent_channels = 4;
  Activation activation = Activation::silu;
  std::uint64_t init_seed = 1;
};

// Convolutional autoencoder with an 8x spatial bottleneck.
//   encoder: 3 stride-2 3x3 convs (3->32->64->128), then 1x1 to latent
//   decoder: 1x1 from latent to 128, 3 x [upsample 2x, 3x3 conv]
//            (128->64->32->32), final 3x3 conv to 3 channels
// encode() takes [N,3,H,W] in [0,1]; decode() returns [0,1]-space values
// (not clamped).
template <typename T>
class Autoencoder {
 public:
  static constexpr int kDownsample = 8;

  explicit Autoencoder(AutoencoderConfig config = {});

  BasicTensor<T> encode(const BasicTensor<T>& images) const;
  BasicTensor<T> decode(const BasicTensor<T>& latent) const;
  BasicTensor<T> forward(const BasicTensor<T>& images) const { return decode(encode(images)); }

  std::vector<Parameter<T>> parameters() const;
  std::size_t parameter_count() const;
  const AutoencoderConfig& config() const { return config_; }

  Normalization normalization;

  Checkpoint to_checkpoint() const;
  static Autoencoder from_checkpoint(const Checkpoint& ckpt);

 private:
  BasicTensor<T> act(const BasicTensor<T>& x) const;

  AutoencoderConfig config_;
  std::array<ConvLayer<T>, 3> down_;
  ConvLayer<T> to_latent_;
  ConvLayer<T> from_latent_;
  std::array<ConvLayer<T>, 3> up_;
  ConvLayer<T> to_rgb_;
};

struct DetectorConfig {
  int crop_size = 32;
  std::uint64_t init_seed = 1;
};

// Four stride-2 3x3 conv blocks (3->16->32->64->128, SiLU), global average
// pool, linear head to one logit. The head starts at zero so an untrained
// detector outputs exactly 0.5.
template <typename T>
class Detector {
 public:
  explicit Detector(DetectorConfig config = {});

  // [N,3,s,s] in [0,1] -> [N] logits.
  BasicTensor<T> logits(const BasicTensor<T>& crops) const;

  std::vector<Parameter<T>> parameters() const;
  std::size_t parameter_count() const;
  const DetectorConfig& config() const { return config_; }

  Normalization normalization;

  Checkpoint to_checkpoint() const;
  static Detector from_checkpoint(const Checkpoint& ckpt);

 private:
  DetectorConfig config_;
  std::array<ConvLayer<T>, 4> blocks_;
  BasicTensor<T> head_weight_;
  BasicTensor<T> head_bias_;
};

// Kind of model stored in a checkpoint ("autoencoder" or "detector").
std::string checkpoint_kind(const Checkpoint& ckpt);

// Pixel <-> tensor conversions. All images in a batch must share a size.
template <typename T>
BasicTensor<T> images_to_tensor(std::span<const ImageRGB8> images);
// Clamps to [0,1], scales by 255, rounds half away from zero.
std::vector<ImageRGB8> tensor_to_images(const Tensor& batch);

ImageRGB8 ae_reconstruct(const Autoencoder<float>& ae, const ImageRGB8& image);
std::vector<ImageRGB8> ae_reconstruct_batch(const Autoencoder<float>& ae, std::span<const ImageRGB8> images,
                                            std::size_t batch_size = 16);

// Sigmoid probabilities for a set of equally sized crops.
std::vector<double> detector_probabilities(const Detector<float>& detector, std::span<const ImageRGB8> crops);

}  // namespace aeforge
