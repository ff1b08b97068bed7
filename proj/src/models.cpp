#include "aeforge/models.hpp"

#include <cmath>
#include <random>

#include "aeforge/error.hpp"
#include "aeforge/ops.hpp"

namespace aeforge {
namespace {

constexpr float kKindAutoencoder = 1.0f;
constexpr float kKindDetector = 2.0f;

template <typename T>
ConvLayer<T> make_conv(std::mt19937_64& rng, std::size_t cin, std::size_t cout, std::size_t k, int stride,
                       int padding, T bias_init = T(0), double gain = 1.0) {
  const double fan_in = static_cast<double>(cin * k * k);
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
  std::vector<T> w(cout * cin * k * k);
  for (auto& v : w) v = static_cast<T>(dist(rng));
  ConvLayer<T> layer;
  layer.weight = BasicTensor<T>::from({cout, cin, k, k}, std::move(w), true);
  layer.bias = BasicTensor<T>::full({cout}, bias_init, true);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

template <typename T>
std::vector<T> channel_scale(const Normalization& n) {
  return {T(1) / n.std[0], T(1) / n.std[1], T(1) / n.std[2]};
}

template <typename T>
std::vector<T> channel_shift(const Normalization& n) {
  return {T(n.mean[0]), T(n.mean[1]), T(n.mean[2])};
}

template <typename T>
void store(Checkpoint& ckpt, const std::string& name, const BasicTensor<T>& t) {
  std::vector<std::uint64_t> dims(t.shape().begin(), t.shape().end());
  std::vector<float> data(t.data().begin(), t.data().end());
  ckpt.add(name, std::move(dims), std::move(data));
}

template <typename T>
void restore(const Checkpoint& ckpt, const std::string& name, BasicTensor<T>& t) {
  const auto& e = ckpt.at(name);
  Shape shape(e.dims.begin(), e.dims.end());
  if (shape != t.shape()) {
    throw ShapeError("checkpoint entry '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                     shape_str(t.shape()));
  }
  std::copy(e.data.begin(), e.data.end(), t.data().begin());
}

void store_meta(Checkpoint& ckpt, const std::string& name, std::vector<float> values) {
  const auto n = values.size();
  ckpt.add(name, {n}, std::move(values));
}

std::vector<float> meta(const Checkpoint& ckpt, const std::string& name, std::size_t expected) {
  const auto& e = ckpt.at(name);
  if (e.data.size() != expected) throw ValidationError("checkpoint metadata '" + name + "' has wrong length");
  return e.data;
}

void store_normalization(Checkpoint& ckpt, const Normalization& n) {
  store_meta(ckpt, "meta.norm.mean", {n.mean[0], n.mean[1], n.mean[2]});
  store_meta(ckpt, "meta.norm.std", {n.std[0], n.std[1], n.std[2]});
}

Normalization load_normalization(const Checkpoint& ckpt) {
  Normalization n;
  auto m = meta(ckpt, "meta.norm.mean", 3);
  auto s = meta(ckpt, "meta.norm.std", 3);
  for (int c = 0; c < 3; ++c) {
    n.mean[c] = m[c];
    n.std[c] = s[c];
  }
  return n;
}

void require_kind(const Checkpoint& ckpt, float kind, const char* what) {
  if (meta(ckpt, "meta.kind", 1)[0] != kind) throw ValidationError(std::string("checkpoint is not a ") + what);
}

}  // namespace

std::string activation_name(Activation a) { return a == Activation::silu ? "silu" : "relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "silu") return Activation::silu;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "' (expected silu or relu)");
}

Normalization compute_normalization(std::span<const ImageRGB8> images) {
  if (images.empty()) throw ValidationError("cannot compute normalization of an empty image set");
  std::array<double, 3> sum{}, sq{};
  double count = 0;
  for (const auto& img : images) {
    for (const Rgb& p : img.pixels()) {
      const double v[3] = {p.r / 255.0, p.g / 255.0, p.b / 255.0};
      for (int c = 0; c < 3; ++c) {
        sum[c] += v[c];
        sq[c] += v[c] * v[c];
      }
    }
    count += static_cast<double>(img.pixels().size());
  }
  Normalization n;
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / count;
    const double var = std::max(sq[c] / count - mean * mean, 0.0);
    n.mean[c] = static_cast<float>(mean);
    n.std[c] = static_cast<float>(std::max(std::sqrt(var), 1e-3));
  }
  return n;
}

template <typename T>
BasicTensor<T> ConvLayer<T>::operator()(const BasicTensor<T>& x) const {
  return conv2d(x, weight, bias, stride, padding);
}

// ---------------------------------------------------------------- autoencoder

template <typename T>
Autoencoder<T>::Autoencoder(AutoencoderConfig config) : config_(config) {
  if (config.latent_channels < 1) throw ValidationError("latent_channels must be >= 1");
  std::mt19937_64 rng(config.init_seed);
  const std::size_t lat = static_cast<std::size_t>(config.latent_channels);
  down_ = {make_conv<T>(rng, 3, 32, 3, 2, 1), make_conv<T>(rng, 32, 64, 3, 2, 1), make_conv<T>(rng, 64, 128, 3, 2, 1)};
  to_latent_ = make_conv<T>(rng, 128, lat, 1, 1, 0);
  from_latent_ = make_conv<T>(rng, lat, 128, 1, 1, 0);
  up_ = {make_conv<T>(rng, 128, 64, 3, 1, 1), make_conv<T>(rng, 64, 32, 3, 1, 1), make_conv<T>(rng, 32, 32, 3, 1, 1)};
  to_rgb_ = make_conv<T>(rng, 32, 3, 3, 1, 1, T(0.5), 0.1);
}

template <typename T>
BasicTensor<T> Autoencoder<T>::act(const BasicTensor<T>& x) const {
  return config_.activation == Activation::silu ? silu(x) : relu(x);
}

template <typename T>
BasicTensor<T> Autoencoder<T>::encode(const BasicTensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ShapeError("autoencoder expects [N,3,H,W] input, got " + shape_str(images.shape()));
  }
  if (images.dim(2) % kDownsample != 0 || images.dim(3) % kDownsample != 0) {
    throw ShapeError("autoencoder input " + std::to_string(images.dim(2)) + "x" + std::to_string(images.dim(3)) +
                     " is not divisible by " + std::to_string(kDownsample));
  }
  const auto shift = channel_shift<T>(normalization);
  const auto scale = channel_scale<T>(normalization);
  BasicTensor<T> h = channel_affine<T>(images, shift, scale);
  for (const auto& layer : down_) h = act(layer(h));
  return to_latent_(h);
}

template <typename T>
BasicTensor<T> Autoencoder<T>::decode(const BasicTensor<T>& latent) const {
  if (latent.rank() != 4 || latent.dim(1) != static_cast<std::size_t>(config_.latent_channels)) {
    throw ShapeError("latent " + shape_str(latent.shape()) + " does not match latent_channels " +
                     std::to_string(config_.latent_channels));
  }
  BasicTensor<T> h = act(from_latent_(latent));
  for (const auto& layer : up_) h = act(layer(upsample_nearest2x(h)));
  return to_rgb_(h);
}

template <typename T>
std::vector<Parameter<T>> Autoencoder<T>::parameters() const {
  std::vector<Parameter<T>> params;
  auto add = [&](const std::string& prefix, const ConvLayer<T>& l) {
    params.push_back({prefix + ".weight", l.weight});
    params.push_back({prefix + ".bias", l.bias});
  };
  for (std::size_t i = 0; i < down_.size(); ++i) add("encoder.conv" + std::to_string(i + 1), down_[i]);
  add("encoder.to_latent", to_latent_);
  add("decoder.from_latent", from_latent_);
  for (std::size_t i = 0; i < up_.size(); ++i) add("decoder.conv" + std::to_string(i + 1), up_[i]);
  add("decoder.to_rgb", to_rgb_);
  return params;
}

template <typename T>
std::size_t Autoencoder<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
Checkpoint Autoencoder<T>::to_checkpoint() const {
  Checkpoint ckpt;
  store_meta(ckpt, "meta.kind", {kKindAutoencoder});
  store_meta(ckpt, "meta.arch",
             {static_cast<float>(config_.latent_channels), config_.activation == Activation::silu ? 0.0f : 1.0f});
  store_normalization(ckpt, normalization);
  for (const auto& p : parameters()) store(ckpt, p.name, p.tensor);
  return ckpt;
}

template <typename T>
Autoencoder<T> Autoencoder<T>::from_checkpoint(const Checkpoint& ckpt) {
  require_kind(ckpt, kKindAutoencoder, "autoencoder checkpoint");
  const auto arch = meta(ckpt, "meta.arch", 2);
  AutoencoderConfig cfg;
  cfg.latent_channels = static_cast<int>(arch[0]);
  cfg.activation = arch[1] == 0.0f ? Activation::silu : Activation::relu;
  Autoencoder ae(cfg);
  ae.normalization = load_normalization(ckpt);
  for (auto& p : ae.parameters()) restore(ckpt, p.name, p.tensor);
  return ae;
}

// ---------------------------------------------------------------- detector

template <typename T>
Detector<T>::Detector(DetectorConfig config) : config_(config) {
  if (config.crop_size < 16) throw ValidationError("detector crop size must be >= 16");
  std::mt19937_64 rng(config.init_seed);
  blocks_ = {make_conv<T>(rng, 3, 16, 3, 2, 1), make_conv<T>(rng, 16, 32, 3, 2, 1), make_conv<T>(rng, 32, 64, 3, 2, 1),
             make_conv<T>(rng, 64, 128, 3, 2, 1)};
  head_weight_ = BasicTensor<T>::zeros({1, 128}, true);
  head_bias_ = BasicTensor<T>::zeros({1}, true);
}

template <typename T>
BasicTensor<T> Detector<T>::logits(const BasicTensor<T>& crops) const {
  const auto s = static_cast<std::size_t>(config_.crop_size);
  if (crops.rank() != 4 || crops.dim(1) != 3 || crops.dim(2) != s || crops.dim(3) != s) {
    throw ShapeError("detector expects [N,3," + std::to_string(s) + "," + std::to_string(s) + "] crops, got " +
                     shape_str(crops.shape()));
  }
  const auto shift = channel_shift<T>(normalization);
  const auto scale = channel_scale<T>(normalization);
  BasicTensor<T> h = channel_affine<T>(crops, shift, scale);
  for (const auto& block : blocks_) h = silu(block(h));
  BasicTensor<T> logit = linear(global_avg_pool(h), head_weight_, head_bias_);
  return reshape(logit, Shape{crops.dim(0)});
}

template <typename T>
std::vector<Parameter<T>> Detector<T>::parameters() const {
  std::vector<Parameter<T>> params;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    params.push_back({"detector.conv" + std::to_string(i + 1) + ".weight", blocks_[i].weight});
    params.push_back({"detector.conv" + std::to_string(i + 1) + ".bias", blocks_[i].bias});
  }
  params.push_back({"detector.head.weight", head_weight_});
  params.push_back({"detector.head.bias", head_bias_});
  return params;
}

template <typename T>
std::size_t Detector<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
Checkpoint Detector<T>::to_checkpoint() const {
  Checkpoint ckpt;
  store_meta(ckpt, "meta.kind", {kKindDetector});
  store_meta(ckpt, "meta.crop_size", {static_cast<float>(config_.crop_size)});
  store_normalization(ckpt, normalization);
  for (const auto& p : parameters()) store(ckpt, p.name, p.tensor);
  return ckpt;
}

template <typename T>
Detector<T> Detector<T>::from_checkpoint(const Checkpoint& ckpt) {
  require_kind(ckpt, kKindDetector, "detector checkpoint");
  DetectorConfig cfg;
  cfg.crop_size = static_cast<int>(meta(ckpt, "meta.crop_size", 1)[0]);
  Detector det(cfg);
  det.normalization = load_normalization(ckpt);
  for (auto& p : det.parameters()) restore(ckpt, p.name, p.tensor);
  return det;
}

std::string checkpoint_kind(const Checkpoint& ckpt) {
  const auto* e = ckpt.find("meta.kind");
  if (!e || e->data.size() != 1) return "unknown";
  if (e->data[0] == kKindAutoencoder) return "autoencoder";
  if (e->data[0] == kKindDetector) return "detector";
  return "unknown";
}

// ---------------------------------------------------------------- conversions

template <typename T>
BasicTensor<T> images_to_tensor(std::span<const ImageRGB8> images) {
  if (images.empty()) throw ValidationError("empty image batch");
  const int w = images[0].width(), h = images[0].height();
  const std::size_t area = static_cast<std::size_t>(w) * h;
  std::vector<T> data(images.size() * 3 * area);
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n].width() != w || images[n].height() != h) throw ShapeError("images in a batch must share a size");
    T* base = data.data() + n * 3 * area;
    const auto px = images[n].pixels();
    for (std::size_t i = 0; i < area; ++i) {
      base[i] = static_cast<T>(px[i].r) / T(255);
      base[area + i] = static_cast<T>(px[i].g) / T(255);
      base[2 * area + i] = static_cast<T>(px[i].b) / T(255);
    }
  }
  return BasicTensor<T>::from({images.size(), 3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
                              std::move(data));
}

std::vector<ImageRGB8> tensor_to_images(const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw ShapeError("tensor_to_images expects [N,3,H,W]");
  const std::size_t n = batch.dim(0), h = batch.dim(2), w = batch.dim(3), area = h * w;
  std::vector<ImageRGB8> out;
  out.reserve(n);
  const auto d = batch.data();
  auto q = [](float v) { return clamp_round_u8(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0); };
  for (std::size_t k = 0; k < n; ++k) {
    ImageRGB8 img(static_cast<int>(w), static_cast<int>(h));
    const float* base = d.data() + k * 3 * area;
    auto px = img.pixels();
    for (std::size_t i = 0; i < area; ++i) px[i] = Rgb{q(base[i]), q(base[area + i]), q(base[2 * area + i])};
    out.push_back(std::move(img));
  }
  return out;
}

ImageRGB8 ae_reconstruct(const Autoencoder<float>& ae, const ImageRGB8& image) {
  return ae_reconstruct_batch(ae, std::span(&image, 1), 1).front();
}

std::vector<ImageRGB8> ae_reconstruct_batch(const Autoencoder<float>& ae, std::span<const ImageRGB8> images,
                                            std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<ImageRGB8> out;
  out.reserve(images.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < images.size();) {
    // Group consecutive images of identical size.
    std::size_t end = start + 1;
    while (end < images.size() && end - start < batch_size && images[end].width() == images[start].width() &&
           images[end].height() == images[start].height()) {
      ++end;
    }
    auto batch = images_to_tensor<float>(images.subspan(start, end - start));
    for (auto& img : tensor_to_images(ae.forward(batch))) out.push_back(std::move(img));
    start = end;
  }
  return out;
}

std::vector<double> detector_probabilities(const Detector<float>& detector, std::span<const ImageRGB8> crops) {
  NoGradGuard no_grad;
  std::vector<double> probs;
  probs.reserve(crops.size());
  constexpr std::size_t kBatch = 64;
  for (std::size_t start = 0; start < crops.size(); start += kBatch) {
    const auto n = std::min(kBatch, crops.size() - start);
    auto logits = detector.logits(images_to_tensor<float>(crops.subspan(start, n)));
    auto p = sigmoid(logits);
    for (float v : p.data()) probs.push_back(static_cast<double>(v));
  }
  return probs;
}

template struct ConvLayer<float>;
template struct ConvLayer<double>;
template class Autoencoder<float>;
template class Autoencoder<double>;
template class Detector<float>;
template class Detector<double>;
template BasicTensor<float> images_to_tensor(std::span<const ImageRGB8>);
template BasicTensor<double> images_to_tensor(std::span<const ImageRGB8>);

}  // namespace aeforge
