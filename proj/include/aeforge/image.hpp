#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace aeforge {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
  std::uint32_t packed() const { return (std::uint32_t{r} << 16) | (std::uint32_t{g} << 8) | b; }
};

inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kWhite{255, 255, 255};

class ImageRGB8 {
 public:
  ImageRGB8() = default;
  ImageRGB8(int width, int height, Rgb fill = kBlack);
  ImageRGB8(int width, int height, std::vector<Rgb> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  Rgb& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  const Rgb& at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<Rgb> pixels() { return pixels_; }
  std::span<const Rgb> pixels() const { return pixels_; }

  friend bool operator==(const ImageRGB8&, const ImageRGB8&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> pixels_;
};

// Binary PPM (P6, maxval 255).
std::vector<std::uint8_t> encode_ppm(const ImageRGB8& image);
ImageRGB8 decode_ppm(std::span<const std::uint8_t> bytes);
ImageRGB8 load_ppm(const std::filesystem::path& path);
void save_ppm(const ImageRGB8& image, const std::filesystem::path& path);

// Full-range BT.601 (JFIF) planes in double precision.
struct YCbCrPlanes {
  int width = 0;
  int height = 0;
  std::vector<double> y, cb, cr;
};

YCbCrPlanes rgb_to_ycbcr(const ImageRGB8& image);
// Clamps to [0,255] and rounds half away from zero.
ImageRGB8 ycbcr_to_rgb(const YCbCrPlanes& planes);

std::uint8_t clamp_round_u8(double value);

// Output dims are max(1, round(dim * scale)); sample position is
// (dst + 0.5) / scale - 0.5 clamped to the source bounds.
ImageRGB8 resize_bilinear(const ImageRGB8& image, double scale);

struct CropSpec {
  int size = 32;
  int count = 1;
  std::uint64_t rng_seed = 0;
};

struct CropCorner {
  int x = 0;
  int y = 0;
  friend bool operator==(const CropCorner&, const CropCorner&) = default;
};

// Top-left corners drawn uniformly over valid positions; throws
// TooSmallError when the image is smaller than the crop.
std::vector<CropCorner> crop_corners(int width, int height, const CropSpec& spec);
ImageRGB8 crop(const ImageRGB8& image, CropCorner corner, int size);
std::vector<ImageRGB8> random_crops(const ImageRGB8& image, const CropSpec& spec);

std::size_t unique_colors(const ImageRGB8& image);
// Share of pixels that are exactly (0,0,0) or (255,255,255).
double bw_fraction(const ImageRGB8& image);
// Maps every distinct color to a distinct random color (seeded).
ImageRGB8 color_randomize(const ImageRGB8& image, std::uint64_t seed);

double psnr(const ImageRGB8& a, const ImageRGB8& b);
double mean_abs_error(const ImageRGB8& a, const ImageRGB8& b);

}  // namespace aeforge
