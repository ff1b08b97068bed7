#include "aeforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "aeforge/error.hpp"
#include "aeforge/log.hpp"
#include "aeforge/util.hpp"

namespace aeforge {

ImageRGB8::ImageRGB8(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw ValidationError("image dimensions must be >= 1, got " + std::to_string(width) + "x" +
                          std::to_string(height));
  }
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

ImageRGB8::ImageRGB8(int width, int height, std::vector<Rgb> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw ValidationError("image dimensions must be >= 1");
  if (pixels_.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("pixel count does not match image dimensions");
  }
}

// ---------------------------------------------------------------- PPM

std::vector<std::uint8_t> encode_ppm(const ImageRGB8& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels().size() * 3);
  for (const Rgb& p : image.pixels()) {
    out.push_back(p.r);
    out.push_back(p.g);
    out.push_back(p.b);
  }
  return out;
}

namespace {

class PpmHeaderParser {
 public:
  explicit PpmHeaderParser(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw ParseError(std::string("PPM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("PPM header: expected ") + what, start);
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }
  std::uint8_t peek() const { return bytes_[pos_]; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageRGB8 decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw ParseError("not a binary PPM (missing P6 magic)", 0);
  PpmHeaderParser parser(bytes.subspan(2));
  const long width = parser.number("width");
  const long height = parser.number("height");
  const std::size_t maxval_pos = parser.pos() + 2;
  const long maxval = parser.number("maxval");
  if (width < 1 || height < 1) throw ParseError("PPM dimensions must be positive", 2);
  if (maxval != 255) throw ParseError("unsupported PPM maxval " + std::to_string(maxval) + " (need 255)", maxval_pos);
  if (parser.at_end() || !std::isspace(parser.peek())) {
    throw ParseError("PPM header must end with a single whitespace byte", parser.pos() + 2);
  }
  parser.advance();
  const std::size_t offset = parser.pos() + 2;
  const std::size_t expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  const std::size_t actual = bytes.size() - offset;
  if (actual < expected) {
    throw ParseError("truncated PPM payload: expected " + std::to_string(expected) + " bytes, got " +
                         std::to_string(actual),
                     bytes.size());
  }
  std::vector<Rgb> pixels(expected / 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = Rgb{bytes[offset + 3 * i], bytes[offset + 3 * i + 1], bytes[offset + 3 * i + 2]};
  }
  return ImageRGB8(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

ImageRGB8 load_ppm(const std::filesystem::path& path) { return decode_ppm(read_file_bytes(path)); }

void save_ppm(const ImageRGB8& image, const std::filesystem::path& path) { write_file_bytes(path, encode_ppm(image)); }

// ---------------------------------------------------------------- color

std::uint8_t clamp_round_u8(double value) {
  const double c = std::clamp(value, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::round(c));
}

YCbCrPlanes rgb_to_ycbcr(const ImageRGB8& image) {
  YCbCrPlanes planes;
  planes.width = image.width();
  planes.height = image.height();
  const auto n = image.pixels().size();
  planes.y.resize(n);
  planes.cb.resize(n);
  planes.cr.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = image.pixels()[i].r, g = image.pixels()[i].g, b = image.pixels()[i].b;
    planes.y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    planes.cb[i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    planes.cr[i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
  }
  return planes;
}

ImageRGB8 ycbcr_to_rgb(const YCbCrPlanes& planes) {
  ImageRGB8 out(planes.width, planes.height);
  auto px = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double y = planes.y[i], cb = planes.cb[i] - 128.0, cr = planes.cr[i] - 128.0;
    px[i] = Rgb{clamp_round_u8(y + 1.402 * cr), clamp_round_u8(y - 0.344136 * cb - 0.714136 * cr),
                clamp_round_u8(y + 1.772 * cb)};
  }
  return out;
}

// ---------------------------------------------------------------- resize

ImageRGB8 resize_bilinear(const ImageRGB8& image, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("resize scale must be > 0");
  if (scale == 1.0) return image;
  const int w = image.width(), h = image.height();
  const int ow = std::max(1, static_cast<int>(std::round(w * scale)));
  const int oh = std::max(1, static_cast<int>(std::round(h * scale)));

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [scale](int out_len, int in_len) {
    std::vector<Tap> t(static_cast<std::size_t>(out_len));
    for (int d = 0; d < out_len; ++d) {
      const double s = std::clamp((d + 0.5) / scale - 0.5, 0.0, static_cast<double>(in_len - 1));
      const int i0 = static_cast<int>(std::floor(s));
      t[d] = {i0, std::min(i0 + 1, in_len - 1), s - i0};
    }
    return t;
  };
  const auto tx = taps(ow, w);
  const auto ty = taps(oh, h);

  ImageRGB8 out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    const Tap& vy = ty[y];
    for (int x = 0; x < ow; ++x) {
      const Tap& vx = tx[x];
      const Rgb& a = image.at(vx.i0, vy.i0);
      const Rgb& b = image.at(vx.i1, vy.i0);
      const Rgb& c = image.at(vx.i0, vy.i1);
      const Rgb& d = image.at(vx.i1, vy.i1);
      auto blend = [&](std::uint8_t Rgb::*ch) {
        const double top = a.*ch + (b.*ch - a.*ch) * vx.f;
        const double bottom = c.*ch + (d.*ch - c.*ch) * vx.f;
        return clamp_round_u8(top + (bottom - top) * vy.f);
      };
      out.at(x, y) = Rgb{blend(&Rgb::r), blend(&Rgb::g), blend(&Rgb::b)};
    }
  }
  return out;
}

// ---------------------------------------------------------------- crops

std::vector<CropCorner> crop_corners(int width, int height, const CropSpec& spec) {
  if (spec.size < 1 || spec.count < 1) throw ValidationError("crop spec requires size >= 1 and count >= 1");
  if (width < spec.size || height < spec.size) {
    throw TooSmallError("image " + std::to_string(width) + "x" + std::to_string(height) +
                        " is smaller than crop size " + std::to_string(spec.size));
  }
  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_int_distribution<int> dx(0, width - spec.size);
  std::uniform_int_distribution<int> dy(0, height - spec.size);
  std::vector<CropCorner> corners(static_cast<std::size_t>(spec.count));
  for (auto& c : corners) {
    c.x = dx(rng);
    c.y = dy(rng);
  }
  return corners;
}

ImageRGB8 crop(const ImageRGB8& image, CropCorner corner, int size) {
  if (corner.x < 0 || corner.y < 0 || corner.x + size > image.width() || corner.y + size > image.height()) {
    throw ValidationError("crop window out of bounds");
  }
  ImageRGB8 out(size, size);
  for (int y = 0; y < size; ++y) {
    const Rgb* src = &image.at(corner.x, corner.y + y);
    std::copy(src, src + size, &out.at(0, y));
  }
  return out;
}

std::vector<ImageRGB8> random_crops(const ImageRGB8& image, const CropSpec& spec) {
  std::vector<ImageRGB8> crops;
  for (const auto& c : crop_corners(image.width(), image.height(), spec)) crops.push_back(crop(image, c, spec.size));
  return crops;
}

// ---------------------------------------------------------------- color statistics

std::size_t unique_colors(const ImageRGB8& image) {
  std::vector<bool> seen(1u << 24, false);
  std::size_t count = 0;
  for (const Rgb& p : image.pixels()) {
    auto bit = seen[p.packed()];
    if (!bit) {
      bit = true;
      ++count;
    }
  }
  return count;
}

double bw_fraction(const ImageRGB8& image) {
  std::size_t bw = 0;
  for (const Rgb& p : image.pixels()) bw += (p == kBlack || p == kWhite) ? 1 : 0;
  return static_cast<double>(bw) / static_cast<double>(image.pixels().size());
}

ImageRGB8 color_randomize(const ImageRGB8& image, std::uint64_t seed) {
  std::vector<std::uint32_t> colors;
  colors.reserve(image.pixels().size());
  for (const Rgb& p : image.pixels()) colors.push_back(p.packed());
  std::sort(colors.begin(), colors.end());
  colors.erase(std::unique(colors.begin(), colors.end()), colors.end());

  constexpr std::size_t kColorSpace = 1u << 24;
  const bool distinct = colors.size() <= kColorSpace;
  if (!distinct) log_warn("color_randomize: too many colors for a distinct mapping; allowing collisions");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> draw(0, kColorSpace - 1);
  std::unordered_map<std::uint32_t, std::uint32_t> mapping;
  std::unordered_set<std::uint32_t> used;
  mapping.reserve(colors.size());
  for (std::uint32_t c : colors) {
    std::uint32_t target = draw(rng);
    while (distinct && !used.insert(target).second) target = draw(rng);
    mapping.emplace(c, target);
  }
  ImageRGB8 out = image;
  for (Rgb& p : out.pixels()) {
    const std::uint32_t t = mapping.at(p.packed());
    p = Rgb{static_cast<std::uint8_t>(t >> 16), static_cast<std::uint8_t>(t >> 8), static_cast<std::uint8_t>(t)};
  }
  return out;
}

double psnr(const ImageRGB8& a, const ImageRGB8& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw ShapeError("psnr: image sizes differ");
  double se = 0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) {
    const Rgb &p = a.pixels()[i], &q = b.pixels()[i];
    for (double d : {double(p.r) - q.r, double(p.g) - q.g, double(p.b) - q.b}) se += d * d;
  }
  const double m = se / (3.0 * static_cast<double>(a.pixels().size()));
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

double mean_abs_error(const ImageRGB8& a, const ImageRGB8& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw ShapeError("mean_abs_error: image sizes differ");
  double acc = 0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) {
    const Rgb &p = a.pixels()[i], &q = b.pixels()[i];
    acc += std::abs(int(p.r) - q.r) + std::abs(int(p.g) - q.g) + std::abs(int(p.b) - q.b);
  }
  return acc / (3.0 * static_cast<double>(a.pixels().size()));
}

}  // namespace aeforge
