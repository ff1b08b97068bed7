#include "aeforge/jpeg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aeforge/error.hpp"

namespace aeforge {

const Table8 kLumaBaseTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

const Table8 kChromaBaseTable = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,
};

namespace {

Table8 scale_table(const Table8& base, int quality) {
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  Table8 out{};
  for (std::size_t i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return out;
}

// basis[u][x] = c(u) cos((2x+1) u pi / 16), c(0) = sqrt(1/8), else sqrt(2/8)
const std::array<double, 64>& dct_basis() {
  static const std::array<double, 64> basis = [] {
    std::array<double, 64> b{};
    for (int u = 0; u < 8; ++u) {
      const double c = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) b[u * 8 + x] = c * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

void validate_quality(int quality) {
  if (quality < 1 || quality > 100) {
    throw ValidationError("JPEG quality must be in 1..100, got " + std::to_string(quality));
  }
}

}  // namespace

QuantTables quality_tables(int quality) {
  validate_quality(quality);
  return {scale_table(kLumaBaseTable, quality), scale_table(kChromaBaseTable, quality), quality};
}

Block8 dct8x8(const Block8& block) {
  const auto& c = dct_basis();
  Block8 tmp{}, out{};
  // tmp = C * block
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double acc = 0;
      for (int k = 0; k < 8; ++k) acc += c[u * 8 + k] * block[k * 8 + x];
      tmp[u * 8 + x] = acc;
    }
  // out = tmp * C^T
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double acc = 0;
      for (int k = 0; k < 8; ++k) acc += tmp[u * 8 + k] * c[v * 8 + k];
      out[u * 8 + v] = acc;
    }
  return out;
}

Block8 idct8x8(const Block8& coeffs) {
  const auto& c = dct_basis();
  Block8 tmp{}, out{};
  // tmp = C^T * coeffs
  for (int x = 0; x < 8; ++x)
    for (int v = 0; v < 8; ++v) {
      double acc = 0;
      for (int k = 0; k < 8; ++k) acc += c[k * 8 + x] * coeffs[k * 8 + v];
      tmp[x * 8 + v] = acc;
    }
  // out = tmp * C
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      double acc = 0;
      for (int k = 0; k < 8; ++k) acc += tmp[x * 8 + k] * c[k * 8 + y];
      out[x * 8 + y] = acc;
    }
  return out;
}

Block8 quantize_block(const Block8& shifted, const Table8& table) {
  Block8 coeffs = dct8x8(shifted);
  for (std::size_t i = 0; i < 64; ++i) coeffs[i] = std::round(coeffs[i] / table[i]) * table[i];
  return idct8x8(coeffs);
}

ImageRGB8 jpeg_degrade(const ImageRGB8& image, int quality) {
  const QuantTables tables = quality_tables(quality);
  YCbCrPlanes planes = rgb_to_ycbcr(image);
  const int w = planes.width, h = planes.height;
  const int pw = (w + 7) / 8 * 8, ph = (h + 7) / 8 * 8;

  auto process = [&](std::vector<double>& plane, const Table8& table) {
    Block8 block{};
    for (int by = 0; by < ph; by += 8) {
      for (int bx = 0; bx < pw; bx += 8) {
        for (int y = 0; y < 8; ++y) {
          const int sy = std::min(by + y, h - 1);
          for (int x = 0; x < 8; ++x) {
            const int sx = std::min(bx + x, w - 1);
            block[y * 8 + x] = plane[static_cast<std::size_t>(sy) * w + sx] - 128.0;
          }
        }
        const Block8 rec = quantize_block(block, table);
        for (int y = 0; y < 8 && by + y < h; ++y) {
          for (int x = 0; x < 8 && bx + x < w; ++x) {
            plane[static_cast<std::size_t>(by + y) * w + bx + x] = std::clamp(rec[y * 8 + x] + 128.0, 0.0, 255.0);
          }
        }
      }
    }
  };
  process(planes.y, tables.luma);
  process(planes.cb, tables.chroma);
  process(planes.cr, tables.chroma);
  return ycbcr_to_rgb(planes);
}

}  // namespace aeforge
