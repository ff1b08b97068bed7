#pragma once

#include <array>
#include <cstdint>

#include "aeforge/image.hpp"

namespace aeforge {

using Block8 = std::array<double, 64>;
using Table8 = std::array<int, 64>;

// Annex K base tables (row-major, natural order, not zigzag).
extern const Table8 kLumaBaseTable;
extern const Table8 kChromaBaseTable;

struct QuantTables {
  Table8 luma{};
  Table8 chroma{};
  int quality = 50;
};

// scale = q < 50 ? 5000/q : 200 - 2q; entry = clamp((base*scale + 50)/100, 1, 255).
QuantTables quality_tables(int quality);

// Orthonormal 8x8 DCT-II and its inverse (separable matrix form).
Block8 dct8x8(const Block8& block);
Block8 idct8x8(const Block8& coeffs);

// Quantizes one level-shifted block with the given table and reconstructs it.
Block8 quantize_block(const Block8& shifted, const Table8& table);

// DCT quantization round trip per Y/Cb/Cr plane (4:4:4, no entropy coding).
// Planes are edge-padded to a multiple of 8 and cropped back.
ImageRGB8 jpeg_degrade(const ImageRGB8& image, int quality);

}  // namespace aeforge
