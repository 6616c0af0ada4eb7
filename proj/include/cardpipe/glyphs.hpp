#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>

namespace cardpipe::synth {

// Built-in 5x7 bitmap digit font. The renderer scales these cells by nearest
// neighbor, so a truth box is exactly the scaled cell, and the same bitmaps
// drive template recognition.
inline constexpr int kGlyphRows = 7;
inline constexpr int kGlyphCols = 5;

// Row-major bits, one uint8 row per glyph row, bit 4 = leftmost column.
const std::array<std::array<uint8_t, 7>, 10>& digit_glyphs();

inline bool glyph_pixel(int digit, int row, int col) {
    return (digit_glyphs()[static_cast<size_t>(digit)][static_cast<size_t>(row)] >>
            (kGlyphCols - 1 - col)) & 1;
}

// Glyph as a float 7x5 array (ink = 1).
Eigen::Matrix<float, kGlyphRows, kGlyphCols> glyph_matrix(int digit);

// Fraction of ink cells, used by normalized cross-correlation.
double glyph_ink_fraction(int digit);

// Identify the digit whose glyph best correlates with a grayscale patch
// (any size; the patch is box-resampled to 5x7 first). Returns the best
// digit and writes the correlation to *score if provided.
int identify_glyph(const Eigen::ArrayXXf& patch, double* score = nullptr);

}  // namespace cardpipe::synth
