#include "cardpipe/glyphs.hpp"

#include <cmath>

namespace cardpipe::synth {

const std::array<std::array<uint8_t, 7>, 10>& digit_glyphs() {
    static const std::array<std::array<uint8_t, 7>, 10> glyphs = {{
        {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
        {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
        {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
        {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
        {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
        {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
        {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
        {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
        {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
        {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
    }};
    return glyphs;
}

Eigen::Matrix<float, kGlyphRows, kGlyphCols> glyph_matrix(int digit) {
    Eigen::Matrix<float, kGlyphRows, kGlyphCols> m;
    for (int r = 0; r < kGlyphRows; ++r)
        for (int c = 0; c < kGlyphCols; ++c) m(r, c) = glyph_pixel(digit, r, c) ? 1.0f : 0.0f;
    return m;
}

double glyph_ink_fraction(int digit) {
    int ink = 0;
    for (int r = 0; r < kGlyphRows; ++r)
        for (int c = 0; c < kGlyphCols; ++c) ink += glyph_pixel(digit, r, c) ? 1 : 0;
    return static_cast<double>(ink) / (kGlyphRows * kGlyphCols);
}

namespace {

// Box-resample an arbitrary patch to the 7x5 glyph grid.
Eigen::Matrix<float, kGlyphRows, kGlyphCols> resample_patch(const Eigen::ArrayXXf& patch) {
    Eigen::Matrix<float, kGlyphRows, kGlyphCols> out;
    const int H = static_cast<int>(patch.rows());
    const int W = static_cast<int>(patch.cols());
    for (int r = 0; r < kGlyphRows; ++r) {
        const int r0 = r * H / kGlyphRows;
        const int r1 = std::max(r0 + 1, (r + 1) * H / kGlyphRows);
        for (int c = 0; c < kGlyphCols; ++c) {
            const int c0 = c * W / kGlyphCols;
            const int c1 = std::max(c0 + 1, (c + 1) * W / kGlyphCols);
            out(r, c) = patch.block(r0, c0, r1 - r0, c1 - c0).mean();
        }
    }
    return out;
}

double ncc(const Eigen::Matrix<float, kGlyphRows, kGlyphCols>& a,
           const Eigen::Matrix<float, kGlyphRows, kGlyphCols>& b) {
    const double ma = a.template cast<double>().mean();
    const double mb = b.template cast<double>().mean();
    const auto da = a.template cast<double>().array() - ma;
    const auto db = b.template cast<double>().array() - mb;
    const double cov = (da * db).sum();
    const double va = (da * da).sum();
    const double vb = (db * db).sum();
    if (va <= 1e-12 || vb <= 1e-12) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace

int identify_glyph(const Eigen::ArrayXXf& patch, double* score) {
    const auto resampled = resample_patch(patch);
    int best = 0;
    double best_score = -2.0;
    for (int d = 0; d < 10; ++d) {
        const double s = ncc(resampled, glyph_matrix(d));
        if (s > best_score) {
            best_score = s;
            best = d;
        }
    }
    if (score) *score = best_score;
    return best;
}

}  // namespace cardpipe::synth
