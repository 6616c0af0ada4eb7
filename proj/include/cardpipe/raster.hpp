#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cardpipe/core.hpp"

namespace cardpipe::synth {

inline constexpr int kFrameWidth = 600;
inline constexpr int kFrameHeight = 375;

// 8-bit interleaved RGB frame at the canonical model input size.
struct RasterFrame {
    int width = kFrameWidth;
    int height = kFrameHeight;
    std::vector<uint8_t> rgb;  // size = width*height*3, row-major

    RasterFrame() : rgb(static_cast<size_t>(kFrameWidth) * kFrameHeight * 3, 0) {}
    RasterFrame(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0) {}

    uint8_t* px(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const uint8_t* px(int x, int y) const {
        return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
    }

    void set_px(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        uint8_t* p = px(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }

    bool operator==(const RasterFrame& o) const {
        return width == o.width && height == o.height && rgb == o.rgb;
    }
};

// Rec.601 luminance as a float array (rows = height).
Eigen::ArrayXXf to_gray(const RasterFrame& frame);

// Separable Gaussian blur, sigma in pixels; sigma <= 0 is a no-op.
void gaussian_blur(RasterFrame& frame, double sigma);

// Per-channel additive uniform noise in [-amp, amp], seeded.
void add_noise(RasterFrame& frame, double amp, uint64_t seed);

// Bilinear crop-and-resize of `src` region `crop` to a dst_w x dst_h frame.
RasterFrame crop_resize(const RasterFrame& src, const RectF& crop, int dst_w, int dst_h);

// Box-downsample a grayscale image by fractional steps (sx, sy). Output cell
// (r, c) averages src over [c*sx, (c+1)*sx) x [r*sy, (r+1)*sy).
Eigen::ArrayXXf box_downsample(const Eigen::ArrayXXf& gray, double sx, double sy);

}  // namespace cardpipe::synth
