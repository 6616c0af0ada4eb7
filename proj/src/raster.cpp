#include "cardpipe/raster.hpp"

#include <algorithm>
#include <cmath>

namespace cardpipe::synth {

Eigen::ArrayXXf to_gray(const RasterFrame& frame) {
    Eigen::ArrayXXf gray(frame.height, frame.width);
    for (int y = 0; y < frame.height; ++y) {
        const uint8_t* row = frame.rgb.data() + static_cast<size_t>(y) * frame.width * 3;
        for (int x = 0; x < frame.width; ++x) {
            const uint8_t* p = row + x * 3;
            gray(y, x) = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
        }
    }
    return gray;
}

void gaussian_blur(RasterFrame& frame, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : kernel) v /= sum;

    const int w = frame.width, h = frame.height;
    std::vector<float> tmp(static_cast<size_t>(w) * h * 3);

    // horizontal
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc[3] = {0, 0, 0};
            for (int k = -radius; k <= radius; ++k) {
                const int xx = std::clamp(x + k, 0, w - 1);
                const uint8_t* p = frame.px(xx, y);
                const double kv = kernel[static_cast<size_t>(k + radius)];
                acc[0] += kv * p[0];
                acc[1] += kv * p[1];
                acc[2] += kv * p[2];
            }
            float* t = tmp.data() + (static_cast<size_t>(y) * w + x) * 3;
            t[0] = static_cast<float>(acc[0]);
            t[1] = static_cast<float>(acc[1]);
            t[2] = static_cast<float>(acc[2]);
        }
    }
    // vertical
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc[3] = {0, 0, 0};
            for (int k = -radius; k <= radius; ++k) {
                const int yy = std::clamp(y + k, 0, h - 1);
                const float* t = tmp.data() + (static_cast<size_t>(yy) * w + x) * 3;
                const double kv = kernel[static_cast<size_t>(k + radius)];
                acc[0] += kv * t[0];
                acc[1] += kv * t[1];
                acc[2] += kv * t[2];
            }
            frame.set_px(x, y, static_cast<uint8_t>(std::clamp(acc[0], 0.0, 255.0) + 0.5),
                         static_cast<uint8_t>(std::clamp(acc[1], 0.0, 255.0) + 0.5),
                         static_cast<uint8_t>(std::clamp(acc[2], 0.0, 255.0) + 0.5));
        }
    }
}

void add_noise(RasterFrame& frame, double amp, uint64_t seed) {
    if (amp <= 0.0) return;
    Rng rng(seed);
    for (uint8_t& v : frame.rgb) {
        const double n = rng.next_symmetric(amp);
        v = static_cast<uint8_t>(std::clamp(static_cast<double>(v) + n, 0.0, 255.0));
    }
}

RasterFrame crop_resize(const RasterFrame& src, const RectF& crop, int dst_w, int dst_h) {
    RasterFrame dst(dst_w, dst_h);
    const double sx = crop.w / dst_w;
    const double sy = crop.h / dst_h;
    for (int y = 0; y < dst_h; ++y) {
        const double fy = crop.y + (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < dst_w; ++x) {
            const double fx = crop.x + (x + 0.5) * sx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            const uint8_t* p00 = src.px(x0, y0);
            const uint8_t* p01 = src.px(x1, y0);
            const uint8_t* p10 = src.px(x0, y1);
            const uint8_t* p11 = src.px(x1, y1);
            uint8_t out[3];
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] * (1 - wx) + p01[c] * wx;
                const double bot = p10[c] * (1 - wx) + p11[c] * wx;
                out[c] = static_cast<uint8_t>(std::clamp(top * (1 - wy) + bot * wy, 0.0, 255.0) +
                                              0.5);
            }
            dst.set_px(x, y, out[0], out[1], out[2]);
        }
    }
    return dst;
}

Eigen::ArrayXXf box_downsample(const Eigen::ArrayXXf& gray, double sx, double sy) {
    const int src_h = static_cast<int>(gray.rows());
    const int src_w = static_cast<int>(gray.cols());
    const int dst_w = std::max(1, static_cast<int>(src_w / sx));
    const int dst_h = std::max(1, static_cast<int>(src_h / sy));
    Eigen::ArrayXXf out(dst_h, dst_w);
    for (int r = 0; r < dst_h; ++r) {
        const int r0 = std::min(src_h - 1, static_cast<int>(r * sy));
        const int r1 = std::clamp(static_cast<int>((r + 1) * sy), r0 + 1, src_h);
        for (int c = 0; c < dst_w; ++c) {
            const int c0 = std::min(src_w - 1, static_cast<int>(c * sx));
            const int c1 = std::clamp(static_cast<int>((c + 1) * sx), c0 + 1, src_w);
            out(r, c) = gray.block(r0, c0, r1 - r0, c1 - c0).mean();
        }
    }
    return out;
}

}  // namespace cardpipe::synth
