#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>

namespace cardpipe {

// Axis-aligned rect, top-left origin, pixel units.
struct RectF {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    double x2() const { return x + w; }
    double y2() const { return y + h; }
    double area() const { return w * h; }

    static RectF from_center(double cx, double cy, double w, double h) {
        return {cx - 0.5 * w, cy - 0.5 * h, w, h};
    }
};

inline double intersection_area(const RectF& a, const RectF& b) {
    const double iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
    const double ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    return iw * ih;
}

inline double iou(const RectF& a, const RectF& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Clip r to [0,w)x[0,h); may produce a zero-area rect when fully outside.
inline RectF clip_rect(const RectF& r, double w, double h) {
    const double x1 = std::clamp(r.x, 0.0, w);
    const double y1 = std::clamp(r.y, 0.0, h);
    const double x2 = std::clamp(r.x2(), 0.0, w);
    const double y2 = std::clamp(r.y2(), 0.0, h);
    return {x1, y1, std::max(0.0, x2 - x1), std::max(0.0, y2 - y1)};
}

// splitmix64. Used for every random draw in the project so that outputs are
// bit-reproducible across platforms and standard-library versions (std::
// distributions are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound). bound = 0 returns 0.
    uint64_t next_below(uint64_t bound) {
        return bound == 0 ? 0 : next_u64() % bound;
    }

    // Uniform in [0, 1).
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Uniform in [-amp, amp].
    double next_symmetric(double amp) { return next_in(-amp, amp); }

    bool next_bernoulli(double p) { return next_unit() < p; }

private:
    uint64_t state_;
};

// Stable seed derivation for per-call streams: hash-combines up to three
// labels into a new seed. Parallel schedules replay serial results because a
// draw's seed depends only on what it is for, not on execution order.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    Rng mix(base ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL) ^
            (c * 0x165667b19e3779f9ULL));
    return mix.next_u64();
}

}  // namespace cardpipe
