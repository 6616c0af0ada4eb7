// Independent reference implementations used to check the real ones.
// These stay deliberately separate from the library code paths.
#pragma once

#include <algorithm>
#include <string_view>
#include <vector>

#include "cardpipe/core.hpp"
#include "cardpipe/ocrdecode.hpp"

namespace test_oracles {

// Table-based mod-10 oracle: doubled-digit lookup instead of arithmetic.
inline bool luhn_table_oracle(std::string_view digits) {
    static constexpr int kDoubled[10] = {0, 2, 4, 6, 8, 1, 3, 5, 7, 9};
    int sum = 0;
    bool doubled = false;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        const int d = *it - '0';
        sum += doubled ? kDoubled[d] : d;
        doubled = !doubled;
    }
    return sum % 10 == 0;
}

// Quadratic suppression-matrix NMS: rank all boxes, then walk the full IoU
// matrix marking losers. Same ordering contract as the library.
inline std::vector<cardpipe::ocr::DigitBox> nms_reference(
    std::vector<cardpipe::ocr::DigitBox> boxes, double threshold) {
    std::sort(boxes.begin(), boxes.end(),
              [](const cardpipe::ocr::DigitBox& a, const cardpipe::ocr::DigitBox& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.center_x != b.center_x) return a.center_x < b.center_x;
                  if (a.center_y != b.center_y) return a.center_y < b.center_y;
                  return a.digit < b.digit;
              });
    const size_t n = boxes.size();
    std::vector<char> suppressed(n, 0);
    for (size_t i = 0; i < n; ++i) {
        if (suppressed[i]) continue;
        for (size_t j = i + 1; j < n; ++j) {
            if (suppressed[j]) continue;
            if (cardpipe::iou(boxes[i].rect(), boxes[j].rect()) >= threshold)
                suppressed[j] = 1;
        }
    }
    std::vector<cardpipe::ocr::DigitBox> kept;
    for (size_t i = 0; i < n; ++i)
        if (!suppressed[i]) kept.push_back(boxes[i]);
    return kept;
}

// Random box sets for NMS equivalence checks.
inline std::vector<cardpipe::ocr::DigitBox> random_boxes(uint64_t seed, int max_n = 64) {
    cardpipe::Rng rng(seed);
    const int n = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(max_n)));
    std::vector<cardpipe::ocr::DigitBox> boxes;
    for (int i = 0; i < n; ++i) {
        cardpipe::ocr::DigitBox b;
        b.center_x = rng.next_in(5.0, 595.0);
        b.center_y = rng.next_in(5.0, 370.0);
        b.width = rng.next_in(4.0, 60.0);
        b.height = rng.next_in(4.0, 60.0);
        b.digit = static_cast<int>(rng.next_below(10));
        b.score = rng.next_in(0.05, 1.0);
        boxes.push_back(b);
    }
    return boxes;
}

inline bool same_box(const cardpipe::ocr::DigitBox& a, const cardpipe::ocr::DigitBox& b) {
    return a.center_x == b.center_x && a.center_y == b.center_y && a.width == b.width &&
           a.height == b.height && a.digit == b.digit && a.score == b.score;
}

// set equality (order-insensitive)
inline bool same_box_set(std::vector<cardpipe::ocr::DigitBox> a,
                         std::vector<cardpipe::ocr::DigitBox> b) {
    if (a.size() != b.size()) return false;
    auto key = [](const cardpipe::ocr::DigitBox& x) {
        return std::tuple(x.score, x.center_x, x.center_y, x.width, x.height, x.digit);
    };
    std::sort(a.begin(), a.end(),
              [&](const auto& x, const auto& y) { return key(x) < key(y); });
    std::sort(b.begin(), b.end(),
              [&](const auto& x, const auto& y) { return key(x) < key(y); });
    for (size_t i = 0; i < a.size(); ++i)
        if (!same_box(a[i], b[i])) return false;
    return true;
}

}  // namespace test_oracles
