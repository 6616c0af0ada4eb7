#include "cardpipe/ocrdecode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cardpipe/luhn.hpp"

namespace cardpipe::ocr {

long head_output_len(const HeadGeometry& geom) {
    long total = 0;
    for (const auto& g : geom.scales)
        total += static_cast<long>(g.rows) * g.cols * geom.per_cell_width();
    return total;
}

ScaleTensors ScaleTensors::zeros(GridSize g, const HeadGeometry& geom) {
    ScaleTensors t;
    t.grid = g;
    const int cells = g.rows * g.cols;
    t.regression = TensorRM::Zero(cells, geom.regression_width());
    t.scores = TensorRM::Zero(cells, geom.score_width());
    return t;
}

RawHeadOutput RawHeadOutput::background(const HeadGeometry& geom) {
    RawHeadOutput out;
    out.scales.reserve(geom.scales.size());
    for (const auto& g : geom.scales) {
        auto t = ScaleTensors::zeros(g, geom);
        for (int a = 0; a < geom.anchors_per_cell; ++a)
            t.scores.col(a * geom.categories).setOnes();  // background = 1
        out.scales.push_back(std::move(t));
    }
    return out;
}

namespace {

constexpr double kAnchorAspects[3] = {0.5, 0.65, 0.8};

void check_scale_index(const HeadGeometry& geom, int scale_index) {
    if (scale_index < 0 || scale_index >= static_cast<int>(geom.scales.size()))
        throw std::out_of_range("anchor_for: scale index out of range");
}

}  // namespace

RectF anchor_for(const HeadGeometry& geom, int scale_index, int row, int col, int anchor_index) {
    check_scale_index(geom, scale_index);
    const GridSize g = geom.scales[scale_index];
    if (row < 0 || row >= g.rows || col < 0 || col >= g.cols)
        throw std::out_of_range("anchor_for: cell index out of range");
    if (anchor_index < 0 || anchor_index >= geom.anchors_per_cell)
        throw std::out_of_range("anchor_for: anchor index out of range");

    const double stride_x = static_cast<double>(geom.input_w) / g.cols;
    const double stride_y = static_cast<double>(geom.input_h) / g.rows;
    const double cx = (col + 0.5) * stride_x;
    const double cy = (row + 0.5) * stride_y;
    const double h = 2.0 * stride_y;
    const double w = h * kAnchorAspects[anchor_index];
    return RectF::from_center(cx, cy, w, h);
}

AnchorRef assign_anchor(const RectF& box, const HeadGeometry& geom,
                        const std::vector<std::vector<char>>* taken, int* warning_count) {
    AnchorRef best{};
    double best_iou = -1.0;
    AnchorRef nearest{};
    double nearest_d2 = std::numeric_limits<double>::max();
    bool nearest_found = false;

    for (int s = 0; s < static_cast<int>(geom.scales.size()); ++s) {
        const GridSize g = geom.scales[s];
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < g.cols; ++c) {
                for (int a = 0; a < geom.anchors_per_cell; ++a) {
                    const int cell = r * g.cols + c;
                    const int slot = cell * geom.anchors_per_cell + a;
                    if (taken && (*taken)[s][slot]) continue;
                    const RectF anc = anchor_for(geom, s, r, c, a);
                    const double v = iou(box, anc);
                    if (v > best_iou) {
                        best_iou = v;
                        best = {s, cell, a};
                    }
                    const double dx = anc.cx() - box.cx();
                    const double dy = anc.cy() - box.cy();
                    const double d2 = dx * dx + dy * dy;
                    if (d2 < nearest_d2) {
                        nearest_d2 = d2;
                        nearest = {s, cell, a};
                        nearest_found = true;
                    }
                }
            }
        }
    }
    if (best_iou <= 0.0 && nearest_found) {
        if (warning_count) ++(*warning_count);
        return nearest;
    }
    return best;
}

RectF apply_delta(const RectF& anchor, const BoxDelta& d) {
    const double aw = anchor.w, ah = anchor.h;
    const double cx = anchor.cx() + static_cast<double>(d.tx) * aw;
    const double cy = anchor.cy() + static_cast<double>(d.ty) * ah;
    const double w = aw * std::exp(static_cast<double>(d.tw));
    const double h = ah * std::exp(static_cast<double>(d.th));
    return RectF::from_center(cx, cy, w, h);
}

BoxDelta encode_delta(const RectF& anchor, const RectF& box) {
    if (box.w <= 0.0 || box.h <= 0.0)
        throw std::invalid_argument("encode_delta: degenerate box");
    BoxDelta d;
    d.tx = static_cast<float>((box.cx() - anchor.cx()) / anchor.w);
    d.ty = static_cast<float>((box.cy() - anchor.cy()) / anchor.h);
    d.tw = static_cast<float>(std::log(box.w / anchor.w));
    d.th = static_cast<float>(std::log(box.h / anchor.h));
    return d;
}

std::vector<DigitBox> decode_boxes(const RawHeadOutput& out, const HeadGeometry& geom,
                                   double score_threshold) {
    if (out.scales.size() != geom.scales.size())
        throw std::invalid_argument("decode_boxes: scale count mismatch");
    std::vector<DigitBox> boxes;

    for (int s = 0; s < static_cast<int>(out.scales.size()); ++s) {
        const ScaleTensors& t = out.scales[s];
        const GridSize g = geom.scales[s];
        if (t.grid.rows != g.rows || t.grid.cols != g.cols ||
            t.regression.rows() != g.rows * g.cols ||
            t.regression.cols() != geom.regression_width() ||
            t.scores.rows() != g.rows * g.cols || t.scores.cols() != geom.score_width())
            throw std::invalid_argument("decode_boxes: tensor dims do not match geometry");
        if (!t.regression.allFinite() || !t.scores.allFinite())
            throw std::invalid_argument("decode_boxes: non-finite tensor values");

        for (int cell = 0; cell < g.rows * g.cols; ++cell) {
            const int row = cell / g.cols;
            const int col = cell % g.cols;
            for (int a = 0; a < geom.anchors_per_cell; ++a) {
                const auto block = t.scores.row(cell).segment(a * geom.categories, geom.categories);
                Eigen::VectorXf p = block.transpose();
                const float sum = p.sum();
                if (std::abs(sum - 1.0f) > 1e-6f) {
                    // softmax normalization
                    const float mx = p.maxCoeff();
                    p = (p.array() - mx).exp();
                    p /= p.sum();
                }
                Eigen::Index argmax;
                const float score = p.maxCoeff(&argmax);
                if (argmax == 0 || score < static_cast<float>(score_threshold)) continue;

                BoxDelta d;
                d.tx = t.regression(cell, a * 4 + 0);
                d.ty = t.regression(cell, a * 4 + 1);
                d.tw = t.regression(cell, a * 4 + 2);
                d.th = t.regression(cell, a * 4 + 3);
                const RectF anc = anchor_for(geom, s, row, col, a);
                const RectF r = apply_delta(anc, d);

                DigitBox box;
                box.center_x = r.cx();
                box.center_y = r.cy();
                box.width = r.w;
                box.height = r.h;
                box.digit = static_cast<int>(argmax) - 1;
                box.score = static_cast<double>(score);
                box.scale_index = s;
                box.cell = cell;
                box.anchor = a;
                boxes.push_back(box);
            }
        }
    }
    return boxes;
}

namespace {

bool score_order(const DigitBox& a, const DigitBox& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.center_x != b.center_x) return a.center_x < b.center_x;
    if (a.center_y != b.center_y) return a.center_y < b.center_y;
    return a.digit < b.digit;
}

}  // namespace

std::vector<DigitBox> nms(std::vector<DigitBox> boxes, double iou_threshold) {
    if (iou_threshold <= 0.0 || iou_threshold >= 1.0)
        throw std::invalid_argument("nms: iou_threshold must be in (0,1)");
    std::sort(boxes.begin(), boxes.end(), score_order);
    std::vector<DigitBox> kept;
    for (const DigitBox& b : boxes) {
        bool suppressed = false;
        for (const DigitBox& k : kept) {
            if (iou(b.rect(), k.rect()) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(b);
    }
    return kept;
}

namespace {

struct Line {
    std::vector<DigitBox> boxes;
    double center_sum = 0.0;

    double center() const { return center_sum / static_cast<double>(boxes.size()); }
    double mean_score() const {
        double s = 0.0;
        for (const auto& b : boxes) s += b.score;
        return s / static_cast<double>(boxes.size());
    }
};

double median_height(const std::vector<DigitBox>& boxes) {
    std::vector<double> hs;
    hs.reserve(boxes.size());
    for (const auto& b : boxes) hs.push_back(b.height);
    std::sort(hs.begin(), hs.end());
    const size_t n = hs.size();
    return n % 2 == 1 ? hs[n / 2] : 0.5 * (hs[n / 2 - 1] + hs[n / 2]);
}

// Sort by (center_y, center_x, digit) and sweep, so grouping does not depend
// on the caller's box order.
std::vector<Line> group_lines(std::vector<DigitBox> boxes) {
    std::sort(boxes.begin(), boxes.end(), [](const DigitBox& a, const DigitBox& b) {
        if (a.center_y != b.center_y) return a.center_y < b.center_y;
        if (a.center_x != b.center_x) return a.center_x < b.center_x;
        return a.digit < b.digit;
    });
    const double tol = 0.6 * median_height(boxes);
    std::vector<Line> lines;
    for (const DigitBox& b : boxes) {
        Line* target = nullptr;
        for (auto& line : lines)
            if (std::abs(b.center_y - line.center()) <= tol) {
                target = &line;
                break;
            }
        if (!target) {
            lines.emplace_back();
            target = &lines.back();
        }
        target->boxes.push_back(b);
        target->center_sum += b.center_y;
    }
    for (auto& line : lines)
        std::sort(line.boxes.begin(), line.boxes.end(), [](const DigitBox& a, const DigitBox& b) {
            return a.center_x < b.center_x;
        });
    return lines;
}

}  // namespace

std::optional<PanCandidate> assemble_pan(const std::vector<DigitBox>& boxes) {
    if (boxes.empty()) return std::nullopt;
    auto lines = group_lines(boxes);

    const Line* best = nullptr;
    for (const auto& line : lines) {
        if (!best || line.boxes.size() > best->boxes.size() ||
            (line.boxes.size() == best->boxes.size() && line.mean_score() > best->mean_score()))
            best = &line;
    }
    const size_t n = best->boxes.size();
    if (n != 15 && n != 16) return std::nullopt;

    PanCandidate cand;
    cand.boxes = best->boxes;
    double score_sum = 0.0;
    for (const auto& b : cand.boxes) {
        cand.digits.push_back(static_cast<char>('0' + b.digit));
        score_sum += b.score;
    }
    cand.confidence = score_sum / static_cast<double>(n);
    cand.luhn_ok = luhn_valid_nothrow(cand.digits);
    return cand;
}

std::optional<Expiry> assemble_expiry(const std::vector<DigitBox>& boxes) {
    if (boxes.empty()) return std::nullopt;
    auto lines = group_lines(boxes);

    // PAN line is excluded: expiry comes from some other 4-digit line.
    const Line* pan_line = nullptr;
    for (const auto& line : lines) {
        const size_t n = line.boxes.size();
        if ((n == 15 || n == 16) && (!pan_line || line.mean_score() > pan_line->mean_score()))
            pan_line = &line;
    }

    const Line* best = nullptr;
    Expiry best_exp{};
    for (const auto& line : lines) {
        if (&line == pan_line || line.boxes.size() != 4) continue;
        const int month = (line.boxes[0].digit) * 10 + line.boxes[1].digit;
        const int year = (line.boxes[2].digit) * 10 + line.boxes[3].digit;
        if (month < 1 || month > 12) continue;
        if (!best || line.mean_score() > best->mean_score()) {
            best = &line;
            best_exp = Expiry{month, year};
        }
    }
    if (!best) return std::nullopt;
    return best_exp;
}

std::optional<RectF> needs_zoom(const std::vector<DigitBox>& boxes, const HeadGeometry& geom,
                                double small_font_ratio, bool has_valid_pan) {
    if (boxes.empty() || has_valid_pan) return std::nullopt;
    const double med = median_height(boxes);
    if (med / geom.input_h >= small_font_ratio) return std::nullopt;

    double x1 = std::numeric_limits<double>::max(), y1 = x1;
    double x2 = std::numeric_limits<double>::lowest(), y2 = x2;
    for (const auto& b : boxes) {
        const RectF r = b.rect();
        x1 = std::min(x1, r.x);
        y1 = std::min(y1, r.y);
        x2 = std::max(x2, r.x2());
        y2 = std::max(y2, r.y2());
    }
    RectF crop{x1, y1, x2 - x1, y2 - y1};

    // expand 25% about the center
    crop = RectF::from_center(crop.cx(), crop.cy(), crop.w * 1.25, crop.h * 1.25);

    // grow the short dimension to the input aspect ratio
    const double aspect = static_cast<double>(geom.input_w) / geom.input_h;
    if (crop.w < crop.h * aspect)
        crop = RectF::from_center(crop.cx(), crop.cy(), crop.h * aspect, crop.h);
    else
        crop = RectF::from_center(crop.cx(), crop.cy(), crop.w, crop.w / aspect);

    // clamp to the frame, preserving the aspect ratio
    if (crop.w > geom.input_w) crop = {0.0, 0.0, double(geom.input_w), double(geom.input_h)};
    crop.x = std::clamp(crop.x, 0.0, geom.input_w - crop.w);
    crop.y = std::clamp(crop.y, 0.0, geom.input_h - crop.h);
    return crop;
}

DecodeResult run_decode(const RawHeadOutput& out, const HeadGeometry& geom,
                        const DecodeParams& params) {
    DecodeResult res;
    res.boxes = nms(decode_boxes(out, geom, params.score_threshold), params.iou_threshold);
    res.pan = assemble_pan(res.boxes);
    res.expiry = assemble_expiry(res.boxes);
    return res;
}

}  // namespace cardpipe::ocr
