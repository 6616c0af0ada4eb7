#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "cardpipe/core.hpp"

namespace cardpipe::ocr {

struct GridSize {
    int rows = 0;
    int cols = 0;
};

// Output-head geometry of the single-pass OCR model: a 600x375 input, two
// auxiliary feature maps (38x24 and 19x12), three anchor boxes per cell, and
// 11 categories per anchor (background + digits 0-9). Each cell contributes
// 3*4 = 12 regression and 3*11 = 33 classification activations.
struct HeadGeometry {
    int input_w = 600;
    int input_h = 375;
    std::vector<GridSize> scales = {{24, 38}, {12, 19}};
    int anchors_per_cell = 3;
    int categories = 11;  // index 0 = background, 1..10 = digits 0..9
    int regression_coords = 4;

    int regression_width() const { return anchors_per_cell * regression_coords; }
    int score_width() const { return anchors_per_cell * categories; }
    int per_cell_width() const { return regression_width() + score_width(); }
};

// Total number of output activations across all scales.
long head_output_len(const HeadGeometry& geom);

using TensorRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Raw model output for one scale: one row per cell (row-major cell order),
// 12 regression and 33 score columns.
struct ScaleTensors {
    GridSize grid;
    TensorRM regression;  // (rows*cols) x 12
    TensorRM scores;      // (rows*cols) x 33

    static ScaleTensors zeros(GridSize g, const HeadGeometry& geom);
};

struct RawHeadOutput {
    std::vector<ScaleTensors> scales;

    static RawHeadOutput background(const HeadGeometry& geom);
};

struct DigitBox {
    double center_x = 0.0;
    double center_y = 0.0;
    double width = 0.0;
    double height = 0.0;
    int digit = 0;       // 0..9
    double score = 0.0;  // [0,1]
    // provenance
    int scale_index = 0;
    int cell = 0;  // row-major cell index
    int anchor = 0;

    RectF rect() const { return RectF::from_center(center_x, center_y, width, height); }
};

struct PanCandidate {
    std::string digits;        // 15 or 16 characters
    double confidence = 0.0;   // mean digit score
    bool luhn_ok = false;      // recorded, not assumed
    std::vector<DigitBox> boxes;  // sorted by center_x
};

// Prior box for (scale, row, col, anchor): centered on the cell, height
// 2*stride_y, width = height * {0.5, 0.65, 0.8}. Throws on out-of-range
// indices.
RectF anchor_for(const HeadGeometry& geom, int scale_index, int row, int col, int anchor_index);

// Index of (scale, cell, anchor) with maximal IoU against `box`, skipping
// entries marked taken. Falls back to the nearest-center anchor when every
// IoU is zero, bumping *warning_count if provided.
struct AnchorRef {
    int scale_index = 0;
    int cell = 0;
    int anchor = 0;
};
AnchorRef assign_anchor(const RectF& box, const HeadGeometry& geom,
                        const std::vector<std::vector<char>>* taken = nullptr,
                        int* warning_count = nullptr);

// Faster-RCNN style box regression against an anchor (ax, ay = center):
//   x = ax + tx*aw,  y = ay + ty*ah,  w = aw*exp(tw),  h = ah*exp(th)
// and its inverse for target encoding.
struct BoxDelta {
    float tx = 0, ty = 0, tw = 0, th = 0;
};
RectF apply_delta(const RectF& anchor, const BoxDelta& d);
BoxDelta encode_delta(const RectF& anchor, const RectF& box);

struct DecodeParams {
    double score_threshold = 0.5;
    double iou_threshold = 0.45;
    double small_font_ratio = 0.04;
};

// Emit one DigitBox per (cell, anchor) whose argmax category is a digit with
// score >= threshold. Scores are softmax-normalized first when a (cell,
// anchor) block does not already sum to 1. Throws on non-finite tensors.
std::vector<DigitBox> decode_boxes(const RawHeadOutput& out, const HeadGeometry& geom,
                                   double score_threshold);

// Greedy class-agnostic non-max suppression in descending score order
// (ties: smaller center_x first, then center_y, then digit). A box is kept
// iff its IoU with every already-kept box is < iou_threshold.
std::vector<DigitBox> nms(std::vector<DigitBox> boxes, double iou_threshold);

// Group boxes into horizontal lines (vertical center distance <= 0.6 x
// median box height), take the line with the most digits (ties: higher mean
// score), and read left to right. Only 15- or 16-digit lines form a
// candidate. Permutation-invariant in input order.
std::optional<PanCandidate> assemble_pan(const std::vector<DigitBox>& boxes);

// MMYY from a non-PAN line of exactly four digits; month must be 1..12.
// Ambiguity across several valid 4-digit lines resolves to the highest mean
// score.
struct Expiry {
    int month = 0;
    int year = 0;  // two-digit
    bool operator==(const Expiry&) const = default;
};
std::optional<Expiry> assemble_expiry(const std::vector<DigitBox>& boxes);

// Small-font fallback: when the median box height is below
// small_font_ratio * input_h and no Luhn-valid PAN was assembled, returns the
// tightest rect covering all boxes, expanded by 25%, aspect-corrected to
// input_w:input_h and clamped to the frame. The caller rescales that crop to
// the model input size and re-runs the pipeline.
std::optional<RectF> needs_zoom(const std::vector<DigitBox>& boxes, const HeadGeometry& geom,
                                double small_font_ratio, bool has_valid_pan);

// Convenience: decode -> nms -> assemble.
struct DecodeResult {
    std::vector<DigitBox> boxes;  // post-NMS
    std::optional<PanCandidate> pan;
    std::optional<Expiry> expiry;
};
DecodeResult run_decode(const RawHeadOutput& out, const HeadGeometry& geom,
                        const DecodeParams& params);

}  // namespace cardpipe::ocr
