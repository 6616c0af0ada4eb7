#include "cardpipe/infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cardpipe/glyphs.hpp"
#include "cardpipe/luhn.hpp"

using json = nlohmann::json;

namespace cardpipe::infer {

const char* to_string(DetectCategory v) {
    switch (v) {
        case DetectCategory::number_side: return "number_side";
        case DetectCategory::non_number_side: return "non_number_side";
        case DetectCategory::background: return "background";
    }
    return "background";
}

void BackendConfig::validate() const {
    for (double r : {digit_error_rate, detect_error_rate, media_error_rate, tamper_error_rate})
        if (r < 0.0 || r > 1.0)
            throw std::invalid_argument("BackendConfig: error rate out of [0,1]");
    if (min_legible_height_px < 0.0)
        throw std::invalid_argument("BackendConfig: negative min_legible_height_px");
}

namespace {

constexpr double kOracleScore = 0.95;

void write_score_block(ocr::ScaleTensors& t, int cell, int anchor, int categories,
                       int category, float score) {
    auto block = t.scores.row(cell).segment(anchor * categories, categories);
    block.setZero();
    block(0) = 1.0f - score;
    block(category) = score;
}

}  // namespace

ocr::RawHeadOutput oracle_ocr(const synth::FrameTruth& truth, const ocr::HeadGeometry& geom,
                              const BackendConfig& cfg, uint64_t call_seed,
                              int* anchor_fallbacks) {
    cfg.validate();
    auto out = ocr::RawHeadOutput::background(geom);
    if (truth.side != synth::Side::number || truth.digit_boxes.empty()) return out;

    std::vector<std::vector<char>> taken;
    for (const auto& g : geom.scales)
        taken.emplace_back(static_cast<size_t>(g.rows) * g.cols * geom.anchors_per_cell, 0);

    for (size_t i = 0; i < truth.digit_boxes.size(); ++i) {
        const auto& tb = truth.digit_boxes[i];
        if (tb.rect.w <= 0.0 || tb.rect.h <= 0.0) continue;
        const ocr::AnchorRef ref = assign_anchor(tb.rect, geom, &taken, anchor_fallbacks);
        taken[static_cast<size_t>(ref.scale_index)]
             [static_cast<size_t>(ref.cell) * geom.anchors_per_cell + ref.anchor] = 1;

        const auto g = geom.scales[ref.scale_index];
        const RectF anc = ocr::anchor_for(geom, ref.scale_index, ref.cell / g.cols,
                                          ref.cell % g.cols, ref.anchor);
        const ocr::BoxDelta d = ocr::encode_delta(anc, tb.rect);
        auto& tens = out.scales[static_cast<size_t>(ref.scale_index)];
        tens.regression(ref.cell, ref.anchor * 4 + 0) = d.tx;
        tens.regression(ref.cell, ref.anchor * 4 + 1) = d.ty;
        tens.regression(ref.cell, ref.anchor * 4 + 2) = d.tw;
        tens.regression(ref.cell, ref.anchor * 4 + 3) = d.th;

        int digit = tb.digit;
        Rng rng(derive_seed(cfg.seed, call_seed, i));
        const bool illegible =
            cfg.min_legible_height_px > 0.0 && tb.rect.h < cfg.min_legible_height_px;
        if (illegible || rng.next_bernoulli(cfg.digit_error_rate))
            digit = static_cast<int>((digit + 1 + rng.next_below(9)) % 10);
        write_score_block(tens, ref.cell, ref.anchor, geom.categories, digit + 1,
                          static_cast<float>(kOracleScore));
    }
    return out;
}

CardDetectLabel oracle_card_detect(const synth::FrameTruth& truth, const BackendConfig& cfg,
                                   uint64_t call_seed) {
    cfg.validate();
    DetectCategory cat = DetectCategory::background;
    if (truth.centered)
        cat = truth.side == synth::Side::number ? DetectCategory::number_side
                                                : DetectCategory::non_number_side;
    Rng rng(derive_seed(cfg.seed, call_seed, 0xCD));
    if (rng.next_bernoulli(cfg.detect_error_rate)) {
        const int shift = 1 + static_cast<int>(rng.next_below(2));
        cat = static_cast<DetectCategory>((static_cast<int>(cat) + shift) % 3);
    }
    return {cat, 0.9};
}

FakeMediaLabel oracle_fake_media(const synth::FrameTruth& truth, const BackendConfig& cfg,
                                 uint64_t call_seed) {
    cfg.validate();
    synth::Media cat = truth.media;
    Rng rng(derive_seed(cfg.seed, call_seed, 0xFE));
    if (rng.next_bernoulli(cfg.media_error_rate)) {
        const int shift = 1 + static_cast<int>(rng.next_below(3));
        cat = static_cast<synth::Media>((static_cast<int>(cat) + shift) % 4);
    }
    return {cat, 0.9};
}

TamperObservation oracle_tamper(const synth::FrameTruth& truth, const BackendConfig& cfg,
                                uint64_t call_seed) {
    cfg.validate();
    TamperObservation obs;
    for (const auto& mark : truth.logo_marks) obs.objects.push_back({mark.logo_id, 0.9, mark.rect});
    Rng rng(derive_seed(cfg.seed, call_seed, 0x7A));
    if (!obs.objects.empty() && rng.next_bernoulli(cfg.tamper_error_rate)) {
        const size_t victim = rng.next_below(obs.objects.size());
        if (rng.next_bernoulli(0.5)) {
            obs.objects.erase(obs.objects.begin() + static_cast<ptrdiff_t>(victim));
        } else {
            const int cur = static_cast<int>(obs.objects[victim].logo_id);
            const int other = static_cast<int>((cur + 1 + rng.next_below(6)) % 7);
            obs.objects[victim].logo_id = static_cast<synth::LogoId>(other);
        }
    }
    return obs;
}

synth::FrameTruth zoom_truth(const synth::FrameTruth& truth, const RectF& crop,
                             const ocr::HeadGeometry& geom) {
    synth::FrameTruth out = truth;
    out.digit_boxes.clear();
    out.logo_marks.clear();
    if (crop.w <= 0.0 || crop.h <= 0.0) return out;
    const double sx = geom.input_w / crop.w;
    const double sy = geom.input_h / crop.h;
    auto map_rect = [&](const RectF& r) {
        return RectF{(r.x - crop.x) * sx, (r.y - crop.y) * sy, r.w * sx, r.h * sy};
    };
    for (const auto& b : truth.digit_boxes) {
        const RectF m = clip_rect(map_rect(b.rect), geom.input_w, geom.input_h);
        if (m.area() > 0.0) out.digit_boxes.push_back({m, b.digit});
    }
    for (const auto& m : truth.logo_marks) {
        const RectF r = clip_rect(map_rect(m.rect), geom.input_w, geom.input_h);
        if (r.area() > 0.0) out.logo_marks.push_back({m.logo_id, r});
    }
    return out;
}

// ---- template recognizer ----

namespace {

struct TemplateHit {
    double x = 0, y = 0;  // box top-left, frame coords
    int w = 0, h = 0;
    int digit = 0;
    double score = 0;
};

constexpr double kCoarseThreshold = 0.45;
constexpr double kPeakThreshold = 0.7;
// Correlation is contrast-invariant, so near-flat windows (logo edges,
// background grain) can score high on pure shape. Readable ink needs real
// contrast; windows below this luminance standard deviation are skipped.
constexpr double kMinWindowStd = 10.0;

// NCC of a full-resolution patch against the nearest-neighbor scaled glyph.
double patch_ncc(const Eigen::ArrayXXf& gray, double x0, double y0, int W, int H, int digit) {
    const int xi = static_cast<int>(std::lround(x0));
    const int yi = static_cast<int>(std::lround(y0));
    if (xi < 0 || yi < 0 || xi + W > gray.cols() || yi + H > gray.rows()) return -1.0;

    double sum_t = 0, sum_tt = 0, sum_i = 0, sum_ii = 0, sum_ti = 0;
    const double n = static_cast<double>(W) * H;
    for (int yy = 0; yy < H; ++yy) {
        const int gr = yy * synth::kGlyphRows / H;
        for (int xx = 0; xx < W; ++xx) {
            const int gc = xx * synth::kGlyphCols / W;
            const double t = synth::glyph_pixel(digit, gr, gc) ? 1.0 : 0.0;
            const double v = gray(yi + yy, xi + xx);
            sum_t += t;
            sum_tt += t * t;
            sum_i += v;
            sum_ii += v * v;
            sum_ti += t * v;
        }
    }
    const double cov = sum_ti - sum_t * sum_i / n;
    const double var_t = sum_tt - sum_t * sum_t / n;
    const double var_i = sum_ii - sum_i * sum_i / n;
    if (var_t <= 1e-9 || var_i < kMinWindowStd * kMinWindowStd * n) return 0.0;
    return cov / std::sqrt(var_t * var_i);
}

}  // namespace

ocr::RawHeadOutput template_recognize(const synth::RasterFrame& frame,
                                      const ocr::HeadGeometry& geom) {
    const Eigen::ArrayXXf gray = synth::to_gray(frame);

    // size ladder covering the fonts the renderer can produce
    std::vector<int> ladder;
    for (int h = 8; h <= 44; h = std::max(h + 1, static_cast<int>(std::lround(h * 1.13))))
        ladder.push_back(h);

    std::vector<TemplateHit> hits;
    for (const int H : ladder) {
        const int W = std::max(3, static_cast<int>(std::lround(H * 5.0 / 7.0)));
        const double sy = H / static_cast<double>(synth::kGlyphRows);
        const double sx = W / static_cast<double>(synth::kGlyphCols);
        const Eigen::ArrayXXf small = synth::box_downsample(gray, sx, sy);
        const int rows = static_cast<int>(small.rows()) - synth::kGlyphRows + 1;
        const int cols = static_cast<int>(small.cols()) - synth::kGlyphCols + 1;
        if (rows <= 0 || cols <= 0) continue;

        // window sums for mean/variance normalization
        Eigen::ArrayXXf win_sum = Eigen::ArrayXXf::Zero(rows, cols);
        Eigen::ArrayXXf win_sq = Eigen::ArrayXXf::Zero(rows, cols);
        for (int gr = 0; gr < synth::kGlyphRows; ++gr)
            for (int gc = 0; gc < synth::kGlyphCols; ++gc) {
                const auto blk = small.block(gr, gc, rows, cols);
                win_sum += blk;
                win_sq += blk * blk;
            }
        const double n = synth::kGlyphRows * synth::kGlyphCols;
        Eigen::ArrayXXf win_var = win_sq - win_sum * win_sum / n;
        // contrast floor (box-averaging halves it at worst misalignment)
        const float min_var = static_cast<float>(0.25 * kMinWindowStd * kMinWindowStd * n);

        Eigen::ArrayXXf best_score = Eigen::ArrayXXf::Constant(rows, cols, -1.0f);
        Eigen::ArrayXXi best_digit = Eigen::ArrayXXi::Zero(rows, cols);
        for (int d = 0; d < 10; ++d) {
            Eigen::ArrayXXf ink_sum = Eigen::ArrayXXf::Zero(rows, cols);
            for (int gr = 0; gr < synth::kGlyphRows; ++gr)
                for (int gc = 0; gc < synth::kGlyphCols; ++gc)
                    if (synth::glyph_pixel(d, gr, gc))
                        ink_sum += small.block(gr, gc, rows, cols);
            const double mu_t = synth::glyph_ink_fraction(d);
            const double var_t = n * mu_t * (1.0 - mu_t);
            Eigen::ArrayXXf cov = ink_sum - static_cast<float>(mu_t) * win_sum;
            Eigen::ArrayXXf denom =
                (static_cast<float>(var_t) * win_var).max(1e-6f).sqrt();
            Eigen::ArrayXXf score = cov / denom;
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    if (win_var(r, c) >= min_var && score(r, c) > best_score(r, c)) {
                        best_score(r, c) = score(r, c);
                        best_digit(r, c) = d;
                    }
        }

        // local maxima above the coarse threshold
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const float s = best_score(r, c);
                if (s < kCoarseThreshold) continue;
                bool is_max = true;
                for (int dr = -1; dr <= 1 && is_max; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                        if (best_score(rr, cc) > s) {
                            is_max = false;
                            break;
                        }
                    }
                if (!is_max) continue;

                // refine position at full resolution, then re-identify
                const double bx = c * sx, by = r * sy;
                const int radius = static_cast<int>(std::ceil(std::max(sx, sy) * 0.5)) + 1;
                double best_p = -2.0;
                int best_dx = 0, best_dy = 0;
                for (int dy = -radius; dy <= radius; ++dy)
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const double p =
                            patch_ncc(gray, bx + dx, by + dy, W, H, best_digit(r, c));
                        if (p > best_p) {
                            best_p = p;
                            best_dx = dx;
                            best_dy = dy;
                        }
                    }
                // rendered glyph heights fall between ladder rungs; nudge the
                // cell size around the coarse hit
                int best_w = W, best_h = H;
                for (int dh = -2; dh <= 2; ++dh) {
                    const int hh = H + dh;
                    if (hh < 6) continue;
                    const int ww = std::max(3, static_cast<int>(std::lround(hh * 5.0 / 7.0)));
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const double p = patch_ncc(gray, bx + best_dx + dx,
                                                       by + best_dy + dy, ww, hh,
                                                       best_digit(r, c));
                            if (p > best_p) {
                                best_p = p;
                                best_w = ww;
                                best_h = hh;
                                best_dx += dx;
                                best_dy += dy;
                            }
                        }
                }
                int digit = best_digit(r, c);
                double score = best_p;
                for (int d = 0; d < 10; ++d) {
                    if (d == digit) continue;
                    const double p =
                        patch_ncc(gray, bx + best_dx, by + best_dy, best_w, best_h, d);
                    if (p > score) {
                        score = p;
                        digit = d;
                    }
                }
                if (score >= kPeakThreshold)
                    hits.push_back({bx + best_dx, by + best_dy, best_w, best_h, digit, score});
            }
    }

    // dedupe across sizes/phases, then encode at anchors
    std::vector<ocr::DigitBox> boxes;
    for (const auto& h : hits) {
        ocr::DigitBox b;
        b.center_x = h.x + 0.5 * h.w;
        b.center_y = h.y + 0.5 * h.h;
        b.width = h.w;
        b.height = h.h;
        b.digit = h.digit;
        b.score = h.score;
        boxes.push_back(b);
    }
    boxes = ocr::nms(std::move(boxes), 0.45);

    // Card digits sit on one baseline and never stack, so two kinds of
    // artifacts can be rejected structurally:
    //  - same-column phantoms: a weaker hit whose x-range lies over a kept
    //    hit with any y-overlap (embossed shadows produce these at +-half a
    //    glyph),
    //  - nested sub-structures: a hit at least 2x smaller that overlaps a
    //    detection's slightly expanded rect (a glyph's foot bar reads as a
    //    tiny 7 hugging its edge).
    std::vector<ocr::DigitBox> filtered;
    for (const auto& b : boxes) {  // nms output is score-descending
        bool drop = false;
        for (const auto& kept : filtered) {
            const double xo = std::min(b.rect().x2(), kept.rect().x2()) -
                              std::max(b.rect().x, kept.rect().x);
            const double yo = std::min(b.rect().y2(), kept.rect().y2()) -
                              std::max(b.rect().y, kept.rect().y);
            if (xo / std::min(b.width, kept.width) >= 0.6 && yo > 0.0) {
                drop = true;
                break;
            }
        }
        if (!drop) {
            for (const auto& other : boxes) {
                const double area_b = b.rect().area();
                if (other.rect().area() < 2.0 * area_b) continue;
                const RectF grown = RectF::from_center(other.center_x, other.center_y,
                                                       other.width * 1.35,
                                                       other.height * 1.35);
                if (intersection_area(b.rect(), grown) >= 0.25 * area_b) {
                    drop = true;
                    break;
                }
            }
        }
        if (!drop) filtered.push_back(b);
    }
    boxes = std::move(filtered);

    auto out = ocr::RawHeadOutput::background(geom);
    std::vector<std::vector<char>> taken;
    for (const auto& g : geom.scales)
        taken.emplace_back(static_cast<size_t>(g.rows) * g.cols * geom.anchors_per_cell, 0);
    for (const auto& b : boxes) {  // nms output is already score-descending
        const ocr::AnchorRef ref = assign_anchor(b.rect(), geom, &taken, nullptr);
        taken[static_cast<size_t>(ref.scale_index)]
             [static_cast<size_t>(ref.cell) * geom.anchors_per_cell + ref.anchor] = 1;
        const auto g = geom.scales[ref.scale_index];
        const RectF anc = ocr::anchor_for(geom, ref.scale_index, ref.cell / g.cols,
                                          ref.cell % g.cols, ref.anchor);
        const ocr::BoxDelta d = ocr::encode_delta(anc, b.rect());
        auto& tens = out.scales[static_cast<size_t>(ref.scale_index)];
        tens.regression(ref.cell, ref.anchor * 4 + 0) = d.tx;
        tens.regression(ref.cell, ref.anchor * 4 + 1) = d.ty;
        tens.regression(ref.cell, ref.anchor * 4 + 2) = d.tw;
        tens.regression(ref.cell, ref.anchor * 4 + 3) = d.th;
        write_score_block(tens, ref.cell, ref.anchor, geom.categories, b.digit + 1,
                          static_cast<float>(b.score));
    }
    return out;
}

// ---- device profiles ----

double DeviceProfile::latency_ms(ModelKind kind) const {
    switch (kind) {
        case ModelKind::ocr: return ocr_ms;
        case ModelKind::card_detect: return card_detect_ms;
        case ModelKind::fake_media: return fake_media_ms;
        case ModelKind::tamper: return tamper_ms;
    }
    throw std::invalid_argument("latency_ms: unknown model kind");
}

double simulate_latency(const DeviceProfile& profile, ModelKind kind, uint64_t call_seed,
                        double jitter_frac) {
    const double base = profile.latency_ms(kind);
    if (jitter_frac <= 0.0) return base;
    Rng rng(derive_seed(0x1A7E0C7ULL, call_seed, static_cast<uint64_t>(kind)));
    return base * (1.0 + rng.next_symmetric(jitter_frac));
}

std::vector<DeviceProfile> load_profiles(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("profiles: cannot open " + path.string());
    json j;
    is >> j;
    const json& arr = j.is_array() ? j : j.at("profiles");
    std::vector<DeviceProfile> out;
    for (const auto& e : arr) {
        DeviceProfile p;
        p.name = e.at("name").get<std::string>();
        p.ocr_ms = e.at("ocr_ms").get<double>();
        p.card_detect_ms = e.at("card_detect_ms").get<double>();
        p.fake_media_ms = e.at("fake_media_ms").get<double>();
        p.tamper_ms = e.at("tamper_ms").get<double>();
        p.workers = e.at("workers").get<int>();
        p.camera_fps = e.at("camera_fps").get<double>();
        p.parallel_latency_scale = e.value("parallel_latency_scale", 1.0);
        p.capture_overhead_ms = e.value("capture_overhead_ms", 0.0);
        p.note = e.value("note", std::string{});
        if (p.ocr_ms <= 0 || p.card_detect_ms <= 0 || p.fake_media_ms <= 0 || p.tamper_ms <= 0 ||
            p.workers < 1 || p.camera_fps <= 0)
            throw std::runtime_error("profiles: invalid values for " + p.name);
        out.push_back(std::move(p));
    }
    return out;
}

DeviceProfile find_profile(const std::vector<DeviceProfile>& profiles, const std::string& name) {
    for (const auto& p : profiles)
        if (p.name == name) return p;
    throw std::runtime_error("profiles: no profile named " + name);
}

// ---- backend bundles ----

Backends make_oracle_backends(const BackendConfig& cfg, const ocr::HeadGeometry& geom) {
    cfg.validate();
    Backends b;
    auto fallbacks = b.ocr_anchor_fallbacks;
    b.ocr = [cfg, geom, fallbacks](const FrameContext& ctx, uint64_t call_seed) {
        const auto& truth = ctx.session->frames[ctx.frame_index].truth;
        int warn = 0;
        ocr::RawHeadOutput out;
        if (ctx.zoom_crop)
            out = oracle_ocr(zoom_truth(truth, *ctx.zoom_crop, geom), geom, cfg, call_seed,
                             &warn);
        else
            out = oracle_ocr(truth, geom, cfg, call_seed, &warn);
        if (warn) fallbacks->fetch_add(warn, std::memory_order_relaxed);
        return out;
    };
    b.card_detect = [cfg](const FrameContext& ctx, uint64_t call_seed) {
        return oracle_card_detect(ctx.session->frames[ctx.frame_index].truth, cfg, call_seed);
    };
    b.fake_media = [cfg](const FrameContext& ctx, uint64_t call_seed) {
        return oracle_fake_media(ctx.session->frames[ctx.frame_index].truth, cfg, call_seed);
    };
    b.tamper = [cfg](const FrameContext& ctx, uint64_t call_seed) {
        return oracle_tamper(ctx.session->frames[ctx.frame_index].truth, cfg, call_seed);
    };
    return b;
}

Backends make_template_backends(const BackendConfig& cfg, const ocr::HeadGeometry& geom) {
    Backends b = make_oracle_backends(cfg, geom);
    b.ocr = [geom](const FrameContext& ctx, uint64_t) {
        synth::RasterFrame frame = synth::render_session_frame(*ctx.session, ctx.frame_index);
        if (ctx.zoom_crop)
            frame = synth::crop_resize(frame, *ctx.zoom_crop, geom.input_w, geom.input_h);
        return template_recognize(frame, geom);
    };
    return b;
}

}  // namespace cardpipe::infer
