#include "cardpipe/cardsynth.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cardpipe/glyphs.hpp"
#include "cardpipe/image_io.hpp"
#include "cardpipe/luhn.hpp"

using json = nlohmann::ordered_json;

namespace cardpipe::synth {

const char* to_string(Layout v) {
    return v == Layout::quad_groups ? "quad-groups-4-4-4-4" : "amex-4-6-5";
}
const char* to_string(FontStyle v) { return v == FontStyle::flat ? "flat" : "embossed"; }
const char* to_string(Side v) { return v == Side::number ? "number" : "non_number"; }
const char* to_string(Media v) {
    switch (v) {
        case Media::physical: return "physical";
        case Media::screen: return "screen";
        case Media::paper: return "paper";
        case Media::cardboard: return "cardboard";
    }
    return "physical";
}
const char* to_string(LogoId v) {
    switch (v) {
        case LogoId::visa: return "visa";
        case LogoId::mastercard: return "mastercard";
        case LogoId::amex: return "amex";
        case LogoId::discover: return "discover";
        case LogoId::bank_a: return "bank_a";
        case LogoId::bank_b: return "bank_b";
        case LogoId::bank_c: return "bank_c";
    }
    return "visa";
}

namespace {

template <typename T>
T enum_from(const std::string& s, std::initializer_list<T> values, const char* what) {
    for (T v : values)
        if (s == to_string(v)) return v;
    throw std::invalid_argument(std::string(what) + ": unknown value '" + s + "'");
}

}  // namespace

Layout layout_from_string(const std::string& s) {
    return enum_from(s, {Layout::quad_groups, Layout::amex}, "layout");
}
FontStyle font_style_from_string(const std::string& s) {
    return enum_from(s, {FontStyle::flat, FontStyle::embossed}, "font_style");
}
Side side_from_string(const std::string& s) {
    return enum_from(s, {Side::number, Side::non_number}, "side");
}
Media media_from_string(const std::string& s) {
    return enum_from(s, {Media::physical, Media::screen, Media::paper, Media::cardboard},
                     "media");
}
LogoId logo_from_string(const std::string& s) {
    return enum_from(s,
                     {LogoId::visa, LogoId::mastercard, LogoId::amex, LogoId::discover,
                      LogoId::bank_a, LogoId::bank_b, LogoId::bank_c},
                     "logo_id");
}

void CardSpec::validate() const {
    const size_t want = layout == Layout::quad_groups ? 16 : 15;
    if (pan.size() != want)
        throw std::invalid_argument("CardSpec: pan length does not match layout");
    if (!ocr::luhn_valid_nothrow(pan))
        throw std::invalid_argument("CardSpec: pan fails the Luhn checksum");
    if (digit_height_px < 8 || digit_height_px > 80)
        throw std::invalid_argument("CardSpec: digit_height_px out of [8,80]");
    if (expiry && (expiry->month < 1 || expiry->month > 12 || expiry->year < 0 ||
                   expiry->year > 99))
        throw std::invalid_argument("CardSpec: invalid expiry");
    for (const auto* logos : {&number_side_logos, &back_side_logos})
        for (const auto& mark : *logos) {
            const RectF& p = mark.position;
            if (p.x < 0 || p.y < 0 || p.x2() > 1.0 || p.y2() > 1.0 || p.w <= 0 || p.h <= 0)
                throw std::invalid_argument("CardSpec: logo position outside [0,1]^2");
        }
}

void SceneSpec::validate() const {
    if (blur_sigma < 0 || noise_amp < 0)
        throw std::invalid_argument("SceneSpec: negative blur/noise");
    if (centered) {
        const double dx = std::abs(card_rect.cx() - kFrameWidth / 2.0);
        const double dy = std::abs(card_rect.cy() - kFrameHeight / 2.0);
        if (dx > 0.10 * kFrameWidth || dy > 0.10 * kFrameHeight ||
            card_rect.w < 0.40 * kFrameWidth)
            throw std::invalid_argument("SceneSpec: centered=true violates geometry bounds");
    }
}

namespace {

struct Rgb {
    uint8_t r, g, b;
};

constexpr Rgb kCardPalette[6] = {{38, 52, 94},  {94, 38, 46},  {30, 74, 52},
                                 {60, 66, 78},  {22, 78, 84},  {66, 44, 88}};
constexpr Rgb kInk = {242, 240, 230};

Rgb logo_color(LogoId id) {
    switch (id) {
        case LogoId::visa: return {26, 46, 166};
        case LogoId::mastercard: return {240, 158, 36};
        case LogoId::amex: return {58, 110, 230};
        case LogoId::discover: return {230, 90, 40};
        case LogoId::bank_a: return {200, 40, 40};
        case LogoId::bank_b: return {40, 160, 80};
        case LogoId::bank_c: return {250, 210, 70};
    }
    return {26, 46, 166};
}

Rgb darken(Rgb c, double f) {
    return {static_cast<uint8_t>(c.r * f), static_cast<uint8_t>(c.g * f),
            static_cast<uint8_t>(c.b * f)};
}

uint64_t pan_hash(const std::string& pan) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : pan) h = (h ^ static_cast<uint64_t>(c)) * 1099511628211ULL;
    return h;
}

std::vector<int> layout_groups(Layout layout) {
    if (layout == Layout::quad_groups) return {4, 4, 4, 4};
    return {4, 6, 5};
}

// Height/width of one rendered glyph cell plus the integer x origins of every
// digit in the PAN line and the expiry line. Shared between layout_truth and
// render_frame so truth boxes always coincide with rendered cells.
struct DigitLayout {
    int H = 0, W = 0;                 // PAN glyph cell size
    std::vector<double> pan_x;        // left edge per digit (unrounded)
    double pan_y = 0;
    int He = 0, We = 0;               // expiry glyph cell size
    std::vector<double> exp_x;
    double exp_y = 0;
};

DigitLayout compute_digit_layout(const CardSpec& spec, const SceneSpec& scene) {
    DigitLayout out;
    const auto groups = layout_groups(spec.layout);
    const int n = static_cast<int>(spec.pan.size());
    const double card_w = scene.card_rect.w;
    const double card_h = scene.card_rect.h;

    // Requested height at this card size; shrink if the line cannot fit.
    const double units = (n - 1) * 1.15 + 1.0 + (static_cast<double>(groups.size()) - 1) * 0.6;
    const double h_req = spec.digit_height_px * card_w / kFrameWidth;
    const double h_fit = 0.88 * card_w * kGlyphRows / (kGlyphCols * units);
    out.H = std::max(5, static_cast<int>(std::lround(std::min(h_req, h_fit))));
    out.W = std::max(3, static_cast<int>(std::lround(out.H * double(kGlyphCols) / kGlyphRows)));

    const double line_w = units * out.W;
    double x = scene.card_rect.x + std::max(0.04 * card_w, 0.5 * (card_w - line_w));
    out.pan_y = scene.card_rect.y + 0.58 * card_h - 0.5 * out.H;

    int idx = 0;
    for (size_t g = 0; g < groups.size(); ++g) {
        for (int k = 0; k < groups[g]; ++k) {
            out.pan_x.push_back(x);
            x += 1.15 * out.W;
            ++idx;
        }
        x += 0.6 * out.W;
    }
    (void)idx;

    if (spec.expiry) {
        out.He = std::max(4, static_cast<int>(std::lround(0.55 * out.H)));
        out.We = std::max(3, static_cast<int>(std::lround(out.He * double(kGlyphCols) /
                                                          kGlyphRows)));
        out.exp_y = out.pan_y + 1.9 * out.H;
        double ex = scene.card_rect.x + 0.38 * card_w;
        for (int k = 0; k < 4; ++k) {
            out.exp_x.push_back(ex);
            ex += 1.15 * out.We;
        }
    }
    return out;
}

RectF logo_frame_rect(const LogoMark& mark, const RectF& card) {
    return {card.x + mark.position.x * card.w, card.y + mark.position.y * card.h,
            mark.position.w * card.w, mark.position.h * card.h};
}

std::string expiry_digits(const ocr::Expiry& e) {
    char buf[5];
    std::snprintf(buf, sizeof buf, "%02d%02d", e.month, e.year);
    return buf;
}

void append_clipped_digit(std::vector<TruthDigitBox>& out, double x, double y, int w, int h,
                          int digit) {
    const RectF clipped = clip_rect({x, y, double(w), double(h)}, kFrameWidth, kFrameHeight);
    if (clipped.area() > 0.0) out.push_back({clipped, digit});
}

}  // namespace

FrameTruth layout_truth(const CardSpec& spec, const SceneSpec& scene) {
    spec.validate();
    scene.validate();
    FrameTruth truth;
    truth.side = scene.side;
    truth.centered = scene.centered;
    truth.media = scene.media;
    truth.session_pan = spec.pan;

    const auto& logos =
        scene.side == Side::number ? spec.number_side_logos : spec.back_side_logos;
    for (const auto& mark : logos) {
        const RectF r = clip_rect(logo_frame_rect(mark, scene.card_rect), kFrameWidth,
                                  kFrameHeight);
        if (r.area() > 0.0) truth.logo_marks.push_back({mark.logo_id, r});
    }

    if (scene.side != Side::number) return truth;

    const DigitLayout dl = compute_digit_layout(spec, scene);
    for (size_t i = 0; i < spec.pan.size(); ++i)
        append_clipped_digit(truth.digit_boxes, std::round(dl.pan_x[i]), std::round(dl.pan_y),
                             dl.W, dl.H, spec.pan[i] - '0');
    if (spec.expiry) {
        const std::string ed = expiry_digits(*spec.expiry);
        for (int i = 0; i < 4; ++i)
            append_clipped_digit(truth.digit_boxes, std::round(dl.exp_x[i]),
                                 std::round(dl.exp_y), dl.We, dl.He, ed[i] - '0');
    }
    return truth;
}

namespace {

// Nearest-neighbor glyph stamp at integer origin; pixels outside the frame
// are skipped.
void stamp_glyph(RasterFrame& frame, int digit, int x0, int y0, int W, int H, Rgb color) {
    for (int yy = 0; yy < H; ++yy) {
        const int fy = y0 + yy;
        if (fy < 0 || fy >= frame.height) continue;
        const int gr = yy * kGlyphRows / H;
        for (int xx = 0; xx < W; ++xx) {
            const int fx = x0 + xx;
            if (fx < 0 || fx >= frame.width) continue;
            const int gc = xx * kGlyphCols / W;
            if (glyph_pixel(digit, gr, gc)) frame.set_px(fx, fy, color.r, color.g, color.b);
        }
    }
}

void stamp_digit(RasterFrame& frame, const CardSpec& spec, int digit, int x0, int y0, int W,
                 int H, Rgb card_color) {
    if (spec.font_style == FontStyle::embossed) {
        const int d = std::max(1, H / 12);
        stamp_glyph(frame, digit, x0 + d, y0 + d, W, H, darken(card_color, 0.45));
    }
    stamp_glyph(frame, digit, x0, y0, W, H, kInk);
}

bool inside_rounded(const RectF& r, double radius, double x, double y) {
    if (x < r.x || x >= r.x2() || y < r.y || y >= r.y2()) return false;
    const double cx = std::clamp(x, r.x + radius, r.x2() - radius);
    const double cy = std::clamp(y, r.y + radius, r.y2() - radius);
    const double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= radius * radius;
}

void fill_rounded(RasterFrame& frame, const RectF& r, double radius, Rgb color) {
    const int y0 = std::max(0, static_cast<int>(std::floor(r.y)));
    const int y1 = std::min(frame.height, static_cast<int>(std::ceil(r.y2())));
    const int x0 = std::max(0, static_cast<int>(std::floor(r.x)));
    const int x1 = std::min(frame.width, static_cast<int>(std::ceil(r.x2())));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            if (inside_rounded(r, radius, x + 0.5, y + 0.5))
                frame.set_px(x, y, color.r, color.g, color.b);
}

void apply_media(RasterFrame& frame, Media media, const RectF& card) {
    if (media == Media::screen) {
        // whole-frame scanlines, period 4 px, 15% luminance modulation
        for (int y = 0; y < frame.height; y += 4) {
            uint8_t* row = frame.rgb.data() + static_cast<size_t>(y) * frame.width * 3;
            for (int i = 0; i < frame.width * 3; ++i)
                row[i] = static_cast<uint8_t>(row[i] * 0.85);
        }
    } else if (media == Media::paper || media == Media::cardboard) {
        const int y0 = std::max(0, static_cast<int>(card.y));
        const int y1 = std::min(frame.height, static_cast<int>(card.y2()));
        const int x0 = std::max(0, static_cast<int>(card.x));
        const int x1 = std::min(frame.width, static_cast<int>(card.x2()));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                uint8_t* p = frame.px(x, y);
                if (media == Media::paper) {
                    p[0] = static_cast<uint8_t>(std::min(255.0, p[0] * 0.90 + 30.0));
                    p[1] = static_cast<uint8_t>(std::min(255.0, p[1] * 0.90 + 30.0));
                    p[2] = static_cast<uint8_t>(std::min(255.0, p[2] * 0.90 + 30.0));
                } else {
                    p[0] = static_cast<uint8_t>(std::min(255.0, p[0] * 0.95 + 18.0));
                    p[1] = static_cast<uint8_t>(p[1] * 0.82 + 10.0);
                    p[2] = static_cast<uint8_t>(p[2] * 0.60 + 6.0);
                }
            }
    }
}

}  // namespace

std::pair<RasterFrame, FrameTruth> render_frame(const CardSpec& spec, const SceneSpec& scene,
                                                uint64_t seed) {
    if (scene.card_rect.w <= 0.0 || scene.card_rect.h <= 0.0)
        throw std::invalid_argument("render_frame: degenerate card_rect");
    FrameTruth truth = layout_truth(spec, scene);  // validates spec + scene

    RasterFrame frame;
    // background: muted gradient with seeded per-pixel grain
    Rng bg_rng(derive_seed(seed, 0xB6));
    for (int y = 0; y < frame.height; ++y) {
        const int base = 34 + 26 * y / frame.height;
        for (int x = 0; x < frame.width; ++x) {
            const int grain = static_cast<int>(bg_rng.next_below(9));
            frame.set_px(x, y, static_cast<uint8_t>(base + grain),
                         static_cast<uint8_t>(base + 4 + grain),
                         static_cast<uint8_t>(base + 10 + grain));
        }
    }

    const RectF card = scene.card_rect;
    const Rgb card_color = kCardPalette[pan_hash(spec.pan) % 6];
    const double radius = 0.08 * std::min(card.w, card.h);
    fill_rounded(frame, card, radius, card_color);

    if (scene.side == Side::number) {
        const DigitLayout dl = compute_digit_layout(spec, scene);
        for (size_t i = 0; i < spec.pan.size(); ++i)
            stamp_digit(frame, spec, spec.pan[i] - '0',
                        static_cast<int>(std::round(dl.pan_x[i])),
                        static_cast<int>(std::round(dl.pan_y)), dl.W, dl.H, card_color);
        if (spec.expiry) {
            const std::string ed = expiry_digits(*spec.expiry);
            for (int i = 0; i < 4; ++i)
                stamp_digit(frame, spec, ed[i] - '0',
                            static_cast<int>(std::round(dl.exp_x[i])),
                            static_cast<int>(std::round(dl.exp_y)), dl.We, dl.He, card_color);
        }
    } else {
        // magnetic stripe band
        const RectF stripe{card.x, card.y + 0.12 * card.h, card.w, 0.18 * card.h};
        fill_rounded(frame, stripe, 1.0, darken(card_color, 0.30));
        // signature panel
        const RectF sig{card.x + 0.08 * card.w, card.y + 0.45 * card.h, 0.55 * card.w,
                        0.14 * card.h};
        fill_rounded(frame, sig, 2.0, {214, 214, 206});
    }

    const auto& logos =
        scene.side == Side::number ? spec.number_side_logos : spec.back_side_logos;
    for (const auto& mark : logos) {
        const RectF r = logo_frame_rect(mark, card);
        fill_rounded(frame, r, 0.2 * std::min(r.w, r.h), logo_color(mark.logo_id));
    }

    apply_media(frame, scene.media, card);
    gaussian_blur(frame, scene.blur_sigma);
    add_noise(frame, scene.noise_amp, derive_seed(seed, 0xA7));
    return {std::move(frame), std::move(truth)};
}

ScanSession generate_session(const CardSpec& spec, const SessionScript& script, uint64_t seed) {
    spec.validate();
    if (script.camera_fps <= 0.0 || script.camera_fps > 120.0)
        throw std::invalid_argument("generate_session: camera_fps out of (0,120]");

    ScanSession session;
    session.camera_fps = script.camera_fps;
    session.expected = spec;
    session.give_up_ms =
        script.give_up_ms > 0 ? script.give_up_ms : (script.both_sides ? 21000 : 16000);

    Rng rng(derive_seed(seed, 0x5E5));
    const double card_w = script.coverage * kFrameWidth;
    const double card_h = card_w / 1.6;
    const double cx0 = kFrameWidth / 2.0;
    const double cy0 = kFrameHeight / 2.0;
    const double period_ms = 1000.0 / script.camera_fps;

    int index = 0;
    // wobble: carve the centered phases into centered / drifted blocks
    const double duty = std::clamp(script.centered_duty, 0.0, 1.0);
    const int period = std::max(1, script.wobble_period_frames);
    const int phase0 = static_cast<int>(rng.next_below(static_cast<uint64_t>(period)));
    const double drift_dx =
        (rng.next_bernoulli(0.5) ? 1.0 : -1.0) * rng.next_in(0.14, 0.22) * kFrameWidth;
    int centered_index = 0;
    auto wobbled_centered = [&]() {
        const int pos = (centered_index++ + phase0) % period;
        return pos < static_cast<int>(duty * period);
    };
    auto push_frame = [&](Side side, bool centered, double center_x, double center_y) {
        SceneSpec scene;
        scene.side = side;
        scene.centered = centered;
        scene.media = script.media;
        scene.blur_sigma = script.blur_sigma;
        scene.noise_amp = script.noise_amp;
        const double jx = rng.next_symmetric(script.jitter_px);
        const double jy = rng.next_symmetric(script.jitter_px);
        scene.card_rect =
            RectF::from_center(center_x + jx, center_y + jy, card_w, card_h);
        ScanFrame frame;
        frame.t_ms = index * period_ms;
        frame.scene = scene;
        frame.render_seed = derive_seed(seed, 0xF0A, static_cast<uint64_t>(index));
        frame.truth = layout_truth(spec, scene);
        session.frames.push_back(std::move(frame));
        ++index;
    };

    // card slides in from off-frame right
    for (int i = 0; i < script.entry_frames; ++i) {
        const double f = script.entry_frames > 1
                             ? static_cast<double>(i) / (script.entry_frames - 1)
                             : 1.0;
        const double center_x = cx0 + (1.0 - f) * (kFrameWidth + card_w * 0.6 - cx0);
        push_frame(Side::number, false, center_x, cy0 + 20.0 * (1.0 - f));
    }
    for (int i = 0; i < script.centered_frames; ++i) {
        const bool on = wobbled_centered();
        push_frame(Side::number, on, on ? cx0 : cx0 + drift_dx, cy0);
    }
    if (script.both_sides) {
        for (int i = 0; i < script.flip_frames; ++i)
            push_frame(Side::non_number, false, cx0 + 0.35 * kFrameWidth, cy0);
        for (int i = 0; i < script.back_frames; ++i) {
            const bool on = wobbled_centered();
            push_frame(Side::non_number, on, on ? cx0 : cx0 + drift_dx, cy0);
        }
    }
    for (int i = 0; i < script.exit_frames; ++i) {
        const double f = script.exit_frames > 1
                             ? static_cast<double>(i) / (script.exit_frames - 1)
                             : 1.0;
        const Side side = script.both_sides ? Side::non_number : Side::number;
        push_frame(side, false, cx0 - f * (cx0 + card_w * 0.6), cy0);
    }
    return session;
}

RasterFrame render_session_frame(const ScanSession& session, size_t frame_index) {
    const ScanFrame& f = session.frames.at(frame_index);
    return render_frame(session.expected, f.scene, f.render_seed).first;
}

namespace {

constexpr struct NetworkPrefix {
    LogoId logo;
    const char* prefix;
    Layout layout;
} kNetworks[] = {
    {LogoId::visa, "4", Layout::quad_groups},
    {LogoId::mastercard, "51", Layout::quad_groups},
    {LogoId::mastercard, "2221", Layout::quad_groups},
    {LogoId::discover, "6011", Layout::quad_groups},
    {LogoId::discover, "65", Layout::quad_groups},
    {LogoId::amex, "34", Layout::amex},
    {LogoId::amex, "37", Layout::amex},
};

template <typename T>
const T& pick(const std::vector<T>& values, Rng& rng) {
    if (values.empty()) throw std::invalid_argument("corpus ranges: empty choice list");
    return values[rng.next_below(values.size())];
}

}  // namespace

std::pair<CardSpec, SessionScript> sample_card(const CorpusRanges& ranges, Rng& rng) {
    CardSpec spec;
    spec.layout = pick(ranges.layouts, rng);

    // pick a network prefix compatible with the layout
    std::vector<NetworkPrefix> compatible;
    for (const auto& n : kNetworks)
        if (n.layout == spec.layout) compatible.push_back(n);
    const NetworkPrefix net = compatible[rng.next_below(compatible.size())];

    const size_t len = spec.layout == Layout::quad_groups ? 16 : 15;
    std::string pan = net.prefix;
    while (pan.size() < len - 1) pan.push_back(static_cast<char>('0' + rng.next_below(10)));
    pan.push_back(ocr::luhn_check_digit(pan));
    spec.pan = pan;

    spec.font_style = pick(ranges.font_styles, rng);
    spec.digit_height_px = ranges.digit_height_min +
                           static_cast<int>(rng.next_below(static_cast<uint64_t>(
                               ranges.digit_height_max - ranges.digit_height_min + 1)));
    if (rng.next_bernoulli(ranges.expiry_fraction))
        spec.expiry = ocr::Expiry{1 + static_cast<int>(rng.next_below(12)),
                                  24 + static_cast<int>(rng.next_below(6))};

    const LogoId bank =
        static_cast<LogoId>(static_cast<int>(LogoId::bank_a) + rng.next_below(3));
    spec.number_side_logos.push_back({net.logo, {0.74, 0.06, 0.20, 0.16}});
    spec.back_side_logos.push_back({bank, {0.06, 0.70, 0.22, 0.18}});

    SessionScript script;
    script.camera_fps = ranges.camera_fps;
    script.coverage = rng.next_in(ranges.coverage_min, ranges.coverage_max);
    script.media = pick(ranges.media, rng);
    script.blur_sigma = ranges.blur_max > 0 ? rng.next_in(0.0, ranges.blur_max) : 0.0;
    script.noise_amp = ranges.noise_max > 0 ? rng.next_in(0.0, ranges.noise_max) : 0.0;
    script.both_sides = rng.next_bernoulli(ranges.both_sides_fraction);
    script.entry_frames = 8 + static_cast<int>(rng.next_below(13));
    script.centered_duty = rng.next_in(ranges.centered_duty_min, ranges.centered_duty_max);
    script.wobble_period_frames = 24 + static_cast<int>(rng.next_below(25));
    script.give_up_ms = script.both_sides ? 21000 : 16000;

    if (ranges.fill_to_give_up) {
        const int total =
            static_cast<int>(std::ceil(script.give_up_ms / 1000.0 * script.camera_fps));
        const int rest = std::max(10, total - script.entry_frames);
        if (script.both_sides) {
            script.flip_frames = 15;
            script.centered_frames = std::max(5, (rest - script.flip_frames) / 2);
            script.back_frames =
                std::max(5, rest - script.flip_frames - script.centered_frames);
        } else {
            script.centered_frames = rest;
            script.flip_frames = 0;
            script.back_frames = 0;
        }
    } else {
        script.centered_frames = ranges.centered_frames;
        script.flip_frames = script.both_sides ? 15 : 0;
        script.back_frames = script.both_sides ? ranges.centered_frames : 0;
    }
    return {spec, script};
}

namespace {

json rect_to_json(const RectF& r) {
    return json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

RectF rect_from_json(const json& j) {
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
            j.at("h").get<double>()};
}

json spec_to_json(const CardSpec& spec) {
    json j;
    j["pan"] = spec.pan;
    if (spec.expiry)
        j["expiry"] = json{{"month", spec.expiry->month}, {"year", spec.expiry->year}};
    else
        j["expiry"] = nullptr;
    j["layout"] = to_string(spec.layout);
    j["font_style"] = to_string(spec.font_style);
    j["digit_height_px"] = spec.digit_height_px;
    auto logos_json = [](const std::vector<LogoMark>& marks) {
        json arr = json::array();
        for (const auto& m : marks)
            arr.push_back(json{{"logo_id", to_string(m.logo_id)},
                               {"position", rect_to_json(m.position)}});
        return arr;
    };
    j["number_side_logos"] = logos_json(spec.number_side_logos);
    j["back_side_logos"] = logos_json(spec.back_side_logos);
    return j;
}

CardSpec spec_from_json(const json& j) {
    CardSpec spec;
    spec.pan = j.at("pan").get<std::string>();
    if (!j.at("expiry").is_null())
        spec.expiry = ocr::Expiry{j.at("expiry").at("month").get<int>(),
                                  j.at("expiry").at("year").get<int>()};
    spec.layout = layout_from_string(j.at("layout").get<std::string>());
    spec.font_style = font_style_from_string(j.at("font_style").get<std::string>());
    spec.digit_height_px = j.at("digit_height_px").get<int>();
    auto logos_from = [](const json& arr) {
        std::vector<LogoMark> out;
        for (const auto& m : arr)
            out.push_back({logo_from_string(m.at("logo_id").get<std::string>()),
                           rect_from_json(m.at("position"))});
        return out;
    };
    spec.number_side_logos = logos_from(j.at("number_side_logos"));
    spec.back_side_logos = logos_from(j.at("back_side_logos"));
    return spec;
}

json script_to_json(const SessionScript& s) {
    return json{{"camera_fps", s.camera_fps},
                {"entry_frames", s.entry_frames},
                {"centered_frames", s.centered_frames},
                {"flip_frames", s.flip_frames},
                {"back_frames", s.back_frames},
                {"exit_frames", s.exit_frames},
                {"jitter_px", s.jitter_px},
                {"both_sides", s.both_sides},
                {"coverage", s.coverage},
                {"media", to_string(s.media)},
                {"blur_sigma", s.blur_sigma},
                {"noise_amp", s.noise_amp},
                {"give_up_ms", s.give_up_ms},
                {"centered_duty", s.centered_duty},
                {"wobble_period_frames", s.wobble_period_frames}};
}

SessionScript script_from_json(const json& j) {
    SessionScript s;
    s.camera_fps = j.at("camera_fps").get<double>();
    s.entry_frames = j.at("entry_frames").get<int>();
    s.centered_frames = j.at("centered_frames").get<int>();
    s.flip_frames = j.at("flip_frames").get<int>();
    s.back_frames = j.at("back_frames").get<int>();
    s.exit_frames = j.at("exit_frames").get<int>();
    s.jitter_px = j.at("jitter_px").get<double>();
    s.both_sides = j.at("both_sides").get<bool>();
    s.coverage = j.at("coverage").get<double>();
    s.media = media_from_string(j.at("media").get<std::string>());
    s.blur_sigma = j.at("blur_sigma").get<double>();
    s.noise_amp = j.at("noise_amp").get<double>();
    s.give_up_ms = j.at("give_up_ms").get<int>();
    s.centered_duty = j.value("centered_duty", 1.0);
    s.wobble_period_frames = j.value("wobble_period_frames", 36);
    return s;
}

json truth_to_json(const FrameTruth& t) {
    json boxes = json::array();
    for (const auto& b : t.digit_boxes) {
        json jb = rect_to_json(b.rect);
        jb["digit"] = b.digit;
        boxes.push_back(jb);
    }
    json logos = json::array();
    for (const auto& m : t.logo_marks) {
        json jm = rect_to_json(m.rect);
        jm["logo_id"] = to_string(m.logo_id);
        logos.push_back(jm);
    }
    return json{{"side", to_string(t.side)},     {"centered", t.centered},
                {"media", to_string(t.media)},   {"session_pan", t.session_pan},
                {"digit_boxes", std::move(boxes)}, {"logo_marks", std::move(logos)}};
}

}  // namespace

std::filesystem::path generate_corpus(int count, const CorpusRanges& ranges, uint64_t seed,
                                      const std::filesystem::path& out_dir,
                                      bool write_rasters) {
    if (count < 1) throw std::invalid_argument("generate_corpus: count must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw std::runtime_error("generate_corpus: cannot create output directory " +
                                 out_dir.string());

    json manifest;
    manifest["corpus"] = "cardpipe-synth";
    manifest["version"] = 1;
    manifest["seed"] = seed;
    manifest["count"] = count;
    manifest["rasters"] = write_rasters;
    manifest["sessions"] = json::array();

    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, 0xC0, static_cast<uint64_t>(i)));
        auto [spec, script] = sample_card(ranges, rng);
        const uint64_t session_seed = derive_seed(seed, 0xC1, static_cast<uint64_t>(i));
        ScanSession session = generate_session(spec, script, session_seed);
        char id[16];
        std::snprintf(id, sizeof id, "s%04d", i);
        session.id = id;

        const auto session_dir = out_dir / session.id;
        std::filesystem::create_directories(session_dir, ec);
        if (ec) throw std::runtime_error("generate_corpus: cannot create " + session_dir.string());

        json truth_frames = json::array();
        json frame_files = json::array();
        for (size_t f = 0; f < session.frames.size(); ++f) {
            json tf = truth_to_json(session.frames[f].truth);
            tf["t_ms"] = session.frames[f].t_ms;
            truth_frames.push_back(std::move(tf));
            if (write_rasters) {
                char name[32];
                std::snprintf(name, sizeof name, "f%05zu.png", f);
                write_png(session_dir / name, render_session_frame(session, f));
                frame_files.push_back(std::string(session.id) + "/" + name);
            }
        }
        {
            std::ofstream os(session_dir / "truth.json");
            os << json{{"session_id", session.id}, {"frames", std::move(truth_frames)}}.dump(1)
               << "\n";
        }

        json entry;
        entry["session_id"] = session.id;
        entry["camera_fps"] = session.camera_fps;
        entry["give_up_ms"] = session.give_up_ms;
        entry["pan"] = spec.pan;
        entry["layout"] = to_string(spec.layout);
        entry["media"] = to_string(script.media);
        entry["frames"] = std::move(frame_files);
        entry["recipe"] = json{{"spec", spec_to_json(spec)},
                               {"script", script_to_json(script)},
                               {"seed", session_seed}};
        manifest["sessions"].push_back(std::move(entry));
    }

    const auto manifest_path = out_dir / "manifest.json";
    std::ofstream os(manifest_path);
    if (!os) throw std::runtime_error("generate_corpus: cannot write manifest");
    os << manifest.dump(1) << "\n";
    return manifest_path;
}

namespace {

json load_manifest(const std::filesystem::path& corpus_dir) {
    std::ifstream is(corpus_dir / "manifest.json");
    if (!is)
        throw std::runtime_error("corpus: missing manifest.json in " + corpus_dir.string());
    json m;
    is >> m;
    return m;
}

}  // namespace

std::vector<std::string> list_corpus_sessions(const std::filesystem::path& corpus_dir) {
    const json m = load_manifest(corpus_dir);
    std::vector<std::string> ids;
    for (const auto& e : m.at("sessions")) ids.push_back(e.at("session_id").get<std::string>());
    return ids;
}

ScanSession load_session(const std::filesystem::path& corpus_dir,
                         const std::string& session_id) {
    const json m = load_manifest(corpus_dir);
    for (const auto& e : m.at("sessions")) {
        if (e.at("session_id").get<std::string>() != session_id) continue;
        if (!e.contains("recipe"))
            throw std::runtime_error("corpus: session " + session_id + " has no recipe");
        const CardSpec spec = spec_from_json(e.at("recipe").at("spec"));
        const SessionScript script = script_from_json(e.at("recipe").at("script"));
        const uint64_t seed = e.at("recipe").at("seed").get<uint64_t>();
        ScanSession session = generate_session(spec, script, seed);
        session.id = session_id;
        return session;
    }
    throw std::runtime_error("corpus: session not found: " + session_id);
}

}  // namespace cardpipe::synth
