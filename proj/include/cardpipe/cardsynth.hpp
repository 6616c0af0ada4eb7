#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cardpipe/core.hpp"
#include "cardpipe/ocrdecode.hpp"
#include "cardpipe/raster.hpp"

namespace cardpipe::synth {

enum class Layout { quad_groups, amex };
enum class FontStyle { flat, embossed };
enum class Side { number, non_number };
enum class Media { physical, screen, paper, cardboard };
enum class LogoId { visa, mastercard, amex, discover, bank_a, bank_b, bank_c };

const char* to_string(Layout v);
const char* to_string(FontStyle v);
const char* to_string(Side v);
const char* to_string(Media v);
const char* to_string(LogoId v);
Layout layout_from_string(const std::string& s);
FontStyle font_style_from_string(const std::string& s);
Side side_from_string(const std::string& s);
Media media_from_string(const std::string& s);
LogoId logo_from_string(const std::string& s);

struct LogoMark {
    LogoId logo_id = LogoId::visa;
    RectF position;  // normalized card coordinates, within [0,1]^2
};

struct CardSpec {
    std::string pan;  // 16 digits (quad_groups) or 15 (amex), Luhn-valid
    std::optional<ocr::Expiry> expiry;
    Layout layout = Layout::quad_groups;
    FontStyle font_style = FontStyle::flat;
    int digit_height_px = 30;  // [8, 80] at the canonical 600x375 render
    std::vector<LogoMark> number_side_logos;
    std::vector<LogoMark> back_side_logos;

    void validate() const;  // throws std::invalid_argument
};

struct SceneSpec {
    Side side = Side::number;
    RectF card_rect;  // frame pixels; may extend beyond the frame
    bool centered = false;
    Media media = Media::physical;
    double blur_sigma = 0.0;
    double noise_amp = 0.0;

    void validate() const;
};

struct TruthDigitBox {
    RectF rect;  // frame pixels, clipped to the frame
    int digit = 0;
};

struct TruthLogoMark {
    LogoId logo_id = LogoId::visa;
    RectF rect;
};

struct FrameTruth {
    std::vector<TruthDigitBox> digit_boxes;  // empty on the non-number side
    Side side = Side::number;
    bool centered = false;
    Media media = Media::physical;
    std::vector<TruthLogoMark> logo_marks;
    std::string session_pan;
};

// Ground truth without touching pixels. render_frame produces exactly these
// boxes; backends that never look at pixels run off this alone.
FrameTruth layout_truth(const CardSpec& spec, const SceneSpec& scene);

// Deterministic for a fixed (spec, scene, seed). Digit truth boxes coincide
// with the rendered glyph cells; media/blur/noise are applied after the
// annotation is captured. Throws on a degenerate (zero-area) card_rect.
std::pair<RasterFrame, FrameTruth> render_frame(const CardSpec& spec, const SceneSpec& scene,
                                                uint64_t seed);

struct SessionScript {
    double camera_fps = 30.0;
    int entry_frames = 10;
    int centered_frames = 60;
    int flip_frames = 15;  // off-center gap between sides (both_sides only)
    int back_frames = 45;  // non-number-side frames (both_sides only)
    int exit_frames = 0;
    double jitter_px = 2.0;
    bool both_sides = false;
    double coverage = 0.85;  // card width as a fraction of frame width
    Media media = Media::physical;
    double blur_sigma = 0.0;
    double noise_amp = 0.0;
    int give_up_ms = 0;  // 0 = default: 16 s single-side, 21 s two-side
    // Users fumble: during the "centered" phases the card is actually
    // centered only centered_duty of the time, drifting off-center in
    // blocks of wobble_period_frames.
    double centered_duty = 1.0;
    int wobble_period_frames = 36;
};

struct ScanFrame {
    double t_ms = 0.0;
    SceneSpec scene;
    FrameTruth truth;
    uint64_t render_seed = 0;
};

struct ScanSession {
    std::string id;
    double camera_fps = 30.0;
    int give_up_ms = 16000;
    CardSpec expected;
    std::vector<ScanFrame> frames;  // timestamps strictly increasing
};

// Off-center entry frames, centered number-side frames, then (both_sides) a
// flip gap and centered non-number frames. Deterministic per seed.
ScanSession generate_session(const CardSpec& spec, const SessionScript& script, uint64_t seed);

// Re-render a session frame from its recipe.
RasterFrame render_session_frame(const ScanSession& session, size_t frame_index);

struct CorpusRanges {
    std::vector<Layout> layouts = {Layout::quad_groups, Layout::amex};
    std::vector<FontStyle> font_styles = {FontStyle::flat, FontStyle::embossed};
    std::vector<Media> media = {Media::physical};
    int digit_height_min = 22;
    int digit_height_max = 36;
    double coverage_min = 0.70;
    double coverage_max = 0.98;
    double blur_max = 0.0;
    double noise_max = 0.0;
    double camera_fps = 30.0;
    double both_sides_fraction = 0.0;
    double centered_duty_min = 0.45;
    double centered_duty_max = 0.75;
    bool fill_to_give_up = true;  // size sessions to span the give-up horizon
    int centered_frames = 60;     // used when !fill_to_give_up
    double expiry_fraction = 0.8;
};

// Writes manifest.json plus one directory per session (truth.json and,
// unless write_rasters is false, PNG frames). Returns the manifest path.
std::filesystem::path generate_corpus(int count, const CorpusRanges& ranges, uint64_t seed,
                                      const std::filesystem::path& out_dir,
                                      bool write_rasters = true);

// Draw one random card/session pair from the ranges (used by generate_corpus
// and by in-memory benchmarks).
std::pair<CardSpec, SessionScript> sample_card(const CorpusRanges& ranges, Rng& rng);

std::vector<std::string> list_corpus_sessions(const std::filesystem::path& corpus_dir);
ScanSession load_session(const std::filesystem::path& corpus_dir, const std::string& session_id);

}  // namespace cardpipe::synth
