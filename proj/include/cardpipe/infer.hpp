#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cardpipe/cardsynth.hpp"
#include "cardpipe/core.hpp"
#include "cardpipe/ocrdecode.hpp"

namespace cardpipe::infer {

enum class DetectCategory { number_side, non_number_side, background };
const char* to_string(DetectCategory v);

struct CardDetectLabel {
    DetectCategory category = DetectCategory::background;
    double confidence = 0.0;
};

struct FakeMediaLabel {
    synth::Media category = synth::Media::physical;
    double confidence = 0.0;
};

struct TamperObject {
    synth::LogoId logo_id = synth::LogoId::visa;
    double confidence = 0.0;
    RectF rect;
};

struct TamperObservation {
    std::vector<TamperObject> objects;
};

// Error injection for the truth-driven oracle backends. Rates are
// per-decision corruption probabilities; 1.0 is accepted as a degenerate
// always-wrong setting for experiments.
struct BackendConfig {
    double digit_error_rate = 0.0;   // per digit
    double detect_error_rate = 0.0;  // per frame
    double media_error_rate = 0.0;   // per frame
    double tamper_error_rate = 0.0;  // per frame
    uint64_t seed = 0;
    // Oracle analogue of the receptive-field limit: digits rendered smaller
    // than this are misread (wrong digit), which is what the zoom fallback
    // recovers from. 0 disables it.
    double min_legible_height_px = 0.0;

    void validate() const;
};

// ---- truth-driven oracle backends ----
// Each call takes an explicit per-call seed so parallel schedules reproduce
// serial results; the draw depends only on (cfg.seed, call_seed, item).

// Inverse-encodes every truth digit box at its best-IoU free anchor with a
// 0.95 score on the digit category; corrupts each digit category with
// probability digit_error_rate. Boxes with zero IoU against every anchor
// fall back to the nearest-center anchor and bump *anchor_fallbacks.
ocr::RawHeadOutput oracle_ocr(const synth::FrameTruth& truth, const ocr::HeadGeometry& geom,
                              const BackendConfig& cfg, uint64_t call_seed,
                              int* anchor_fallbacks = nullptr);

// Truth side when centered, background otherwise; flips to a random other
// category with probability detect_error_rate. Confidence 0.9.
CardDetectLabel oracle_card_detect(const synth::FrameTruth& truth, const BackendConfig& cfg,
                                   uint64_t call_seed);

FakeMediaLabel oracle_fake_media(const synth::FrameTruth& truth, const BackendConfig& cfg,
                                 uint64_t call_seed);

// Truth logo marks; with probability tamper_error_rate drops one mark or
// swaps one logo_id.
TamperObservation oracle_tamper(const synth::FrameTruth& truth, const BackendConfig& cfg,
                                uint64_t call_seed);

// ---- pixel-reading template recognizer ----

// Slides the shared 5x7 digit glyphs over the frame at a ladder of sizes;
// normalized cross-correlation peaks above 0.7 become digit scores at their
// best-matching (cell, anchor) with inverse-encoded regression.
// Deterministic.
ocr::RawHeadOutput template_recognize(const synth::RasterFrame& frame,
                                      const ocr::HeadGeometry& geom);

// Truth transformed through a zoom crop: boxes are mapped into the crop and
// rescaled to the canonical input size (the oracle view of a zoomed re-run).
synth::FrameTruth zoom_truth(const synth::FrameTruth& truth, const RectF& crop,
                             const ocr::HeadGeometry& geom);

// ---- simulated devices ----

enum class ModelKind { ocr, card_detect, fake_media, tamper };

struct DeviceProfile {
    std::string name;
    double ocr_ms = 100.0;
    double card_detect_ms = 20.0;
    double fake_media_ms = 20.0;
    double tamper_ms = 25.0;
    int workers = 4;
    double camera_fps = 30.0;
    // Calibration knobs (see profiles/devices.json): per-worker latency
    // multiplier under parallel mode, and the extra cost of re-acquiring a
    // fresh frame in blocking mode.
    double parallel_latency_scale = 1.0;
    double capture_overhead_ms = 0.0;
    std::string note;

    double latency_ms(ModelKind kind) const;
};

// Profile latency plus seeded jitter of +/- jitter_frac (default 5%).
double simulate_latency(const DeviceProfile& profile, ModelKind kind, uint64_t call_seed,
                        double jitter_frac = 0.05);

// Profile file: JSON array of objects {name, ocr_ms, card_detect_ms,
// fake_media_ms, tamper_ms, workers, camera_fps, ...}.
std::vector<DeviceProfile> load_profiles(const std::filesystem::path& path);
DeviceProfile find_profile(const std::vector<DeviceProfile>& profiles, const std::string& name);
// Built-in set matching profiles/devices.json, used when no file is given.
const std::vector<DeviceProfile>& builtin_profiles();

// ---- backend bundle consumed by the pipeline ----

struct FrameContext {
    const synth::ScanSession* session = nullptr;
    size_t frame_index = 0;
    std::optional<RectF> zoom_crop;  // frame coords; OCR-only
};

struct Backends {
    std::function<ocr::RawHeadOutput(const FrameContext&, uint64_t)> ocr;
    std::function<CardDetectLabel(const FrameContext&, uint64_t)> card_detect;
    std::function<FakeMediaLabel(const FrameContext&, uint64_t)> fake_media;
    std::function<TamperObservation(const FrameContext&, uint64_t)> tamper;
    std::shared_ptr<std::atomic<long>> ocr_anchor_fallbacks =
        std::make_shared<std::atomic<long>>(0);
};

Backends make_oracle_backends(const BackendConfig& cfg,
                              const ocr::HeadGeometry& geom = ocr::HeadGeometry{});
// Template matching for OCR (renders the frame raster on demand); oracle for
// the classifier heads.
Backends make_template_backends(const BackendConfig& cfg,
                                const ocr::HeadGeometry& geom = ocr::HeadGeometry{});

}  // namespace cardpipe::infer
