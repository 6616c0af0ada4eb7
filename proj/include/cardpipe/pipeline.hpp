#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cardpipe/cardsynth.hpp"
#include "cardpipe/infer.hpp"
#include "cardpipe/ocrdecode.hpp"

namespace cardpipe::pipeline {

enum class Mode { blocking, buffered, parallel };
enum class ClockKind { virtual_clock, wall_clock };
const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

// Bounded LIFO frame buffer: push keeps the newest `capacity` frames and
// evicts the oldest; pop removes and returns the newest. Safe for one
// producer and many consumers in wall-clock mode; the virtual clock drives it
// single-threaded.
template <typename T>
class FrameBuffer {
public:
    explicit FrameBuffer(size_t capacity = 2) : capacity_(capacity) {}

    // returns false when an old entry was evicted
    bool push(T item) {
        std::lock_guard<std::mutex> lock(mu_);
        entries_.push_front(std::move(item));
        bool evicted = false;
        while (entries_.size() > capacity_) {
            entries_.pop_back();
            evicted = true;
        }
        cv_.notify_one();
        return !evicted;
    }

    std::optional<T> try_pop() {
        std::lock_guard<std::mutex> lock(mu_);
        if (entries_.empty()) return std::nullopt;
        T item = std::move(entries_.front());
        entries_.pop_front();
        return item;
    }

    // wall-clock pop: blocks until an item arrives or the buffer is closed
    std::optional<T> pop_wait() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return !entries_.empty() || closed_; });
        if (entries_.empty()) return std::nullopt;
        T item = std::move(entries_.front());
        entries_.pop_front();
        return item;
    }

    void close() {
        std::lock_guard<std::mutex> lock(mu_);
        closed_ = true;
        cv_.notify_all();
    }

    size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return entries_.size();
    }

private:
    size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<T> entries_;
    bool closed_ = false;
};

struct PipelineConfig {
    Mode mode = Mode::parallel;
    int workers = 4;  // parallel mode; blocking/buffered always run one
    double vote_window_ms = 1500.0;
    double completion_budget_ms = 1000.0;
    int completion_max_frames = 6;
    ClockKind clock = ClockKind::virtual_clock;
    ocr::DecodeParams decode;
    double latency_jitter = 0.05;
    uint64_t seed = 0;
    size_t buffer_capacity = 2;
    // Throughput runs: process every session frame through the full main
    // loop instead of stopping after the vote window.
    bool exhaust_session = false;
    // Scan both sides before finishing; unset = inferred from the session.
    std::optional<bool> require_both_sides;

    void validate() const;
};

struct SavedFrame {
    size_t frame_index = 0;
    double t_ms = 0.0;
    double confidence = 0.0;
};

struct MediaVotes {
    int physical = 0;
    int screen = 0;
    int paper = 0;
    int cardboard = 0;

    int& by(synth::Media m);
    int total() const { return physical + screen + paper + cardboard; }
};

struct TamperSummary {
    synth::LogoId logo_id = synth::LogoId::visa;
    double confidence = 0.0;  // max over frames
    int frames = 0;           // completion frames it appeared in
};

struct ScanResult {
    std::string session_id;
    std::optional<std::string> final_pan;  // Luhn-valid when present
    std::optional<ocr::Expiry> expiry;
    std::vector<std::string> sides_seen;  // "number" / "non_number", sorted
    MediaVotes media_votes;
    std::vector<TamperSummary> tamper_observations;  // sorted by logo_id
    long frames_produced = 0;
    long frames_processed = 0;
    long frames_skipped = 0;  // backend failures
    double duration_ms = 0.0;  // main loop, includes the vote window
    double fps = 0.0;          // frames_processed * 1000 / duration_ms
    bool gave_up = false;
    bool zoom_used = false;
    int completion_frames = 0;
    double completion_ms = 0.0;
    std::string mode;
    std::string profile;
};

// Plurality by digit string; ties by summed confidence, then lexicographic.
// Candidates must be Luhn-valid (pipeline enrolls only valid reads).
std::optional<ocr::PanCandidate> vote_pan(const std::vector<ocr::PanCandidate>& candidates);

// Per side, the up-to-max_frames centered frames with the highest card-detect
// confidence, deduplicated by timestamp.
std::vector<SavedFrame> select_completion_frames(const std::vector<SavedFrame>& pool,
                                                 int max_frames);

struct CompletionOutcome {
    MediaVotes media_votes;
    std::vector<TamperSummary> tamper;
    int frames_processed = 0;
    double elapsed_ms = 0.0;
};

// Runs fake-media + tamper on the selected frames within completion_budget_ms
// of virtual time using cfg.workers (parallel mode) or one worker.
CompletionOutcome run_completion(const synth::ScanSession& session,
                                 const std::vector<SavedFrame>& frames,
                                 const infer::Backends& backends,
                                 const infer::DeviceProfile& profile,
                                 const PipelineConfig& cfg);

ScanResult run_scan(const synth::ScanSession& session, const infer::Backends& backends,
                    const infer::DeviceProfile& profile, const PipelineConfig& cfg);

std::string mask_pan(const std::string& pan);

// Scan report (the distilled payload sent to the verdict service).
nlohmann::ordered_json scan_report_json(const ScanResult& result, bool masked);

}  // namespace cardpipe::pipeline
