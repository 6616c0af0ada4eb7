#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cardpipe/cardsynth.hpp"
#include "cardpipe/infer.hpp"
#include "cardpipe/pipeline.hpp"

namespace cardpipe::bench {

// Parses the corpus manifest once and regenerates sessions from their
// recipes on demand.
class CorpusReader {
public:
    explicit CorpusReader(const std::filesystem::path& dir);

    const std::vector<std::string>& session_ids() const { return ids_; }
    synth::ScanSession session(const std::string& id) const;
    synth::ScanSession session(size_t index) const;

private:
    struct Recipe {
        std::string id;
        synth::CardSpec spec;
        synth::SessionScript script;
        uint64_t seed = 0;
    };
    std::vector<std::string> ids_;
    std::vector<Recipe> recipes_;
};

struct SweepSpec {
    std::vector<infer::DeviceProfile> profiles;
    std::vector<pipeline::Mode> modes;
    std::filesystem::path corpus;
    infer::BackendConfig backend;  // error rates; eps_d = 0.15 on the standard corpus
    uint64_t seed = 0;
    // cross = every (profile, mode, session) combination; fleet = each
    // session runs on one (profile, mode) pair round-robin, like a fleet of
    // users each holding one device.
    enum class Pairing { cross, fleet };
    Pairing pairing = Pairing::cross;
    pipeline::PipelineConfig base_config;
};

struct SweepRow {
    std::string profile;
    std::string mode;
    std::string session_id;
    bool success = false;
    double fps = 0.0;
    double duration_ms = 0.0;
    long frames_processed = 0;
};

// success = the scan extracted a Luhn-valid PAN equal to the session truth
// before the give-up horizon.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);

// CSV with `# key=value` metadata lines, then the fixed header
// profile,mode,session_id,success,fps,duration_ms,frames_processed.
std::string sweep_csv(const std::vector<SweepRow>& rows,
                      const std::vector<std::pair<std::string, std::string>>& metadata);

struct BucketStats {
    struct Bucket {
        long count = 0;
        long successes = 0;
        double duration_sum = 0.0;

        double success_rate() const { return count ? double(successes) / count : 0.0; }
        double mean_duration_ms() const { return count ? duration_sum / count : 0.0; }
    };
    Bucket lt1;     // fps < 1
    Bucket b1to2;   // 1 <= fps < 2
    Bucket ge2;     // fps >= 2

    long total() const { return lt1.count + b1to2.count + ge2.count; }
};

BucketStats bucket_by_fps(const std::vector<SweepRow>& rows);
nlohmann::ordered_json bucket_json(const BucketStats& stats);

struct UsefulRow {
    double fps = 0.0;
    long processed = 0;
    long useful = 0;
    double fraction = 0.0;
};

// Subsamples the session at each target fps and counts frames whose
// assembled PAN equals the session truth. A frame keeps the same backend
// draw at every fps, the way replaying one recorded video at different
// sampling rates would. Throws when a target fps exceeds the native cadence.
std::vector<UsefulRow> useful_frames(const synth::ScanSession& session,
                                     const std::vector<double>& fps_list,
                                     const infer::Backends& backends,
                                     const ocr::DecodeParams& decode, uint64_t seed);

struct ModeFps {
    pipeline::Mode mode;
    double fps = 0.0;
};

// Runs the session through every mode with exhaust_session set (pure
// throughput, like driving the main loop from a fixed camera feed).
std::vector<ModeFps> compare_modes(const infer::DeviceProfile& profile,
                                   const synth::ScanSession& session,
                                   const infer::Backends& backends, uint64_t seed,
                                   const std::vector<pipeline::Mode>& modes = {
                                       pipeline::Mode::blocking, pipeline::Mode::buffered,
                                       pipeline::Mode::parallel});

// gnuplot-ready TSV (fps vs success rate per profile/mode pair)
std::string curve_tsv(const std::vector<SweepRow>& rows);

}  // namespace cardpipe::bench
