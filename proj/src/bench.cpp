#include "cardpipe/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace cardpipe::bench {

CorpusReader::CorpusReader(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("corpus: missing manifest.json in " + dir.string());
    json m;
    is >> m;
    for (const auto& e : m.at("sessions")) {
        Recipe r;
        r.id = e.at("session_id").get<std::string>();
        if (!e.contains("recipe"))
            throw std::runtime_error("corpus: session " + r.id + " has no recipe");
        const auto& rec = e.at("recipe");
        // reuse the cardsynth JSON layout through load_session-compatible keys
        const auto& spec = rec.at("spec");
        r.spec.pan = spec.at("pan").get<std::string>();
        if (!spec.at("expiry").is_null())
            r.spec.expiry = ocr::Expiry{spec.at("expiry").at("month").get<int>(),
                                        spec.at("expiry").at("year").get<int>()};
        r.spec.layout = synth::layout_from_string(spec.at("layout").get<std::string>());
        r.spec.font_style =
            synth::font_style_from_string(spec.at("font_style").get<std::string>());
        r.spec.digit_height_px = spec.at("digit_height_px").get<int>();
        auto logos_from = [](const json& arr) {
            std::vector<synth::LogoMark> out;
            for (const auto& mk : arr)
                out.push_back({synth::logo_from_string(mk.at("logo_id").get<std::string>()),
                               {mk.at("position").at("x").get<double>(),
                                mk.at("position").at("y").get<double>(),
                                mk.at("position").at("w").get<double>(),
                                mk.at("position").at("h").get<double>()}});
            return out;
        };
        r.spec.number_side_logos = logos_from(spec.at("number_side_logos"));
        r.spec.back_side_logos = logos_from(spec.at("back_side_logos"));

        const auto& sc = rec.at("script");
        r.script.camera_fps = sc.at("camera_fps").get<double>();
        r.script.entry_frames = sc.at("entry_frames").get<int>();
        r.script.centered_frames = sc.at("centered_frames").get<int>();
        r.script.flip_frames = sc.at("flip_frames").get<int>();
        r.script.back_frames = sc.at("back_frames").get<int>();
        r.script.exit_frames = sc.at("exit_frames").get<int>();
        r.script.jitter_px = sc.at("jitter_px").get<double>();
        r.script.both_sides = sc.at("both_sides").get<bool>();
        r.script.coverage = sc.at("coverage").get<double>();
        r.script.media = synth::media_from_string(sc.at("media").get<std::string>());
        r.script.blur_sigma = sc.at("blur_sigma").get<double>();
        r.script.noise_amp = sc.at("noise_amp").get<double>();
        r.script.give_up_ms = sc.at("give_up_ms").get<int>();
        r.script.centered_duty = sc.value("centered_duty", 1.0);
        r.script.wobble_period_frames = sc.value("wobble_period_frames", 36);
        r.seed = rec.at("seed").get<uint64_t>();

        ids_.push_back(r.id);
        recipes_.push_back(std::move(r));
    }
}

synth::ScanSession CorpusReader::session(const std::string& id) const {
    for (size_t i = 0; i < ids_.size(); ++i)
        if (ids_[i] == id) return session(i);
    throw std::runtime_error("corpus: session not found: " + id);
}

synth::ScanSession CorpusReader::session(size_t index) const {
    const Recipe& r = recipes_.at(index);
    synth::ScanSession s = synth::generate_session(r.spec, r.script, r.seed);
    s.id = r.id;
    return s;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
    if (spec.profiles.empty() || spec.modes.empty())
        throw std::invalid_argument("run_sweep: profiles and modes must be non-empty");
    CorpusReader corpus(spec.corpus);
    const auto backends = infer::make_oracle_backends(spec.backend);

    std::vector<SweepRow> rows;
    const size_t n = corpus.session_ids().size();
    const size_t ncombo = spec.profiles.size() * spec.modes.size();
    for (size_t si = 0; si < n; ++si) {
        const synth::ScanSession session = corpus.session(si);
        auto run_one = [&](size_t pi, size_t mi, uint64_t run_index) {
            pipeline::PipelineConfig cfg = spec.base_config;
            cfg.mode = spec.modes[mi];
            cfg.workers = spec.profiles[pi].workers;
            cfg.clock = pipeline::ClockKind::virtual_clock;
            cfg.seed = derive_seed(spec.seed, run_index, 0x5CA);
            const auto result =
                pipeline::run_scan(session, backends, spec.profiles[pi], cfg);
            SweepRow row;
            row.profile = spec.profiles[pi].name;
            row.mode = pipeline::to_string(spec.modes[mi]);
            row.session_id = session.id;
            row.success = !result.gave_up && result.final_pan &&
                          *result.final_pan == session.expected.pan;
            row.fps = result.fps;
            row.duration_ms = result.duration_ms;
            row.frames_processed = result.frames_processed;
            rows.push_back(std::move(row));
        };
        if (spec.pairing == SweepSpec::Pairing::fleet) {
            const size_t combo = si % ncombo;
            run_one(combo / spec.modes.size(), combo % spec.modes.size(),
                    static_cast<uint64_t>(si));
        } else {
            for (size_t pi = 0; pi < spec.profiles.size(); ++pi)
                for (size_t mi = 0; mi < spec.modes.size(); ++mi)
                    run_one(pi, mi,
                            static_cast<uint64_t>(si * ncombo + pi * spec.modes.size() + mi));
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows,
                      const std::vector<std::pair<std::string, std::string>>& metadata) {
    std::string out;
    for (const auto& [k, v] : metadata) out += "# " + k + "=" + v + "\n";
    out += "profile,mode,session_id,success,fps,duration_ms,frames_processed\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%.4f,%.1f,%ld\n", r.profile.c_str(),
                      r.mode.c_str(), r.session_id.c_str(), r.success ? 1 : 0, r.fps,
                      r.duration_ms, r.frames_processed);
        out += buf;
    }
    return out;
}

BucketStats bucket_by_fps(const std::vector<SweepRow>& rows) {
    BucketStats stats;
    for (const auto& r : rows) {
        BucketStats::Bucket& b =
            r.fps < 1.0 ? stats.lt1 : (r.fps < 2.0 ? stats.b1to2 : stats.ge2);
        ++b.count;
        if (r.success) ++b.successes;
        b.duration_sum += r.duration_ms;
    }
    return stats;
}

nlohmann::ordered_json bucket_json(const BucketStats& stats) {
    auto one = [](const char* name, const BucketStats::Bucket& b) {
        return ordered_json{{"bucket", name},
                            {"count", b.count},
                            {"success_rate", b.success_rate()},
                            {"mean_duration_ms", b.mean_duration_ms()}};
    };
    ordered_json j;
    j["buckets"] = ordered_json::array(
        {one("<1", stats.lt1), one("1-2", stats.b1to2), one(">=2", stats.ge2)});
    j["total"] = stats.total();
    return j;
}

std::vector<UsefulRow> useful_frames(const synth::ScanSession& session,
                                     const std::vector<double>& fps_list,
                                     const infer::Backends& backends,
                                     const ocr::DecodeParams& decode, uint64_t seed) {
    if (session.frames.empty()) throw std::invalid_argument("useful_frames: empty session");
    const double native = session.camera_fps;
    const double period = 1000.0 / native;
    const double span = session.frames.back().t_ms;

    std::vector<UsefulRow> out;
    for (const double fps : fps_list) {
        if (fps <= 0.0) throw std::invalid_argument("useful_frames: fps must be positive");
        if (fps > native + 1e-9)
            throw std::invalid_argument("useful_frames: fps above native camera cadence");
        UsefulRow row;
        row.fps = fps;
        const double step = 1000.0 / fps;
        size_t last_index = session.frames.size();  // sentinel
        for (double t = 0.0; t <= span + 1e-9; t += step) {
            size_t index = static_cast<size_t>(std::llround(t / period));
            if (index >= session.frames.size()) index = session.frames.size() - 1;
            if (index == last_index) continue;
            last_index = index;
            ++row.processed;
            infer::FrameContext ctx{&session, index, std::nullopt};
            const auto head =
                backends.ocr(ctx, derive_seed(seed, static_cast<uint64_t>(index), 0x0F));
            const auto dec = ocr::run_decode(head, ocr::HeadGeometry{}, decode);
            if (dec.pan && dec.pan->luhn_ok && dec.pan->digits == session.expected.pan)
                ++row.useful;
        }
        row.fraction = row.processed ? static_cast<double>(row.useful) / row.processed : 0.0;
        out.push_back(row);
    }
    return out;
}

std::vector<ModeFps> compare_modes(const infer::DeviceProfile& profile,
                                   const synth::ScanSession& session,
                                   const infer::Backends& backends, uint64_t seed,
                                   const std::vector<pipeline::Mode>& modes) {
    std::vector<ModeFps> out;
    for (const pipeline::Mode mode : modes) {
        pipeline::PipelineConfig cfg;
        cfg.mode = mode;
        cfg.workers = profile.workers;
        cfg.clock = pipeline::ClockKind::virtual_clock;
        cfg.exhaust_session = true;
        cfg.seed = derive_seed(seed, 0xC3);  // identical across modes
        const auto result = pipeline::run_scan(session, backends, profile, cfg);
        out.push_back({mode, result.fps});
    }
    return out;
}

std::string curve_tsv(const std::vector<SweepRow>& rows) {
    struct Agg {
        long count = 0;
        long successes = 0;
        double fps_sum = 0.0;
    };
    std::map<std::pair<std::string, std::string>, Agg> groups;
    for (const auto& r : rows) {
        Agg& a = groups[{r.profile, r.mode}];
        ++a.count;
        if (r.success) ++a.successes;
        a.fps_sum += r.fps;
    }
    std::string out = "profile\tmode\tmean_fps\tsuccess_rate\tsessions\n";
    char buf[256];
    for (const auto& [key, a] : groups) {
        std::snprintf(buf, sizeof buf, "%s\t%s\t%.4f\t%.4f\t%ld\n", key.first.c_str(),
                      key.second.c_str(), a.fps_sum / a.count,
                      static_cast<double>(a.successes) / a.count, a.count);
        out += buf;
    }
    return out;
}

}  // namespace cardpipe::bench
