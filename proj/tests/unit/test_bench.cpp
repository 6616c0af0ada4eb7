#include <doctest.h>

#include <filesystem>

#include "cardpipe/bench.hpp"

using namespace cardpipe;
using namespace cardpipe::bench;

namespace {

SweepRow row(const char* profile, const char* mode, bool success, double fps,
             double duration = 10000.0) {
    SweepRow r;
    r.profile = profile;
    r.mode = mode;
    r.session_id = "s";
    r.success = success;
    r.fps = fps;
    r.duration_ms = duration;
    r.frames_processed = static_cast<long>(fps * duration / 1000.0);
    return r;
}

std::filesystem::path small_corpus() {
    const auto dir = std::filesystem::temp_directory_path() / "cardpipe_bench_corpus";
    if (!std::filesystem::exists(dir / "manifest.json")) {
        synth::CorpusRanges ranges;
        ranges.fill_to_give_up = false;
        ranges.centered_frames = 40;
        synth::generate_corpus(6, ranges, 1234, dir, /*write_rasters=*/false);
    }
    return dir;
}

}  // namespace

TEST_CASE("bucket_by_fps") {
    SUBCASE("single fast bucket") {
        std::vector<SweepRow> rows(4, row("p", "parallel", true, 5.0));
        const auto stats = bucket_by_fps(rows);
        CHECK(stats.ge2.count == 4);
        CHECK(stats.ge2.success_rate() == doctest::Approx(1.0));
        CHECK(stats.lt1.count == 0);
        CHECK(stats.total() == 4);
    }
    SUBCASE("boundaries: 1 goes to the middle bucket, 2 to the top") {
        std::vector<SweepRow> rows = {row("p", "m", true, 0.99), row("p", "m", true, 1.0),
                                      row("p", "m", true, 1.99), row("p", "m", true, 2.0)};
        const auto stats = bucket_by_fps(rows);
        CHECK(stats.lt1.count == 1);
        CHECK(stats.b1to2.count == 2);
        CHECK(stats.ge2.count == 1);
    }
    SUBCASE("empty input gives zero counts") {
        const auto stats = bucket_by_fps({});
        CHECK(stats.total() == 0);
        CHECK(stats.lt1.success_rate() == 0.0);
    }
    SUBCASE("counts always sum to the total") {
        std::vector<SweepRow> rows;
        Rng rng(55);
        for (int i = 0; i < 100; ++i)
            rows.push_back(row("p", "m", rng.next_bernoulli(0.5), rng.next_in(0.2, 6.0)));
        const auto stats = bucket_by_fps(rows);
        CHECK(stats.lt1.count + stats.b1to2.count + stats.ge2.count == 100);
    }
}

TEST_CASE("sweep csv has the fixed header and metadata comments") {
    const auto csv = sweep_csv({row("lg-k20-like", "blocking", false, 0.9, 16000.0)},
                               {{"seed", "7"}});
    CHECK(csv.find("# seed=7\n") == 0);
    CHECK(csv.find("profile,mode,session_id,success,fps,duration_ms,frames_processed\n") !=
          std::string::npos);
    CHECK(csv.find("lg-k20-like,blocking,s,0,0.9000,16000.0,14") != std::string::npos);
}

TEST_CASE("run_sweep over a small corpus is reproducible and sane") {
    SweepSpec spec;
    spec.profiles = {infer::find_profile(infer::builtin_profiles(), "iphone-se-like")};
    spec.modes = {pipeline::Mode::buffered};
    spec.corpus = small_corpus();
    spec.backend.digit_error_rate = 0.0;
    spec.seed = 9;
    const auto rows = run_sweep(spec);
    CHECK(rows.size() == 6);
    int successes = 0;
    for (const auto& r : rows) successes += r.success;
    CHECK(successes == 6);  // clean corpus, fast device

    const auto rows2 = run_sweep(spec);
    CHECK(sweep_csv(rows, {}) == sweep_csv(rows2, {}));
}

TEST_CASE("fleet pairing assigns one combo per session") {
    SweepSpec spec;
    spec.profiles = {infer::find_profile(infer::builtin_profiles(), "iphone-se-like"),
                     infer::find_profile(infer::builtin_profiles(), "pixel-2-like")};
    spec.modes = {pipeline::Mode::blocking, pipeline::Mode::parallel};
    spec.corpus = small_corpus();
    spec.seed = 9;
    spec.pairing = SweepSpec::Pairing::fleet;
    const auto rows = run_sweep(spec);
    CHECK(rows.size() == 6);  // one row per session
    // sessions round-robin over the 4 combos
    CHECK(rows[0].profile == "iphone-se-like");
    CHECK(rows[0].mode == "blocking");
    CHECK(rows[1].profile == "iphone-se-like");
    CHECK(rows[1].mode == "parallel");
    CHECK(rows[2].profile == "pixel-2-like");
    CHECK(rows[2].mode == "blocking");
}

TEST_CASE("useful_frames") {
    synth::CardSpec spec;
    spec.pan = "4111111111111111";
    spec.digit_height_px = 30;
    spec.number_side_logos.push_back({synth::LogoId::visa, {0.74, 0.06, 0.2, 0.16}});
    synth::SessionScript script;
    script.entry_frames = 0;
    script.centered_frames = 300;  // 10 s at 30 fps
    auto session = synth::generate_session(spec, script, 77);
    session.id = "uf";

    SUBCASE("clean backend gives fraction 1.0 at every fps") {
        infer::BackendConfig bc;
        const auto backends = infer::make_oracle_backends(bc);
        const auto rows = useful_frames(session, {1, 2, 5, 10}, backends, {}, 3);
        for (const auto& r : rows) {
            CHECK(r.fraction == doctest::Approx(1.0));
            CHECK(r.useful == r.processed);
        }
        // processed scales roughly with fps
        CHECK(rows[3].processed > 8 * rows[0].processed);
    }
    SUBCASE("fps above the native cadence is an error") {
        infer::BackendConfig bc;
        const auto backends = infer::make_oracle_backends(bc);
        CHECK_THROWS_AS(useful_frames(session, {31.0}, backends, {}, 3),
                        std::invalid_argument);
    }
    SUBCASE("fixed per-frame error keeps the fraction roughly constant") {
        infer::BackendConfig bc;
        bc.digit_error_rate = 0.15;
        const auto backends = infer::make_oracle_backends(bc);
        std::vector<double> fps_list;
        for (int f = 1; f <= 10; ++f) fps_list.push_back(f);
        // aggregate over a few sessions to tame Monte Carlo noise
        double min_frac = 1.0, max_frac = 0.0;
        std::map<double, std::pair<long, long>> agg;
        for (uint64_t s = 0; s < 6; ++s) {
            auto sess = synth::generate_session(spec, script, 100 + s);
            sess.id = "uf" + std::to_string(s);
            for (const auto& r : useful_frames(sess, fps_list, backends, {}, s)) {
                agg[r.fps].first += r.useful;
                agg[r.fps].second += r.processed;
            }
        }
        for (const auto& [fps, uv] : agg) {
            const double frac = double(uv.first) / double(uv.second);
            min_frac = std::min(min_frac, frac);
            max_frac = std::max(max_frac, frac);
        }
        CHECK(max_frac - min_frac < 0.1);
        CHECK(max_frac < 0.5);  // error injection clearly active
    }
}

TEST_CASE("slower devices succeed less often at equal error rates") {
    const auto dir = std::filesystem::temp_directory_path() / "cardpipe_bench_speed";
    if (!std::filesystem::exists(dir / "manifest.json")) {
        synth::CorpusRanges ranges;  // give-up-bounded sessions
        synth::generate_corpus(40, ranges, 777, dir, /*write_rasters=*/false);
    }
    infer::DeviceProfile fast;
    fast.name = "fast";
    fast.ocr_ms = 100.0;
    fast.card_detect_ms = 15.0;
    fast.fake_media_ms = 15.0;
    fast.tamper_ms = 15.0;
    infer::DeviceProfile slow = fast;
    slow.name = "slow";
    slow.ocr_ms = 2000.0;

    SweepSpec spec;
    spec.profiles = {fast, slow};
    spec.modes = {pipeline::Mode::buffered};
    spec.corpus = dir;
    spec.backend.digit_error_rate = 0.15;
    spec.seed = 31;
    const auto rows = run_sweep(spec);
    int fast_ok = 0, slow_ok = 0;
    for (const auto& r : rows)
        (r.profile == "fast" ? fast_ok : slow_ok) += r.success;
    CHECK(fast_ok > slow_ok);  // fewer voting-window reads, weaker correction
}

TEST_CASE("compare_modes preserves mode ordering") {
    synth::CardSpec spec;
    spec.pan = "5500005555555559";
    spec.digit_height_px = 30;
    synth::SessionScript script;
    script.entry_frames = 0;
    script.centered_frames = 20 * 30;
    script.give_up_ms = 21000;
    auto session = synth::generate_session(spec, script, 5);
    session.id = "cm";
    infer::BackendConfig bc;
    const auto backends = infer::make_oracle_backends(bc);
    const auto profile = infer::find_profile(infer::builtin_profiles(), "pixel-2-like");
    const auto rows = compare_modes(profile, session, backends, 11);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].mode == pipeline::Mode::blocking);
    CHECK(rows[2].fps >= rows[1].fps);
    CHECK(rows[1].fps >= rows[0].fps);
}

TEST_CASE("bucket json shape") {
    const auto stats = bucket_by_fps({row("p", "m", true, 0.5), row("p", "m", false, 3.0)});
    const auto j = bucket_json(stats);
    CHECK(j.at("total") == 2);
    CHECK(j.at("buckets").size() == 3);
    CHECK(j.at("buckets")[0].at("bucket") == "<1");
    CHECK(j.at("buckets")[0].at("success_rate") == 1.0);
}
