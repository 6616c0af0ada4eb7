#include <doctest.h>

#include "cardpipe/pipeline.hpp"
#include "cardpipe/verdict.hpp"

using namespace cardpipe;
using namespace cardpipe::pipeline;

namespace {

synth::CardSpec quad_spec(const std::string& pan = "4111111111111111") {
    synth::CardSpec spec;
    spec.pan = pan;
    spec.expiry = ocr::Expiry{8, 26};
    spec.digit_height_px = 30;
    spec.number_side_logos.push_back({synth::LogoId::visa, {0.74, 0.06, 0.20, 0.16}});
    spec.back_side_logos.push_back({synth::LogoId::bank_a, {0.06, 0.70, 0.22, 0.18}});
    return spec;
}

synth::ScanSession make_session(int entry, int centered, uint64_t seed,
                                bool both_sides = false, double fps = 30.0,
                                int give_up_ms = 16000) {
    synth::SessionScript script;
    script.camera_fps = fps;
    script.entry_frames = entry;
    script.centered_frames = centered;
    script.both_sides = both_sides;
    script.back_frames = both_sides ? centered : 0;
    script.give_up_ms = give_up_ms;
    auto session = synth::generate_session(quad_spec(), script, seed);
    session.id = "test-session";
    return session;
}

infer::DeviceProfile fast_profile() {
    infer::DeviceProfile p;
    p.name = "fast-test";
    p.ocr_ms = 40.0;
    p.card_detect_ms = 8.0;
    p.fake_media_ms = 8.0;
    p.tamper_ms = 10.0;
    p.workers = 4;
    p.camera_fps = 30.0;
    return p;
}

ocr::PanCandidate cand(const std::string& digits, double conf) {
    ocr::PanCandidate c;
    c.digits = digits;
    c.confidence = conf;
    c.luhn_ok = true;
    return c;
}

}  // namespace

TEST_CASE("FrameBuffer keeps the two newest frames") {
    FrameBuffer<int> buf(2);
    buf.push(1);
    buf.push(2);
    buf.push(3);
    CHECK(buf.size() == 2);
    auto a = buf.try_pop();
    REQUIRE(a.has_value());
    CHECK(*a == 3);
    auto b = buf.try_pop();
    REQUIRE(b.has_value());
    CHECK(*b == 2);
    CHECK_FALSE(buf.try_pop().has_value());
}

TEST_CASE("vote_pan") {
    SUBCASE("majority wins") {
        const auto v = vote_pan({cand("4111111111111111", 0.9), cand("4111111111111111", 0.8),
                                 cand("5500005555555559", 0.95)});
        REQUIRE(v.has_value());
        CHECK(v->digits == "4111111111111111");
    }
    SUBCASE("tie broken by summed confidence") {
        const auto v = vote_pan({cand("5500005555555559", 0.8), cand("4111111111111111", 0.9)});
        REQUIRE(v.has_value());
        CHECK(v->digits == "4111111111111111");
    }
    SUBCASE("full tie falls back to lexicographic order") {
        const auto v = vote_pan({cand("5500005555555559", 0.9), cand("4111111111111111", 0.9)});
        REQUIRE(v.has_value());
        CHECK(v->digits == "4111111111111111");
    }
    SUBCASE("empty input yields nothing") { CHECK_FALSE(vote_pan({}).has_value()); }
    SUBCASE("order invariance") {
        std::vector<ocr::PanCandidate> cs = {cand("4111111111111111", 0.7),
                                             cand("5500005555555559", 0.9),
                                             cand("4111111111111111", 0.8)};
        const auto a = vote_pan(cs);
        std::reverse(cs.begin(), cs.end());
        const auto b = vote_pan(cs);
        REQUIRE(a.has_value());
        REQUIRE(b.has_value());
        CHECK(a->digits == b->digits);
    }
}

TEST_CASE("select_completion_frames picks top confidence with timestamp dedupe") {
    std::vector<SavedFrame> pool;
    for (int i = 0; i < 10; ++i)
        pool.push_back({static_cast<size_t>(i), 100.0 * i, 0.5 + 0.04 * i});
    auto sel = select_completion_frames(pool, 6);
    CHECK(sel.size() == 6);
    CHECK(sel.front().confidence == doctest::Approx(0.86));

    pool.clear();
    for (int i = 0; i < 3; ++i) pool.push_back({static_cast<size_t>(i), 50.0 * i, 0.9});
    sel = select_completion_frames(pool, 6);
    CHECK(sel.size() == 3);

    // duplicate timestamps collapse
    pool.push_back({7, 100.0, 0.95});
    sel = select_completion_frames(pool, 6);
    CHECK(sel.size() == 3);
}

TEST_CASE("run_completion votes media per frame within budget") {
    const auto session = make_session(0, 10, 3);
    infer::BackendConfig bc;
    const auto backends = infer::make_oracle_backends(bc);
    const auto profile = fast_profile();

    PipelineConfig cfg;
    cfg.workers = profile.workers;

    SUBCASE("five frames give five votes") {
        std::vector<SavedFrame> frames;
        for (size_t i = 0; i < 5; ++i) frames.push_back({i, 33.3 * i, 0.9});
        const auto out = run_completion(session, frames, backends, profile, cfg);
        CHECK(out.frames_processed == 5);
        CHECK(out.media_votes.physical == 5);
        REQUIRE(out.tamper.size() == 1);
        CHECK(out.tamper[0].logo_id == synth::LogoId::visa);
        CHECK(out.tamper[0].frames == 5);
    }
    SUBCASE("mixed media frames count per category (3 screen / 2 physical)") {
        // hand-built session whose frames disagree on the medium
        synth::ScanSession mixed;
        mixed.id = "mixed";
        mixed.camera_fps = 30.0;
        mixed.expected = quad_spec();
        for (int i = 0; i < 5; ++i) {
            synth::SceneSpec scene;
            scene.side = synth::Side::number;
            scene.centered = true;
            scene.media = i < 3 ? synth::Media::screen : synth::Media::physical;
            scene.card_rect = RectF::from_center(300.0, 187.5, 540.0, 337.5);
            synth::ScanFrame f;
            f.t_ms = i * 33.0;
            f.scene = scene;
            f.truth = synth::layout_truth(mixed.expected, scene);
            mixed.frames.push_back(std::move(f));
        }
        std::vector<SavedFrame> frames;
        for (size_t i = 0; i < 5; ++i) frames.push_back({i, 33.0 * i, 0.9});
        const auto out = run_completion(mixed, frames, backends, profile, cfg);
        CHECK(out.media_votes.screen == 3);
        CHECK(out.media_votes.physical == 2);
        CHECK(out.media_votes.paper == 0);
    }
    SUBCASE("no frames, no votes") {
        const auto out = run_completion(session, {}, backends, profile, cfg);
        CHECK(out.frames_processed == 0);
        CHECK(out.media_votes.total() == 0);
    }
    SUBCASE("a 1 ms budget with slow models processes at most `workers` frames") {
        infer::DeviceProfile slow = profile;
        slow.fake_media_ms = 100.0;
        slow.tamper_ms = 100.0;
        PipelineConfig tight = cfg;
        tight.completion_budget_ms = 1.0;
        tight.mode = Mode::parallel;
        std::vector<SavedFrame> frames;
        for (size_t i = 0; i < 6; ++i) frames.push_back({i, 33.3 * i, 0.9});
        const auto out = run_completion(session, frames, backends, slow, tight);
        CHECK(out.frames_processed <= slow.workers);
        CHECK(out.frames_processed >= 1);
    }
}

TEST_CASE("run_scan on a clean session recovers the PAN") {
    const auto session = make_session(10, 120, 5);
    infer::BackendConfig bc;
    const auto backends = infer::make_oracle_backends(bc);
    PipelineConfig cfg;
    cfg.seed = 11;
    const auto res = run_scan(session, backends, fast_profile(), cfg);

    CHECK_FALSE(res.gave_up);
    REQUIRE(res.final_pan.has_value());
    CHECK(*res.final_pan == "4111111111111111");
    REQUIRE(res.expiry.has_value());
    CHECK(res.expiry->month == 8);
    CHECK(res.sides_seen == std::vector<std::string>{"number"});
    CHECK(res.frames_processed > 0);
    CHECK(res.fps == doctest::Approx(res.frames_processed * 1000.0 / res.duration_ms));
    CHECK(res.media_votes.physical > 0);
    // duration covers the vote window
    CHECK(res.duration_ms >= cfg.vote_window_ms);
}

TEST_CASE("background-only session gives up with no candidates") {
    // entry frames only: the card never centers
    auto session = make_session(40, 0, 5);
    infer::BackendConfig bc;
    const auto backends = infer::make_oracle_backends(bc);
    PipelineConfig cfg;
    cfg.seed = 3;
    const auto res = run_scan(session, backends, fast_profile(), cfg);
    CHECK(res.gave_up);
    CHECK_FALSE(res.final_pan.has_value());
    CHECK(res.media_votes.total() == 0);
    // short session: the user stopped when frames ran out, well before the
    // give-up horizon
    CHECK(res.duration_ms == doctest::Approx(40 * 1000.0 / 30.0).epsilon(0.01));
}

TEST_CASE("give-up duration uses the horizon when the session spans it") {
    const auto session = make_session(0, 480, 15);  // 16 s at 30 fps
    infer::BackendConfig bc;
    bc.digit_error_rate = 0.999;  // keep valid reads essentially impossible
    const auto backends = infer::make_oracle_backends(bc);
    PipelineConfig cfg;
    cfg.seed = 2;
    const auto res = run_scan(session, backends, fast_profile(), cfg);
    if (res.gave_up) CHECK(res.duration_ms == doctest::Approx(16000.0));
}

TEST_CASE("slow OCR bounds the processed frame count") {
    // 2 s per OCR pass, 16 s horizon: at most 8 frames can finish
    const auto session = make_session(0, 480, 7);
    infer::DeviceProfile slow = fast_profile();
    slow.ocr_ms = 2000.0;
    slow.card_detect_ms = 10.0;
    infer::BackendConfig bc;
    bc.digit_error_rate = 0.6;  // keep the scan from ending at the first read
    const auto backends = infer::make_oracle_backends(bc);
    PipelineConfig cfg;
    cfg.mode = Mode::buffered;
    cfg.seed = 1;
    const auto res = run_scan(session, backends, slow, cfg);
    CHECK(res.frames_processed <= 8);
}

TEST_CASE("mode ordering holds on identical inputs") {
    infer::DeviceProfile profile = fast_profile();
    profile.ocr_ms = 300.0;
    profile.card_detect_ms = 50.0;
    infer::BackendConfig bc;
    const auto backends = infer::make_oracle_backends(bc);
    for (uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        const auto session = make_session(0, 20 * 30, seed, false, 30.0, 21000);
        long processed[3];
        int i = 0;
        for (const Mode mode : {Mode::blocking, Mode::buffered, Mode::parallel}) {
            PipelineConfig cfg;
            cfg.mode = mode;
            cfg.workers = profile.workers;
            cfg.exhaust_session = true;
            cfg.seed = 42;  // identical across modes
            processed[i++] = run_scan(session, backends, profile, cfg).frames_processed;
        }
        CHECK(processed[2] >= processed[1]);
        CHECK(processed[1] >= processed[0]);
    }
}

TEST_CASE("staleness: processed frames were among the capacity newest at pop") {
    // With capacity 2 and one consumer at ~340 ms per frame against a 30 fps
    // feed, consecutive processed frames must be at most `capacity` behind
    // the newest produced frame at pop time. We verify via timestamps: the
    // gap between a frame's production time and its processing start never
    // exceeds capacity camera periods once the pipeline is saturated.
    const auto session = make_session(0, 90, 13);
    infer::DeviceProfile profile = fast_profile();
    profile.ocr_ms = 300.0;
    infer::BackendConfig bc;
    bc.digit_error_rate = 0.9;
    const auto backends = infer::make_oracle_backends(bc);
    PipelineConfig cfg;
    cfg.mode = Mode::buffered;
    cfg.exhaust_session = true;
    cfg.seed = 2;
    const auto res = run_scan(session, backends, profile, cfg);
    // consumer at ~2.9 fps against 30 fps production: far fewer processed
    // than produced, possible only because stale frames get evicted
    CHECK(res.frames_processed < res.frames_produced / 4);
}

TEST_CASE("virtual clock runs are deterministic, including parallel mode") {
    const auto session = make_session(5, 60, 21);
    infer::BackendConfig bc;
    bc.digit_error_rate = 0.2;
    const auto backends = infer::make_oracle_backends(bc);
    for (const Mode mode : {Mode::buffered, Mode::parallel}) {
        PipelineConfig cfg;
        cfg.mode = mode;
        cfg.workers = 4;
        cfg.seed = 77;
        const auto a = run_scan(session, backends, fast_profile(), cfg);
        const auto b = run_scan(session, backends, fast_profile(), cfg);
        CHECK(a.final_pan == b.final_pan);
        CHECK(a.frames_processed == b.frames_processed);
        CHECK(a.duration_ms == b.duration_ms);
        CHECK(a.fps == b.fps);
        CHECK(verdict::serialize_payload(verdict::payload_from_result(a)) ==
              verdict::serialize_payload(verdict::payload_from_result(b)));
    }
}

TEST_CASE("voting redundancy beats first-read-wins under digit noise") {
    const auto truth = synth::layout_truth(
        quad_spec(), synth::SceneSpec{synth::Side::number,
                                      RectF::from_center(300.0, 187.5, 540.0, 337.5), true,
                                      synth::Media::physical, 0.0, 0.0});
    infer::BackendConfig bc;
    bc.digit_error_rate = 0.1;
    const ocr::HeadGeometry geom;

    const int sessions = 300;
    int voted_correct = 0, first_correct = 0;
    uint64_t call = 0;
    for (int s = 0; s < sessions; ++s) {
        std::vector<ocr::PanCandidate> enrolled;
        while (enrolled.size() < 5) {
            const auto dec =
                ocr::run_decode(infer::oracle_ocr(truth, geom, bc, call++), geom, {});
            if (dec.pan && dec.pan->luhn_ok) enrolled.push_back(*dec.pan);
        }
        if (enrolled.front().digits == "4111111111111111") ++first_correct;
        const auto v = vote_pan(enrolled);
        if (v && v->digits == "4111111111111111") ++voted_correct;
    }
    // voting with 5 reads is far more reliable than the first read alone
    CHECK(voted_correct >= static_cast<int>(sessions * 0.97));
    CHECK(first_correct <= static_cast<int>(sessions * 0.90));
    CHECK(voted_correct > first_correct);
}

TEST_CASE("voting success is monotone in the number of candidates") {
    const auto truth = synth::layout_truth(
        quad_spec(), synth::SceneSpec{synth::Side::number,
                                      RectF::from_center(300.0, 187.5, 540.0, 337.5), true,
                                      synth::Media::physical, 0.0, 0.0});
    infer::BackendConfig bc;
    bc.digit_error_rate = 0.1;
    const ocr::HeadGeometry geom;
    const int sessions = 500;

    double prev_rate = -1.0;
    uint64_t call = 1000000;
    for (const size_t n_candidates : {1u, 3u, 5u}) {
        int correct = 0;
        for (int s = 0; s < sessions; ++s) {
            std::vector<ocr::PanCandidate> enrolled;
            while (enrolled.size() < n_candidates) {
                const auto dec =
                    ocr::run_decode(infer::oracle_ocr(truth, geom, bc, call++), geom, {});
                if (dec.pan && dec.pan->luhn_ok) enrolled.push_back(*dec.pan);
            }
            const auto v = vote_pan(enrolled);
            if (v && v->digits == "4111111111111111") ++correct;
        }
        const double rate = correct / double(sessions);
        CHECK(rate >= prev_rate - 0.02);  // non-decreasing up to MC noise
        prev_rate = rate;
    }
    CHECK(prev_rate > 0.97);
}

TEST_CASE("two-side sessions route frames to per-side pools") {
    const auto session = make_session(5, 90, 31, /*both_sides=*/true, 30.0, 21000);
    infer::BackendConfig bc;
    const auto backends = infer::make_oracle_backends(bc);
    PipelineConfig cfg;
    cfg.seed = 4;
    const auto res = run_scan(session, backends, fast_profile(), cfg);
    CHECK(res.sides_seen == std::vector<std::string>{"number", "non_number"});
    REQUIRE(res.final_pan.has_value());
    // completion saw both the front network logo and the back bank logo
    bool saw_visa = false, saw_bank = false;
    for (const auto& t : res.tamper_observations) {
        saw_visa = saw_visa || t.logo_id == synth::LogoId::visa;
        saw_bank = saw_bank || t.logo_id == synth::LogoId::bank_a;
    }
    CHECK(saw_visa);
    CHECK(saw_bank);
}

TEST_CASE("backend failures skip frames without aborting the scan") {
    const auto session = make_session(0, 60, 9);
    infer::BackendConfig bc;
    auto backends = infer::make_oracle_backends(bc);
    const auto inner = backends.ocr;
    int calls = 0;
    backends.ocr = [&, inner](const infer::FrameContext& ctx, uint64_t seed) {
        if (++calls % 3 == 0) throw std::runtime_error("injected backend failure");
        return inner(ctx, seed);
    };
    PipelineConfig cfg;
    cfg.seed = 8;
    const auto res = run_scan(session, backends, fast_profile(), cfg);
    CHECK(res.frames_skipped > 0);
    REQUIRE(res.final_pan.has_value());
    CHECK(*res.final_pan == "4111111111111111");
}

TEST_CASE("zoom fires at most once and recovers small fonts") {
    auto spec = quad_spec();
    spec.digit_height_px = 12;
    synth::SessionScript script;
    script.entry_frames = 0;
    script.centered_frames = 90;
    script.coverage = 0.75;
    script.give_up_ms = 16000;
    auto session = synth::generate_session(spec, script, 55);
    session.id = "zoom-session";
    REQUIRE(session.frames[0].truth.digit_boxes.front().rect.h < 14.0);

    infer::BackendConfig bc;
    bc.min_legible_height_px = 14.0;
    const auto backends = infer::make_oracle_backends(bc);
    PipelineConfig cfg;
    cfg.seed = 6;
    const auto res = run_scan(session, backends, fast_profile(), cfg);
    CHECK(res.zoom_used);
    REQUIRE(res.final_pan.has_value());
    CHECK(*res.final_pan == spec.pan);
}

TEST_CASE("wall clock smoke run") {
    const auto session = make_session(2, 30, 77, false, 60.0, 4000);
    infer::BackendConfig bc;
    const auto backends = infer::make_oracle_backends(bc);
    infer::DeviceProfile p = fast_profile();
    p.ocr_ms = 5.0;
    p.card_detect_ms = 1.0;
    p.fake_media_ms = 1.0;
    p.tamper_ms = 1.0;
    PipelineConfig cfg;
    cfg.mode = Mode::parallel;
    cfg.workers = 2;
    cfg.clock = ClockKind::wall_clock;
    cfg.vote_window_ms = 100.0;
    cfg.seed = 12;
    const auto res = run_scan(session, backends, p, cfg);
    REQUIRE(res.final_pan.has_value());
    CHECK(*res.final_pan == "4111111111111111");
}

TEST_CASE("scan report json masks the PAN by default") {
    ScanResult res;
    res.session_id = "s1";
    res.final_pan = "4111111111111111";
    res.mode = "parallel";
    res.profile = "fast-test";
    const auto masked = scan_report_json(res, true);
    CHECK(masked.at("final_pan").get<std::string>() == "411111******1111");
    const auto full = scan_report_json(res, false);
    CHECK(full.at("final_pan").get<std::string>() == "4111111111111111");
    CHECK(mask_pan("4111111111111111") == "411111******1111");
    CHECK(mask_pan("371111111111114") == "371111*****1114");
}
