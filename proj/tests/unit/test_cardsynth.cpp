#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cardpipe/cardsynth.hpp"
#include "cardpipe/glyphs.hpp"
#include "cardpipe/image_io.hpp"
#include "cardpipe/luhn.hpp"

using namespace cardpipe;
using namespace cardpipe::synth;

namespace {

CardSpec sample_spec(Layout layout = Layout::quad_groups) {
    CardSpec spec;
    spec.layout = layout;
    spec.pan = layout == Layout::quad_groups ? "4111111111111111" : "371111111111114";
    spec.expiry = ocr::Expiry{8, 26};
    spec.digit_height_px = 30;
    spec.number_side_logos.push_back({LogoId::visa, {0.74, 0.06, 0.20, 0.16}});
    spec.back_side_logos.push_back({LogoId::bank_a, {0.06, 0.70, 0.22, 0.18}});
    return spec;
}

SceneSpec centered_scene(Side side = Side::number) {
    SceneSpec scene;
    scene.side = side;
    scene.centered = true;
    scene.card_rect = RectF::from_center(300.0, 187.5, 540.0, 540.0 / 1.6);
    return scene;
}

}  // namespace

TEST_CASE("render_frame produces one truth box per digit") {
    const auto [frame, truth] = render_frame(sample_spec(), centered_scene(), 7);
    CHECK(frame.width == 600);
    CHECK(frame.height == 375);
    CHECK(truth.side == Side::number);
    CHECK(truth.media == Media::physical);
    // 16 PAN digits + 4 expiry digits
    CHECK(truth.digit_boxes.size() == 20);
    int pan_digits = 0;
    for (const auto& b : truth.digit_boxes)
        if (b.rect.h > 0.8 * truth.digit_boxes.front().rect.h) ++pan_digits;
    CHECK(truth.logo_marks.size() == 1);
    CHECK(truth.logo_marks[0].logo_id == LogoId::visa);
    CHECK(truth.session_pan == "4111111111111111");
}

TEST_CASE("non-number side has no digit boxes") {
    const auto [frame, truth] = render_frame(sample_spec(), centered_scene(Side::non_number), 7);
    CHECK(truth.digit_boxes.empty());
    CHECK(truth.side == Side::non_number);
    CHECK(truth.logo_marks.size() == 1);
    CHECK(truth.logo_marks[0].logo_id == LogoId::bank_a);
}

TEST_CASE("rendering is deterministic") {
    const auto a = render_frame(sample_spec(), centered_scene(), 7);
    const auto b = render_frame(sample_spec(), centered_scene(), 7);
    CHECK(a.first == b.first);
    const auto c = render_frame(sample_spec(), centered_scene(), 8);
    CHECK_FALSE(a.first == c.first);  // different seed, different grain
}

TEST_CASE("degenerate card_rect is an error") {
    SceneSpec scene = centered_scene();
    scene.centered = false;
    scene.card_rect = {100.0, 100.0, 0.0, 50.0};
    CHECK_THROWS_AS(render_frame(sample_spec(), scene, 1), std::invalid_argument);
}

TEST_CASE("off-frame cards clip their truth boxes") {
    SceneSpec scene;
    scene.side = Side::number;
    scene.centered = false;
    scene.card_rect = RectF::from_center(620.0, 187.5, 540.0, 337.5);  // half off-frame
    const auto [frame, truth] = render_frame(sample_spec(), scene, 3);
    CHECK(truth.digit_boxes.size() < 20);
    for (const auto& b : truth.digit_boxes) {
        CHECK(b.rect.x >= 0.0);
        CHECK(b.rect.x2() <= 600.0);
        CHECK(b.rect.area() > 0.0);
    }
}

TEST_CASE("truth boxes re-read as the annotated digit (clean renders)") {
    for (const FontStyle style : {FontStyle::flat, FontStyle::embossed}) {
        for (const Layout layout : {Layout::quad_groups, Layout::amex}) {
            CardSpec spec = sample_spec(layout);
            spec.font_style = style;
            const auto [frame, truth] = render_frame(spec, centered_scene(), 11);
            const auto gray = to_gray(frame);
            for (const auto& b : truth.digit_boxes) {
                const int x0 = static_cast<int>(b.rect.x);
                const int y0 = static_cast<int>(b.rect.y);
                const int w = static_cast<int>(b.rect.w);
                const int h = static_cast<int>(b.rect.h);
                const Eigen::ArrayXXf patch = gray.block(y0, x0, h, w);
                CHECK(identify_glyph(patch) == b.digit);
            }
        }
    }
}

TEST_CASE("screen media adds scanlines, label stays authoritative") {
    CardSpec spec = sample_spec();
    SceneSpec scene = centered_scene();
    scene.media = Media::screen;
    const auto [screen_frame, truth] = render_frame(spec, scene, 5);
    CHECK(truth.media == Media::screen);
    scene.media = Media::physical;
    const auto [plain_frame, truth2] = render_frame(spec, scene, 5);
    // scanline rows differ from the physical render
    bool differs = false;
    for (int x = 0; x < 600 && !differs; ++x)
        differs = screen_frame.px(x, 0)[0] != plain_frame.px(x, 0)[0];
    CHECK(differs);
}

TEST_CASE("generate_session structure") {
    SessionScript script;
    script.entry_frames = 10;
    script.centered_frames = 60;
    script.give_up_ms = 16000;
    const auto session = generate_session(sample_spec(), script, 42);

    SUBCASE("frame count and spacing") {
        CHECK(session.frames.size() == 70);
        for (size_t i = 1; i < session.frames.size(); ++i)
            CHECK(session.frames[i].t_ms - session.frames[i - 1].t_ms ==
                  doctest::Approx(1000.0 / 30.0));
    }
    SUBCASE("entry frames are off-center, then centered number side") {
        CHECK_FALSE(session.frames.front().truth.centered);
        CHECK(session.frames.back().truth.centered);
        CHECK(session.frames.back().truth.side == Side::number);
    }
    SUBCASE("same seed reproduces the session, different seed does not") {
        const auto again = generate_session(sample_spec(), script, 42);
        REQUIRE(again.frames.size() == session.frames.size());
        for (size_t i = 0; i < session.frames.size(); ++i) {
            CHECK(again.frames[i].scene.card_rect.x == session.frames[i].scene.card_rect.x);
            CHECK(again.frames[i].render_seed == session.frames[i].render_seed);
        }
        const auto other = generate_session(sample_spec(), script, 43);
        bool same = true;
        for (size_t i = 0; i < session.frames.size(); ++i)
            same = same && other.frames[i].scene.card_rect.x == session.frames[i].scene.card_rect.x;
        CHECK_FALSE(same);
    }
    SUBCASE("both sides adds non-number frames") {
        SessionScript two = script;
        two.both_sides = true;
        two.back_frames = 30;
        const auto session2 = generate_session(sample_spec(), two, 42);
        bool has_back = false;
        for (const auto& f : session2.frames)
            has_back = has_back || (f.truth.side == Side::non_number && f.truth.centered);
        CHECK(has_back);
        CHECK(session2.give_up_ms == 16000);  // script value wins over the default
    }
    SUBCASE("default give-up horizons") {
        SessionScript d;
        d.give_up_ms = 0;
        CHECK(generate_session(sample_spec(), d, 1).give_up_ms == 16000);
        d.both_sides = true;
        CHECK(generate_session(sample_spec(), d, 1).give_up_ms == 21000);
    }
}

TEST_CASE("generated PANs pass Luhn and a fixed seed reproduces the manifest") {
    const auto dir = std::filesystem::temp_directory_path() / "cardpipe_corpus_test";
    std::filesystem::remove_all(dir);
    CorpusRanges ranges;
    ranges.fill_to_give_up = false;
    ranges.centered_frames = 12;
    ranges.media = {Media::screen};
    const auto manifest_path = generate_corpus(5, ranges, 99, dir, /*write_rasters=*/false);

    std::ifstream is(manifest_path);
    std::string manifest_a((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    REQUIRE_FALSE(manifest_a.empty());

    const auto ids = list_corpus_sessions(dir);
    CHECK(ids.size() == 5);
    for (const auto& id : ids) {
        const auto session = load_session(dir, id);
        CHECK(ocr::luhn_valid(session.expected.pan));
        for (const auto& f : session.frames) CHECK(f.truth.media == Media::screen);
    }

    // regenerate into a second directory: manifest bytes must match modulo dir
    const auto dir2 = std::filesystem::temp_directory_path() / "cardpipe_corpus_test2";
    std::filesystem::remove_all(dir2);
    generate_corpus(5, ranges, 99, dir2, false);
    std::ifstream is2(dir2 / "manifest.json");
    std::string manifest_b((std::istreambuf_iterator<char>(is2)),
                           std::istreambuf_iterator<char>());
    CHECK(manifest_a == manifest_b);

    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("corpus with rasters writes readable PNG frames") {
    const auto dir = std::filesystem::temp_directory_path() / "cardpipe_corpus_png";
    std::filesystem::remove_all(dir);
    CorpusRanges ranges;
    ranges.fill_to_give_up = false;
    ranges.centered_frames = 2;
    generate_corpus(1, ranges, 5, dir, /*write_rasters=*/true);

    const auto session = load_session(dir, "s0000");
    // find the first frame file and compare against a regeneration
    std::ifstream is(dir / "manifest.json");
    nlohmann::json m;
    is >> m;
    const auto files = m.at("sessions")[0].at("frames");
    REQUIRE_FALSE(files.empty());
    const auto png = read_image(dir / files[0].get<std::string>());
    const auto regen = render_session_frame(session, 0);
    CHECK(png == regen);
    std::filesystem::remove_all(dir);
}

TEST_CASE("png and ppm round trips") {
    const auto [frame, truth] = render_frame(sample_spec(), centered_scene(), 21);
    const auto dir = std::filesystem::temp_directory_path();
    write_png(dir / "cardpipe_rt.png", frame);
    CHECK(read_png(dir / "cardpipe_rt.png") == frame);
    write_ppm(dir / "cardpipe_rt.ppm", frame);
    CHECK(read_ppm(dir / "cardpipe_rt.ppm") == frame);
    std::filesystem::remove(dir / "cardpipe_rt.png");
    std::filesystem::remove(dir / "cardpipe_rt.ppm");
}

TEST_CASE("spec validation") {
    CardSpec spec = sample_spec();
    SUBCASE("pan/layout mismatch") {
        spec.pan = "371111111111114";
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SUBCASE("luhn-invalid pan") {
        spec.pan = "4111111111111112";
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SUBCASE("digit height bounds") {
        spec.digit_height_px = 7;
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
        spec.digit_height_px = 81;
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SUBCASE("logo outside the card") {
        spec.number_side_logos.push_back({LogoId::visa, {0.9, 0.9, 0.3, 0.3}});
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SUBCASE("centered scene with a small card") {
        SceneSpec scene;
        scene.centered = true;
        scene.card_rect = RectF::from_center(300.0, 187.5, 120.0, 75.0);
        CHECK_THROWS_AS(scene.validate(), std::invalid_argument);
    }
}
