#include <doctest.h>

#include "cardpipe/verdict.hpp"

using namespace cardpipe;
using namespace cardpipe::verdict;

namespace {

ScanPayload base_payload() {
    ScanPayload p;
    p.session_id = "s0001";
    p.final_pan = "4111111111111111";
    p.expiry = ocr::Expiry{8, 26};
    p.sides_seen = {"number", "non_number"};
    p.media_votes.physical = 5;
    p.tamper_objects.push_back({synth::LogoId::visa, 0.9, 5});
    p.frames_produced = 200;
    p.frames_processed = 60;
    p.fps = 12.0;
    p.duration_ms = 5000.0;
    p.mode = "parallel";
    p.profile = "pixel-2-like";
    return p;
}

ExpectedCard visa_expected() {
    ExpectedCard e;
    e.pan_on_record = "4111111111111111";
    return e;
}

}  // namespace

TEST_CASE("bin_network prefix table") {
    CHECK(bin_network("4111111111111111") == Network::visa);
    CHECK(bin_network("5500005555555559") == Network::mastercard);
    CHECK(bin_network("5100000000000000") == Network::mastercard);
    CHECK(bin_network("2221000000000000") == Network::mastercard);
    CHECK(bin_network("2720990000000000") == Network::mastercard);
    CHECK(bin_network("2220990000000000") == Network::unknown);
    CHECK(bin_network("2721000000000000") == Network::unknown);
    CHECK(bin_network("340000000000000") == Network::amex);
    CHECK(bin_network("370000000000000") == Network::amex);
    CHECK(bin_network("6011000000000000") == Network::discover);
    CHECK(bin_network("6500000000000000") == Network::discover);
    CHECK(bin_network("9999999999999999") == Network::unknown);
    CHECK_THROWS_AS(bin_network("41111"), std::invalid_argument);
    CHECK_THROWS_AS(bin_network("41x111"), std::invalid_argument);
}

TEST_CASE("decide: clean scan passes") {
    const auto v = decide(base_payload(), visa_expected());
    CHECK(v.decision == Decision::pass);
    CHECK(v.reasons.empty());
}

TEST_CASE("decide R1: missing PAN is inconclusive") {
    auto p = base_payload();
    p.final_pan.reset();
    const auto v = decide(p, visa_expected());
    CHECK(v.decision == Decision::inconclusive);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].rule == "no_ocr");
    CHECK(v.reasons[0].field == "final_pan");
}

TEST_CASE("decide R2: wrong PAN rejects") {
    auto p = base_payload();
    p.final_pan = "5500005555555559";
    const auto v = decide(p, visa_expected());
    CHECK(v.decision == Decision::reject);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].rule == "pan_mismatch");
}

TEST_CASE("decide R3: fake-media plurality rejects") {
    auto p = base_payload();
    p.media_votes = {};
    p.media_votes.screen = 3;
    p.media_votes.physical = 2;
    auto v = decide(p, visa_expected());
    CHECK(v.decision == Decision::reject);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].rule == "fake_media");
    CHECK(v.reasons[0].field == "media_votes");

    p.media_votes = {};
    p.media_votes.physical = 3;
    p.media_votes.screen = 2;
    v = decide(p, visa_expected());
    CHECK(v.decision == Decision::pass);

    // tie is inconclusive, not a reject
    p.media_votes = {};
    p.media_votes.physical = 2;
    p.media_votes.screen = 2;
    v = decide(p, visa_expected());
    CHECK(v.decision == Decision::inconclusive);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].rule == "media_tie");

    // paper and cardboard count as fake media too
    p.media_votes = {};
    p.media_votes.paper = 4;
    p.media_votes.physical = 1;
    CHECK(decide(p, visa_expected()).decision == Decision::reject);
}

TEST_CASE("decide R4: BIN vs network logo consistency") {
    auto p = base_payload();
    p.tamper_objects = {{synth::LogoId::mastercard, 0.9, 3}};
    auto v = decide(p, visa_expected());
    CHECK(v.decision == Decision::reject);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].rule == "tamper_inconsistent");

    // a single-frame observation is not enough evidence
    p.tamper_objects = {{synth::LogoId::mastercard, 0.9, 1}};
    CHECK(decide(p, visa_expected()).decision == Decision::pass);

    // matching network logo is fine
    p.tamper_objects = {{synth::LogoId::visa, 0.9, 4}};
    CHECK(decide(p, visa_expected()).decision == Decision::pass);

    // bank logo conflicts only against an expected issuer
    p.tamper_objects = {{synth::LogoId::bank_b, 0.9, 4}};
    CHECK(decide(p, visa_expected()).decision == Decision::pass);
    ExpectedCard with_issuer = visa_expected();
    with_issuer.issuer_logo = synth::LogoId::bank_a;
    v = decide(p, with_issuer);
    CHECK(v.decision == Decision::reject);
    CHECK(v.reasons[0].rule == "tamper_inconsistent");
    p.tamper_objects = {{synth::LogoId::bank_a, 0.9, 4}};
    CHECK(decide(p, with_issuer).decision == Decision::pass);

    // unknown BIN cannot conflict with a network logo
    auto q = base_payload();
    q.final_pan = "9999999999999999";
    ExpectedCard unknown_expected;
    unknown_expected.pan_on_record = "9999999999999999";
    q.tamper_objects = {{synth::LogoId::mastercard, 0.9, 4}};
    CHECK(decide(q, unknown_expected).decision == Decision::pass);
}

TEST_CASE("decide R5: required sides") {
    auto p = base_payload();
    p.sides_seen = {"number"};
    RulesConfig rules;
    rules.required_sides = {"number", "non_number"};
    const auto v = decide(p, visa_expected(), rules);
    CHECK(v.decision == Decision::inconclusive);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].rule == "missing_side");
    CHECK(v.reasons[0].field == "sides_seen");
}

TEST_CASE("rule evaluation is pure") {
    const auto p = base_payload();
    const auto a = decide(p, visa_expected());
    const auto b = decide(p, visa_expected());
    CHECK(a.decision == b.decision);
    CHECK(a.reasons.size() == b.reasons.size());
}

TEST_CASE("payload serialization round trips") {
    const auto p = base_payload();
    const auto bytes = serialize_payload(p);
    const auto parsed = parse_payload(bytes);
    CHECK(parsed.unknown_fields == 0);
    CHECK(parsed.payload.session_id == p.session_id);
    CHECK(parsed.payload.final_pan == p.final_pan);
    REQUIRE(parsed.payload.expiry.has_value());
    CHECK(parsed.payload.expiry->month == 8);
    CHECK(parsed.payload.sides_seen == p.sides_seen);
    CHECK(parsed.payload.media_votes.physical == 5);
    REQUIRE(parsed.payload.tamper_objects.size() == 1);
    CHECK(parsed.payload.tamper_objects[0].frames == 5);
    CHECK(parsed.payload.gave_up == p.gave_up);
    // byte-stable canonical form
    CHECK(serialize_payload(parsed.payload) == bytes);
}

TEST_CASE("payload golden bytes") {
    ScanPayload p;
    p.session_id = "golden";
    p.final_pan = "4111111111111111";
    p.sides_seen = {"number"};
    p.media_votes.physical = 1;
    p.frames_produced = 10;
    p.frames_processed = 5;
    p.fps = 2.5;
    p.duration_ms = 2000.0;
    p.mode = "blocking";
    p.profile = "lg-k20-like";
    const std::string expected = R"({
 "session_id": "golden",
 "final_pan": "4111111111111111",
 "expiry": null,
 "sides_seen": [
  "number"
 ],
 "media_votes": {
  "physical": 1,
  "screen": 0,
  "paper": 0,
  "cardboard": 0
 },
 "tamper_objects": [],
 "frames_produced": 10,
 "frames_processed": 5,
 "fps": 2.5,
 "duration_ms": 2000.0,
 "gave_up": false,
 "mode": "blocking",
 "profile": "lg-k20-like"
}
)";
    CHECK(serialize_payload(p) == expected);
}

TEST_CASE("parse_payload errors name the field") {
    auto p = base_payload();
    auto j = nlohmann::ordered_json::parse(serialize_payload(p));
    j.erase("media_votes");
    CHECK_THROWS_WITH_AS(parse_payload(j.dump()), doctest::Contains("media_votes"),
                         std::runtime_error);

    j = nlohmann::ordered_json::parse(serialize_payload(p));
    j["final_pan"] = "411111******1111";  // masked PANs are not valid payloads
    CHECK_THROWS_AS(parse_payload(j.dump()), std::runtime_error);

    CHECK_THROWS_AS(parse_payload("not json"), std::runtime_error);
    CHECK_THROWS_AS(parse_payload("[1,2,3]"), std::runtime_error);
}

TEST_CASE("unknown extra fields are ignored but counted") {
    auto j = nlohmann::ordered_json::parse(serialize_payload(base_payload()));
    j["future_field"] = 42;
    j["another"] = "ok";
    const auto parsed = parse_payload(j.dump());
    CHECK(parsed.unknown_fields == 2);
    CHECK(parsed.payload.session_id == "s0001");
}
