#include "cardpipe/verdict.hpp"

#include <algorithm>
#include <stdexcept>

#include "cardpipe/luhn.hpp"

using ordered_json = nlohmann::ordered_json;

namespace cardpipe::verdict {

const char* to_string(Network n) {
    switch (n) {
        case Network::visa: return "visa";
        case Network::mastercard: return "mastercard";
        case Network::amex: return "amex";
        case Network::discover: return "discover";
        case Network::unknown: return "unknown";
    }
    return "unknown";
}

const char* to_string(Decision d) {
    switch (d) {
        case Decision::pass: return "pass";
        case Decision::reject: return "reject";
        case Decision::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

Network bin_network(const std::string& pan) {
    if (pan.size() < 6) throw std::invalid_argument("bin_network: need at least 6 digits");
    for (size_t i = 0; i < 6; ++i)
        if (pan[i] < '0' || pan[i] > '9')
            throw std::invalid_argument("bin_network: non-digit in BIN");
    const int p2 = std::stoi(pan.substr(0, 2));
    const int p4 = std::stoi(pan.substr(0, 4));
    if (pan[0] == '4') return Network::visa;
    if (p2 >= 51 && p2 <= 55) return Network::mastercard;
    if (p4 >= 2221 && p4 <= 2720) return Network::mastercard;
    if (p2 == 34 || p2 == 37) return Network::amex;
    if (p4 == 6011 || p2 == 65) return Network::discover;
    return Network::unknown;
}

ScanPayload payload_from_result(const pipeline::ScanResult& result) {
    ScanPayload p;
    p.session_id = result.session_id;
    p.final_pan = result.final_pan;
    p.expiry = result.expiry;
    p.sides_seen = result.sides_seen;
    p.media_votes = result.media_votes;
    p.tamper_objects = result.tamper_observations;
    p.frames_produced = result.frames_produced;
    p.frames_processed = result.frames_processed;
    p.fps = result.fps;
    p.duration_ms = result.duration_ms;
    p.gave_up = result.gave_up;
    p.mode = result.mode;
    p.profile = result.profile;
    return p;
}

namespace {

std::optional<Network> logo_network(synth::LogoId id) {
    switch (id) {
        case synth::LogoId::visa: return Network::visa;
        case synth::LogoId::mastercard: return Network::mastercard;
        case synth::LogoId::amex: return Network::amex;
        case synth::LogoId::discover: return Network::discover;
        default: return std::nullopt;  // bank logos carry no network
    }
}

bool is_bank_logo(synth::LogoId id) { return !logo_network(id).has_value(); }

}  // namespace

Verdict decide(const ScanPayload& payload, const ExpectedCard& expected,
               const RulesConfig& rules) {
    Verdict v;

    // R1: OCR never produced a validated number
    if (!payload.final_pan) {
        v.decision = Decision::inconclusive;
        v.reasons.push_back({"no_ocr", "final_pan", "no Luhn-valid PAN extracted"});
        return v;
    }

    // R2: extracted number does not match the card on record
    if (*payload.final_pan != expected.pan_on_record) {
        v.decision = Decision::reject;
        v.reasons.push_back({"pan_mismatch", "final_pan",
                             pipeline::mask_pan(*payload.final_pan) + " != record " +
                                 pipeline::mask_pan(expected.pan_on_record)});
        return v;
    }

    // R3: fake-media plurality over completion frames
    const auto& mv = payload.media_votes;
    if (mv.total() > 0) {
        struct Entry {
            const char* name;
            int count;
        };
        const Entry entries[4] = {{"physical", mv.physical},
                                  {"screen", mv.screen},
                                  {"paper", mv.paper},
                                  {"cardboard", mv.cardboard}};
        int best = 0, second = 0;
        const char* best_name = "physical";
        for (const auto& e : entries) {
            if (e.count > best) {
                second = best;
                best = e.count;
                best_name = e.name;
            } else if (e.count > second) {
                second = e.count;
            }
        }
        if (best == second) {
            v.decision = Decision::inconclusive;
            v.reasons.push_back({"media_tie", "media_votes", "no plurality among media votes"});
            return v;
        }
        if (std::string(best_name) != "physical") {
            v.decision = Decision::reject;
            v.reasons.push_back({"fake_media", "media_votes",
                                 std::string(best_name) + " plurality (" +
                                     std::to_string(best) + " of " +
                                     std::to_string(mv.total()) + " frames)"});
            return v;
        }
    }

    // R4: observed logos must be consistent with the BIN and expected issuer
    const Network net = bin_network(*payload.final_pan);
    for (const auto& obj : payload.tamper_objects) {
        if (obj.frames < rules.min_tamper_frames) continue;
        if (const auto logo_net = logo_network(obj.logo_id)) {
            if (net != Network::unknown && *logo_net != net) {
                v.decision = Decision::reject;
                v.reasons.push_back({"tamper_inconsistent", "tamper_objects",
                                     std::string(synth::to_string(obj.logo_id)) +
                                         " logo on a " + to_string(net) + " BIN"});
                return v;
            }
        } else if (expected.issuer_logo && is_bank_logo(obj.logo_id) &&
                   obj.logo_id != *expected.issuer_logo) {
            v.decision = Decision::reject;
            v.reasons.push_back({"tamper_inconsistent", "tamper_objects",
                                 std::string(synth::to_string(obj.logo_id)) +
                                     " logo conflicts with expected issuer " +
                                     synth::to_string(*expected.issuer_logo)});
            return v;
        }
    }

    // R5: both sides (or whatever the config requires) must have been seen
    for (const auto& side : rules.required_sides) {
        if (std::find(payload.sides_seen.begin(), payload.sides_seen.end(), side) ==
            payload.sides_seen.end()) {
            v.decision = Decision::inconclusive;
            v.reasons.push_back({"missing_side", "sides_seen", "missing side: " + side});
            return v;
        }
    }

    v.decision = Decision::pass;
    return v;
}

namespace {

ordered_json payload_to_json(const ScanPayload& p) {
    ordered_json j;
    j["session_id"] = p.session_id;
    if (p.final_pan)
        j["final_pan"] = *p.final_pan;
    else
        j["final_pan"] = nullptr;
    if (p.expiry)
        j["expiry"] = {{"month", p.expiry->month}, {"year", p.expiry->year}};
    else
        j["expiry"] = nullptr;
    j["sides_seen"] = p.sides_seen;
    j["media_votes"] = {{"physical", p.media_votes.physical},
                        {"screen", p.media_votes.screen},
                        {"paper", p.media_votes.paper},
                        {"cardboard", p.media_votes.cardboard}};
    auto tamper = ordered_json::array();
    for (const auto& t : p.tamper_objects)
        tamper.push_back({{"logo_id", synth::to_string(t.logo_id)},
                          {"confidence", t.confidence},
                          {"frames", t.frames}});
    j["tamper_objects"] = std::move(tamper);
    j["frames_produced"] = p.frames_produced;
    j["frames_processed"] = p.frames_processed;
    j["fps"] = p.fps;
    j["duration_ms"] = p.duration_ms;
    j["gave_up"] = p.gave_up;
    j["mode"] = p.mode;
    j["profile"] = p.profile;
    return j;
}

const ordered_json& require_field(const ordered_json& j, const char* name) {
    const auto it = j.find(name);
    if (it == j.end())
        throw std::runtime_error(std::string("payload: missing required field: ") + name);
    return *it;
}

}  // namespace

std::string serialize_payload(const ScanPayload& payload) {
    return payload_to_json(payload).dump(1) + "\n";
}

ParsedPayload parse_payload(const std::string& bytes) {
    ordered_json j;
    try {
        j = ordered_json::parse(bytes);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("payload: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("payload: top level must be an object");

    static const std::set<std::string> known = {
        "session_id", "final_pan", "expiry", "sides_seen", "media_votes", "tamper_objects",
        "frames_produced", "frames_processed", "fps", "duration_ms", "gave_up", "mode",
        "profile"};

    ParsedPayload out;
    for (const auto& kv : j.items())
        if (!known.count(kv.key())) ++out.unknown_fields;

    ScanPayload& p = out.payload;
    try {
        p.session_id = require_field(j, "session_id").get<std::string>();
        const auto& pan = require_field(j, "final_pan");
        if (!pan.is_null()) {
            const auto s = pan.get<std::string>();
            for (char c : s)
                if (c < '0' || c > '9')
                    throw std::runtime_error(
                        "payload: final_pan must be digits only (unmasked)");
            p.final_pan = s;
        }
        const auto& exp = require_field(j, "expiry");
        if (!exp.is_null())
            p.expiry = ocr::Expiry{require_field(exp, "month").get<int>(),
                                   require_field(exp, "year").get<int>()};
        for (const auto& s : require_field(j, "sides_seen"))
            p.sides_seen.push_back(s.get<std::string>());
        const auto& mv = require_field(j, "media_votes");
        p.media_votes.physical = require_field(mv, "physical").get<int>();
        p.media_votes.screen = require_field(mv, "screen").get<int>();
        p.media_votes.paper = require_field(mv, "paper").get<int>();
        p.media_votes.cardboard = require_field(mv, "cardboard").get<int>();
        for (const auto& t : require_field(j, "tamper_objects")) {
            pipeline::TamperSummary ts;
            ts.logo_id = synth::logo_from_string(require_field(t, "logo_id").get<std::string>());
            ts.confidence = require_field(t, "confidence").get<double>();
            ts.frames = require_field(t, "frames").get<int>();
            p.tamper_objects.push_back(ts);
        }
        p.frames_produced = require_field(j, "frames_produced").get<long>();
        p.frames_processed = require_field(j, "frames_processed").get<long>();
        p.fps = require_field(j, "fps").get<double>();
        p.duration_ms = require_field(j, "duration_ms").get<double>();
        p.gave_up = require_field(j, "gave_up").get<bool>();
        p.mode = require_field(j, "mode").get<std::string>();
        p.profile = require_field(j, "profile").get<std::string>();
    } catch (const ordered_json::exception& e) {
        throw std::runtime_error(std::string("payload: malformed field: ") + e.what());
    }
    return out;
}

nlohmann::ordered_json verdict_json(const Verdict& v) {
    ordered_json j;
    j["decision"] = to_string(v.decision);
    auto reasons = ordered_json::array();
    for (const auto& r : v.reasons)
        reasons.push_back({{"rule", r.rule}, {"field", r.field}, {"detail", r.detail}});
    j["reasons"] = std::move(reasons);
    return j;
}

}  // namespace cardpipe::verdict
