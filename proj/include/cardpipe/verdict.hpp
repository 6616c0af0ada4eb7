#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cardpipe/pipeline.hpp"

namespace cardpipe::verdict {

enum class Network { visa, mastercard, amex, discover, unknown };
const char* to_string(Network n);

// Network from the leading PAN digits: 4 -> visa; 51-55 or 2221-2720 ->
// mastercard; 34/37 -> amex; 6011 or 65 -> discover; otherwise unknown.
// Throws on inputs shorter than 6 digits.
Network bin_network(const std::string& pan);

// The distilled scan summary sent to the server: ScanResult minus pixels.
struct ScanPayload {
    std::string session_id;
    std::optional<std::string> final_pan;
    std::optional<ocr::Expiry> expiry;
    std::vector<std::string> sides_seen;
    pipeline::MediaVotes media_votes;
    std::vector<pipeline::TamperSummary> tamper_objects;
    long frames_produced = 0;
    long frames_processed = 0;
    double fps = 0.0;
    double duration_ms = 0.0;
    bool gave_up = false;
    std::string mode;
    std::string profile;
};

ScanPayload payload_from_result(const pipeline::ScanResult& result);

struct ExpectedCard {
    std::string pan_on_record;  // Luhn-valid
    std::optional<synth::LogoId> issuer_logo;
};

enum class Decision { pass, reject, inconclusive };
const char* to_string(Decision d);

struct Reason {
    std::string rule;    // rule id, e.g. "fake_media"
    std::string field;   // payload field that triggered it
    std::string detail;
};

struct Verdict {
    Decision decision = Decision::inconclusive;
    std::vector<Reason> reasons;  // >= 1 for reject/inconclusive, empty for pass
};

struct RulesConfig {
    std::set<std::string> required_sides = {"number"};
    // A logo must appear in at least this many completion frames before it
    // can trigger the consistency rule.
    int min_tamper_frames = 2;
};

// Rules evaluated in order with short-circuiting:
//   R1 no final_pan            -> inconclusive(no_ocr)
//   R2 pan != pan_on_record    -> reject(pan_mismatch)
//   R3 media plurality fake    -> reject(fake_media); tie -> inconclusive(media_tie)
//   R4 logo/BIN inconsistency  -> reject(tamper_inconsistent)
//   R5 missing required side   -> inconclusive(missing_side)
//   otherwise                  -> pass
Verdict decide(const ScanPayload& payload, const ExpectedCard& expected,
               const RulesConfig& rules = {});

// Canonical JSON, fixed field order, round-trip lossless.
std::string serialize_payload(const ScanPayload& payload);

struct ParsedPayload {
    ScanPayload payload;
    int unknown_fields = 0;  // ignored extras, count preserved for logging
};
// Throws std::runtime_error naming the field path on malformed input.
ParsedPayload parse_payload(const std::string& bytes);

nlohmann::ordered_json verdict_json(const Verdict& v);

}  // namespace cardpipe::verdict
