// cardpipe: synthetic card-scan generation, decoding, scan simulation,
// benchmarking and verdicts from one binary. Machine-readable output goes to
// stdout, logs to stderr; nothing is written outside --out.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cardpipe/bench.hpp"
#include "cardpipe/cardsynth.hpp"
#include "cardpipe/headio.hpp"
#include "cardpipe/infer.hpp"
#include "cardpipe/pipeline.hpp"
#include "cardpipe/verdict.hpp"

namespace fs = std::filesystem;
using namespace cardpipe;

namespace {

std::vector<infer::DeviceProfile> resolve_profiles(const std::string& profile_file) {
    if (!profile_file.empty()) return infer::load_profiles(profile_file);
    if (const char* dir = std::getenv("CARDPIPE_PROFILE_DIR")) {
        const fs::path p = fs::path(dir) / "devices.json";
        if (fs::exists(p)) return infer::load_profiles(p);
    }
    const fs::path local = fs::path("profiles") / "devices.json";
    if (fs::exists(local)) return infer::load_profiles(local);
    return infer::builtin_profiles();
}

infer::BackendConfig parse_error_rates(const std::string& rates, uint64_t seed) {
    infer::BackendConfig cfg;
    cfg.seed = seed;
    if (rates.empty()) return cfg;
    double v[4] = {0, 0, 0, 0};
    if (std::sscanf(rates.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4)
        throw CLI::ValidationError("--error-rates expects eps_d,eps_c,eps_m,eps_t");
    cfg.digit_error_rate = v[0];
    cfg.detect_error_rate = v[1];
    cfg.media_error_rate = v[2];
    cfg.tamper_error_rate = v[3];
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

std::vector<pipeline::Mode> parse_modes(const std::string& csv) {
    std::vector<pipeline::Mode> modes;
    std::string token;
    std::stringstream ss(csv);
    while (std::getline(ss, token, ',')) modes.push_back(pipeline::mode_from_string(token));
    if (modes.empty()) throw CLI::ValidationError("--modes: empty list");
    return modes;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cardpipe: card-scan verification pipeline tools"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scan corpus");
    int synth_count = 10;
    uint64_t synth_seed = 0;
    std::string synth_out;
    std::string synth_media = "physical";
    double synth_both_sides = 0.0;
    double synth_fps = 30.0;
    bool synth_no_rasters = false;
    bool synth_short = false;
    synth_cmd->add_option("--count", synth_count, "number of sessions")->check(CLI::Range(1, 100000));
    synth_cmd->add_option("--seed", synth_seed, "corpus seed")->required();
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--media", synth_media, "media mix: one of physical,screen,paper,cardboard or 'mixed'");
    synth_cmd->add_option("--both-sides", synth_both_sides, "fraction of two-side sessions");
    synth_cmd->add_option("--fps", synth_fps, "camera cadence");
    synth_cmd->add_flag("--no-rasters", synth_no_rasters, "write recipes and truth only, no PNG frames");
    synth_cmd->add_flag("--short-sessions", synth_short, "do not fill sessions to the give-up horizon");

    // ---- scan ----
    auto* scan_cmd = app.add_subcommand("scan", "run one scan session through the pipeline");
    std::string scan_corpus, scan_session, scan_profile = "pixel-2-like", scan_profile_file;
    std::string scan_mode = "parallel", scan_backend = "oracle", scan_rates, scan_out;
    uint64_t scan_seed = 0;
    int scan_workers = 0;
    bool scan_unmasked = false, scan_wall = false;
    scan_cmd->add_option("--corpus", scan_corpus, "corpus directory")->required();
    scan_cmd->add_option("--session", scan_session, "session id")->required();
    scan_cmd->add_option("--profile", scan_profile, "device profile name");
    scan_cmd->add_option("--profile-file", scan_profile_file, "profile JSON file");
    scan_cmd->add_option("--seed", scan_seed, "scan seed");
    scan_cmd->add_option("--mode", scan_mode, "blocking|buffered|parallel");
    scan_cmd->add_option("--workers", scan_workers, "override worker count");
    scan_cmd->add_option("--error-rates", scan_rates, "eps_d,eps_c,eps_m,eps_t");
    scan_cmd->add_option("--backend", scan_backend, "oracle|template");
    scan_cmd->add_option("--out", scan_out, "write the scan report here as well");
    scan_cmd->add_flag("--unmasked", scan_unmasked, "print the full PAN");
    scan_cmd->add_flag("--wall-clock", scan_wall, "run in real time instead of virtual time");

    // ---- decode ----
    auto* decode_cmd = app.add_subcommand("decode", "decode a DDHEAD01 tensor fixture");
    std::string decode_file;
    double decode_threshold = 0.5, decode_iou = 0.45;
    bool decode_unmasked = false;
    decode_cmd->add_option("file", decode_file, "DDHEAD01 tensor file")->required();
    decode_cmd->add_option("--score-threshold", decode_threshold, "score threshold");
    decode_cmd->add_option("--iou", decode_iou, "NMS IoU threshold");
    decode_cmd->add_flag("--unmasked", decode_unmasked, "print full PAN candidates");

    // ---- bench ----
    auto* bench_cmd = app.add_subcommand("bench", "sweeps, mode comparison, useful frames");
    std::string bench_corpus, bench_profiles_csv, bench_modes = "blocking,buffered,parallel";
    std::string bench_profile_file, bench_out, bench_rates = "0.15,0.02,0.05,0.05";
    std::string bench_kind = "sweep";
    uint64_t bench_seed = 0;
    bool bench_fleet = false;
    bench_cmd->add_option("--corpus", bench_corpus, "corpus directory (sweep/useful-frames)");
    bench_cmd->add_option("--profiles", bench_profiles_csv, "comma-separated profile names (default: all)");
    bench_cmd->add_option("--profile-file", bench_profile_file, "profile JSON file");
    bench_cmd->add_option("--modes", bench_modes, "comma-separated modes");
    bench_cmd->add_option("--seed", bench_seed, "bench seed")->required();
    bench_cmd->add_option("--out", bench_out, "output directory")->required();
    bench_cmd->add_option("--error-rates", bench_rates, "eps_d,eps_c,eps_m,eps_t");
    bench_cmd->add_option("--kind", bench_kind, "sweep|compare-modes|useful-frames");
    bench_cmd->add_flag("--fleet", bench_fleet, "one (profile,mode) pair per session");

    // ---- verdict ----
    auto* verdict_cmd = app.add_subcommand("verdict", "apply server-side rules to a scan report");
    std::string verdict_report, verdict_expected, verdict_out;
    verdict_cmd->add_option("--report", verdict_report, "scan report JSON")->required();
    verdict_cmd->add_option("--expected", verdict_expected, "expected-card JSON")->required();
    verdict_cmd->add_option("--out", verdict_out, "write verdict JSON here as well");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) {
            synth::CorpusRanges ranges;
            ranges.camera_fps = synth_fps;
            ranges.both_sides_fraction = synth_both_sides;
            ranges.fill_to_give_up = !synth_short;
            if (synth_media == "mixed")
                ranges.media = {synth::Media::physical, synth::Media::screen,
                                synth::Media::paper, synth::Media::cardboard};
            else
                ranges.media = {synth::media_from_string(synth_media)};
            const auto manifest = synth::generate_corpus(synth_count, ranges, synth_seed,
                                                         synth_out, !synth_no_rasters);
            std::cerr << "wrote " << synth_count << " sessions\n";
            std::cout << manifest.string() << "\n";
            return 0;
        }

        if (*scan_cmd) {
            const auto profiles = resolve_profiles(scan_profile_file);
            const auto profile = infer::find_profile(profiles, scan_profile);
            const auto session = synth::load_session(scan_corpus, scan_session);
            auto backend_cfg = parse_error_rates(scan_rates, scan_seed);
            const auto backends = scan_backend == "template"
                                      ? infer::make_template_backends(backend_cfg)
                                      : infer::make_oracle_backends(backend_cfg);
            pipeline::PipelineConfig cfg;
            cfg.mode = pipeline::mode_from_string(scan_mode);
            cfg.workers = scan_workers > 0 ? scan_workers : profile.workers;
            cfg.clock = scan_wall ? pipeline::ClockKind::wall_clock
                                  : pipeline::ClockKind::virtual_clock;
            cfg.seed = scan_seed;
            const auto result = pipeline::run_scan(session, backends, profile, cfg);
            const auto report = pipeline::scan_report_json(result, !scan_unmasked);
            std::cout << report.dump(1) << "\n";
            if (!scan_out.empty()) {
                // the file payload keeps the full PAN: it is the API-call body
                const auto payload = verdict::payload_from_result(result);
                write_text(scan_out, verdict::serialize_payload(payload));
            }
            return 0;
        }

        if (*decode_cmd) {
            const auto hf = ocr::read_head_file(decode_file);
            ocr::DecodeParams params;
            params.score_threshold = decode_threshold;
            params.iou_threshold = decode_iou;
            const auto dec = ocr::run_decode(hf.output, hf.geometry, params);
            nlohmann::ordered_json j;
            auto boxes = nlohmann::ordered_json::array();
            for (const auto& b : dec.boxes)
                boxes.push_back({{"digit", b.digit},
                                 {"score", b.score},
                                 {"cx", b.center_x},
                                 {"cy", b.center_y},
                                 {"w", b.width},
                                 {"h", b.height}});
            j["boxes"] = std::move(boxes);
            if (dec.pan) {
                j["pan"] = decode_unmasked ? dec.pan->digits
                                           : pipeline::mask_pan(dec.pan->digits);
                j["pan_luhn_valid"] = dec.pan->luhn_ok;
                j["confidence"] = dec.pan->confidence;
            } else {
                j["pan"] = nullptr;
            }
            if (dec.expiry)
                j["expiry"] = {{"month", dec.expiry->month}, {"year", dec.expiry->year}};
            else
                j["expiry"] = nullptr;
            std::cout << j.dump(1) << "\n";
            if (!dec.pan) std::cerr << "no candidates\n";
            return 0;
        }

        if (*bench_cmd) {
            const auto all_profiles = resolve_profiles(bench_profile_file);
            std::vector<infer::DeviceProfile> profiles;
            if (bench_profiles_csv.empty()) {
                profiles = all_profiles;
            } else {
                std::stringstream ss(bench_profiles_csv);
                std::string name;
                while (std::getline(ss, name, ','))
                    profiles.push_back(infer::find_profile(all_profiles, name));
            }
            const auto modes = parse_modes(bench_modes);
            auto backend_cfg = parse_error_rates(bench_rates, bench_seed);
            fs::create_directories(bench_out);

            if (bench_kind == "compare-modes") {
                // pure throughput measurement: no error injection unless asked
                if (bench_cmd->get_option("--error-rates")->count() == 0)
                    backend_cfg = parse_error_rates("", bench_seed);
                const auto backends = infer::make_oracle_backends(backend_cfg);
                synth::CardSpec spec;
                spec.pan = "4111111111111111";
                spec.expiry = ocr::Expiry{8, 26};
                spec.number_side_logos.push_back({synth::LogoId::visa, {0.74, 0.06, 0.2, 0.16}});
                std::string csv = "profile,mode,fps\n";
                for (const auto& profile : profiles) {
                    synth::SessionScript script;
                    script.camera_fps = profile.camera_fps;
                    script.entry_frames = 0;
                    script.centered_frames =
                        static_cast<int>(std::ceil(20.0 * profile.camera_fps));
                    script.give_up_ms = 21000;
                    const auto session =
                        synth::generate_session(spec, script, derive_seed(bench_seed, 0x20));
                    for (const auto& mf :
                         bench::compare_modes(profile, session, backends, bench_seed, modes)) {
                        char buf[128];
                        std::snprintf(buf, sizeof buf, "%s,%s,%.4f\n", profile.name.c_str(),
                                      pipeline::to_string(mf.mode), mf.fps);
                        csv += buf;
                    }
                }
                write_text(fs::path(bench_out) / "modes.csv", csv);
                std::cout << csv;
                return 0;
            }

            if (bench_kind == "useful-frames") {
                if (bench_corpus.empty())
                    throw CLI::ValidationError("--corpus required for useful-frames");
                bench::CorpusReader corpus(bench_corpus);
                const auto backends = infer::make_oracle_backends(backend_cfg);
                std::vector<double> fps_list;
                for (int f = 1; f <= 10; ++f) fps_list.push_back(f);
                std::map<double, std::pair<long, long>> agg;  // fps -> (useful, processed)
                for (size_t i = 0; i < corpus.session_ids().size(); ++i) {
                    const auto session = corpus.session(i);
                    for (const auto& row :
                         bench::useful_frames(session, fps_list, backends, {},
                                              derive_seed(bench_seed, i))) {
                        agg[row.fps].first += row.useful;
                        agg[row.fps].second += row.processed;
                    }
                }
                std::string csv = "fps,processed,useful,fraction\n";
                for (const auto& [fps, uv] : agg) {
                    char buf[128];
                    std::snprintf(buf, sizeof buf, "%.1f,%ld,%ld,%.4f\n", fps, uv.second,
                                  uv.first,
                                  uv.second ? double(uv.first) / uv.second : 0.0);
                    csv += buf;
                }
                write_text(fs::path(bench_out) / "useful_frames.csv", csv);
                std::cout << csv;
                return 0;
            }

            if (bench_corpus.empty()) throw CLI::ValidationError("--corpus required for sweep");
            bench::SweepSpec spec;
            spec.profiles = profiles;
            spec.modes = modes;
            spec.corpus = bench_corpus;
            spec.backend = backend_cfg;
            spec.seed = bench_seed;
            spec.pairing =
                bench_fleet ? bench::SweepSpec::Pairing::fleet : bench::SweepSpec::Pairing::cross;
            const auto rows = bench::run_sweep(spec);
            const auto csv = bench::sweep_csv(
                rows, {{"seed", std::to_string(bench_seed)},
                       {"error_rates", bench_rates},
                       {"duration_includes_vote_window", "true"}});
            write_text(fs::path(bench_out) / "sweep.csv", csv);
            const auto stats = bench::bucket_by_fps(rows);
            write_text(fs::path(bench_out) / "buckets.json",
                       bench::bucket_json(stats).dump(1) + "\n");
            write_text(fs::path(bench_out) / "curves.tsv", bench::curve_tsv(rows));
            std::cout << bench::bucket_json(stats).dump(1) << "\n";
            return 0;
        }

        if (*verdict_cmd) {
            std::ifstream rin(verdict_report);
            if (!rin) throw std::runtime_error("cannot open report: " + verdict_report);
            std::string report_bytes((std::istreambuf_iterator<char>(rin)),
                                     std::istreambuf_iterator<char>());
            const auto parsed = verdict::parse_payload(report_bytes);
            if (parsed.unknown_fields > 0)
                std::cerr << "ignored " << parsed.unknown_fields << " unknown payload fields\n";

            std::ifstream ein(verdict_expected);
            if (!ein) throw std::runtime_error("cannot open expected: " + verdict_expected);
            nlohmann::json ej;
            ein >> ej;
            verdict::ExpectedCard expected;
            expected.pan_on_record = ej.at("pan_on_record").get<std::string>();
            if (ej.contains("issuer_logo") && !ej.at("issuer_logo").is_null())
                expected.issuer_logo =
                    synth::logo_from_string(ej.at("issuer_logo").get<std::string>());
            verdict::RulesConfig rules;
            if (ej.contains("required_sides")) {
                rules.required_sides.clear();
                for (const auto& s : ej.at("required_sides"))
                    rules.required_sides.insert(s.get<std::string>());
            }
            const auto v = verdict::decide(parsed.payload, expected, rules);
            const auto out = verdict::verdict_json(v).dump(1) + "\n";
            std::cout << out;
            if (!verdict_out.empty()) write_text(verdict_out, out);
            switch (v.decision) {
                case verdict::Decision::pass: return 0;
                case verdict::Decision::reject: return 2;
                case verdict::Decision::inconclusive: return 3;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
