#include "cardpipe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <thread>

#include "cardpipe/luhn.hpp"

namespace cardpipe::pipeline {

const char* to_string(Mode m) {
    switch (m) {
        case Mode::blocking: return "blocking";
        case Mode::buffered: return "buffered";
        case Mode::parallel: return "parallel";
    }
    return "blocking";
}

Mode mode_from_string(const std::string& s) {
    if (s == "blocking") return Mode::blocking;
    if (s == "buffered") return Mode::buffered;
    if (s == "parallel") return Mode::parallel;
    throw std::invalid_argument("mode: unknown value '" + s + "'");
}

void PipelineConfig::validate() const {
    if (workers < 1) throw std::invalid_argument("PipelineConfig: workers must be >= 1");
    if (vote_window_ms < 0 || completion_budget_ms < 0)
        throw std::invalid_argument("PipelineConfig: negative window/budget");
    if (completion_max_frames < 0 || completion_max_frames > 6)
        throw std::invalid_argument("PipelineConfig: completion_max_frames out of [0,6]");
    if (buffer_capacity < 1) throw std::invalid_argument("PipelineConfig: buffer capacity");
}

int& MediaVotes::by(synth::Media m) {
    switch (m) {
        case synth::Media::physical: return physical;
        case synth::Media::screen: return screen;
        case synth::Media::paper: return paper;
        case synth::Media::cardboard: return cardboard;
    }
    return physical;
}

std::optional<ocr::PanCandidate> vote_pan(const std::vector<ocr::PanCandidate>& candidates) {
    if (candidates.empty()) return std::nullopt;
    struct Tally {
        int count = 0;
        double conf_sum = 0.0;
        const ocr::PanCandidate* best = nullptr;
    };
    std::map<std::string, Tally> tallies;
    for (const auto& c : candidates) {
        Tally& t = tallies[c.digits];
        ++t.count;
        t.conf_sum += c.confidence;
        if (!t.best || c.confidence > t.best->confidence) t.best = &c;
    }
    const std::pair<const std::string, Tally>* winner = nullptr;
    for (const auto& kv : tallies) {
        if (!winner) {
            winner = &kv;
            continue;
        }
        const Tally& a = kv.second;
        const Tally& b = winner->second;
        if (a.count > b.count || (a.count == b.count && a.conf_sum > b.conf_sum))
            winner = &kv;
        // equal count and conf_sum: map iteration is ascending, keep the
        // lexicographically smaller key already held
    }
    return *winner->second.best;
}

std::vector<SavedFrame> select_completion_frames(const std::vector<SavedFrame>& pool,
                                                 int max_frames) {
    std::vector<SavedFrame> sorted = pool;
    std::sort(sorted.begin(), sorted.end(), [](const SavedFrame& a, const SavedFrame& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.t_ms < b.t_ms;
    });
    std::vector<SavedFrame> out;
    std::set<double> seen_ts;
    for (const auto& f : sorted) {
        if (static_cast<int>(out.size()) >= max_frames) break;
        if (!seen_ts.insert(f.t_ms).second) continue;
        out.push_back(f);
    }
    return out;
}

namespace {

// per-frame stream labels for seed derivation
enum : uint64_t {
    kSeedCdLatency = 1,
    kSeedOcrLatency = 2,
    kSeedZoomLatency = 3,
    kSeedMediaLatency = 4,
    kSeedTamperLatency = 5,
    kSeedCdCall = 11,
    kSeedOcrCall = 12,
    kSeedZoomCall = 13,
    kSeedMediaCall = 14,
    kSeedTamperCall = 15,
};

struct SideState {
    bool seen = false;
    double first_seen_ms = 0.0;
    std::vector<SavedFrame> pool;  // capped at completion_max_frames
};

void pool_insert(std::vector<SavedFrame>& pool, SavedFrame f, int cap) {
    pool.push_back(f);
    std::sort(pool.begin(), pool.end(), [](const SavedFrame& a, const SavedFrame& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.t_ms < b.t_ms;
    });
    if (static_cast<int>(pool.size()) > cap) pool.resize(static_cast<size_t>(cap));
}

std::vector<TamperSummary> merge_tamper(
    const std::vector<infer::TamperObservation>& observations) {
    std::map<synth::LogoId, TamperSummary> merged;
    for (const auto& obs : observations) {
        std::set<synth::LogoId> in_frame;
        for (const auto& o : obs.objects) {
            TamperSummary& s = merged[o.logo_id];
            s.logo_id = o.logo_id;
            s.confidence = std::max(s.confidence, o.confidence);
            if (in_frame.insert(o.logo_id).second) ++s.frames;
        }
    }
    std::vector<TamperSummary> out;
    for (const auto& kv : merged) out.push_back(kv.second);
    return out;
}

std::optional<ocr::Expiry> vote_expiry(const std::vector<ocr::Expiry>& reads) {
    if (reads.empty()) return std::nullopt;
    std::map<std::pair<int, int>, int> counts;
    for (const auto& e : reads) ++counts[{e.month, e.year}];
    std::pair<std::pair<int, int>, int> best{{0, 0}, 0};
    for (const auto& kv : counts)
        if (kv.second > best.second) best = kv;
    return ocr::Expiry{best.first.first, best.first.second};
}

// Latency scale applied per worker when several model instances contend.
double worker_scale(const infer::DeviceProfile& profile, const PipelineConfig& cfg) {
    if (cfg.mode == Mode::parallel && cfg.workers > 1) return profile.parallel_latency_scale;
    return 1.0;
}

// Shared per-scan mutable state (single-threaded under the virtual clock,
// mutex-guarded under the wall clock).
struct ScanState {
    std::vector<ocr::PanCandidate> candidates;
    std::vector<ocr::Expiry> expiry_reads;
    bool vote_opened = false;
    double vote_open_ms = 0.0;
    double vote_close_ms = 0.0;
    SideState sides[2];  // indexed by synth::Side
    bool zoom_used = false;
    std::optional<RectF> zoom_crop;  // persists once triggered
    long processed = 0;
    long skipped = 0;
    std::vector<std::pair<double, bool>> completion_times;  // (t, counted)
};

}  // namespace

CompletionOutcome run_completion(const synth::ScanSession& session,
                                 const std::vector<SavedFrame>& frames,
                                 const infer::Backends& backends,
                                 const infer::DeviceProfile& profile,
                                 const PipelineConfig& cfg) {
    cfg.validate();
    CompletionOutcome out;
    if (frames.empty()) return out;

    const double scale = worker_scale(profile, cfg);
    const int nworkers = cfg.mode == Mode::parallel ? cfg.workers : 1;
    const double budget_end = cfg.completion_budget_ms;
    std::vector<double> free_at(static_cast<size_t>(nworkers), 0.0);
    std::vector<infer::TamperObservation> tamper_obs;

    double last_completion = 0.0;
    size_t next = 0;
    while (next < frames.size()) {
        const auto it = std::min_element(free_at.begin(), free_at.end());
        if (*it >= budget_end) break;  // budget exhausted
        const SavedFrame& f = frames[next++];
        const uint64_t fi = static_cast<uint64_t>(f.frame_index);
        const double lat =
            (infer::simulate_latency(profile, infer::ModelKind::fake_media,
                                     derive_seed(cfg.seed, fi, kSeedMediaLatency),
                                     cfg.latency_jitter) +
             infer::simulate_latency(profile, infer::ModelKind::tamper,
                                     derive_seed(cfg.seed, fi, kSeedTamperLatency),
                                     cfg.latency_jitter)) *
            scale;

        infer::FrameContext ctx{&session, f.frame_index, std::nullopt};
        try {
            const auto media =
                backends.fake_media(ctx, derive_seed(cfg.seed, fi, kSeedMediaCall));
            const auto tamper =
                backends.tamper(ctx, derive_seed(cfg.seed, fi, kSeedTamperCall));
            out.media_votes.by(media.category) += 1;
            tamper_obs.push_back(tamper);
            ++out.frames_processed;
        } catch (const std::exception&) {
            // skipped frame still consumes its slot
        }
        *it += lat;
        last_completion = std::max(last_completion, *it);
    }
    out.tamper = merge_tamper(tamper_obs);
    out.elapsed_ms = last_completion;
    return out;
}

namespace {

// ---------- virtual-clock scan ----------

struct StepEvent {
    double t = 0.0;
    uint64_t seq = 0;
    int worker = 0;
    size_t frame = 0;
    uint64_t slot = 0;  // per-worker service slot, drives latency jitter
    int stage = 0;  // 0 = card detect done, 1 = ocr done, 2 = zoom done
    bool operator>(const StepEvent& o) const {
        if (t != o.t) return t > o.t;
        return seq > o.seq;
    }
};

struct VirtualScan {
    const synth::ScanSession& session;
    const infer::Backends& backends;
    const infer::DeviceProfile& profile;
    const PipelineConfig& cfg;

    ScanState st;
    std::deque<size_t> buffer;  // newest first
    std::priority_queue<StepEvent, std::vector<StepEvent>, std::greater<>> steps;
    uint64_t seq = 0;
    std::vector<char> worker_busy;
    std::vector<double> blocking_ready_since;  // blocking mode
    std::vector<uint64_t> worker_slots;
    double scale = 1.0;
    bool production_done = false;
    bool require_both = false;
    double session_end_ms = 0.0;

    explicit VirtualScan(const synth::ScanSession& s, const infer::Backends& b,
                         const infer::DeviceProfile& p, const PipelineConfig& c)
        : session(s), backends(b), profile(p), cfg(c) {}

    double latency(infer::ModelKind kind, uint64_t slot, uint64_t label, int worker) const {
        return infer::simulate_latency(
                   profile, kind,
                   derive_seed(cfg.seed, slot, label, static_cast<uint64_t>(worker)),
                   cfg.latency_jitter) *
               scale;
    }

    bool ocr_enabled(double now) const {
        if (cfg.exhaust_session) return true;
        return !st.vote_opened || now <= st.vote_close_ms;
    }

    void enroll(const ocr::DecodeResult& dec, double now) {
        if (dec.pan && dec.pan->luhn_ok) {
            if (!st.vote_opened) {
                st.vote_opened = true;
                st.vote_open_ms = now;
                st.vote_close_ms = now + cfg.vote_window_ms;
                st.candidates.push_back(*dec.pan);
            } else if (cfg.exhaust_session || now <= st.vote_close_ms) {
                st.candidates.push_back(*dec.pan);
            }
        }
        if (dec.expiry && (cfg.exhaust_session || !st.vote_opened || now <= st.vote_close_ms))
            st.expiry_reads.push_back(*dec.expiry);
    }

    // returns the scan-complete time once every required window has closed
    std::optional<double> complete_time() const {
        if (cfg.exhaust_session) return std::nullopt;
        if (!st.vote_opened) return std::nullopt;
        double t_end = st.vote_close_ms;
        const auto& number_state = st.sides[static_cast<int>(synth::Side::number)];
        if (number_state.seen)
            t_end = std::max(t_end, number_state.first_seen_ms + cfg.vote_window_ms);
        if (require_both) {
            const auto& back = st.sides[static_cast<int>(synth::Side::non_number)];
            if (!back.seen) return std::nullopt;
            t_end = std::max(t_end, back.first_seen_ms + cfg.vote_window_ms);
        }
        return t_end;
    }

    void start_frame(int worker, size_t frame, double now) {
        worker_busy[static_cast<size_t>(worker)] = 1;
        const uint64_t slot = worker_slots[static_cast<size_t>(worker)]++;
        steps.push(
            {now + latency(infer::ModelKind::card_detect, slot, kSeedCdLatency, worker),
             seq++, worker, frame, slot, 0});
    }

    void handle_step(const StepEvent& ev) {
        const uint64_t fi = static_cast<uint64_t>(ev.frame);
        infer::FrameContext ctx{&session, ev.frame, std::nullopt};
        switch (ev.stage) {
            case 0: {  // card detection finished
                infer::CardDetectLabel label;
                try {
                    label = backends.card_detect(ctx, derive_seed(cfg.seed, fi, kSeedCdCall));
                } catch (const std::exception&) {
                    ++st.skipped;
                    finish_frame(ev, false);
                    return;
                }
                if (label.category != infer::DetectCategory::background) {
                    const synth::Side side =
                        label.category == infer::DetectCategory::number_side
                            ? synth::Side::number
                            : synth::Side::non_number;
                    SideState& ss = st.sides[static_cast<int>(side)];
                    if (!ss.seen) {
                        ss.seen = true;
                        ss.first_seen_ms = ev.t;
                    }
                    pool_insert(ss.pool,
                                {ev.frame, session.frames[ev.frame].t_ms, label.confidence},
                                cfg.completion_max_frames);
                }
                if (label.category == infer::DetectCategory::number_side &&
                    ocr_enabled(ev.t)) {
                    steps.push({ev.t + latency(infer::ModelKind::ocr, ev.slot,
                                               kSeedOcrLatency, ev.worker),
                                seq++, ev.worker, ev.frame, ev.slot, 1});
                } else {
                    finish_frame(ev, true);
                }
                return;
            }
            case 1: {  // ocr finished
                ocr::DecodeResult dec;
                try {
                    ctx.zoom_crop = st.zoom_crop;  // crop persists once engaged
                    const auto out =
                        backends.ocr(ctx, derive_seed(cfg.seed, fi, kSeedOcrCall));
                    dec = ocr::run_decode(out, geometry(), cfg.decode);
                } catch (const std::exception&) {
                    ++st.skipped;
                    finish_frame(ev, false);
                    return;
                }
                enroll(dec, ev.t);
                const bool valid = dec.pan && dec.pan->luhn_ok;
                if (!st.zoom_used) {
                    const auto crop = ocr::needs_zoom(dec.boxes, geometry(),
                                                      cfg.decode.small_font_ratio, valid);
                    if (crop) {
                        // one extra OCR pass on this frame; later frames reuse
                        // the crop at normal cost
                        st.zoom_used = true;
                        st.zoom_crop = *crop;
                        steps.push({ev.t + latency(infer::ModelKind::ocr, ev.slot,
                                                   kSeedZoomLatency, ev.worker),
                                    seq++, ev.worker, ev.frame, ev.slot, 2});
                        return;
                    }
                }
                finish_frame(ev, true);
                return;
            }
            case 2: {  // zoomed re-run finished
                infer::FrameContext zctx{&session, ev.frame, st.zoom_crop};
                try {
                    const auto out =
                        backends.ocr(zctx, derive_seed(cfg.seed, fi, kSeedZoomCall));
                    const auto dec = ocr::run_decode(out, geometry(), cfg.decode);
                    enroll(dec, ev.t);
                } catch (const std::exception&) {
                    ++st.skipped;
                    finish_frame(ev, false);
                    return;
                }
                finish_frame(ev, true);
                return;
            }
        }
    }

    void finish_frame(const StepEvent& ev, bool processed) {
        if (processed) ++st.processed;
        st.completion_times.push_back({ev.t, processed});
        worker_busy[static_cast<size_t>(ev.worker)] = 0;
        if (cfg.mode == Mode::blocking) {
            blocking_ready_since[static_cast<size_t>(ev.worker)] =
                ev.t + profile.capture_overhead_ms;
        } else if (!buffer.empty()) {
            // Throughput runs end at the production horizon: leftover
            // buffered frames are not drained once the feed stops.
            if (cfg.exhaust_session && production_done) return;
            const size_t next = buffer.front();
            buffer.pop_front();
            start_frame(ev.worker, next, ev.t);
        }
    }

    const ocr::HeadGeometry& geometry() const { return geom_; }

    ocr::HeadGeometry geom_;
};

ScanResult run_scan_virtual(const synth::ScanSession& session, const infer::Backends& backends,
                            const infer::DeviceProfile& profile, const PipelineConfig& cfg) {
    VirtualScan sim(session, backends, profile, cfg);
    const int nworkers = cfg.mode == Mode::parallel ? cfg.workers : 1;
    sim.worker_busy.assign(static_cast<size_t>(nworkers), 0);
    sim.blocking_ready_since.assign(static_cast<size_t>(nworkers), 0.0);
    sim.worker_slots.assign(static_cast<size_t>(nworkers), 0);
    sim.scale = worker_scale(profile, cfg);

    bool has_back_frames = false;
    for (const auto& f : session.frames)
        if (f.scene.side == synth::Side::non_number && f.scene.centered) has_back_frames = true;
    sim.require_both = cfg.require_both_sides.value_or(has_back_frames);

    const double period_ms = 1000.0 / session.camera_fps;
    sim.session_end_ms =
        session.frames.empty() ? 0.0 : session.frames.back().t_ms + period_ms;

    size_t pi = 0;  // production cursor
    const size_t nframes = session.frames.size();
    std::optional<double> t_complete;

    auto produce = [&](size_t i) {
        const double t = session.frames[i].t_ms;
        if (cfg.mode == Mode::blocking) {
            for (int w = 0; w < nworkers; ++w)
                if (!sim.worker_busy[static_cast<size_t>(w)] &&
                    t >= sim.blocking_ready_since[static_cast<size_t>(w)]) {
                    sim.start_frame(w, i, t);
                    return;
                }
            // no waiting worker: the frame is dropped (live feed is blocked)
        } else {
            sim.buffer.push_front(i);
            while (sim.buffer.size() > cfg.buffer_capacity) sim.buffer.pop_back();
            for (int w = 0; w < nworkers; ++w)
                if (!sim.worker_busy[static_cast<size_t>(w)]) {
                    const size_t next = sim.buffer.front();
                    sim.buffer.pop_front();
                    sim.start_frame(w, next, t);
                    break;
                }
        }
    };

    while (true) {
        t_complete = sim.complete_time();
        const double next_prod = pi < nframes ? session.frames[pi].t_ms
                                              : std::numeric_limits<double>::infinity();
        const double next_step =
            sim.steps.empty() ? std::numeric_limits<double>::infinity() : sim.steps.top().t;
        double next_t = std::min(next_prod, next_step);
        if (std::isinf(next_t)) break;  // nothing left to do
        if (t_complete && next_t > *t_complete) break;
        if (next_prod <= next_step) {
            produce(pi++);
            if (pi >= nframes) sim.production_done = true;
        } else {
            const StepEvent ev = sim.steps.top();
            sim.steps.pop();
            sim.handle_step(ev);
        }
    }
    t_complete = sim.complete_time();

    ScanResult res;
    res.session_id = session.id;
    res.mode = to_string(cfg.mode);
    res.profile = profile.name;
    res.zoom_used = sim.st.zoom_used;
    res.frames_skipped = sim.st.skipped;

    const bool found = sim.st.vote_opened;
    double duration;
    double last_completion = 0.0;
    for (const auto& [t, counted] : sim.st.completion_times)
        last_completion = std::max(last_completion, t);
    if (cfg.exhaust_session) {
        // fixed measurement window: the feed ran for the session span and
        // only frames completed inside it count
        duration = sim.session_end_ms;
        res.gave_up = false;
    } else if (found) {
        duration = t_complete ? *t_complete : std::max(sim.session_end_ms, last_completion);
        res.gave_up = false;
    } else {
        duration = std::min<double>(session.give_up_ms,
                                    std::max(sim.session_end_ms, 0.0));
        res.gave_up = true;
    }
    res.duration_ms = duration;

    long processed = 0;
    for (const auto& [t, counted] : sim.st.completion_times)
        if (counted && t <= duration + 1e-9) ++processed;
    res.frames_processed = processed;
    res.frames_produced = 0;
    for (const auto& f : session.frames)
        if (f.t_ms <= duration + 1e-9) ++res.frames_produced;
    res.fps = duration > 0 ? res.frames_processed * 1000.0 / duration : 0.0;

    if (const auto vote = vote_pan(sim.st.candidates)) res.final_pan = vote->digits;
    res.expiry = vote_expiry(sim.st.expiry_reads);
    for (int s = 0; s < 2; ++s)
        if (sim.st.sides[s].seen)
            res.sides_seen.push_back(synth::to_string(static_cast<synth::Side>(s)));

    // completion loop on the saved per-side pools
    std::vector<SavedFrame> selected;
    for (int s = 0; s < 2; ++s) {
        auto side_sel =
            select_completion_frames(sim.st.sides[s].pool, cfg.completion_max_frames);
        selected.insert(selected.end(), side_sel.begin(), side_sel.end());
    }
    const auto completion = run_completion(session, selected, backends, profile, cfg);
    res.media_votes = completion.media_votes;
    res.tamper_observations = completion.tamper;
    res.completion_frames = completion.frames_processed;
    res.completion_ms = completion.elapsed_ms;
    return res;
}

// ---------- wall-clock scan ----------

ScanResult run_scan_wall(const synth::ScanSession& session, const infer::Backends& backends,
                         const infer::DeviceProfile& profile, const PipelineConfig& cfg) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto now_ms = [&] {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    struct Entry {
        size_t index;
        double t_ms;
    };
    FrameBuffer<Entry> buffer(cfg.mode == Mode::blocking ? 1 : cfg.buffer_capacity);
    const int nworkers = cfg.mode == Mode::parallel ? cfg.workers : 1;
    const double scale = worker_scale(profile, cfg);

    std::mutex mu;
    ScanState st;
    std::atomic<long> produced{0};
    std::atomic<bool> stop{false};

    bool has_back_frames = false;
    for (const auto& f : session.frames)
        if (f.scene.side == synth::Side::non_number && f.scene.centered) has_back_frames = true;
    const bool require_both = cfg.require_both_sides.value_or(has_back_frames);

    auto complete_time = [&]() -> std::optional<double> {
        if (cfg.exhaust_session || !st.vote_opened) return std::nullopt;
        double t_end = st.vote_close_ms;
        if (require_both) {
            const auto& back = st.sides[static_cast<int>(synth::Side::non_number)];
            if (!back.seen) return std::nullopt;
            t_end = std::max(t_end, back.first_seen_ms + cfg.vote_window_ms);
        }
        return t_end;
    };

    std::thread producer([&] {
        for (size_t i = 0; i < session.frames.size() && !stop.load(); ++i) {
            const double target = session.frames[i].t_ms;
            std::this_thread::sleep_for(
                std::chrono::duration<double, std::milli>(std::max(0.0, target - now_ms())));
            if (stop.load()) break;
            buffer.push(Entry{i, target});
            produced.fetch_add(1);
        }
        buffer.close();
    });

    const ocr::HeadGeometry geom;
    std::vector<std::thread> workers;
    std::vector<double> ready_since(static_cast<size_t>(nworkers), 0.0);
    for (int w = 0; w < nworkers; ++w) {
        workers.emplace_back([&, w] {
            uint64_t slot_counter = 0;
            while (!stop.load()) {
                auto entry = buffer.pop_wait();
                if (!entry) return;  // closed and drained
                if (cfg.mode == Mode::blocking &&
                    entry->t_ms < ready_since[static_cast<size_t>(w)])
                    continue;  // stale frame from before the blocking grab point
                const size_t i = entry->index;
                const uint64_t fi = static_cast<uint64_t>(i);
                const uint64_t slot = slot_counter++;
                infer::FrameContext ctx{&session, i, std::nullopt};

                auto sleep_ms = [&](double ms) {
                    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
                };
                sleep_ms(infer::simulate_latency(
                             profile, infer::ModelKind::card_detect,
                             derive_seed(cfg.seed, slot, kSeedCdLatency,
                                         static_cast<uint64_t>(w)),
                             cfg.latency_jitter) *
                         scale);
                infer::CardDetectLabel label;
                bool failed = false;
                try {
                    label = backends.card_detect(ctx, derive_seed(cfg.seed, fi, kSeedCdCall));
                } catch (const std::exception&) {
                    failed = true;
                }
                bool run_ocr = false;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (failed) {
                        ++st.skipped;
                    } else if (label.category != infer::DetectCategory::background) {
                        const synth::Side side =
                            label.category == infer::DetectCategory::number_side
                                ? synth::Side::number
                                : synth::Side::non_number;
                        SideState& ss = st.sides[static_cast<int>(side)];
                        if (!ss.seen) {
                            ss.seen = true;
                            ss.first_seen_ms = now_ms();
                        }
                        pool_insert(ss.pool, {i, session.frames[i].t_ms, label.confidence},
                                    cfg.completion_max_frames);
                        run_ocr = label.category == infer::DetectCategory::number_side &&
                                  (cfg.exhaust_session || !st.vote_opened ||
                                   now_ms() <= st.vote_close_ms);
                    }
                }
                if (run_ocr && !failed) {
                    sleep_ms(infer::simulate_latency(
                                 profile, infer::ModelKind::ocr,
                                 derive_seed(cfg.seed, slot, kSeedOcrLatency,
                                             static_cast<uint64_t>(w)),
                                 cfg.latency_jitter) *
                             scale);
                    try {
                        {
                            std::lock_guard<std::mutex> lock(mu);
                            ctx.zoom_crop = st.zoom_crop;
                        }
                        const auto out =
                            backends.ocr(ctx, derive_seed(cfg.seed, fi, kSeedOcrCall));
                        auto dec = ocr::run_decode(out, geom, cfg.decode);
                        bool do_zoom = false;
                        std::optional<RectF> crop;
                        {
                            std::lock_guard<std::mutex> lock(mu);
                            const bool valid = dec.pan && dec.pan->luhn_ok;
                            if (!st.zoom_used) {
                                crop = ocr::needs_zoom(dec.boxes, geom,
                                                       cfg.decode.small_font_ratio, valid);
                                if (crop) {
                                    st.zoom_used = true;
                                    st.zoom_crop = *crop;
                                    do_zoom = true;
                                }
                            }
                        }
                        if (do_zoom) {
                            sleep_ms(infer::simulate_latency(
                                         profile, infer::ModelKind::ocr,
                                         derive_seed(cfg.seed, slot, kSeedZoomLatency,
                                                     static_cast<uint64_t>(w)),
                                         cfg.latency_jitter) *
                                     scale);
                            infer::FrameContext zctx{&session, i, crop};
                            const auto zout =
                                backends.ocr(zctx, derive_seed(cfg.seed, fi, kSeedZoomCall));
                            dec = ocr::run_decode(zout, geom, cfg.decode);
                        }
                        std::lock_guard<std::mutex> lock(mu);
                        const double now = now_ms();
                        if (dec.pan && dec.pan->luhn_ok) {
                            if (!st.vote_opened) {
                                st.vote_opened = true;
                                st.vote_open_ms = now;
                                st.vote_close_ms = now + cfg.vote_window_ms;
                                st.candidates.push_back(*dec.pan);
                            } else if (cfg.exhaust_session || now <= st.vote_close_ms) {
                                st.candidates.push_back(*dec.pan);
                            }
                        }
                        if (dec.expiry) st.expiry_reads.push_back(*dec.expiry);
                    } catch (const std::exception&) {
                        std::lock_guard<std::mutex> lock(mu);
                        ++st.skipped;
                        failed = true;
                    }
                }
                {
                    std::lock_guard<std::mutex> lock(mu);
                    const double now = now_ms();
                    if (!failed) ++st.processed;
                    st.completion_times.push_back({now, !failed});
                    if (cfg.mode == Mode::blocking)
                        ready_since[static_cast<size_t>(w)] =
                            now + profile.capture_overhead_ms;
                    const auto t_end = complete_time();
                    if (t_end && now >= *t_end) stop.store(true);
                }
                if (stop.load()) {
                    buffer.close();
                    return;
                }
            }
        });
    }
    producer.join();
    for (auto& t : workers) t.join();

    ScanResult res;
    res.session_id = session.id;
    res.mode = to_string(cfg.mode);
    res.profile = profile.name;
    res.zoom_used = st.zoom_used;
    res.frames_skipped = st.skipped;
    res.frames_produced = produced.load();
    res.frames_processed = st.processed;
    const auto t_end = complete_time();
    res.gave_up = !st.vote_opened;
    res.duration_ms = res.gave_up ? std::min<double>(session.give_up_ms, now_ms())
                                  : (t_end ? std::max(*t_end, st.vote_close_ms) : now_ms());
    res.fps = res.duration_ms > 0 ? res.frames_processed * 1000.0 / res.duration_ms : 0.0;
    if (const auto vote = vote_pan(st.candidates)) res.final_pan = vote->digits;
    res.expiry = vote_expiry(st.expiry_reads);
    for (int s = 0; s < 2; ++s)
        if (st.sides[s].seen)
            res.sides_seen.push_back(synth::to_string(static_cast<synth::Side>(s)));

    std::vector<SavedFrame> selected;
    for (int s = 0; s < 2; ++s) {
        auto side_sel = select_completion_frames(st.sides[s].pool, cfg.completion_max_frames);
        selected.insert(selected.end(), side_sel.begin(), side_sel.end());
    }
    const auto completion = run_completion(session, selected, backends, profile, cfg);
    res.media_votes = completion.media_votes;
    res.tamper_observations = completion.tamper;
    res.completion_frames = completion.frames_processed;
    res.completion_ms = completion.elapsed_ms;
    return res;
}

}  // namespace

ScanResult run_scan(const synth::ScanSession& session, const infer::Backends& backends,
                    const infer::DeviceProfile& profile, const PipelineConfig& cfg) {
    cfg.validate();
    if (session.frames.empty()) throw std::invalid_argument("run_scan: empty session");
    if (cfg.clock == ClockKind::wall_clock)
        return run_scan_wall(session, backends, profile, cfg);
    return run_scan_virtual(session, backends, profile, cfg);
}

std::string mask_pan(const std::string& pan) {
    if (pan.size() <= 10) return pan;
    std::string out = pan;
    for (size_t i = 6; i + 4 < out.size(); ++i) out[i] = '*';
    return out;
}

nlohmann::ordered_json scan_report_json(const ScanResult& result, bool masked) {
    nlohmann::ordered_json j;
    j["session_id"] = result.session_id;
    if (result.final_pan)
        j["final_pan"] = masked ? mask_pan(*result.final_pan) : *result.final_pan;
    else
        j["final_pan"] = nullptr;
    if (result.expiry)
        j["expiry"] = {{"month", result.expiry->month}, {"year", result.expiry->year}};
    else
        j["expiry"] = nullptr;
    j["sides_seen"] = result.sides_seen;
    j["media_votes"] = {{"physical", result.media_votes.physical},
                        {"screen", result.media_votes.screen},
                        {"paper", result.media_votes.paper},
                        {"cardboard", result.media_votes.cardboard}};
    auto tamper = nlohmann::ordered_json::array();
    for (const auto& t : result.tamper_observations)
        tamper.push_back({{"logo_id", synth::to_string(t.logo_id)},
                          {"confidence", t.confidence},
                          {"frames", t.frames}});
    j["tamper_objects"] = std::move(tamper);
    j["frames_produced"] = result.frames_produced;
    j["frames_processed"] = result.frames_processed;
    j["fps"] = result.fps;
    j["duration_ms"] = result.duration_ms;
    j["gave_up"] = result.gave_up;
    j["mode"] = result.mode;
    j["profile"] = result.profile;
    return j;
}

}  // namespace cardpipe::pipeline
