// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include "hetpipe/pipeline_sim.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <set>

namespace hetpipe {

std::string_view to_string(Codec c) { return c == Codec::H264 ? "h264" : "h265"; }

std::optional<Codec> parse_codec(std::string_view text) {
    if (text == "h264" || text == "H264") return Codec::H264;
    if (text == "h265" || text == "H265") return Codec::H265;
    return std::nullopt;
}

std::string_view to_string(Pacing p) { return p == Pacing::Realtime ? "realtime" : "saturated"; }

std::optional<Pacing> parse_pacing(std::string_view text) {
    if (text == "realtime") return Pacing::Realtime;
    if (text == "saturated") return Pacing::Saturated;
    return std::nullopt;
}

int SourceSpec::faces_at(std::size_t frame) const { return faces.empty() ? 0 : faces[frame % faces.size()]; }

double SourceSpec::pixel_scale() const { return (static_cast<double>(width) * height) / (1920.0 * 1080.0); }

namespace {

void check_gop(const std::string& gop) {
    if (gop.empty() || gop.front() != 'I') throw DomainError("GOP pattern must start with I");
    for (char c : gop) {
        if (c != 'I' && c != 'P' && c != 'B') throw DomainError(std::string("bad GOP symbol '") + c + "'");
    }
}

FrameType frame_type_at(const std::string& gop, std::size_t i) {
    switch (gop[i % gop.size()]) {
        case 'I': return FrameType::I;
        case 'P': return FrameType::P;
        default: return FrameType::B;
    }
}

}  // namespace

void check_scenario(const Scenario& sc) {
    if (sc.sources.empty()) throw DomainError("scenario needs at least one source");
    if (sc.queue_capacity_frames <= 0) throw DomainError("queue capacity must be positive");
    if (sc.duration_frames && *sc.duration_frames < 0) throw DomainError("duration_frames must be non-negative");
    if (sc.duration_s && !(*sc.duration_s >= 0.0)) throw DomainError("duration_s must be non-negative");
    if (!sc.duration_frames && !sc.duration_s) throw DomainError("scenario needs a duration");
    double load = 0.0;
    for (const auto& s : sc.sources) {
        if (s.width <= 0 || s.height <= 0) throw DomainError("source resolution must be positive");
        if (!(s.fps > 0.0)) throw DomainError("source fps must be positive");
        check_gop(s.gop_pattern);
        if (std::any_of(s.faces.begin(), s.faces.end(), [](int f) { return f < 0; })) {
            throw DomainError("face counts must be non-negative");
        }
        const bool uhd = s.pixel_scale() > 1.0;
        const int cap = uhd ? sc.catalog.nvdec.streams_4k : sc.catalog.nvdec.streams_1080p;
        load += (s.fps / sc.catalog.nvdec.stream_fps) / cap;
    }
    if (load > 1.0 + 1e-9) throw DomainError("sources exceed the video decoder's real-time capacity");
    for (PipelineStage st : {PipelineStage::Detect, PipelineStage::Recognize}) {
        if (!sc.plan.stage_model.count(st)) throw DomainError("plan has no model for " + std::string(to_string(st)));
    }
}

std::size_t frames_per_source(const Scenario& sc) {
    if (sc.duration_frames) return static_cast<std::size_t>(*sc.duration_frames);
    double fps = 0.0;
    for (const auto& s : sc.sources) fps = std::max(fps, s.fps);
    return static_cast<std::size_t>(std::ceil(*sc.duration_s * fps));
}

double decoder_latency_ms(FrameType t, const CostParams& p, std::mt19937_64& rng) {
    const double base = p.decoder_base_ms[static_cast<std::size_t>(t)];
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return base * (1.0 + p.decoder_jitter * u(rng));
}

double recognize_cost(double base_per_face_s, double overhead_s, int faces) {
    if (faces < 0) throw DomainError("face count must be non-negative");
    return overhead_s + faces * base_per_face_s;
}

std::optional<std::size_t> streammux_next(const std::vector<bool>& ready, std::size_t& cursor) {
    const std::size_t n = ready.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t s = (cursor + k) % n;
        if (ready[s]) {
            cursor = (s + 1) % n;
            return s;
        }
    }
    return std::nullopt;
}

double cache_contention(const AllocationPlan& plan, const EngineCatalog& cat, int concurrent_streams) {
    std::uint64_t total = 0;
    for (const auto& [stage, model] : plan.stage_model) {
        std::uint64_t ws = 0;
        for (const auto& seg : stage_segments(plan, model, cat)) {
            if (seg.engine == EngineId::SmCluster) ws = std::max(ws, seg.working_set_bytes);
        }
        total += ws;
    }
    total *= static_cast<std::uint64_t>(std::max(concurrent_streams, 0));
    return total > cat.memory.l2_bytes ? cat.cost_params.cache_penalty_lambda : 1.0;
}

PipelineSpec build_pipeline(const Scenario& sc) {
    check_scenario(sc);
    const CostParams& p = sc.catalog.cost_params;
    const auto cap = static_cast<std::size_t>(sc.queue_capacity_frames);
    PipelineSpec spec;
    spec.streams.clear();
    for (const auto& s : sc.sources) {
        spec.streams.push_back(StreamSpec{s.fps, s.gop_pattern, s.faces, s.pixel_scale()});
    }
    for (std::size_t i = 0; i < 3; ++i) spec.decoder.base_s[i] = p.decoder_base_ms[i] * 1e-3;
    spec.decoder.jitter = p.decoder_jitter;
    spec.decoder.occupancy_s = 1.0 / (sc.catalog.nvdec.streams_1080p * sc.catalog.nvdec.stream_fps);
    spec.reorder_capacity = 0;
    for (const auto& s : sc.sources) spec.reorder_capacity = std::max(spec.reorder_capacity, s.gop_pattern.size());
    spec.pacing = sc.pacing;
    spec.frames_per_stream = frames_per_source(sc);
    spec.duration_s = sc.duration_s;
    spec.seed = sc.seed;

    spec.mux.name = "streammux";
    spec.mux.column = PipelineStage::Streammux;
    spec.mux.resource = EngineId::Cpu;
    spec.mux.latency_s = p.streammux_latency_ms * 1e-3;
    spec.mux.occupancy_s = p.streammux_occupancy_ms * 1e-3;
    spec.mux.queue_capacity = cap;

    ServerSpec pva;
    pva.name = "preprocess";
    pva.column = PipelineStage::Streammux;
    pva.resource = EngineId::Pva;
    pva.latency_s = p.preprocess_ms * 1e-3;
    pva.queue_capacity = cap;
    spec.chain.push_back(pva);

    const double lambda = cache_contention(sc.plan, sc.catalog, static_cast<int>(sc.sources.size()));
    for (PipelineStage stage : {PipelineStage::Detect, PipelineStage::Recognize}) {
        const std::string& model = sc.plan.stage_model.at(stage);
        // Engine groups in order of first use; a frame visits each once.
        std::vector<std::pair<EngineId, double>> groups;
        for (const auto& seg : stage_segments(sc.plan, model, sc.catalog)) {
            auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == seg.engine; });
            if (it == groups.end()) {
                groups.emplace_back(seg.engine, seg.seconds);
            } else {
                it->second += seg.seconds;
            }
        }
        for (std::size_t i = 0; i < groups.size(); ++i) {
            const auto [engine, seconds] = groups[i];
            ServerSpec s;
            s.name = std::string(to_string(stage)) + "@" + std::string(to_string(engine));
            s.column = stage;
            s.resource = engine;
            const double t = seconds * (engine == EngineId::SmCluster ? lambda : 1.0);
            if (stage == PipelineStage::Recognize) {
                s.per_face_s = t;
                if (i == 0) s.latency_s = p.recognize_overhead_s;
            } else {
                s.latency_s = t;
            }
            s.occupancy_ratio = p.occupancy_for(engine_class_of(engine));
            s.queue_capacity = cap;
            s.alternate_dla = sc.hypothetical_dual_dla && is_dla(engine);
            spec.chain.push_back(s);
        }
    }

    if (sc.enable_encoder) {
        ServerSpec enc;
        enc.name = "encode";
        enc.column = PipelineStage::Encode;
        enc.resource = EngineId::Nvenc;
        enc.latency_s = p.encode_latency_ms * 1e-3;
        enc.occupancy_s = p.encode_occupancy_ms * 1e-3;
        enc.queue_capacity = cap;
        spec.chain.push_back(enc);
    }
    return spec;
}

namespace {

constexpr std::size_t kUnbounded = static_cast<std::size_t>(-1);

std::size_t cap_of(const std::optional<std::size_t>& c) { return c.value_or(kUnbounded); }

struct Frame {
    int stream = 0;
    int index = 0;
    FrameType type = FrameType::I;
    int faces = 0;
    double decode_latency_s = 0.0;
    double arrival_s = 0.0;
    std::array<double, kStageCount> col_done{};
};

enum class EventKind : std::uint8_t { Arrival, ResourceFree, Done };

struct Event {
    double t = 0.0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::Arrival;
    int server = 0;  // -2 decoder, -1 mux, >= 0 chain index
    int frame = 0;   // frame id, or resource index for ResourceFree

    bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

class Simulator {
public:
    explicit Simulator(const PipelineSpec& spec) : spec_(spec) {
        const std::size_t n = spec.streams.size();
        if (n == 0) throw DomainError("pipeline needs at least one stream");
        for (const auto& s : spec.streams) check_gop(s.gop_pattern);
        dec_wait_.resize(n);
        dec_inflight_.assign(n, 0);
        reorder_.resize(n);
        next_release_.assign(n, 0);
        mux_wait_.resize(n);
        chain_wait_.resize(spec.chain.size());
        chain_inflight_.assign(spec.chain.size(), 0);
        started_.resize(spec.chain.size() + 1);
        finished_.resize(spec.chain.size() + 1);
        for (const auto& s : spec.chain) has_column_[index_of(s.column)] = true;
        has_column_[index_of(PipelineStage::Decoder)] = true;
        has_column_[index_of(spec.mux.column)] = true;

        // Frames are generated up front so jitter draws do not depend on timing.
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        stream_first_.assign(n, 0);
        stream_count_.assign(n, 0);
        for (std::size_t s = 0; s < n; ++s) {
            const auto& st = spec.streams[s];
            stream_first_[s] = frames_.size();
            std::size_t count = spec.frames_per_stream;
            if (spec.duration_s && spec.pacing == Pacing::Realtime) {
                count = std::min(count, static_cast<std::size_t>(std::ceil(*spec.duration_s * st.fps - 1e-9)));
            }
            for (std::size_t i = 0; i < count; ++i) {
                Frame f;
                f.stream = static_cast<int>(s);
                f.index = static_cast<int>(i);
                f.type = frame_type_at(st.gop_pattern, i);
                f.faces = st.faces.empty() ? 0 : st.faces[i % st.faces.size()];
                const double base = spec.decoder.base_s[static_cast<std::size_t>(f.type)];
                const double draw = u(rng);
                f.decode_latency_s = base * (1.0 + spec.decoder.jitter * draw) * st.scale;
                frames_.push_back(f);
            }
            stream_count_[s] = count;
        }
    }

    SimReport run() {
        const std::size_t n = spec_.streams.size();
        for (std::size_t s = 0; s < n; ++s) {
            if (stream_count_[s] == 0) continue;
            if (spec_.pacing == Pacing::Realtime) {
                for (std::size_t i = 0; i < stream_count_[s]; ++i) {
                    const int id = static_cast<int>(stream_first_[s] + i);
                    push({static_cast<double>(i) / spec_.streams[s].fps, 0, EventKind::Arrival, 0, id});
                }
            } else {
                push({0.0, 0, EventKind::Arrival, 0, static_cast<int>(stream_first_[s])});
            }
        }
        while (!events_.empty()) {
            const Event e = events_.top();
            events_.pop();
            now_ = e.t;
            handle(e);
            dispatch();
        }
        return report();
    }

private:
    void push(Event e) {
        e.seq = seq_++;
        events_.push(e);
    }

    EngineId resource_for(const ServerSpec& s, const Frame& f) const {
        if (s.alternate_dla) return f.stream % 2 == 0 ? EngineId::Dla0 : EngineId::Dla1;
        return s.resource;
    }

    bool free(EngineId r) const { return !busy_[index_of(r)]; }

    void occupy(EngineId r, double occupancy) {
        if (occupancy <= 0.0) return;
        busy_[index_of(r)] = true;
        busy_time_[index_of(r)] += occupancy;
        if (is_dla(r)) dla_intervals_.emplace_back(now_, now_ + occupancy);
        push({now_ + occupancy, 0, EventKind::ResourceFree, 0, static_cast<int>(index_of(r))});
    }

    static double occupancy_of(const ServerSpec& s, double latency) {
        const double o = s.occupancy_s ? *s.occupancy_s : s.occupancy_ratio * latency;
        return std::clamp(o, 0.0, latency);
    }

    double latency_of(const ServerSpec& s, const Frame& f) const { return s.latency_s + s.per_face_s * f.faces; }

    void handle(const Event& e) {
        switch (e.kind) {
            case EventKind::Arrival: {
                Frame& f = frames_[static_cast<std::size_t>(e.frame)];
                f.arrival_s = now_;
                dec_wait_[static_cast<std::size_t>(f.stream)].push_back(e.frame);
                ++offered_;
                break;
            }
            case EventKind::ResourceFree:
                busy_[static_cast<std::size_t>(e.frame)] = false;
                break;
            case EventKind::Done:
                finish(e.server, e.frame);
                break;
        }
    }

    void finish(int server, int id) {
        Frame& f = frames_[static_cast<std::size_t>(id)];
        const auto s = static_cast<std::size_t>(f.stream);
        if (server == -2) {
            --dec_inflight_[s];
            f.col_done[index_of(PipelineStage::Decoder)] = now_;
            reorder_[s].insert(f.index);
            while (!reorder_[s].empty() && *reorder_[s].begin() == next_release_[s]) {
                reorder_[s].erase(reorder_[s].begin());
                mux_wait_[s].push_back(static_cast<int>(stream_first_[s]) + next_release_[s]);
                ++next_release_[s];
            }
            return;
        }
        // Servers hand frames on in the order they started them.
        const auto k = static_cast<std::size_t>(server + 1);
        finished_[k].insert(id);
        auto& order = started_[k];
        while (!order.empty() && finished_[k].count(order.front())) {
            const int done = order.front();
            order.pop_front();
            finished_[k].erase(done);
            Frame& d = frames_[static_cast<std::size_t>(done)];
            if (server == -1) {
                --mux_inflight_;
                d.col_done[index_of(spec_.mux.column)] = now_;
                advance(0, done);
            } else {
                const auto j = static_cast<std::size_t>(server);
                --chain_inflight_[j];
                d.col_done[index_of(spec_.chain[j].column)] = now_;
                advance(j + 1, done);
            }
        }
    }

    void advance(std::size_t next, int id) {
        if (next < spec_.chain.size()) {
            chain_wait_[next].push_back(id);
        } else {
            complete(id);
        }
    }

    void complete(int id) {
        Frame& f = frames_[static_cast<std::size_t>(id)];
        FrameRecord r;
        r.stream = f.stream;
        r.frame = f.index;
        r.type = f.type;
        r.faces = f.faces;
        r.arrival_s = f.arrival_s;
        r.completion_s = now_;
        double prev = f.arrival_s;
        for (std::size_t c = 0; c < kStageCount; ++c) {
            if (!has_column_[c]) continue;
            r.stage_ms[c] = (f.col_done[c] - prev) * 1e3;
            prev = f.col_done[c];
        }
        double total = 0.0;
        for (double v : r.stage_ms) total += v;
        r.total_ms = total;
        records_.push_back(r);
        completion_times_.push_back(now_);
    }

    bool chain_credit(std::size_t j) const {
        if (j + 1 >= spec_.chain.size()) return true;
        const std::size_t cap = cap_of(spec_.chain[j + 1].queue_capacity);
        return cap == kUnbounded || chain_wait_[j + 1].size() + chain_inflight_[j] < cap;
    }

    bool mux_credit() const {
        if (spec_.chain.empty()) return true;
        const std::size_t cap = cap_of(spec_.chain[0].queue_capacity);
        return cap == kUnbounded || chain_wait_[0].size() + mux_inflight_ < cap;
    }

    bool decoder_credit(std::size_t s) const {
        const std::size_t cap = cap_of(spec_.mux.queue_capacity);
        if (cap == kUnbounded) return true;
        return dec_inflight_[s] + reorder_[s].size() + mux_wait_[s].size() < spec_.reorder_capacity + cap;
    }

    bool try_chain(std::size_t j) {
        auto& q = chain_wait_[j];
        if (q.empty() || !chain_credit(j)) return false;
        const ServerSpec& s = spec_.chain[j];
        const Frame& f = frames_[static_cast<std::size_t>(q.front())];
        const EngineId r = resource_for(s, f);
        if (!free(r)) return false;
        const int id = q.front();
        q.pop_front();
        const double lat = latency_of(s, f);
        occupy(r, occupancy_of(s, lat));
        ++chain_inflight_[j];
        started_[j + 1].push_back(id);
        push({now_ + lat, 0, EventKind::Done, static_cast<int>(j), id});
        return true;
    }

    bool try_mux() {
        if (!mux_credit()) return false;
        std::vector<bool> ready(mux_wait_.size());
        for (std::size_t s = 0; s < ready.size(); ++s) ready[s] = !mux_wait_[s].empty();
        // Peek without consuming the turn until the engine is known to be free.
        std::size_t cursor = mux_cursor_;
        auto pick = streammux_next(ready, cursor);
        if (!pick) return false;
        const int id = mux_wait_[*pick].front();
        const Frame& f = frames_[static_cast<std::size_t>(id)];
        const EngineId r = resource_for(spec_.mux, f);
        if (!free(r)) return false;
        mux_cursor_ = cursor;
        mux_wait_[*pick].pop_front();
        const double lat = latency_of(spec_.mux, f);
        occupy(r, occupancy_of(spec_.mux, lat));
        ++mux_inflight_;
        started_[0].push_back(id);
        push({now_ + lat, 0, EventKind::Done, -1, id});
        return true;
    }

    bool try_decoder() {
        if (!free(spec_.decoder.resource)) return false;
        // Earliest arrival first; ties go to the stream furthest behind.
        std::optional<std::size_t> best;
        auto key = [&](std::size_t s) {
            const Frame& f = frames_[static_cast<std::size_t>(dec_wait_[s].front())];
            return std::make_pair(f.arrival_s, f.index);
        };
        for (std::size_t s = 0; s < dec_wait_.size(); ++s) {
            if (dec_wait_[s].empty() || !decoder_credit(s)) continue;
            if (!best || key(s) < key(*best)) best = s;
        }
        if (!best) return false;
        const std::size_t s = *best;
        const int id = dec_wait_[s].front();
        dec_wait_[s].pop_front();
        const Frame& f = frames_[static_cast<std::size_t>(id)];
        const double lat = f.decode_latency_s;
        occupy(spec_.decoder.resource, std::clamp(spec_.decoder.occupancy_s * spec_.streams[s].scale, 0.0, lat));
        ++dec_inflight_[s];
        push({now_ + lat, 0, EventKind::Done, -2, id});
        if (spec_.pacing == Pacing::Saturated) offer_next(s, f.index + 1);
        return true;
    }

    void offer_next(std::size_t s, int index) {
        if (static_cast<std::size_t>(index) >= stream_count_[s]) return;
        if (spec_.duration_s && now_ >= *spec_.duration_s) return;
        const int id = static_cast<int>(stream_first_[s]) + index;
        frames_[static_cast<std::size_t>(id)].arrival_s = now_;
        dec_wait_[s].push_back(id);
        ++offered_;
    }

    void dispatch() {
        bool progressed = true;
        while (progressed) {
            progressed = false;
            for (std::size_t j = spec_.chain.size(); j-- > 0;) {
                while (try_chain(j)) progressed = true;
            }
            while (try_mux()) progressed = true;
            while (try_decoder()) progressed = true;
        }
    }

    SimReport report() {
        SimReport r;
        r.offered = offered_;
        r.completed = records_.size();
        r.in_flight = r.offered - r.completed;
        r.completion_stream_order.reserve(records_.size());
        for (const auto& rec : records_) r.completion_stream_order.push_back(rec.stream);
        r.elapsed_s = completion_times_.empty() ? 0.0 : completion_times_.back();

        const std::size_t n = spec_.streams.size();
        std::vector<std::size_t> per_stream(n, 0);
        for (const auto& rec : records_) ++per_stream[static_cast<std::size_t>(rec.stream)];
        r.per_stream_fps.assign(n, 0.0);
        if (r.elapsed_s > 0.0) {
            for (std::size_t s = 0; s < n; ++s) r.per_stream_fps[s] = per_stream[s] / r.elapsed_s;
            double sum = 0.0;
            for (double v : r.per_stream_fps) sum += v;
            r.throughput_fps = sum;
        }
        if (completion_times_.size() > kWarmupFrames + 1) {
            const double t0 = completion_times_[kWarmupFrames];
            const double t1 = completion_times_.back();
            if (t1 > t0) r.steady_state_fps = static_cast<double>(completion_times_.size() - 1 - kWarmupFrames) / (t1 - t0);
        }

        r.frames = records_;
        std::sort(r.frames.begin(), r.frames.end(), [](const FrameRecord& a, const FrameRecord& b) {
            return a.stream != b.stream ? a.stream < b.stream : a.frame < b.frame;
        });
        if (!r.frames.empty()) {
            for (const auto& rec : r.frames) {
                for (std::size_t c = 0; c < kStageCount; ++c) r.avg_stage_ms[c] += rec.stage_ms[c];
                r.avg_total_ms += rec.total_ms;
                r.max_total_ms = std::max(r.max_total_ms, rec.total_ms);
            }
            const double k = static_cast<double>(r.frames.size());
            for (double& v : r.avg_stage_ms) v /= k;
            r.avg_total_ms /= k;
        }

        for (std::size_t i = 0; i < kEngineCount; ++i) {
            const double u = r.elapsed_s > 0.0 ? busy_time_[i] / r.elapsed_s : 0.0;
            r.utilization[static_cast<EngineId>(i)] = std::clamp(u, 0.0, 1.0);
        }
        // Union of DLA busy intervals: the time some DLA is being fed.
        std::sort(dla_intervals_.begin(), dla_intervals_.end());
        double covered = 0.0;
        double cur_start = 0.0;
        double cur_end = -1.0;
        for (const auto& [a, b] : dla_intervals_) {
            if (a > cur_end) {
                if (cur_end > cur_start) covered += cur_end - cur_start;
                cur_start = a;
                cur_end = b;
            } else {
                cur_end = std::max(cur_end, b);
            }
        }
        if (cur_end > cur_start) covered += cur_end - cur_start;
        r.dla_staging_fraction = r.elapsed_s > 0.0 ? std::clamp(covered / r.elapsed_s, 0.0, 1.0) : 0.0;
        return r;
    }

    const PipelineSpec& spec_;
    std::vector<Frame> frames_;
    std::vector<std::size_t> stream_first_;
    std::vector<std::size_t> stream_count_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
    std::uint64_t seq_ = 0;
    double now_ = 0.0;

    std::vector<std::deque<int>> dec_wait_;
    std::vector<std::size_t> dec_inflight_;
    std::vector<std::set<int>> reorder_;
    std::vector<int> next_release_;
    std::vector<std::deque<int>> mux_wait_;
    std::size_t mux_inflight_ = 0;
    std::size_t mux_cursor_ = 0;
    std::vector<std::deque<int>> chain_wait_;
    std::vector<std::size_t> chain_inflight_;
    std::vector<std::deque<int>> started_;  // [0] mux, [j + 1] chain server j
    std::vector<std::set<int>> finished_;

    std::array<bool, kEngineCount> busy_{};
    std::array<double, kEngineCount> busy_time_{};
    std::array<bool, kStageCount> has_column_{};
    std::vector<std::pair<double, double>> dla_intervals_;

    std::size_t offered_ = 0;
    std::vector<FrameRecord> records_;
    std::vector<double> completion_times_;
};

}  // namespace

SimReport simulate_pipeline(const PipelineSpec& spec) { return Simulator(spec).run(); }

void measure_power(SimReport& r, const EngineCatalog& cat) {
    auto u = [&](EngineId e) {
        auto it = r.utilization.find(e);
        return it == r.utilization.end() ? 0.0 : it->second;
    };
    r.power.cuda_mw = power_draw(cat, EngineId::SmCluster, u(EngineId::SmCluster));
    r.power.dla_mw = power_draw(cat, EngineId::Dla0, u(EngineId::Dla0)) + power_draw(cat, EngineId::Dla1, u(EngineId::Dla1));
    r.power.cpu_mw = power_draw(cat, EngineId::Cpu, u(EngineId::Cpu)) + cat.cost_params.cpu_dtod_power_mw * r.dla_staging_fraction;
    r.power.total_mw = r.power.cuda_mw + r.power.cpu_mw + r.power.dla_mw;
    r.energy_mj = r.power.total_mw * r.elapsed_s;
}

SimReport simulate(const Scenario& sc) {
    SimReport r = simulate_pipeline(build_pipeline(sc));
    measure_power(r, sc.catalog);
    return r;
}

double analytic_throughput(const PipelineSpec& spec) {
    if (spec.decoder.jitter != 0.0) throw DomainError("analytic throughput needs deterministic decode times");
    if (spec.streams.empty()) throw DomainError("pipeline needs at least one stream");
    const auto& faces0 = spec.streams.front().faces;
    for (const auto& s : spec.streams) {
        if (s.faces.empty() || s.faces != faces0 ||
            std::adjacent_find(s.faces.begin(), s.faces.end(), std::not_equal_to<>()) != s.faces.end()) {
            throw DomainError("analytic throughput needs a constant face count");
        }
    }
    const int faces = faces0.front();
    const double n = static_cast<double>(spec.streams.size());

    // Mean occupancy each engine spends per frame, streams taking equal turns.
    std::array<double, kEngineCount> load{};
    for (std::size_t si = 0; si < spec.streams.size(); ++si) {
        const auto& st = spec.streams[si];
        double dec_occ = 0.0;
        for (char c : st.gop_pattern) {
            const double lat = spec.decoder.base_s[c == 'I' ? 0 : c == 'P' ? 1 : 2] * st.scale;
            dec_occ += std::clamp(spec.decoder.occupancy_s * st.scale, 0.0, lat);
        }
        load[index_of(spec.decoder.resource)] += dec_occ / static_cast<double>(st.gop_pattern.size()) / n;
        auto add = [&](const ServerSpec& s) {
            const double lat = s.latency_s + s.per_face_s * faces;
            const double occ = std::clamp(s.occupancy_s ? *s.occupancy_s : s.occupancy_ratio * lat, 0.0, lat);
            EngineId r = s.resource;
            if (s.alternate_dla) r = si % 2 == 0 ? EngineId::Dla0 : EngineId::Dla1;
            load[index_of(r)] += occ / n;
        };
        add(spec.mux);
        for (const auto& s : spec.chain) add(s);
    }
    const double worst = *std::max_element(load.begin(), load.end());
    double fps = worst > 0.0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
    if (spec.pacing == Pacing::Realtime) {
        double offered = 0.0;
        for (const auto& s : spec.streams) offered += s.fps;
        fps = std::min(fps, offered);
    }
    return fps;
}

double analytic_throughput(const Scenario& sc) { return analytic_throughput(build_pipeline(sc)); }

}  // namespace hetpipe
