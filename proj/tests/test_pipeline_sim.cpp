// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hetpipe/pipeline_sim.h"

using namespace hetpipe;

namespace {

ServerSpec server(const char* name, PipelineStage col, EngineId r, double latency_s) {
    ServerSpec s;
    s.name = name;
    s.column = col;
    s.resource = r;
    s.latency_s = latency_s;
    return s;
}

// Deterministic five-stage pipeline with every engine held for the whole stage.
PipelineSpec fixed_pipeline(double dec, double mux, double det, double rec, double enc,
                            EngineId det_on = EngineId::Dla0, EngineId rec_on = EngineId::SmCluster) {
    PipelineSpec p;
    p.streams = {StreamSpec{30.0, "I", {1}, 1.0}};
    p.decoder.base_s = {dec, dec, dec};
    p.decoder.occupancy_s = dec;
    p.mux = server("mux", PipelineStage::Streammux, EngineId::Cpu, mux);
    p.chain = {server("det", PipelineStage::Detect, det_on, det), server("rec", PipelineStage::Recognize, rec_on, rec),
               server("enc", PipelineStage::Encode, EngineId::Nvenc, enc)};
    p.reorder_capacity = 1 << 20;
    p.pacing = Pacing::Saturated;
    p.frames_per_stream = 3000;
    return p;
}

// Event-by-event recurrence for a chain of single servers with unbounded
// queues, engines possibly shared, and strict downstream priority not needed
// because no two stages share an engine here.
double tandem_oracle_fps(const std::vector<double>& stage_s, std::size_t frames) {
    std::vector<double> free_at(stage_s.size(), 0.0);
    double done = 0.0;
    double t_warm = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        double t = 0.0;
        for (std::size_t k = 0; k < stage_s.size(); ++k) {
            const double start = std::max(t, free_at[k]);
            free_at[k] = start + stage_s[k];
            t = free_at[k];
        }
        done = t;
        if (f == kWarmupFrames) t_warm = t;
    }
    return static_cast<double>(frames - 1 - kWarmupFrames) / (done - t_warm);
}

const CalibratedSystem& calibrated() {
    static const CalibratedSystem sys = calibrate_system(default_measurements());
    return sys;
}

}  // namespace

TEST_CASE("decoder latency by frame type") {
    CostParams p;
    p.decoder_base_ms = {2.0, 5.0, 12.0};
    p.decoder_jitter = 0.0;
    std::mt19937_64 rng(1);
    CHECK(decoder_latency_ms(FrameType::I, p, rng) == 2.0);
    CHECK(decoder_latency_ms(FrameType::B, p, rng) > decoder_latency_ms(FrameType::P, p, rng));
    p.decoder_jitter = 0.3;
    for (int i = 0; i < 1000; ++i) {
        const double v = decoder_latency_ms(FrameType::P, p, rng);
        CHECK(v >= 3.5 - 1e-12);
        CHECK(v <= 6.5 + 1e-12);
    }
}

TEST_CASE("recognize cost is linear in faces") {
    CHECK(recognize_cost(2e-3, 5e-4, 0) == 5e-4);
    CHECK(recognize_cost(2e-3, 5e-4, 8) - 5e-4 == doctest::Approx(2.0 * (recognize_cost(2e-3, 5e-4, 4) - 5e-4)));
    CHECK_THROWS_AS(recognize_cost(1e-3, 0.0, -1), DomainError);
}

TEST_CASE("streammux round robin") {
    std::size_t cursor = 0;
    std::vector<bool> both = {true, true};
    std::vector<std::size_t> picks;
    for (int i = 0; i < 6; ++i) picks.push_back(*streammux_next(both, cursor));
    CHECK(picks == std::vector<std::size_t>{0, 1, 0, 1, 0, 1});

    std::vector<bool> one = {true};
    cursor = 0;
    for (int i = 0; i < 3; ++i) CHECK(*streammux_next(one, cursor) == 0);

    std::vector<bool> starved = {true, false};
    cursor = 0;
    int a = 0;
    for (int i = 0; i < 10; ++i) a += *streammux_next(starved, cursor) == 0;
    CHECK(a == 10);

    std::vector<bool> none = {false, false};
    CHECK_FALSE(streammux_next(none, cursor).has_value());
}

TEST_CASE("cache contention factor") {
    const EngineCatalog cat = default_orin_catalog();
    const ModelGraph fd = build_facedetect();
    const ModelGraph fn = build_facenet();
    const AllocationPlan both_sm = plan_model_level(Scheme::FdGpuFnGpu, fd, fn, cat);
    const AllocationPlan both_dla = plan_model_level(Scheme::FdDlaFnDla, fd, fn, cat);
    CHECK(cache_contention(both_sm, cat, 1) == cat.cost_params.cache_penalty_lambda);

    AllocationPlan only_fd = both_sm;
    only_fd.stage_model.erase(PipelineStage::Recognize);
    EngineCatalog big_l2 = cat;
    big_l2.memory.l2_bytes = 64ULL << 20;
    CHECK(cache_contention(only_fd, big_l2, 1) == 1.0);

    // The detector fits on a DLA with nothing on the SMs.
    AllocationPlan dla_only = both_dla;
    dla_only.stage_model.erase(PipelineStage::Recognize);
    for (int n : {1, 2, 8}) CHECK(cache_contention(dla_only, cat, n) == 1.0);
}

TEST_CASE("five-stage example runs at the bottleneck rate") {
    const PipelineSpec p = fixed_pipeline(1e-3, 1e-3, 2e-3, 3e-3, 1e-3);
    const SimReport r = simulate_pipeline(p);
    REQUIRE(r.steady_state_fps);
    CHECK(*r.steady_state_fps == doctest::Approx(1000.0 / 3.0).epsilon(1e-6));
    CHECK(analytic_throughput(p) == doctest::Approx(1000.0 / 3.0));
    CHECK(*r.steady_state_fps == doctest::Approx(tandem_oracle_fps({1e-3, 1e-3, 2e-3, 3e-3, 1e-3}, 3000)).epsilon(1e-6));
}

TEST_CASE("stages sharing the SMs add their times") {
    const PipelineSpec p = fixed_pipeline(1e-3, 1e-3, 2e-3, 3e-3, 1e-3, EngineId::SmCluster, EngineId::SmCluster);
    const SimReport r = simulate_pipeline(p);
    REQUIRE(r.steady_state_fps);
    // The windowed estimate is good to one completion in the 2000-frame window.
    CHECK(*r.steady_state_fps == doctest::Approx(200.0).epsilon(1.0 / 2000));
    CHECK(analytic_throughput(p) == doctest::Approx(200.0));
}

TEST_CASE("random deterministic pipelines match the closed form") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> t(0.2e-3, 5e-3);
    const EngineId pool[] = {EngineId::SmCluster, EngineId::Dla0, EngineId::Dla1, EngineId::Pva};
    for (int trial = 0; trial < 30; ++trial) {
        PipelineSpec p = fixed_pipeline(t(rng), t(rng), t(rng), t(rng), t(rng), pool[rng() % 4], pool[rng() % 4]);
        p.chain[0].occupancy_ratio = 0.3 + 0.7 * (rng() % 100) / 100.0;
        p.streams = std::vector<StreamSpec>(1 + rng() % 3, StreamSpec{30.0, "IBBP", {3}, 1.0});
        p.chain[1].per_face_s = t(rng) / 3.0;
        const SimReport r = simulate_pipeline(p);
        REQUIRE(r.steady_state_fps);
        CHECK(*r.steady_state_fps == doctest::Approx(analytic_throughput(p)).epsilon(0.005));
    }
}

TEST_CASE("analytic form refuses stochastic inputs") {
    PipelineSpec p = fixed_pipeline(1e-3, 1e-3, 1e-3, 1e-3, 1e-3);
    p.decoder.jitter = 0.1;
    CHECK_THROWS_AS(analytic_throughput(p), DomainError);
    p.decoder.jitter = 0.0;
    p.streams[0].faces = {1, 2};
    CHECK_THROWS_AS(analytic_throughput(p), DomainError);
}

TEST_CASE("conservation of frames") {
    PipelineSpec p = fixed_pipeline(1e-3, 1e-3, 2e-3, 3e-3, 1e-3);
    p.frames_per_stream = 500;
    p.pacing = Pacing::Realtime;
    p.streams = {StreamSpec{30.0, "IBBP", {2}, 1.0}, StreamSpec{30.0, "IBBP", {2}, 1.0}};
    p.duration_s = 2.0;
    const SimReport r = simulate_pipeline(p);
    const std::size_t total = 2 * p.frames_per_stream;
    CHECK(r.offered <= total);
    CHECK(r.completed + r.in_flight == r.offered);
    CHECK(r.completed + r.in_flight + (total - r.offered) == total);
    CHECK(r.completed == r.frames.size());
    CHECK(r.offered < total);
}

TEST_CASE("per-stream completion follows frame order") {
    // Saturated sources keep several frames decoding at once, so B frames overtake.
    ScenarioFile file;
    file.pacing = Pacing::Saturated;
    file.duration_frames = 1000;
    Scenario sc = calibrated().scenario(Scheme::FdDlaFnGpu, file);
    sc.sources.resize(2, sc.sources.front());
    const SimReport r = simulate(sc);
    bool decode_out_of_order = false;
    for (int s = 0; s < 2; ++s) {
        double last_done = -1.0;
        double last_decoded = -1.0;
        for (const auto& f : r.frames) {
            if (f.stream != s) continue;
            CHECK(f.completion_s >= last_done);
            last_done = f.completion_s;
            const double decoded = f.arrival_s + f.stage_ms[0] * 1e-3;
            decode_out_of_order |= decoded < last_decoded;
            last_decoded = decoded;
        }
    }
    CHECK(decode_out_of_order);
}

TEST_CASE("round robin keeps symmetric streams level") {
    PipelineSpec p = fixed_pipeline(0.5e-3, 0.2e-3, 2e-3, 3e-3, 1e-3);
    p.streams = std::vector<StreamSpec>(3, StreamSpec{30.0, "IBBP", {1}, 1.0});
    p.frames_per_stream = 400;
    const SimReport r = simulate_pipeline(p);
    std::vector<int> count(3, 0);
    for (int s : r.completion_stream_order) {
        ++count[static_cast<std::size_t>(s)];
        const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
        REQUIRE(*hi - *lo <= 1);
    }
}

TEST_CASE("identical inputs give identical reports") {
    const Scenario sc = calibrated().scenario(Scheme::FdGpuFnDla, ScenarioFile{});
    const SimReport a = simulate(sc);
    const SimReport b = simulate(sc);
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        CHECK(a.frames[i].stage_ms == b.frames[i].stage_ms);
        CHECK(a.frames[i].completion_s == b.frames[i].completion_s);
    }
    CHECK(a.power.total_mw == b.power.total_mw);

    Scenario other = sc;
    other.seed = 7;
    CHECK(simulate(other).frames.front().stage_ms != a.frames.front().stage_ms);
}

TEST_CASE("smaller queues never raise throughput") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> t(0.2e-3, 4e-3);
    for (int trial = 0; trial < 10; ++trial) {
        PipelineSpec p = fixed_pipeline(t(rng), t(rng), t(rng), t(rng), t(rng), EngineId::SmCluster, EngineId::SmCluster);
        p.chain[0].occupancy_ratio = 0.5;
        p.frames_per_stream = 1500;
        // One completion of slack in the 500-frame measurement window.
        const double slack = 1.0 / 500;
        double prev = 0.0;
        for (std::size_t cap = 1; cap <= 6; ++cap) {
            p.mux.queue_capacity = cap;
            for (auto& s : p.chain) s.queue_capacity = cap;
            const double fps = *simulate_pipeline(p).steady_state_fps;
            CHECK(fps >= prev * (1.0 - slack));
            prev = fps;
        }
    }
}

TEST_CASE("idle scenario draws idle power") {
    Scenario sc = calibrated().scenario(Scheme::FdGpuFnGpu, ScenarioFile{});
    sc.duration_frames = 0;
    const SimReport r = simulate(sc);
    CHECK(r.completed == 0);
    double idle = 0.0;
    for (EngineId e : {EngineId::SmCluster, EngineId::Dla0, EngineId::Dla1, EngineId::Cpu}) {
        idle += sc.catalog.engine(e).idle_power_mw;
    }
    CHECK(r.power.total_mw == doctest::Approx(idle));
}

TEST_CASE("scenario checks") {
    Scenario sc = calibrated().scenario(Scheme::FdGpuFnGpu, ScenarioFile{});
    SUBCASE("no sources") { sc.sources.clear(); }
    SUBCASE("bad GOP") { sc.sources[0].gop_pattern = "PBB"; }
    SUBCASE("decoder overload") { sc.sources.assign(25, sc.sources[0]); }
    SUBCASE("4K overload") {
        SourceSpec uhd = sc.sources[0];
        uhd.width = 3840;
        uhd.height = 2160;
        sc.sources.assign(7, uhd);
    }
    SUBCASE("zero capacity") { sc.queue_capacity_frames = 0; }
    CHECK_THROWS_AS(check_scenario(sc), DomainError);
}

TEST_CASE("decoder capacity boundary is accepted") {
    Scenario sc = calibrated().scenario(Scheme::FdGpuFnGpu, ScenarioFile{});
    sc.sources.assign(24, sc.sources[0]);
    CHECK_NOTHROW(check_scenario(sc));
}

TEST_CASE("scenario file parsing") {
    const ScenarioFile f = ScenarioFile::parse(
        "#hetpipe-scenario v1\nstreams=2\nresolution=1280x720\nfps=25\ngop=IPPP\nfaces=1,2,3\n"
        "duration_frames=100\nseed=9\nqueue_capacity=4\nencoder=false\n");
    CHECK(f.streams == 2);
    CHECK(f.width == 1280);
    CHECK(f.height == 720);
    CHECK(f.fps == 25.0);
    CHECK(f.gop == "IPPP");
    CHECK(f.faces == std::vector<int>{1, 2, 3});
    CHECK(f.duration_frames == 100);
    CHECK(f.seed == 9);
    CHECK(f.queue_capacity == 4);
    CHECK_FALSE(f.encoder);
    CHECK(ScenarioFile::parse(f.to_text()).to_text() == f.to_text());

    try {
        ScenarioFile::parse("#hetpipe-scenario v1\nstreams=2\nwarp=9\n");
        FAIL("expected an error");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("scenario line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(ScenarioFile::parse("streams=1\n"), DomainError);
    CHECK_THROWS_AS(ScenarioFile::parse("#hetpipe-scenario v1\nfps=-1\n"), DomainError);
    CHECK_THROWS_AS(ScenarioFile::load("/nonexistent/x.scenario"), std::runtime_error);
}

TEST_CASE("calibrated single-stream averages") {
    const auto table = default_measurements();
    for (Scheme s : kModelLevelSchemes) {
        const SimReport r = simulate(calibrated().scenario(s, ScenarioFile{}));
        for (PipelineStage st : kAllStages) {
            CHECK(r.avg_stage_ms[index_of(st)] ==
                  doctest::Approx(*table.avg_ms(s, std::string(to_string(st)))).epsilon(0.02));
        }
    }
}

TEST_CASE("calibrated throughput order and power anchors") {
    ScenarioFile sat;
    sat.pacing = Pacing::Saturated;
    sat.duration_frames = 3000;
    std::map<Scheme, SimReport> r;
    for (Scheme s : kModelLevelSchemes) r[s] = simulate(calibrated().scenario(s, sat));
    auto fps = [&](Scheme s) { return *r[s].steady_state_fps; };
    CHECK(fps(Scheme::FdDlaFnGpu) > fps(Scheme::FdGpuFnGpu));
    CHECK(fps(Scheme::FdGpuFnGpu) > fps(Scheme::FdGpuFnDla));
    CHECK(fps(Scheme::FdGpuFnDla) >= fps(Scheme::FdDlaFnDla));
    CHECK(r[Scheme::FdGpuFnGpu].power.cuda_mw == doctest::Approx(4635.0).epsilon(0.02));
    CHECK(r[Scheme::FdGpuFnGpu].power.cuda_mw - r[Scheme::FdDlaFnGpu].power.cuda_mw == doctest::Approx(300.0).epsilon(0.1));
    CHECK(r[Scheme::FdDlaFnGpu].power.cpu_mw - r[Scheme::FdGpuFnGpu].power.cpu_mw == doctest::Approx(500.0).epsilon(0.1));

    // The saturated scheme-2 figure also holds with the face-proportional recognize term removed.
    PipelineSpec spec = build_pipeline(calibrated().scenario(Scheme::FdDlaFnGpu, sat));
    spec.decoder.jitter = 0.0;
    for (auto& srv : spec.chain) srv.per_face_s = 0.0;
    CHECK(analytic_throughput(spec) == doctest::Approx(1000.0 / 4.9).epsilon(0.02));
}

TEST_CASE("zero faces leave only the recognize overhead") {
    ScenarioFile f;
    f.faces = {0};
    const Scenario sc = calibrated().scenario(Scheme::FdGpuFnGpu, f);
    const PipelineSpec spec = build_pipeline(sc);
    double overhead = 0.0;
    for (const auto& s : spec.chain) {
        if (s.column == PipelineStage::Recognize) overhead += s.latency_s;
    }
    const SimReport r = simulate(sc);
    double lo = INFINITY;
    for (const auto& fr : r.frames) lo = std::min(lo, fr.stage_ms[index_of(PipelineStage::Recognize)]);
    CHECK(lo == doctest::Approx(overhead * 1e3));
    CHECK(sc.catalog.cost_params.recognize_overhead_s == doctest::Approx(overhead));
}
