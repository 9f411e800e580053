// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0
//
// Discrete-event simulation of the decode, mux, preprocess, detect, recognize
// and encode pipeline over one or more video sources.
//
// Every stage is a pipelined server: a frame finishes `latency` after it
// starts, but the server's engine is held only for the `occupancy` part of
// that time. Inter-stage queues are bounded with credit-based backpressure,
// and shared engines give priority to the most downstream waiting stage.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hetpipe/allocator.h"
#include "hetpipe/engine_model.h"
#include "hetpipe/types.h"

namespace hetpipe {

enum class Codec : std::uint8_t { H264, H265 };
std::string_view to_string(Codec c);
std::optional<Codec> parse_codec(std::string_view text);

// Realtime sources emit a frame every 1/fps; saturated sources offer the next
// frame as soon as the previous one starts decoding.
enum class Pacing : std::uint8_t { Realtime, Saturated };
std::string_view to_string(Pacing p);
std::optional<Pacing> parse_pacing(std::string_view text);

struct SourceSpec {
    int width = 1920;
    int height = 1080;
    double fps = 30.0;
    std::string gop_pattern = "IBBPBBPBBPBB";
    std::vector<int> faces = {4};  // cyclic trace
    Codec codec = Codec::H265;

    int faces_at(std::size_t frame) const;
    double pixel_scale() const;  // pixels relative to 1080p
};

struct Scenario {
    std::vector<SourceSpec> sources = {SourceSpec{}};
    AllocationPlan plan;
    EngineCatalog catalog;
    int queue_capacity_frames = 6;
    std::optional<int> duration_frames = 650;  // per source
    std::optional<double> duration_s;
    std::uint64_t seed = 42;
    bool enable_encoder = true;
    Pacing pacing = Pacing::Realtime;
    bool hypothetical_dual_dla = false;  // DLA stages alternate engines by stream
};

// Throws DomainError on an invalid scenario (no sources, bad GOP, NVDEC
// capacity exceeded, non-positive sizes).
void check_scenario(const Scenario& sc);

// Frames simulated per source.
std::size_t frames_per_source(const Scenario& sc);

// Engine-level description the event loop runs on ----------------------------

struct ServerSpec {
    std::string name;
    PipelineStage column = PipelineStage::Detect;
    EngineId resource = EngineId::SmCluster;
    double latency_s = 0.0;
    double per_face_s = 0.0;
    double occupancy_ratio = 1.0;         // occupancy = ratio x latency ...
    std::optional<double> occupancy_s;    // ... unless fixed here (capped at latency)
    std::optional<std::size_t> queue_capacity;  // waiting slots in front; empty = unbounded
    bool alternate_dla = false;           // DLA(stream % 2) instead of `resource`
};

struct DecoderSpec {
    std::array<double, 3> base_s = {2e-3, 5e-3, 12e-3};  // I, P, B
    double jitter = 0.0;
    double occupancy_s = 1.0 / 720.0;
    EngineId resource = EngineId::Nvdec;
};

struct StreamSpec {
    double fps = 30.0;
    std::string gop_pattern = "IBBPBBPBBPBB";
    std::vector<int> faces = {4};
    double scale = 1.0;  // decode work relative to 1080p
};

struct PipelineSpec {
    std::vector<StreamSpec> streams = {StreamSpec{}};
    DecoderSpec decoder;
    ServerSpec mux;
    std::vector<ServerSpec> chain;
    std::size_t reorder_capacity = 12;
    Pacing pacing = Pacing::Saturated;
    std::size_t frames_per_stream = 1000;
    std::optional<double> duration_s;
    std::uint64_t seed = 42;
};

// Translates a scenario into servers: PVA, the detect and recognize engine
// segments of the plan, and the optional encoder.
PipelineSpec build_pipeline(const Scenario& sc);

// Results ---------------------------------------------------------------------

struct FrameRecord {
    int stream = 0;
    int frame = 0;
    FrameType type = FrameType::I;
    std::array<double, kStageCount> stage_ms{};
    double total_ms = 0.0;
    int faces = 0;
    double arrival_s = 0.0;
    double completion_s = 0.0;
};

struct PowerBreakdown {
    double cuda_mw = 0.0;
    double cpu_mw = 0.0;
    double dla_mw = 0.0;
    double total_mw = 0.0;
};

struct SimReport {
    std::vector<FrameRecord> frames;  // by stream, then frame index
    std::array<double, kStageCount> avg_stage_ms{};
    double avg_total_ms = 0.0;
    double max_total_ms = 0.0;
    double throughput_fps = 0.0;
    std::vector<double> per_stream_fps;
    std::optional<double> steady_state_fps;  // after the warm-up, when enough frames
    std::map<EngineId, double> utilization;
    double dla_staging_fraction = 0.0;
    PowerBreakdown power;
    double energy_mj = 0.0;
    double elapsed_s = 0.0;
    std::size_t offered = 0;
    std::size_t completed = 0;
    std::size_t in_flight = 0;
    std::vector<int> completion_stream_order;  // stream of each completion, in time order
};

inline constexpr std::size_t kWarmupFrames = 1000;

SimReport simulate(const Scenario& sc);

// Runs the event loop. Utilization and the DLA staging fraction are filled;
// power needs a catalog (see measure_power).
SimReport simulate_pipeline(const PipelineSpec& spec);

// Closed form for deterministic pipelines with unbounded queues: the inverse of
// the largest per-frame occupancy summed over each engine. Throws DomainError
// for stochastic inputs.
double analytic_throughput(const PipelineSpec& spec);
double analytic_throughput(const Scenario& sc);

// Stage models -----------------------------------------------------------------

// Base time for the frame type, times (1 + jitter x u) with u uniform in [-1, 1].
double decoder_latency_ms(FrameType t, const CostParams& p, std::mt19937_64& rng);

double recognize_cost(double base_per_face_s, double overhead_s, int faces);

// Next stream the multiplexer serves: the first ready stream at or after the
// cursor, wrapping. The cursor moves past the chosen stream.
std::optional<std::size_t> streammux_next(const std::vector<bool>& ready, std::size_t& cursor);

// lambda when the SM-resident working sets of all concurrently running
// streams exceed L2, else 1.
double cache_contention(const AllocationPlan& plan, const EngineCatalog& cat, int concurrent_streams);

// Fills power and energy from utilization and the staging fraction.
void measure_power(SimReport& r, const EngineCatalog& cat);

// Scenario file -------------------------------------------------------------------

struct ScenarioFile {
    int streams = 1;
    int width = 1920;
    int height = 1080;
    double fps = 30.0;
    std::string gop = "IBBPBBPBBPBB";
    std::vector<int> faces = {4};
    int duration_frames = 650;
    std::uint64_t seed = 42;
    int queue_capacity = 6;
    bool encoder = true;
    Pacing pacing = Pacing::Realtime;
    Codec codec = Codec::H265;
    Precision dla_precision = Precision::FP16;
    BalanceMode balance = BalanceMode::EqualBusy;
    bool hypothetical_dual_dla = false;

    // `#hetpipe-scenario v1` header then key=value lines. Throws DomainError
    // naming the line on any problem.
    static ScenarioFile parse(const std::string& text);
    static ScenarioFile load(const std::filesystem::path& path);
    std::string to_text() const;
};

// Calibration of the whole system ---------------------------------------------------

struct SystemOptions {
    PlanOptions plan;
    CalibrationOptions calibration;
    SourceSpec source;          // reference source for the calibration runs
    int queue_capacity = 6;
    bool enable_encoder = true;
    std::size_t saturated_frames = 3000;
    int refine_iterations = 4;
};

struct CalibratedSystem {
    EngineCatalog catalog;  // power-calibrated, scheme-neutral
    std::map<Scheme, CostParams> params;
    ModelGraph facedetect;
    ModelGraph facenet;
    PlanOptions plan_options;

    EngineCatalog catalog_for(Scheme s) const;
    AllocationPlan plan_for(Scheme s) const;
    Scenario scenario(Scheme s, const ScenarioFile& file) const;
};

// Fits cost scales to the measured stage averages, engine occupancy to the
// measured per-frame service times, and the SM power figures to the reported
// endpoint power and scheme delta. Throws CalibrationError.
CalibratedSystem calibrate_system(const StageMeasurementTable& measurements, const SystemOptions& options = {});

Scenario make_scenario(const ScenarioFile& file, const AllocationPlan& plan, const EngineCatalog& cat);

}  // namespace hetpipe
