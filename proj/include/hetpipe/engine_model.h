// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0
//
// Hardware engines, memory hierarchy, compute-cost and power models, the
// two-engine balance solver and calibration against measured stage averages.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hetpipe/model_graph.h"
#include "hetpipe/types.h"

namespace hetpipe {

struct Engine {
    EngineId id = EngineId::SmCluster;
    EngineClass engine_class = EngineClass::SimtCluster;
    std::map<Precision, double> compute_rate;  // ops per second
    std::uint64_t local_buffer_bytes = 0;
    double active_power_mw = 0.0;
    double idle_power_mw = 0.0;
    double perf_per_watt_scale = 1.0;
};

struct MemoryHierarchy {
    std::uint64_t l1_bytes_per_sm = 192ULL * 1024;
    std::uint64_t l2_bytes = 4ULL << 20;
    int l2_latency_cycles = 200;
    std::uint64_t dram_bytes = 64ULL << 30;
    double dram_bandwidth_bytes_per_s = 204.08e9;
};

struct DlaCapabilities {
    int kernel_min = 1;
    int kernel_max = 32;
    int channels_min = 1;
    int channels_max = 8192;
    std::set<LayerKind> supported_kinds = {LayerKind::Conv,       LayerKind::Deconv,
                                           LayerKind::FullyConnected, LayerKind::Activation,
                                           LayerKind::MaxPool,    LayerKind::AvgPool,
                                           LayerKind::BatchNorm};
    std::set<Precision> supported_precisions = {Precision::FP16, Precision::INT8};
};

// Real-time decode capacity of the video decoder, in concurrent streams.
struct CodecCapacity {
    int streams_4k = 6;
    int streams_1080p = 24;
    double stream_fps = 30.0;
};

struct CostParams {
    // Multiplier on raw macs/rate time, keyed by (model name, engine class).
    std::map<std::pair<std::string, EngineClass>, double> scale;
    double zero_mac_overhead_s = 10e-6;
    double dtod_transfer_overhead_s = 20e-6;
    double cache_penalty_lambda = 1.08;
    double cpu_dtod_power_mw = 500.0;

    // Fraction of a stage's compute latency during which its engine is held.
    std::map<EngineClass, double> occupancy_ratio;

    // Pipeline plug-in service parameters.
    std::array<double, 3> decoder_base_ms = {2.0, 5.0, 12.0};  // I, P, B
    double decoder_jitter = 0.30;                              // uniform +/- fraction of base
    double streammux_latency_ms = 1.0;
    double streammux_occupancy_ms = 0.1;
    double preprocess_ms = 0.3;
    double encode_latency_ms = 3.0;
    double encode_occupancy_ms = 1.0;  // per 1080p frame
    double recognize_overhead_s = 0.5e-3;

    // Measured per-frame service time at saturation, when calibrated.
    std::optional<double> frame_service_target_ms;

    double scale_for(const std::string& model, EngineClass c) const;
    double occupancy_for(EngineClass c) const;
};

struct EngineCatalog {
    std::vector<Engine> engines;
    MemoryHierarchy memory;
    DlaCapabilities dla_caps;
    CodecCapacity nvdec;
    CostParams cost_params;
    int sm_count = 16;
    int simt_lanes_per_sm = 128;

    const Engine& engine(EngineId id) const;
    Engine& engine(EngineId id);
    bool has(EngineId id) const;
};

EngineCatalog default_orin_catalog();

// Throws std::logic_error when a catalog breaks its structural invariants
// (engine counts, memory ordering, DLA efficiency advantage).
void check_catalog(const EngineCatalog& cat);

// Throws CapabilityError if the engine has no rate for the precision.
double compute_rate(const Engine& e, Precision p);
double perf_per_watt(const Engine& e, Precision p);

// DLA active power implied by an SM active power and the efficiency ratio.
double dla_active_power_for(const EngineCatalog& cat, double ratio);

double layer_cost(const EngineCatalog& cat, const ModelGraph& g, int id, EngineId engine);
double model_cost(const EngineCatalog& cat, const ModelGraph& g, EngineId engine);

struct BalanceProblem {
    double c_gpu_s = 0.0;
    double c_dla_s = 0.0;
};

struct BalanceSolution {
    double t_gpu = 0.0;
    double t_dla = 0.0;
    double stage_time_s = 0.0;
};

enum class BalanceMode { EqualBusy, Literal };

BalanceSolution solve_balance(const BalanceProblem& p, BalanceMode mode = BalanceMode::EqualBusy);

double power_draw(const EngineCatalog& cat, EngineId engine, double utilization);

// Measured stage averages --------------------------------------------------

class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per-scheme average latencies in ms. Stage keys are the five report columns
// plus the optional "frame" row (per-frame service time at saturation).
struct StageMeasurementTable {
    std::map<Scheme, std::map<std::string, double>> rows;

    std::optional<double> avg_ms(Scheme s, const std::string& stage) const;
    void set(Scheme s, const std::string& stage, double ms) { rows[s][stage] = ms; }

    static StageMeasurementTable parse_csv(const std::string& text);
    static StageMeasurementTable load_csv(const std::filesystem::path& path);
    std::string to_csv() const;
};

// The shipped table of measured plug-in averages.
StageMeasurementTable default_measurements();

// Cost decomposition of one inference stage under one scheme:
// modeled_s = overhead_s + multiplicity * (scale * scaled_s + fixed_s).
struct StageRawCost {
    Scheme scheme = Scheme::FdGpuFnGpu;
    PipelineStage stage = PipelineStage::Detect;
    std::string model;
    EngineClass engine_class = EngineClass::SimtCluster;
    double scaled_s = 0.0;
    double fixed_s = 0.0;
    double multiplicity = 1.0;
    double overhead_s = 0.0;

    double modeled_s(double scale) const { return overhead_s + multiplicity * (scale * scaled_s + fixed_s); }
};

struct CalibrationOptions {
    std::string gop_pattern = "IBBPBBPBBPBB";
    double mean_faces = 4.0;  // recognize runs once per face
};

// Direct-ratio fit per scheme. Each returned CostParams starts from `base`.
std::map<Scheme, CostParams> calibrate(const StageMeasurementTable& measurements,
                                       std::span<const StageRawCost> raw_costs, const CostParams& base,
                                       const CalibrationOptions& options = {});

// GOP-weighted mean of the decoder base latencies.
double mean_decoder_base_ms(const CostParams& p, const std::string& gop_pattern);

}  // namespace hetpipe
