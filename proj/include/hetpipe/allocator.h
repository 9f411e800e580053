// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0
//
// DLA eligibility, compiler-lowering emulation, precision fallback and the
// model-level / layer-level allocation plans with their transfer accounting.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hetpipe/engine_model.h"
#include "hetpipe/model_graph.h"
#include "hetpipe/types.h"

namespace hetpipe {

enum class FallbackReason : std::uint8_t { Kind, Precision, Kernel, Channels };
std::string_view to_string(FallbackReason r);

struct DlaSupport {
    std::optional<FallbackReason> fallback;  // empty when supported

    bool supported() const { return !fallback.has_value(); }
};

// Reason names the first failing rule in the order kind, precision, kernel, channels.
DlaSupport classify_dla_support(const LayerNode& layer, const DlaCapabilities& caps);

// Shuffle+Constant pairs the DLA compiler inserts after an anchor layer.
struct LoweringRule {
    std::string model;
    int anchor_id = 0;
    int pairs = 0;
};

struct LoweringRules {
    std::vector<LoweringRule> rules;

    // CSV with header `model,anchor,pairs`.
    static LoweringRules parse_csv(const std::string& text);
    std::string to_csv() const;
};

// Anchors are the output layer of each inception block (its concat when it
// has one); 28 pairs in total for the built-in embedding network.
LoweringRules default_lowering_rules();

// Identity for non-DLA targets. Deterministic and idempotent: an anchor whose
// successors already include a Shuffle or Constant is left alone.
ModelGraph emulate_lowering(const ModelGraph& g, EngineId target,
                            const LoweringRules& rules = default_lowering_rules());

// Layers that cannot run in INT8, per model name.
struct Int8Exclusions {
    std::map<std::string, std::set<int>> by_model;
};

Int8Exclusions default_int8_exclusions();

// On a DLA with an INT8 request every layer becomes INT8 except the excluded
// ones, which run at FP16. Other engines and requests leave the graph as is.
ModelGraph precision_fallback(const ModelGraph& g, const Engine& engine, Precision requested = Precision::INT8,
                              const Int8Exclusions& exclusions = default_int8_exclusions());

enum class TransferDirection : std::uint8_t { DeviceToDevice, HostToDevice, DeviceToHost };
std::string_view to_string(TransferDirection d);

struct TransferEvent {
    std::string model;
    TransferDirection direction = TransferDirection::DeviceToDevice;
    std::uint64_t bytes = 0;
    int producer = -1;  // -1 for the host side
    int consumer = -1;
};

struct FallbackLayer {
    std::string model;
    int layer_id = 0;
    FallbackReason reason = FallbackReason::Kind;
};

// A maximal run of consecutive layers on one engine, in topological order.
struct Segment {
    EngineId engine = EngineId::SmCluster;
    double seconds = 0.0;              // compute plus any transfers attributed to it
    std::uint64_t working_set_bytes = 0;  // largest single-layer working set
    std::vector<int> layer_ids;
};

struct AllocationPlan {
    Scheme scheme = Scheme::FdGpuFnGpu;
    std::map<std::pair<std::string, int>, EngineId> layer_assignments;
    std::vector<FallbackLayer> fallback_layers;
    std::vector<TransferEvent> transfer_events;
    std::map<std::string, BalanceSolution> balance;
    std::map<PipelineStage, double> stage_costs_s;  // sequential latency of one inference
    // Busiest engine's time per model plus its transfers, the pipelined stage time.
    std::map<std::string, double> bottleneck_s;
    std::vector<std::string> notices;

    // The graphs as planned (after lowering and precision fallback).
    std::map<std::string, ModelGraph> graphs;
    // Which model runs in which inference stage.
    std::map<PipelineStage, std::string> stage_model;

    std::size_t dtod_count(const std::string& model) const;
};

struct PlanOptions {
    Precision dla_precision = Precision::FP16;
    BalanceMode balance_mode = BalanceMode::EqualBusy;
    LoweringRules lowering = default_lowering_rules();
    Int8Exclusions int8 = default_int8_exclusions();
};

// DLA engine used by each inference stage when it is DLA-resident.
EngineId detect_dla();
EngineId recognize_dla();

// Engine each stage's model is mapped to under a scheme (SM or a DLA).
EngineId scheme_engine(Scheme s, PipelineStage stage);

// One of the four model-level runs. Throws std::invalid_argument for LayerBalanced.
AllocationPlan plan_model_level(Scheme scheme, const ModelGraph& fd, const ModelGraph& fn, const EngineCatalog& cat,
                                const PlanOptions& options = {});

// Prefix on `dla`, suffix on the SM cluster, split chosen against the balance
// solution. The plan covers one model and reports it under the Detect stage.
AllocationPlan plan_layer_level(const ModelGraph& g, const EngineCatalog& cat, EngineId dla = EngineId::Dla0,
                                const PlanOptions& options = {});

// Both models split at layer level, detect on DLA0 and recognize on DLA1.
AllocationPlan plan_layer_balanced(const ModelGraph& fd, const ModelGraph& fn, const EngineCatalog& cat,
                                   const PlanOptions& options = {});

AllocationPlan plan_scheme(Scheme scheme, const ModelGraph& fd, const ModelGraph& fn, const EngineCatalog& cat,
                           const PlanOptions& options = {});

// Number of GPU islands: maximal runs of SM-assigned layers (Input/Output
// excluded) in list order that come after at least one DLA-assigned layer.
std::size_t count_islands(const ModelGraph& g, const std::map<int, EngineId>& assignment);

// DtoD events at both ends of every GPU island when any layer is on a DLA;
// a trailing island hands its result to the Output layer. Models with no
// DLA layer get one HtoD per input and one DtoH per output instead.
std::vector<TransferEvent> transfer_events_for(const ModelGraph& g, const std::map<int, EngineId>& assignment);

double transfer_cost(const std::vector<TransferEvent>& events, const EngineCatalog& cat);
double transfer_cost(const AllocationPlan& plan, const EngineCatalog& cat);

// Per-layer engine map of one model in a plan.
std::map<int, EngineId> assignment_of(const AllocationPlan& plan, const std::string& model);

// Execution segments of one model, costed against `cat`.
std::vector<Segment> stage_segments(const AllocationPlan& plan, const std::string& model, const EngineCatalog& cat);

// Stable-key JSON rendering.
std::string plan_to_json(const AllocationPlan& plan);

// Fits per-scheme cost scales so each scheme's modeled detect and recognize
// stage costs equal the measured averages. Returns per-scheme CostParams; the
// layer-balanced scheme gets the pooled scales.
std::map<Scheme, CostParams> fit_scheme_costs(const EngineCatalog& cat, const StageMeasurementTable& measurements,
                                              const ModelGraph& fd, const ModelGraph& fn,
                                              const PlanOptions& options = {}, const CalibrationOptions& copt = {});

// Modeled inference-stage latency: detect = Σ segments; recognize = overhead +
// faces × Σ segments.
double modeled_stage_s(const AllocationPlan& plan, PipelineStage stage, const EngineCatalog& cat, double faces);

}  // namespace hetpipe
