// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared enumerations and their text forms.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hetpipe {

enum class Precision : std::uint8_t { FP32, FP16, INT8 };

enum class LayerKind : std::uint8_t {
    Conv,
    Deconv,
    FullyConnected,
    Activation,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    BatchNorm,
    Shuffle,
    Constant,
    Pow,
    L2Norm,
    Concat,
    Input,
    Output,
};

enum class EngineId : std::uint8_t { SmCluster, Dla0, Dla1, Pva, Nvdec, Nvenc, Cpu };
inline constexpr std::size_t kEngineCount = 7;

enum class EngineClass : std::uint8_t {
    SimtCluster,
    DeepLearningAccel,
    VisionAccel,
    VideoDecode,
    VideoEncode,
    HostCpu,
};

// The four model-level runs plus the layer-level balanced split.
enum class Scheme : std::uint8_t { FdGpuFnGpu, FdDlaFnGpu, FdGpuFnDla, FdDlaFnDla, LayerBalanced };

inline constexpr std::array<Scheme, 4> kModelLevelSchemes = {
    Scheme::FdGpuFnGpu, Scheme::FdDlaFnGpu, Scheme::FdGpuFnDla, Scheme::FdDlaFnDla};

// Report columns, in per-frame table order.
enum class PipelineStage : std::uint8_t { Decoder, Streammux, Detect, Recognize, Encode };
inline constexpr std::size_t kStageCount = 5;
inline constexpr std::array<PipelineStage, kStageCount> kAllStages = {
    PipelineStage::Decoder, PipelineStage::Streammux, PipelineStage::Detect,
    PipelineStage::Recognize, PipelineStage::Encode};

enum class FrameType : std::uint8_t { I, P, B };

std::size_t bytes_per_element(Precision p);

std::string_view to_string(Precision p);
std::string_view to_string(LayerKind k);
std::string_view to_string(EngineId e);
std::string_view to_string(EngineClass c);
std::string_view to_string(Scheme s);
std::string_view to_string(PipelineStage s);

std::optional<Precision> parse_precision(std::string_view text);
std::optional<LayerKind> parse_layer_kind(std::string_view text);
std::optional<EngineId> parse_engine_id(std::string_view text);
std::optional<Scheme> parse_scheme(std::string_view text);
std::optional<PipelineStage> parse_stage(std::string_view text);

EngineClass engine_class_of(EngineId e);
bool is_dla(EngineId e);

inline std::size_t index_of(EngineId e) { return static_cast<std::size_t>(e); }
inline std::size_t index_of(PipelineStage s) { return static_cast<std::size_t>(s); }

// Thrown when an operation is asked to run on an engine that cannot execute it.
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown for numeric arguments outside an operation's domain.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace hetpipe
