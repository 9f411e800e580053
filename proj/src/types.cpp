// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include "hetpipe/types.h"

#include <utility>

namespace hetpipe {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table,
                        std::string_view text) {
    for (const auto& [value, name] : table) {
        if (name == text) return value;
    }
    return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
    for (const auto& [v, name] : table) {
        if (v == value) return name;
    }
    return "?";
}

constexpr std::array<std::pair<Precision, std::string_view>, 3> kPrecisionNames = {{
    {Precision::FP32, "fp32"},
    {Precision::FP16, "fp16"},
    {Precision::INT8, "int8"},
}};

constexpr std::array<std::pair<LayerKind, std::string_view>, 15> kKindNames = {{
    {LayerKind::Conv, "conv"},
    {LayerKind::Deconv, "deconv"},
    {LayerKind::FullyConnected, "fc"},
    {LayerKind::Activation, "activation"},
    {LayerKind::MaxPool, "pool_max"},
    {LayerKind::AvgPool, "pool_avg"},
    {LayerKind::GlobalAvgPool, "pool_global_avg"},
    {LayerKind::BatchNorm, "batchnorm"},
    {LayerKind::Shuffle, "shuffle"},
    {LayerKind::Constant, "constant"},
    {LayerKind::Pow, "pow"},
    {LayerKind::L2Norm, "l2norm"},
    {LayerKind::Concat, "concat"},
    {LayerKind::Input, "input"},
    {LayerKind::Output, "output"},
}};

constexpr std::array<std::pair<EngineId, std::string_view>, kEngineCount> kEngineNames = {{
    {EngineId::SmCluster, "SM_CLUSTER"},
    {EngineId::Dla0, "DLA0"},
    {EngineId::Dla1, "DLA1"},
    {EngineId::Pva, "PVA"},
    {EngineId::Nvdec, "NVDEC"},
    {EngineId::Nvenc, "NVENC"},
    {EngineId::Cpu, "CPU"},
}};

constexpr std::array<std::pair<EngineClass, std::string_view>, 6> kClassNames = {{
    {EngineClass::SimtCluster, "simt_cluster"},
    {EngineClass::DeepLearningAccel, "dla"},
    {EngineClass::VisionAccel, "pva"},
    {EngineClass::VideoDecode, "video_decode"},
    {EngineClass::VideoEncode, "video_encode"},
    {EngineClass::HostCpu, "cpu"},
}};

constexpr std::array<std::pair<Scheme, std::string_view>, 5> kSchemeNames = {{
    {Scheme::FdGpuFnGpu, "fdfn_gpu"},
    {Scheme::FdDlaFnGpu, "fd_dla_fn_gpu"},
    {Scheme::FdGpuFnDla, "fd_gpu_fn_dla"},
    {Scheme::FdDlaFnDla, "fdfn_dla"},
    {Scheme::LayerBalanced, "layer_balanced"},
}};

constexpr std::array<std::pair<PipelineStage, std::string_view>, kStageCount> kStageNames = {{
    {PipelineStage::Decoder, "decoder"},
    {PipelineStage::Streammux, "streammux"},
    {PipelineStage::Detect, "detect"},
    {PipelineStage::Recognize, "recognize"},
    {PipelineStage::Encode, "encode"},
}};

}  // namespace

std::size_t bytes_per_element(Precision p) {
    switch (p) {
        case Precision::FP32: return 4;
        case Precision::FP16: return 2;
        case Precision::INT8: return 1;
    }
    return 4;
}

std::string_view to_string(Precision p) { return name_of(kPrecisionNames, p); }
std::string_view to_string(LayerKind k) { return name_of(kKindNames, k); }
std::string_view to_string(EngineId e) { return name_of(kEngineNames, e); }
std::string_view to_string(EngineClass c) { return name_of(kClassNames, c); }
std::string_view to_string(Scheme s) { return name_of(kSchemeNames, s); }
std::string_view to_string(PipelineStage s) { return name_of(kStageNames, s); }

std::optional<Precision> parse_precision(std::string_view text) { return lookup(kPrecisionNames, text); }
std::optional<LayerKind> parse_layer_kind(std::string_view text) { return lookup(kKindNames, text); }
std::optional<EngineId> parse_engine_id(std::string_view text) { return lookup(kEngineNames, text); }
std::optional<Scheme> parse_scheme(std::string_view text) { return lookup(kSchemeNames, text); }
std::optional<PipelineStage> parse_stage(std::string_view text) { return lookup(kStageNames, text); }

EngineClass engine_class_of(EngineId e) {
    switch (e) {
        case EngineId::SmCluster: return EngineClass::SimtCluster;
        case EngineId::Dla0:
        case EngineId::Dla1: return EngineClass::DeepLearningAccel;
        case EngineId::Pva: return EngineClass::VisionAccel;
        case EngineId::Nvdec: return EngineClass::VideoDecode;
        case EngineId::Nvenc: return EngineClass::VideoEncode;
        case EngineId::Cpu: return EngineClass::HostCpu;
    }
    return EngineClass::HostCpu;
}

bool is_dla(EngineId e) { return e == EngineId::Dla0 || e == EngineId::Dla1; }

}  // namespace hetpipe
