// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include "hetpipe/engine_model.h"

#include <algorithm>
#include <cmath>

namespace hetpipe {

double CostParams::scale_for(const std::string& model, EngineClass c) const {
    auto it = scale.find({model, c});
    return it == scale.end() ? 1.0 : it->second;
}

double CostParams::occupancy_for(EngineClass c) const {
    auto it = occupancy_ratio.find(c);
    return it == occupancy_ratio.end() ? 1.0 : it->second;
}

const Engine& EngineCatalog::engine(EngineId id) const {
    for (const auto& e : engines) {
        if (e.id == id) return e;
    }
    throw std::out_of_range("engine " + std::string(to_string(id)) + " not in catalog");
}

Engine& EngineCatalog::engine(EngineId id) {
    for (auto& e : engines) {
        if (e.id == id) return e;
    }
    throw std::out_of_range("engine " + std::string(to_string(id)) + " not in catalog");
}

bool EngineCatalog::has(EngineId id) const {
    return std::any_of(engines.begin(), engines.end(), [&](const Engine& e) { return e.id == id; });
}

double compute_rate(const Engine& e, Precision p) {
    auto it = e.compute_rate.find(p);
    if (it == e.compute_rate.end() || it->second <= 0.0) {
        throw CapabilityError(std::string(to_string(e.id)) + " does not execute " + std::string(to_string(p)));
    }
    return it->second;
}

double perf_per_watt(const Engine& e, Precision p) {
    return compute_rate(e, p) * e.perf_per_watt_scale / (e.active_power_mw * 1e-3);
}

double dla_active_power_for(const EngineCatalog& cat, double ratio) {
    const Engine& sm = cat.engine(EngineId::SmCluster);
    const double sm_ppw = compute_rate(sm, Precision::INT8) / sm.active_power_mw;
    return 52.5e12 / (ratio * sm_ppw);
}

EngineCatalog default_orin_catalog() {
    EngineCatalog cat;

    Engine sm;
    sm.id = EngineId::SmCluster;
    sm.engine_class = EngineClass::SimtCluster;
    // 16 SMs x 128 lanes plus tensor cores; INT8 quoted on the same sparse basis as the DLA.
    sm.compute_rate = {{Precision::FP32, 5.3e12}, {Precision::FP16, 85e12}, {Precision::INT8, 170e12}};
    sm.local_buffer_bytes = static_cast<std::uint64_t>(cat.sm_count) * cat.memory.l1_bytes_per_sm;
    sm.active_power_mw = 4635.0;
    sm.idle_power_mw = 3919.0;
    cat.engines.push_back(sm);

    for (EngineId id : {EngineId::Dla0, EngineId::Dla1}) {
        Engine dla;
        dla.id = id;
        dla.engine_class = EngineClass::DeepLearningAccel;
        dla.compute_rate = {{Precision::INT8, 52.5e12}, {Precision::FP16, 26.25e12}};
        dla.local_buffer_bytes = 2ULL << 20;
        dla.active_power_mw = dla_active_power_for(cat, 2.5);
        dla.idle_power_mw = 20.0;
        cat.engines.push_back(dla);
    }

    auto fixed_function = [](EngineId id, double active, double idle) {
        Engine e;
        e.id = id;
        e.engine_class = engine_class_of(id);
        e.active_power_mw = active;
        e.idle_power_mw = idle;
        return e;
    };
    cat.engines.push_back(fixed_function(EngineId::Pva, 250.0, 10.0));
    cat.engines.push_back(fixed_function(EngineId::Nvdec, 350.0, 10.0));
    cat.engines.push_back(fixed_function(EngineId::Nvenc, 350.0, 10.0));

    Engine cpu = fixed_function(EngineId::Cpu, 4000.0, 1500.0);
    cpu.compute_rate = {{Precision::FP32, 0.2e12}};
    cat.engines.push_back(cpu);

    check_catalog(cat);
    return cat;
}

void check_catalog(const EngineCatalog& cat) {
    auto count = [&](EngineClass c) {
        return std::count_if(cat.engines.begin(), cat.engines.end(),
                             [&](const Engine& e) { return e.engine_class == c; });
    };
    if (count(EngineClass::SimtCluster) != 1) throw std::logic_error("catalog needs exactly one SM cluster");
    if (count(EngineClass::DeepLearningAccel) != 2) throw std::logic_error("catalog needs exactly two DLA engines");
    if (count(EngineClass::VisionAccel) != 1) throw std::logic_error("catalog needs exactly one PVA");
    if (count(EngineClass::VideoDecode) != 1) throw std::logic_error("catalog needs exactly one NVDEC");
    if (count(EngineClass::VideoEncode) != 1) throw std::logic_error("catalog needs exactly one NVENC");

    const auto& m = cat.memory;
    if (m.l1_bytes_per_sm == 0 || !(m.l1_bytes_per_sm < m.l2_bytes && m.l2_bytes < m.dram_bytes) ||
        m.dram_bandwidth_bytes_per_s <= 0.0 || m.l2_latency_cycles <= 0) {
        throw std::logic_error("memory hierarchy must satisfy 0 < l1 < l2 < dram");
    }

    const Engine& sm = cat.engine(EngineId::SmCluster);
    for (const auto& e : cat.engines) {
        if (e.engine_class != EngineClass::DeepLearningAccel) continue;
        if (e.compute_rate.count(Precision::FP32)) throw std::logic_error("DLA engines have no FP32 rate");
        if (perf_per_watt(e, Precision::INT8) < 2.0 * perf_per_watt(sm, Precision::INT8)) {
            throw std::logic_error("DLA INT8 perf/W must be at least twice the SM cluster's");
        }
    }
    if (cat.cost_params.cache_penalty_lambda < 1.0) throw std::logic_error("cache penalty must be >= 1");
    for (const auto& [key, s] : cat.cost_params.scale) {
        if (!(s > 0.0)) throw std::logic_error("cost scale factors must be positive");
    }
}

double layer_cost(const EngineCatalog& cat, const ModelGraph& g, int id, EngineId engine) {
    const LayerNode& l = g.layer(id);
    const Engine& e = cat.engine(engine);
    const double rate = compute_rate(e, l.precision);
    if (l.macs == 0) return cat.cost_params.zero_mac_overhead_s;
    return static_cast<double>(l.macs) / rate * cat.cost_params.scale_for(g.name, e.engine_class);
}

double model_cost(const EngineCatalog& cat, const ModelGraph& g, EngineId engine) {
    double total = 0.0;
    for (const auto& l : g.layers) total += layer_cost(cat, g, l.id, engine);
    return total;
}

BalanceSolution solve_balance(const BalanceProblem& p, BalanceMode mode) {
    if (!(p.c_gpu_s > 0.0) || !(p.c_dla_s > 0.0) || !std::isfinite(p.c_gpu_s) || !std::isfinite(p.c_dla_s)) {
        throw DomainError("balance costs must be positive and finite");
    }
    const double sum = p.c_gpu_s + p.c_dla_s;
    BalanceSolution s;
    if (mode == BalanceMode::EqualBusy) {
        s.t_gpu = p.c_dla_s / sum;
        s.t_dla = 1.0 - s.t_gpu;
        s.stage_time_s = s.t_gpu * p.c_gpu_s;
    } else {
        // C_gpu / T_gpu == C_dla / T_dla taken at face value.
        s.t_gpu = p.c_gpu_s / sum;
        s.t_dla = 1.0 - s.t_gpu;
        s.stage_time_s = std::max(s.t_gpu * p.c_gpu_s, s.t_dla * p.c_dla_s);
    }
    return s;
}

double power_draw(const EngineCatalog& cat, EngineId engine, double utilization) {
    if (!(utilization >= 0.0 && utilization <= 1.0)) {
        throw DomainError("utilization must lie in [0, 1]");
    }
    const Engine& e = cat.engine(engine);
    return e.idle_power_mw + utilization * (e.active_power_mw - e.idle_power_mw);
}

}  // namespace hetpipe
