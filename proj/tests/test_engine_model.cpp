// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hetpipe/engine_model.h"

using namespace hetpipe;

namespace {

// Brute-force minimum of max(t c_gpu, (1 - t) c_dla) over a 1e-4 grid.
double sweep_optimum(double c_gpu, double c_dla) {
    double best = INFINITY;
    for (int i = 0; i <= 10000; ++i) {
        const double t = i * 1e-4;
        best = std::min(best, std::max(t * c_gpu, (1.0 - t) * c_dla));
    }
    return best;
}

ModelGraph one_layer(LayerKind kind, std::uint64_t macs, Precision p) {
    ModelGraph g;
    g.name = "probe";
    g.input_dims = {1, 1, 1};
    LayerNode n;
    n.id = 0;
    n.kind = kind;
    n.macs = macs;
    n.precision = p;
    g.layers.push_back(n);
    return g;
}

}  // namespace

TEST_CASE("default catalog figures") {
    const EngineCatalog cat = default_orin_catalog();
    CHECK(cat.memory.dram_bandwidth_bytes_per_s == doctest::Approx(204.08e9));
    CHECK(cat.memory.l2_bytes == 4ULL << 20);
    CHECK(cat.sm_count == 16);
    CHECK(cat.simt_lanes_per_sm == 128);
    CHECK(cat.nvdec.streams_1080p == 24);
    CHECK(cat.nvdec.streams_4k == 6);
    int dlas = 0;
    for (const auto& e : cat.engines) dlas += e.engine_class == EngineClass::DeepLearningAccel;
    CHECK(dlas == 2);
    CHECK_NOTHROW(check_catalog(cat));
}

TEST_CASE("DLA rates and efficiency") {
    const EngineCatalog cat = default_orin_catalog();
    const Engine& dla = cat.engine(EngineId::Dla0);
    const Engine& sm = cat.engine(EngineId::SmCluster);
    CHECK(compute_rate(dla, Precision::INT8) == doctest::Approx(52.5e12));
    CHECK(compute_rate(dla, Precision::FP16) == doctest::Approx(26.25e12));
    CHECK_THROWS_AS(compute_rate(dla, Precision::FP32), CapabilityError);
    CHECK(perf_per_watt(dla, Precision::INT8) / perf_per_watt(sm, Precision::INT8) == doctest::Approx(2.5));
}

TEST_CASE("catalog checks reject broken catalogs") {
    EngineCatalog cat = default_orin_catalog();
    SUBCASE("one DLA") {
        cat.engines.erase(std::find_if(cat.engines.begin(), cat.engines.end(),
                                       [](const Engine& e) { return e.id == EngineId::Dla1; }));
    }
    SUBCASE("memory ordering") { cat.memory.l2_bytes = cat.memory.l1_bytes_per_sm / 2; }
    SUBCASE("inefficient DLA") { cat.engine(EngineId::Dla0).active_power_mw *= 10.0; }
    SUBCASE("FP32 on DLA") { cat.engine(EngineId::Dla1).compute_rate[Precision::FP32] = 1e12; }
    CHECK_THROWS_AS(check_catalog(cat), std::logic_error);
}

TEST_CASE("layer cost is macs over rate") {
    const EngineCatalog cat = default_orin_catalog();
    const ModelGraph g = one_layer(LayerKind::Conv, 52'500'000'000'000ULL, Precision::INT8);
    CHECK(layer_cost(cat, g, 0, EngineId::Dla0) == doctest::Approx(1.0));

    const ModelGraph c = one_layer(LayerKind::Constant, 0, Precision::FP16);
    CHECK(layer_cost(cat, c, 0, EngineId::SmCluster) == cat.cost_params.zero_mac_overhead_s);

    const ModelGraph f32 = one_layer(LayerKind::Conv, 1000, Precision::FP32);
    CHECK_THROWS_AS(layer_cost(cat, f32, 0, EngineId::Dla1), CapabilityError);
}

TEST_CASE("model cost is the layer sum") {
    const EngineCatalog cat = default_orin_catalog();
    for (const ModelGraph& g : {build_facedetect(), build_facenet()}) {
        for (EngineId e : {EngineId::SmCluster, EngineId::Dla0}) {
            double sum = 0.0;
            for (const auto& l : g.layers) {
                sum += l.macs == 0 ? cat.cost_params.zero_mac_overhead_s
                                   : static_cast<double>(l.macs) / compute_rate(cat.engine(e), l.precision);
            }
            CHECK(model_cost(cat, g, e) == doctest::Approx(sum).epsilon(1e-12));
        }
    }

    ModelGraph empty;
    empty.name = "empty";
    empty.input_dims = {1, 1, 1};
    empty.layers.push_back({});
    empty.layers.back().kind = LayerKind::Input;
    empty.layers.push_back({});
    empty.layers.back().id = 1;
    empty.layers.back().kind = LayerKind::Output;
    empty.layers.back().preds = {0};
    CHECK(model_cost(cat, empty, EngineId::SmCluster) == doctest::Approx(2.0 * cat.cost_params.zero_mac_overhead_s));
}

TEST_CASE("balance solver examples") {
    auto s = solve_balance({10e-3, 10e-3});
    CHECK(s.t_gpu == doctest::Approx(0.5));
    CHECK(s.t_dla == doctest::Approx(0.5));
    CHECK(s.stage_time_s == doctest::Approx(5e-3));

    s = solve_balance({10e-3, 30e-3});
    CHECK(s.t_gpu == doctest::Approx(0.75));
    CHECK(s.t_dla == doctest::Approx(0.25));
    CHECK(s.stage_time_s == doctest::Approx(7.5e-3));
    CHECK(s.stage_time_s == doctest::Approx(sweep_optimum(10e-3, 30e-3)).epsilon(1e-4));

    s = solve_balance({10e-3, 1e9});
    CHECK(s.t_gpu == doctest::Approx(1.0));

    CHECK_THROWS_AS(solve_balance({0.0, 1.0}), DomainError);
    CHECK_THROWS_AS(solve_balance({1.0, INFINITY}), DomainError);
}

TEST_CASE("literal balance equates the cost ratios") {
    const auto s = solve_balance({10e-3, 30e-3}, BalanceMode::Literal);
    CHECK(10e-3 / s.t_gpu == doctest::Approx(30e-3 / s.t_dla));
    CHECK(s.t_gpu == doctest::Approx(0.25));
    CHECK(s.stage_time_s >= solve_balance({10e-3, 30e-3}).stage_time_s);
}

TEST_CASE("balance solver matches a sweep on random pairs") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(1e-4, 0.1);
    for (int i = 0; i < 100; ++i) {
        const double cg = u(rng);
        const double cd = u(rng);
        const auto s = solve_balance({cg, cd});
        const double best = sweep_optimum(cg, cd);
        CHECK(s.t_gpu + s.t_dla == 1.0);
        CHECK(std::abs(s.stage_time_s - best) / best <= 1e-4);
    }
}

TEST_CASE("power is linear with an idle floor") {
    const EngineCatalog cat = default_orin_catalog();
    for (const auto& e : cat.engines) {
        CHECK(power_draw(cat, e.id, 0.0) == e.idle_power_mw);
        CHECK(power_draw(cat, e.id, 1.0) == doctest::Approx(e.active_power_mw));
        double prev = -1.0;
        for (int i = 0; i <= 20; ++i) {
            const double p = power_draw(cat, e.id, i / 20.0);
            CHECK(p >= prev);
            prev = p;
        }
    }
    CHECK_THROWS_AS(power_draw(cat, EngineId::SmCluster, 1.5), DomainError);
}

TEST_CASE("measurement table parsing") {
    const auto t = default_measurements();
    CHECK(*t.avg_ms(Scheme::FdDlaFnGpu, "detect") == 9.2);
    CHECK(StageMeasurementTable::parse_csv(t.to_csv()).rows == t.rows);

    CHECK_THROWS_AS(StageMeasurementTable::parse_csv("scheme,stage,avg_ms\nfdfn_gpu,warp,1\n"), CalibrationError);
    CHECK_THROWS_AS(StageMeasurementTable::parse_csv("scheme,stage,avg_ms\nnope,detect,1\n"), CalibrationError);
    CHECK_THROWS_AS(StageMeasurementTable::parse_csv("a,b\n"), CalibrationError);
    CHECK_THROWS_AS(StageMeasurementTable::load_csv("/nonexistent/table.csv"), CalibrationError);
}

TEST_CASE("decoder mean follows the GOP mix") {
    CostParams p;
    p.decoder_base_ms = {2.0, 5.0, 12.0};
    CHECK(mean_decoder_base_ms(p, "IBBPBBPBBPBB") == doctest::Approx((2.0 + 3 * 5.0 + 8 * 12.0) / 12.0));
    CHECK_THROWS_AS(mean_decoder_base_ms(p, "IXP"), DomainError);
}

namespace {

std::vector<StageRawCost> raw_for(const StageMeasurementTable& t) {
    std::vector<StageRawCost> raw;
    for (const auto& [s, stages] : t.rows) {
        raw.push_back({s, PipelineStage::Detect, "facedetect", EngineClass::SimtCluster, 4e-3, 1e-4, 1.0, 0.0});
        raw.push_back({s, PipelineStage::Recognize, "facenet", EngineClass::SimtCluster, 2e-3, 2e-5, 4.0, 5e-4});
    }
    return raw;
}

}  // namespace

TEST_CASE("calibrate identity fit gives unit scales") {
    StageMeasurementTable t;
    for (const char* st : {"decoder", "streammux", "encode"}) t.set(Scheme::FdGpuFnGpu, st, 5.0);
    // Measured equals modeled at scale 1.
    t.set(Scheme::FdGpuFnGpu, "detect", (4e-3 + 1e-4) * 1e3);
    t.set(Scheme::FdGpuFnGpu, "recognize", (5e-4 + 4.0 * (2e-3 + 2e-5)) * 1e3);
    const auto raw = raw_for(t);
    const auto out = calibrate(t, raw, CostParams{});
    const auto& p = out.at(Scheme::FdGpuFnGpu);
    CHECK(p.scale_for("facedetect", EngineClass::SimtCluster) == doctest::Approx(1.0));
    CHECK(p.scale_for("facenet", EngineClass::SimtCluster) == doctest::Approx(1.0));
}

TEST_CASE("calibrate reproduces measured averages and is a fixed point") {
    const auto t = default_measurements();
    const auto raw = raw_for(t);
    const auto first = calibrate(t, raw, CostParams{});
    StageMeasurementTable predicted = t;
    for (const auto& rc : raw) {
        const double s = first.at(rc.scheme).scale_for(rc.model, rc.engine_class);
        const double ms = rc.modeled_s(s) * 1e3;
        CHECK(ms == doctest::Approx(*t.avg_ms(rc.scheme, std::string(to_string(rc.stage)))));
        predicted.set(rc.scheme, std::string(to_string(rc.stage)), ms);
    }
    const auto second = calibrate(predicted, raw, CostParams{});
    for (const auto& [s, p] : first) {
        for (const auto& [key, v] : p.scale) CHECK(second.at(s).scale.at(key) == doctest::Approx(v).epsilon(1e-12));
        CHECK(mean_decoder_base_ms(p, "IBBPBBPBBPBB") == doctest::Approx(*t.avg_ms(s, "decoder")));
    }
}

TEST_CASE("calibrate errors") {
    auto t = default_measurements();
    SUBCASE("missing stage row") {
        t.rows.at(Scheme::FdDlaFnGpu).erase("encode");
        CHECK_THROWS_AS(calibrate(t, {}, CostParams{}), CalibrationError);
    }
    SUBCASE("raw cost for a scheme without rows") {
        t.rows.erase(Scheme::FdDlaFnDla);
        std::vector<StageRawCost> raw = {
            {Scheme::FdDlaFnDla, PipelineStage::Detect, "facedetect", EngineClass::SimtCluster, 1e-3, 0, 1, 0}};
        CHECK_THROWS_AS(calibrate(t, raw, CostParams{}), CalibrationError);
    }
    SUBCASE("fixed costs above the measurement") {
        std::vector<StageRawCost> raw = {
            {Scheme::FdGpuFnGpu, PipelineStage::Detect, "facedetect", EngineClass::SimtCluster, 1e-3, 1.0, 1, 0}};
        CHECK_THROWS_AS(calibrate(t, raw, CostParams{}), CalibrationError);
    }
}
