// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <json.hpp>
#include <random>

#include "hetpipe/allocator.h"

using namespace hetpipe;

namespace {

// Input, n 3x3 convs at 56x56x64 (or a Pow where `unsupported` says so), Output.
ModelGraph chain(std::size_t n, const std::vector<bool>& unsupported = {}) {
    ModelGraph g;
    g.name = "chain";
    g.input_dims = {56, 56, 64};
    LayerNode in;
    in.kind = LayerKind::Input;
    in.in_channels = in.out_channels = 64;
    in.output_dims = g.input_dims;
    g.layers.push_back(in);
    for (std::size_t i = 0; i < n; ++i) {
        LayerNode l;
        l.id = static_cast<int>(i + 1);
        l.preds = {static_cast<int>(i)};
        l.in_channels = l.out_channels = 64;
        l.output_dims = g.input_dims;
        if (i < unsupported.size() && unsupported[i]) {
            l.kind = LayerKind::Pow;
        } else {
            l.kind = LayerKind::Conv;
            l.kernel = Extent2{3, 3};
            l.stride = Extent2{1, 1};
        }
        g.layers.push_back(l);
    }
    LayerNode out;
    out.id = static_cast<int>(n + 1);
    out.kind = LayerKind::Output;
    out.preds = {static_cast<int>(n)};
    out.in_channels = out.out_channels = 64;
    out.output_dims = g.input_dims;
    g.layers.push_back(out);
    link_successors(g);
    for (auto& l : g.layers) l.macs = expected_macs(g, l);
    return g;
}

// Whole-model placement on `dla` with unsupported layers on the SMs.
std::map<int, EngineId> dla_with_fallback(const ModelGraph& g, const EngineCatalog& cat, EngineId dla) {
    std::map<int, EngineId> a;
    for (const auto& l : g.layers) {
        const bool io = l.kind == LayerKind::Input || l.kind == LayerKind::Output;
        a[l.id] = !io && classify_dla_support(l, cat.dla_caps).supported() ? dla : EngineId::SmCluster;
    }
    return a;
}

// Brute force: label every compute layer, then count GPU runs preceded by some DLA layer.
std::size_t islands_by_hand(const ModelGraph& g, const std::map<int, EngineId>& a) {
    std::vector<char> label;
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::Input || l.kind == LayerKind::Output) continue;
        label.push_back(is_dla(a.at(l.id)) ? 'D' : 'G');
    }
    std::size_t n = 0;
    for (std::size_t i = 0; i < label.size(); ++i) {
        if (label[i] != 'G' || (i > 0 && label[i - 1] == 'G')) continue;
        bool dla_before = false;
        for (std::size_t j = 0; j < i; ++j) dla_before |= label[j] == 'D';
        n += dla_before;
    }
    return n;
}

std::size_t dtod(const std::vector<TransferEvent>& ev) {
    return static_cast<std::size_t>(std::count_if(ev.begin(), ev.end(), [](const TransferEvent& e) {
        return e.direction == TransferDirection::DeviceToDevice;
    }));
}

LayerNode conv(int k, int in_c, int out_c, Precision p = Precision::FP16) {
    LayerNode l;
    l.kind = LayerKind::Conv;
    l.kernel = Extent2{k, k};
    l.stride = Extent2{1, 1};
    l.in_channels = in_c;
    l.out_channels = out_c;
    l.precision = p;
    return l;
}

}  // namespace

TEST_CASE("DLA support classification") {
    const DlaCapabilities caps;
    LayerNode shuffle;
    shuffle.kind = LayerKind::Shuffle;
    CHECK(classify_dla_support(shuffle, caps).fallback == FallbackReason::Kind);
    CHECK(classify_dla_support(conv(7, 3, 64), caps).supported());
    CHECK(classify_dla_support(conv(3, 3, 64, Precision::FP32), caps).fallback == FallbackReason::Precision);
    CHECK(classify_dla_support(conv(33, 3, 64), caps).fallback == FallbackReason::Kernel);
    CHECK(classify_dla_support(conv(32, 3, 64), caps).supported());
    CHECK(classify_dla_support(conv(3, 3, 9000), caps).fallback == FallbackReason::Channels);
    // Kind wins over every later rule.
    LayerNode pow = conv(33, 3, 9000, Precision::FP32);
    pow.kind = LayerKind::Pow;
    CHECK(classify_dla_support(pow, caps).fallback == FallbackReason::Kind);
}

TEST_CASE("lowering leaves the detector alone") {
    const EngineCatalog cat = default_orin_catalog();
    const ModelGraph fd = build_facedetect();
    const ModelGraph lowered = emulate_lowering(fd, EngineId::Dla0);
    CHECK(lowered == fd);
    for (const auto& l : lowered.layers) {
        if (l.kind == LayerKind::Input || l.kind == LayerKind::Output) continue;
        CHECK(classify_dla_support(l, cat.dla_caps).supported());
    }
}

TEST_CASE("lowering the embedding network") {
    const EngineCatalog cat = default_orin_catalog();
    const ModelGraph fn = build_facenet();
    const ModelGraph lowered = emulate_lowering(fn, EngineId::Dla1);
    std::size_t unsupported = 0;
    for (const auto& l : lowered.layers) {
        if (l.kind == LayerKind::Input || l.kind == LayerKind::Output) continue;
        unsupported += !classify_dla_support(l, cat.dla_caps).supported();
    }
    CHECK(unsupported == 63);
    CHECK(count_kind(lowered, LayerKind::Shuffle) == 28);
    CHECK(count_kind(lowered, LayerKind::Constant) == 28);
    CHECK(count_kind(lowered, LayerKind::GlobalAvgPool) >= 1);
    CHECK(count_kind(lowered, LayerKind::Pow) >= 1);
    CHECK(validate(lowered).empty());

    CHECK(emulate_lowering(lowered, EngineId::Dla1) == lowered);
    CHECK(emulate_lowering(fn, EngineId::Dla1) == lowered);
    CHECK(emulate_lowering(fn, EngineId::SmCluster) == fn);
}

TEST_CASE("lowering rules round-trip as CSV") {
    const LoweringRules rules = default_lowering_rules();
    int pairs = 0;
    for (const auto& r : rules.rules) pairs += r.pairs;
    CHECK(pairs == 28);
    const LoweringRules back = LoweringRules::parse_csv(rules.to_csv());
    REQUIRE(back.rules.size() == rules.rules.size());
    for (std::size_t i = 0; i < rules.rules.size(); ++i) {
        CHECK(back.rules[i].model == rules.rules[i].model);
        CHECK(back.rules[i].anchor_id == rules.rules[i].anchor_id);
        CHECK(back.rules[i].pairs == rules.rules[i].pairs);
    }
    CHECK_THROWS_AS(LoweringRules::parse_csv("model,anchor\n"), std::invalid_argument);
    CHECK_THROWS_AS(LoweringRules::parse_csv("model,anchor,pairs\nfacenet,x,2\n"), std::invalid_argument);
}

TEST_CASE("INT8 fallback on the detector") {
    const EngineCatalog cat = default_orin_catalog();
    const ModelGraph fd = build_facedetect();
    const ModelGraph mixed = precision_fallback(fd, cat.engine(EngineId::Dla0), Precision::INT8);
    std::size_t fp16 = 0;
    for (const auto& l : mixed.layers) fp16 += l.precision == Precision::FP16;
    CHECK(fp16 == 12);
    REQUIRE(mixed.layers.size() == fd.layers.size());
    for (std::size_t i = 0; i < fd.layers.size(); ++i) {
        CHECK(mixed.layers[i].id == fd.layers[i].id);
        CHECK(mixed.layers[i].preds == fd.layers[i].preds);
        CHECK(mixed.layers[i].succs == fd.layers[i].succs);
    }

    ModelGraph all_int8 = fd;
    for (auto& l : all_int8.layers) l.precision = Precision::INT8;
    CHECK(model_cost(cat, mixed, EngineId::Dla0) > model_cost(cat, all_int8, EngineId::Dla0));

    CHECK(precision_fallback(fd, cat.engine(EngineId::SmCluster), Precision::FP16) == fd);
    CHECK(precision_fallback(fd, cat.engine(EngineId::Dla0), Precision::FP16) == fd);
}

TEST_CASE("transfer cost arithmetic") {
    EngineCatalog cat = default_orin_catalog();
    cat.cost_params.dtod_transfer_overhead_s = 0.0;
    CHECK(transfer_cost(std::vector<TransferEvent>{}, cat) == 0.0);
    std::vector<TransferEvent> ev(4, TransferEvent{"m", TransferDirection::DeviceToDevice, 301056, 0, 1});
    const double four = transfer_cost(ev, cat);
    CHECK(four == doctest::Approx(4.0 * 301056 / 204.08e9));
    CHECK(four == doctest::Approx(5.90e-6).epsilon(0.01));
    ev.insert(ev.end(), ev.begin(), ev.end());
    CHECK(transfer_cost(ev, cat) == doctest::Approx(2.0 * four));
}

TEST_CASE("one and two separated fallback layers") {
    const EngineCatalog cat = default_orin_catalog();
    SUBCASE("one unsupported layer") {
        const ModelGraph g = chain(9, {false, false, false, false, true});
        const auto a = dla_with_fallback(g, cat, EngineId::Dla0);
        CHECK(count_islands(g, a) == 1);
        CHECK(dtod(transfer_events_for(g, a)) == 2);
    }
    SUBCASE("two separated unsupported layers") {
        const ModelGraph g = chain(9, {false, false, true, false, false, true});
        const auto a = dla_with_fallback(g, cat, EngineId::Dla0);
        CHECK(count_islands(g, a) == 2);
        CHECK(dtod(transfer_events_for(g, a)) == 4);
    }
    SUBCASE("all supported") {
        const ModelGraph g = chain(9);
        const auto a = dla_with_fallback(g, cat, EngineId::Dla0);
        CHECK(count_islands(g, a) == 0);
        CHECK(transfer_events_for(g, a).empty());
    }
}

TEST_CASE("random chains obey the island rule") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng() % 30;
        const ModelGraph g = chain(n);
        std::map<int, EngineId> a;
        for (const auto& l : g.layers) a[l.id] = (rng() % 2) ? EngineId::Dla0 : EngineId::SmCluster;
        const std::size_t islands = islands_by_hand(g, a);
        CHECK(count_islands(g, a) == islands);
        CHECK(dtod(transfer_events_for(g, a)) == 2 * islands);
    }
}

TEST_CASE("model-level schemes") {
    const EngineCatalog cat = default_orin_catalog();
    const ModelGraph fd = build_facedetect();
    const ModelGraph fn = build_facenet();

    const AllocationPlan s2 = plan_model_level(Scheme::FdDlaFnGpu, fd, fn, cat);
    for (const auto& [key, e] : s2.layer_assignments) {
        const bool io = s2.graphs.at(key.first).layer(key.second).kind == LayerKind::Input ||
                        s2.graphs.at(key.first).layer(key.second).kind == LayerKind::Output;
        if (key.first == "facedetect" && !io) CHECK(e == EngineId::Dla0);
        if (key.first == "facenet") CHECK(e == EngineId::SmCluster);
        if (is_dla(e)) CHECK(classify_dla_support(s2.graphs.at(key.first).layer(key.second), cat.dla_caps).supported());
    }
    CHECK(s2.dtod_count("facedetect") == 0);

    const AllocationPlan s4 = plan_model_level(Scheme::FdDlaFnDla, fd, fn, cat);
    std::size_t fn_fallbacks = 0;
    for (const auto& f : s4.fallback_layers) fn_fallbacks += f.model == "facenet";
    CHECK(fn_fallbacks == 63);
    CHECK(s4.dtod_count("facenet") == 2 * count_islands(s4.graphs.at("facenet"), assignment_of(s4, "facenet")));
    for (const auto& [key, e] : s4.layer_assignments) {
        if (key.first == "facenet" && is_dla(e)) CHECK(e == EngineId::Dla1);
    }

    const AllocationPlan s1 = plan_model_level(Scheme::FdGpuFnGpu, fd, fn, cat);
    REQUIRE_FALSE(s1.transfer_events.empty());
    for (const auto& ev : s1.transfer_events) CHECK(ev.direction != TransferDirection::DeviceToDevice);

    CHECK_THROWS_AS(plan_model_level(Scheme::LayerBalanced, fd, fn, cat), std::invalid_argument);
}

TEST_CASE("layer-level split of a uniform chain") {
    EngineCatalog cat = default_orin_catalog();
    // Millisecond layers, with the DLA exactly as fast as the SMs.
    cat.cost_params.scale[{"chain", EngineClass::SimtCluster}] = 1000.0;
    cat.cost_params.scale[{"chain", EngineClass::DeepLearningAccel}] = 1000.0 * 26.25 / 85.0;
    const ModelGraph g = chain(10);
    const AllocationPlan p = plan_layer_level(g, cat);
    CHECK(p.notices.empty());
    int on_dla = 0;
    int on_sm = 0;
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::Input || l.kind == LayerKind::Output) continue;
        (is_dla(p.layer_assignments.at({"chain", l.id})) ? on_dla : on_sm)++;
    }
    CHECK(on_dla == 5);
    CHECK(on_sm == 5);
    CHECK(dtod(p.transfer_events) == 2);
    CHECK(p.balance.at("chain").t_dla == doctest::Approx(0.5).epsilon(0.01));  // I/O overheads sit on the SMs
}

TEST_CASE("layer-level plans are safe and never lose silently") {
    const EngineCatalog cat = default_orin_catalog();
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng() % 20;
        std::vector<bool> bad(n);
        for (std::size_t i = 0; i < n; ++i) bad[i] = rng() % 5 == 0;
        const ModelGraph g = chain(n, bad);
        const AllocationPlan p = plan_layer_level(g, cat);
        const ModelGraph& planned = p.graphs.at("chain");
        for (const auto& [key, e] : p.layer_assignments) {
            if (is_dla(e)) CHECK(classify_dla_support(planned.layer(key.second), cat.dla_caps).supported());
        }
        const double gpu = model_cost(cat, g, EngineId::SmCluster);
        CHECK((p.bottleneck_s.at("chain") <= gpu || !p.notices.empty()));
        CHECK(dtod(p.transfer_events) == 2 * count_islands(planned, assignment_of(p, "chain")));
    }
}

TEST_CASE("unsupported-only model falls back to the GPU with a notice") {
    const EngineCatalog cat = default_orin_catalog();
    const ModelGraph g = chain(3, {true, true, true});
    const AllocationPlan p = plan_layer_level(g, cat);
    REQUIRE(p.notices.size() == 1);
    for (const auto& [key, e] : p.layer_assignments) CHECK(e == EngineId::SmCluster);
}

TEST_CASE("layer-balanced plan uses both DLAs") {
    EngineCatalog cat = default_orin_catalog();
    cat.cost_params = fit_scheme_costs(cat, default_measurements(), build_facedetect(), build_facenet())
                          .at(Scheme::LayerBalanced);
    const AllocationPlan p = plan_layer_balanced(build_facedetect(), build_facenet(), cat);
    CHECK(p.stage_model.at(PipelineStage::Detect) == "facedetect");
    CHECK(p.stage_model.at(PipelineStage::Recognize) == "facenet");
    std::set<EngineId> used;
    for (const auto& [key, e] : p.layer_assignments) used.insert(e);
    CHECK(used.count(EngineId::Dla0));
    CHECK(used.count(EngineId::Dla1));
}

TEST_CASE("plan JSON has stable keys") {
    const EngineCatalog cat = default_orin_catalog();
    const AllocationPlan p = plan_model_level(Scheme::FdDlaFnDla, build_facedetect(), build_facenet(), cat);
    const std::string text = plan_to_json(p);
    CHECK(text == plan_to_json(p));
    const auto j = nlohmann::ordered_json::parse(text);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    REQUIRE(keys.size() >= 5);
    CHECK(keys[0] == "scheme");
    CHECK(keys[1] == "assignments");
    CHECK(keys[2] == "fallbacks");
    CHECK(keys[3] == "transfers");
    CHECK(keys[4] == "stage_costs_ms");
    CHECK(j["fallbacks"].size() == 63);
}

TEST_CASE("fitted stage costs reproduce the measured averages") {
    const EngineCatalog cat = default_orin_catalog();
    const ModelGraph fd = build_facedetect();
    const ModelGraph fn = build_facenet();
    const auto table = default_measurements();
    const auto params = fit_scheme_costs(cat, table, fd, fn);
    for (Scheme s : {Scheme::FdGpuFnGpu, Scheme::FdDlaFnGpu}) {
        EngineCatalog c = cat;
        c.cost_params = params.at(s);
        const AllocationPlan p = plan_scheme(s, fd, fn, c);
        CHECK(modeled_stage_s(p, PipelineStage::Detect, c, 4.0) * 1e3 ==
              doctest::Approx(*table.avg_ms(s, "detect")).epsilon(1e-6));
        CHECK(modeled_stage_s(p, PipelineStage::Recognize, c, 4.0) * 1e3 ==
              doctest::Approx(*table.avg_ms(s, "recognize")).epsilon(1e-6));
    }
    CHECK(params.count(Scheme::LayerBalanced));
}
