// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include "hetpipe/allocator.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace hetpipe {

namespace {

bool is_io(const LayerNode& l) { return l.kind == LayerKind::Input || l.kind == LayerKind::Output; }

// Scans list order for island boundaries; calls on_enter(prev, first) and
// on_exit(last, next) where next is -1 for a trailing island.
template <typename Enter, typename Exit>
void scan_islands(const ModelGraph& g, const std::map<int, EngineId>& a, Enter on_enter, Exit on_exit) {
    bool seen_dla = false;
    bool in_island = false;
    int prev = -1;
    for (const auto& l : g.layers) {
        if (is_io(l)) continue;
        const bool on_dla = is_dla(a.at(l.id));
        if (on_dla) {
            if (in_island) {
                on_exit(prev, l.id);
                in_island = false;
            }
            seen_dla = true;
        } else if (seen_dla && !in_island) {
            on_enter(prev, l.id);
            in_island = true;
        }
        prev = l.id;
    }
    if (in_island) on_exit(prev, -1);
}

int output_id(const ModelGraph& g) {
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::Output) return l.id;
    }
    return -1;
}

double one_transfer(const TransferEvent& e, const EngineCatalog& cat) {
    return static_cast<double>(e.bytes) / cat.memory.dram_bandwidth_bytes_per_s + cat.cost_params.dtod_transfer_overhead_s;
}

std::map<int, EngineId> assign_whole_model(const ModelGraph& g, EngineId target, const DlaCapabilities& caps,
                                           std::vector<FallbackLayer>& fallbacks) {
    std::map<int, EngineId> a;
    for (const auto& l : g.layers) {
        if (is_io(l) || !is_dla(target)) {
            a[l.id] = EngineId::SmCluster;
            continue;
        }
        auto s = classify_dla_support(l, caps);
        if (s.supported()) {
            a[l.id] = target;
        } else {
            a[l.id] = EngineId::SmCluster;
            fallbacks.push_back({g.name, l.id, *s.fallback});
        }
    }
    return a;
}

void add_model(AllocationPlan& plan, PipelineStage stage, const ModelGraph& g, const std::map<int, EngineId>& a,
               const EngineCatalog& cat) {
    plan.graphs[g.name] = g;
    plan.stage_model[stage] = g.name;
    for (const auto& [id, e] : a) plan.layer_assignments[{g.name, id}] = e;
    auto ev = transfer_events_for(g, a);
    plan.transfer_events.insert(plan.transfer_events.end(), ev.begin(), ev.end());

    double seq = 0.0;
    std::map<EngineId, double> busy;
    for (const auto& l : g.layers) {
        const double c = layer_cost(cat, g, l.id, a.at(l.id));
        seq += c;
        busy[a.at(l.id)] += c;
    }
    const double xfer = transfer_cost(ev, cat);
    double peak = 0.0;
    for (const auto& [e, b] : busy) peak = std::max(peak, b);
    plan.stage_costs_s[stage] = seq + xfer;
    plan.bottleneck_s[g.name] = peak + xfer;
}

AllocationPlan merge(AllocationPlan a, const AllocationPlan& b) {
    for (const auto& kv : b.layer_assignments) a.layer_assignments.insert(kv);
    a.fallback_layers.insert(a.fallback_layers.end(), b.fallback_layers.begin(), b.fallback_layers.end());
    a.transfer_events.insert(a.transfer_events.end(), b.transfer_events.begin(), b.transfer_events.end());
    for (const auto& kv : b.balance) a.balance.insert(kv);
    for (const auto& kv : b.stage_costs_s) a.stage_costs_s[kv.first] = kv.second;
    for (const auto& kv : b.bottleneck_s) a.bottleneck_s.insert(kv);
    a.notices.insert(a.notices.end(), b.notices.begin(), b.notices.end());
    for (const auto& kv : b.graphs) a.graphs.insert(kv);
    for (const auto& kv : b.stage_model) a.stage_model[kv.first] = kv.second;
    return a;
}

// Re-homes a single-model plan from the Detect stage to `stage`.
AllocationPlan restage(AllocationPlan p, PipelineStage stage) {
    if (stage == PipelineStage::Detect) return p;
    if (auto it = p.stage_costs_s.find(PipelineStage::Detect); it != p.stage_costs_s.end()) {
        p.stage_costs_s[stage] = it->second;
        p.stage_costs_s.erase(it);
    }
    if (auto it = p.stage_model.find(PipelineStage::Detect); it != p.stage_model.end()) {
        p.stage_model[stage] = it->second;
        p.stage_model.erase(it);
    }
    return p;
}

}  // namespace

std::string_view to_string(TransferDirection d) {
    switch (d) {
        case TransferDirection::DeviceToDevice: return "DtoD";
        case TransferDirection::HostToDevice: return "HtoD";
        case TransferDirection::DeviceToHost: return "DtoH";
    }
    return "?";
}

std::vector<TransferEvent> transfer_events_for(const ModelGraph& g, const std::map<int, EngineId>& a) {
    std::vector<TransferEvent> ev;
    const bool any_dla = std::any_of(a.begin(), a.end(), [](const auto& kv) { return is_dla(kv.second); });
    if (!any_dla) {
        // The CPU hands the frame in and takes the result back.
        for (const auto& l : g.layers) {
            if (l.kind == LayerKind::Input) {
                ev.push_back({g.name, TransferDirection::HostToDevice, tensor_bytes(g.input_dims, l.precision), -1, l.id});
            }
        }
        for (const auto& l : g.layers) {
            if (l.kind != LayerKind::Output || l.preds.empty()) continue;
            const auto& src = g.layer(l.preds.front());
            ev.push_back({g.name, TransferDirection::DeviceToHost, tensor_bytes(src.output_dims, src.precision), src.id, -1});
        }
        return ev;
    }
    auto dtod = [&](int producer, int consumer) {
        const auto& p = g.layer(producer);
        ev.push_back({g.name, TransferDirection::DeviceToDevice, tensor_bytes(p.output_dims, p.precision), producer,
                      consumer < 0 ? output_id(g) : consumer});
    };
    scan_islands(g, a, dtod, dtod);
    return ev;
}

std::size_t AllocationPlan::dtod_count(const std::string& model) const {
    return static_cast<std::size_t>(std::count_if(transfer_events.begin(), transfer_events.end(), [&](const TransferEvent& e) {
        return e.model == model && e.direction == TransferDirection::DeviceToDevice;
    }));
}

EngineId detect_dla() { return EngineId::Dla0; }
EngineId recognize_dla() { return EngineId::Dla1; }

EngineId scheme_engine(Scheme s, PipelineStage stage) {
    const bool detect = stage == PipelineStage::Detect;
    if (!detect && stage != PipelineStage::Recognize) throw std::invalid_argument("not an inference stage");
    switch (s) {
        case Scheme::FdGpuFnGpu: return EngineId::SmCluster;
        case Scheme::FdDlaFnGpu: return detect ? detect_dla() : EngineId::SmCluster;
        case Scheme::FdGpuFnDla: return detect ? EngineId::SmCluster : recognize_dla();
        case Scheme::FdDlaFnDla: return detect ? detect_dla() : recognize_dla();
        case Scheme::LayerBalanced: return detect ? detect_dla() : recognize_dla();
    }
    throw std::invalid_argument("unknown scheme");
}

std::size_t count_islands(const ModelGraph& g, const std::map<int, EngineId>& assignment) {
    std::size_t n = 0;
    scan_islands(g, assignment, [&](int, int) { ++n; }, [](int, int) {});
    return n;
}

double transfer_cost(const std::vector<TransferEvent>& events, const EngineCatalog& cat) {
    double t = 0.0;
    for (const auto& e : events) t += one_transfer(e, cat);
    return t;
}

double transfer_cost(const AllocationPlan& plan, const EngineCatalog& cat) {
    return transfer_cost(plan.transfer_events, cat);
}

std::map<int, EngineId> assignment_of(const AllocationPlan& plan, const std::string& model) {
    std::map<int, EngineId> a;
    for (auto it = plan.layer_assignments.lower_bound({model, std::numeric_limits<int>::min()});
         it != plan.layer_assignments.end() && it->first.first == model; ++it) {
        a[it->first.second] = it->second;
    }
    return a;
}

AllocationPlan plan_model_level(Scheme scheme, const ModelGraph& fd, const ModelGraph& fn, const EngineCatalog& cat,
                                const PlanOptions& options) {
    if (scheme == Scheme::LayerBalanced) throw std::invalid_argument("plan_model_level needs a model-level scheme");
    AllocationPlan plan;
    plan.scheme = scheme;
    const std::pair<PipelineStage, const ModelGraph*> stages[] = {{PipelineStage::Detect, &fd},
                                                                  {PipelineStage::Recognize, &fn}};
    for (const auto& [stage, graph] : stages) {
        const EngineId target = scheme_engine(scheme, stage);
        ModelGraph g = *graph;
        if (is_dla(target)) {
            g = precision_fallback(emulate_lowering(g, target, options.lowering), cat.engine(target),
                                   options.dla_precision, options.int8);
        }
        auto a = assign_whole_model(g, target, cat.dla_caps, plan.fallback_layers);
        add_model(plan, stage, g, a, cat);
    }
    return plan;
}

AllocationPlan plan_layer_level(const ModelGraph& g, const EngineCatalog& cat, EngineId dla, const PlanOptions& options) {
    if (!is_dla(dla)) throw std::invalid_argument("plan_layer_level needs a DLA engine");
    AllocationPlan plan;
    plan.scheme = Scheme::LayerBalanced;

    const ModelGraph lowered =
        precision_fallback(emulate_lowering(g, dla, options.lowering), cat.engine(dla), options.dla_precision, options.int8);
    const double c_gpu = model_cost(cat, g, EngineId::SmCluster);

    std::vector<const LayerNode*> compute;
    std::vector<bool> supported;
    double c_dla = 0.0;
    for (const auto& l : lowered.layers) {
        if (is_io(l)) continue;
        compute.push_back(&l);
        supported.push_back(classify_dla_support(l, cat.dla_caps).supported());
        if (supported.back()) c_dla += layer_cost(cat, lowered, l.id, dla);
    }

    auto all_gpu = [&](const std::string& why) {
        std::map<int, EngineId> a;
        for (const auto& l : g.layers) a[l.id] = EngineId::SmCluster;
        add_model(plan, PipelineStage::Detect, g, a, cat);
        plan.notices.push_back(g.name + ": " + why + "; using the all-GPU plan");
        return plan;
    };
    if (c_dla <= 0.0) return all_gpu("no DLA-supported layer");

    const BalanceSolution sol = solve_balance({c_gpu, c_dla}, options.balance_mode);
    plan.balance[g.name] = sol;

    auto assignment_for = [&](std::size_t k) {
        std::map<int, EngineId> a;
        for (const auto& l : lowered.layers) a[l.id] = EngineId::SmCluster;
        for (std::size_t i = 0; i < k; ++i) {
            if (supported[i]) a[compute[i]->id] = dla;
        }
        return a;
    };

    std::size_t best_k = 0;
    double best_err = std::numeric_limits<double>::infinity();
    std::size_t best_islands = std::numeric_limits<std::size_t>::max();
    double prefix = 0.0;
    for (std::size_t k = 1; k <= compute.size(); ++k) {
        if (supported[k - 1]) prefix += layer_cost(cat, lowered, compute[k - 1]->id, dla);
        const double err = std::abs(prefix / c_dla - sol.t_dla);
        const std::size_t islands = count_islands(lowered, assignment_for(k));
        const double tol = 1e-12;
        if (err < best_err - tol || (std::abs(err - best_err) <= tol && islands < best_islands)) {
            best_k = k;
            best_err = err;
            best_islands = islands;
        }
    }

    const auto a = assignment_for(best_k);
    if (std::none_of(a.begin(), a.end(), [](const auto& kv) { return is_dla(kv.second); })) {
        return all_gpu("split assigns nothing to the DLA");
    }
    AllocationPlan split = plan;
    for (std::size_t i = 0; i < best_k; ++i) {
        auto s = classify_dla_support(*compute[i], cat.dla_caps);
        if (!s.supported()) split.fallback_layers.push_back({g.name, compute[i]->id, *s.fallback});
    }
    add_model(split, PipelineStage::Detect, lowered, a, cat);
    if (split.bottleneck_s.at(g.name) > c_gpu) return all_gpu("layer-level split is slower than the GPU alone");
    return split;
}

AllocationPlan plan_layer_balanced(const ModelGraph& fd, const ModelGraph& fn, const EngineCatalog& cat,
                                   const PlanOptions& options) {
    AllocationPlan d = plan_layer_level(fd, cat, detect_dla(), options);
    AllocationPlan r = restage(plan_layer_level(fn, cat, recognize_dla(), options), PipelineStage::Recognize);
    AllocationPlan out = merge(std::move(d), r);
    out.scheme = Scheme::LayerBalanced;
    return out;
}

AllocationPlan plan_scheme(Scheme scheme, const ModelGraph& fd, const ModelGraph& fn, const EngineCatalog& cat,
                           const PlanOptions& options) {
    if (scheme == Scheme::LayerBalanced) return plan_layer_balanced(fd, fn, cat, options);
    return plan_model_level(scheme, fd, fn, cat, options);
}

std::vector<Segment> stage_segments(const AllocationPlan& plan, const std::string& model, const EngineCatalog& cat) {
    const ModelGraph& g = plan.graphs.at(model);
    const auto a = assignment_of(plan, model);
    std::vector<Segment> segs;
    double io_head = 0.0;
    double io_tail = 0.0;
    for (const auto& l : g.layers) {
        const double c = layer_cost(cat, g, l.id, a.at(l.id));
        if (is_io(l)) {
            (segs.empty() ? io_head : io_tail) += c;
            continue;
        }
        const EngineId e = a.at(l.id);
        if (segs.empty() || segs.back().engine != e) segs.push_back(Segment{e, 0.0, 0, {}});
        Segment& s = segs.back();
        s.seconds += c;
        s.working_set_bytes = std::max(s.working_set_bytes, layer_working_set(g, l.id).total());
        s.layer_ids.push_back(l.id);
    }
    if (segs.empty()) {
        segs.push_back(Segment{EngineId::SmCluster, 0.0, 0, {}});
    }
    segs.front().seconds += io_head;
    segs.back().seconds += io_tail;

    auto segment_of = [&](int id) -> Segment* {
        for (auto& s : segs) {
            if (std::find(s.layer_ids.begin(), s.layer_ids.end(), id) != s.layer_ids.end()) return &s;
        }
        return nullptr;
    };
    for (const auto& e : plan.transfer_events) {
        if (e.model != model) continue;
        const double t = one_transfer(e, cat);
        Segment* target = nullptr;
        switch (e.direction) {
            case TransferDirection::HostToDevice: target = &segs.front(); break;
            case TransferDirection::DeviceToHost: target = &segs.back(); break;
            case TransferDirection::DeviceToDevice: {
                // The copy belongs to the GPU island on either side of the boundary.
                Segment* p = segment_of(e.producer);
                Segment* c = segment_of(e.consumer);
                target = (p && !is_dla(p->engine)) ? p : (c && !is_dla(c->engine)) ? c : (p ? p : &segs.back());
                break;
            }
        }
        target->seconds += t;
    }
    return segs;
}

double modeled_stage_s(const AllocationPlan& plan, PipelineStage stage, const EngineCatalog& cat, double faces) {
    double t = 0.0;
    for (const auto& s : stage_segments(plan, plan.stage_model.at(stage), cat)) t += s.seconds;
    if (stage == PipelineStage::Recognize) return cat.cost_params.recognize_overhead_s + faces * t;
    return t;
}

std::string plan_to_json(const AllocationPlan& plan) {
    nlohmann::ordered_json j;
    j["scheme"] = std::string(to_string(plan.scheme));
    auto assignments = nlohmann::ordered_json::array();
    for (const auto& [key, e] : plan.layer_assignments) {
        assignments.push_back({{"model", key.first}, {"layer", key.second}, {"engine", std::string(to_string(e))}});
    }
    j["assignments"] = std::move(assignments);
    auto fallbacks = nlohmann::ordered_json::array();
    for (const auto& f : plan.fallback_layers) {
        fallbacks.push_back({{"model", f.model}, {"layer", f.layer_id}, {"reason", std::string(to_string(f.reason))}});
    }
    j["fallbacks"] = std::move(fallbacks);
    auto transfers = nlohmann::ordered_json::array();
    for (const auto& t : plan.transfer_events) {
        transfers.push_back({{"model", t.model},
                             {"direction", std::string(to_string(t.direction))},
                             {"bytes", t.bytes},
                             {"producer", t.producer},
                             {"consumer", t.consumer}});
    }
    j["transfers"] = std::move(transfers);
    nlohmann::ordered_json costs = nlohmann::ordered_json::object();
    for (const auto& [stage, s] : plan.stage_costs_s) costs[std::string(to_string(stage))] = s * 1e3;
    j["stage_costs_ms"] = std::move(costs);
    if (!plan.notices.empty()) j["notices"] = plan.notices;
    return j.dump(2);
}

std::map<Scheme, CostParams> fit_scheme_costs(const EngineCatalog& cat, const StageMeasurementTable& measurements,
                                              const ModelGraph& fd, const ModelGraph& fn, const PlanOptions& options,
                                              const CalibrationOptions& copt) {
    EngineCatalog raw = cat;
    raw.cost_params.scale.clear();

    // Raw decomposition of one stage: MAC time on the primary engine class is
    // scaled, everything else (zero-MAC overheads, fallback layers at the
    // given SM scale, transfers) is fixed.
    auto decompose = [&](Scheme s, PipelineStage stage, double sm_scale) {
        const AllocationPlan plan = plan_model_level(s, fd, fn, raw, options);
        const std::string& model = plan.stage_model.at(stage);
        const ModelGraph& g = plan.graphs.at(model);
        const EngineClass primary = engine_class_of(scheme_engine(s, stage));
        const auto a = assignment_of(plan, model);
        StageRawCost rc;
        rc.scheme = s;
        rc.stage = stage;
        rc.model = model;
        rc.engine_class = primary;
        for (const auto& l : g.layers) {
            const EngineId e = a.at(l.id);
            const double c = layer_cost(raw, g, l.id, e);
            if (l.macs == 0) {
                rc.fixed_s += c;
            } else if (engine_class_of(e) == primary) {
                rc.scaled_s += c;
            } else {
                rc.fixed_s += c * sm_scale;
            }
        }
        std::vector<TransferEvent> mine;
        for (const auto& e : plan.transfer_events) {
            if (e.model == model) mine.push_back(e);
        }
        rc.fixed_s += transfer_cost(mine, raw);
        if (stage == PipelineStage::Recognize) {
            rc.multiplicity = copt.mean_faces;
            rc.overhead_s = cat.cost_params.recognize_overhead_s;
        }
        return rc;
    };

    std::vector<StageRawCost> first;
    std::vector<std::pair<Scheme, PipelineStage>> dla_fallback_stages;
    for (Scheme s : kModelLevelSchemes) {
        if (!measurements.rows.count(s)) continue;
        for (PipelineStage stage : {PipelineStage::Detect, PipelineStage::Recognize}) {
            const AllocationPlan probe = plan_model_level(s, fd, fn, raw, options);
            const std::string& model = probe.stage_model.at(stage);
            const bool has_fallback = std::any_of(probe.fallback_layers.begin(), probe.fallback_layers.end(),
                                                  [&](const FallbackLayer& f) { return f.model == model; });
            if (is_dla(scheme_engine(s, stage)) && has_fallback) {
                dla_fallback_stages.emplace_back(s, stage);
            } else {
                first.push_back(decompose(s, stage, 1.0));
            }
        }
    }
    auto fitted = calibrate(measurements, first, cat.cost_params, copt);

    // Fallback layers of a DLA-resident model run on the SM at the mean of
    // that model's SM fits.
    auto mean_sm_scale = [&](const std::string& model) {
        double sum = 0.0;
        int n = 0;
        for (const auto& [s, p] : fitted) {
            if (auto it = p.scale.find({model, EngineClass::SimtCluster}); it != p.scale.end()) {
                sum += it->second;
                ++n;
            }
        }
        return n ? sum / n : 1.0;
    };
    std::vector<StageRawCost> all = first;
    std::map<std::pair<Scheme, std::string>, double> sm_for_fallback;
    for (const auto& [s, stage] : dla_fallback_stages) {
        const std::string model = stage == PipelineStage::Detect ? fd.name : fn.name;
        const double sm = mean_sm_scale(model);
        all.push_back(decompose(s, stage, sm));
        sm_for_fallback[{s, model}] = sm;
    }
    if (!dla_fallback_stages.empty()) fitted = calibrate(measurements, all, cat.cost_params, copt);
    for (const auto& [key, sm] : sm_for_fallback) fitted.at(key.first).scale[{key.second, EngineClass::SimtCluster}] = sm;

    // The layer-level scheme has no measurements of its own: pool every fit.
    CostParams pooled = fitted.count(Scheme::FdGpuFnGpu) ? fitted.at(Scheme::FdGpuFnGpu) : cat.cost_params;
    pooled.frame_service_target_ms.reset();
    pooled.scale.clear();
    std::map<std::pair<std::string, EngineClass>, std::pair<double, int>> acc;
    for (const auto& [s, p] : fitted) {
        for (const auto& [key, v] : p.scale) {
            acc[key].first += v;
            acc[key].second += 1;
        }
    }
    for (const auto& [key, sn] : acc) pooled.scale[key] = sn.first / sn.second;
    fitted[Scheme::LayerBalanced] = pooled;
    return fitted;
}

}  // namespace hetpipe
