// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "hetpipe/pipeline_sim.h"

namespace hetpipe {

namespace {

// Reported SM power with both models on the SMs, and the saving when the
// detector moves to a DLA.
constexpr double kSmPowerBothOnSmMw = 4635.0;
constexpr double kSmSavingDetectOnDlaMw = 300.0;
constexpr double kDlaPerfPerWattRatio = 2.5;

ScenarioFile reference_file(const SystemOptions& o, Pacing pacing, std::size_t frames) {
    ScenarioFile f;
    f.streams = 1;
    f.width = o.source.width;
    f.height = o.source.height;
    f.fps = o.source.fps;
    f.gop = o.source.gop_pattern;
    f.faces = o.source.faces;
    f.codec = o.source.codec;
    f.duration_frames = static_cast<int>(frames);
    f.queue_capacity = o.queue_capacity;
    f.encoder = o.enable_encoder;
    f.pacing = pacing;
    f.dla_precision = o.plan.dla_precision;
    f.balance = o.plan.balance_mode;
    return f;
}

// Per-frame latency each engine class contributes, at the reference face count.
std::map<EngineId, double> engine_latency(const PipelineSpec& spec, double faces) {
    std::map<EngineId, double> out;
    for (const auto& s : spec.chain) out[s.resource] += s.latency_s + s.per_face_s * faces;
    return out;
}

double mean_faces(const SourceSpec& s) {
    if (s.faces.empty()) return 0.0;
    double sum = 0.0;
    for (int f : s.faces) sum += f;
    return sum / static_cast<double>(s.faces.size());
}

double service_ms(const SimReport& r) {
    const double fps = r.steady_state_fps.value_or(r.throughput_fps);
    return fps > 0.0 ? 1e3 / fps : 0.0;
}

}  // namespace

EngineCatalog CalibratedSystem::catalog_for(Scheme s) const {
    EngineCatalog cat = catalog;
    cat.cost_params = params.at(s);
    return cat;
}

AllocationPlan CalibratedSystem::plan_for(Scheme s) const {
    return plan_scheme(s, facedetect, facenet, catalog_for(s), plan_options);
}

Scenario CalibratedSystem::scenario(Scheme s, const ScenarioFile& file) const {
    return make_scenario(file, plan_for(s), catalog_for(s));
}

CalibratedSystem calibrate_system(const StageMeasurementTable& measurements, const SystemOptions& options) {
    for (Scheme s : kModelLevelSchemes) {
        if (!measurements.rows.count(s)) {
            throw CalibrationError("calibration table lacks rows for scheme " + std::string(to_string(s)));
        }
        if (!measurements.avg_ms(s, "frame")) {
            throw CalibrationError("calibration table lacks a 'frame' row for scheme " + std::string(to_string(s)));
        }
    }
    CalibratedSystem sys;
    sys.catalog = default_orin_catalog();
    sys.facedetect = build_facedetect();
    sys.facenet = build_facenet();
    sys.plan_options = options.plan;
    CalibrationOptions copt = options.calibration;
    copt.mean_faces = mean_faces(options.source);
    copt.gop_pattern = options.source.gop_pattern;
    sys.params = fit_scheme_costs(sys.catalog, measurements, sys.facedetect, sys.facenet, options.plan, copt);

    const ScenarioFile paced = reference_file(options, Pacing::Realtime, 650);
    const ScenarioFile saturated = reference_file(options, Pacing::Saturated, options.saturated_frames);
    const double faces = copt.mean_faces;

    // Engine occupancy: the SMs are the bottleneck with both models on them,
    // a DLA is the bottleneck whenever one is used.
    auto spec_for = [&](Scheme s) { return build_pipeline(sys.scenario(s, saturated)); };
    const double t1 = *measurements.avg_ms(Scheme::FdGpuFnGpu, "frame") * 1e-3;
    const double rho_sm = t1 / engine_latency(spec_for(Scheme::FdGpuFnGpu), faces)[EngineId::SmCluster];
    for (auto& [s, p] : sys.params) p.occupancy_ratio[EngineClass::SimtCluster] = std::min(rho_sm, 1.0);

    std::map<Scheme, double> rho_dla;
    for (Scheme s : {Scheme::FdDlaFnGpu, Scheme::FdGpuFnDla, Scheme::FdDlaFnDla}) {
        sys.params.at(s).occupancy_ratio[EngineClass::DeepLearningAccel] = 1.0;
        const auto lat = engine_latency(spec_for(s), faces);
        double worst = 0.0;
        for (EngineId e : {EngineId::Dla0, EngineId::Dla1}) {
            if (auto it = lat.find(e); it != lat.end()) worst = std::max(worst, it->second);
        }
        const double target = *measurements.avg_ms(s, "frame") * 1e-3;
        rho_dla[s] = worst > 0.0 ? std::min(target / worst, 1.0) : 1.0;
        sys.params.at(s).occupancy_ratio[EngineClass::DeepLearningAccel] = rho_dla[s];
    }
    sys.params.at(Scheme::FdGpuFnGpu).occupancy_ratio[EngineClass::DeepLearningAccel] = rho_dla.at(Scheme::FdDlaFnGpu);
    sys.params.at(Scheme::LayerBalanced).occupancy_ratio[EngineClass::DeepLearningAccel] = rho_dla.at(Scheme::FdDlaFnDla);

    for (int iter = 0; iter < options.refine_iterations; ++iter) {
        for (Scheme s : kModelLevelSchemes) {
            CostParams& p = sys.params.at(s);
            // Fixed-function stage latencies absorb the queue wait the model adds.
            const SimReport r = simulate(sys.scenario(s, paced));
            const double dec_target = *measurements.avg_ms(s, "decoder");
            const double dec_sim = r.avg_stage_ms[index_of(PipelineStage::Decoder)];
            if (dec_sim > 0.0) {
                for (double& b : p.decoder_base_ms) b *= dec_target / dec_sim;
            }
            const double mux_err = *measurements.avg_ms(s, "streammux") - r.avg_stage_ms[index_of(PipelineStage::Streammux)];
            p.streammux_latency_ms = std::max(p.streammux_latency_ms + mux_err, p.streammux_occupancy_ms);
            // Inference stages wait for the shared SMs; shrink the primary engine's scale to match.
            for (PipelineStage st : {PipelineStage::Detect, PipelineStage::Recognize}) {
                const double sim = r.avg_stage_ms[index_of(st)];
                const double target = *measurements.avg_ms(s, std::string(to_string(st)));
                const std::string& model = st == PipelineStage::Detect ? sys.facedetect.name : sys.facenet.name;
                const EngineClass primary = engine_class_of(scheme_engine(s, st));
                auto it = p.scale.find({model, primary});
                if (sim > 0.0 && it != p.scale.end()) it->second *= target / sim;
            }
            if (options.enable_encoder) {
                const double enc_err = *measurements.avg_ms(s, "encode") - r.avg_stage_ms[index_of(PipelineStage::Encode)];
                p.encode_latency_ms = std::max(p.encode_latency_ms + enc_err, p.encode_occupancy_ms);
            }

            // The bottleneck engine's occupancy absorbs the gap to the measured service time.
            const SimReport sat = simulate(sys.scenario(s, saturated));
            const double measured = service_ms(sat);
            const double target = *measurements.avg_ms(s, "frame");
            if (measured > 0.0) {
                const EngineClass bottleneck =
                    s == Scheme::FdGpuFnGpu ? EngineClass::SimtCluster : EngineClass::DeepLearningAccel;
                double& rho = p.occupancy_ratio[bottleneck];
                rho = std::min(rho * target / measured, 1.0);
            }
        }
    }

    // SM power figures from the utilization the two reference schemes reach at saturation.
    const double u1 = simulate(sys.scenario(Scheme::FdGpuFnGpu, saturated)).utilization.at(EngineId::SmCluster);
    const double u2 = simulate(sys.scenario(Scheme::FdDlaFnGpu, saturated)).utilization.at(EngineId::SmCluster);
    if (!(u1 > u2)) throw CalibrationError("moving the detector off the SMs does not lower their utilization");
    const double delta = kSmSavingDetectOnDlaMw / (u1 - u2);
    const double idle = kSmPowerBothOnSmMw - u1 * delta;
    if (!(idle > 0.0)) throw CalibrationError("calibrated SM idle power is not positive");
    Engine& sm = sys.catalog.engine(EngineId::SmCluster);
    sm.idle_power_mw = idle;
    sm.active_power_mw = idle + delta;
    const double dla_active = dla_active_power_for(sys.catalog, kDlaPerfPerWattRatio);
    for (EngineId e : {EngineId::Dla0, EngineId::Dla1}) sys.catalog.engine(e).active_power_mw = dla_active;
    check_catalog(sys.catalog);
    return sys;
}

}  // namespace hetpipe
