// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include "hetpipe/report.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace hetpipe {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::size_t kCapacityFrames = 3000;
constexpr double kFramePeriodMs = 1000.0 / 30.0;
constexpr double kStrictRealtimeMs = 30.0;

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// Rounded so documents stay byte-stable across platforms' last-digit noise.
double round6(double v) { return std::round(v * 1e6) / 1e6; }

ojson power_json(const PowerBreakdown& p) {
    return ojson{{"cuda", round6(p.cuda_mw)}, {"cpu", round6(p.cpu_mw)}, {"dla", round6(p.dla_mw)}, {"total", round6(p.total_mw)}};
}

double service_ms(const SimReport& r) {
    const double fps = r.steady_state_fps.value_or(r.throughput_fps);
    return fps > 0.0 ? 1e3 / fps : 0.0;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

}  // namespace

std::optional<OutputFormat> parse_format(std::string_view text) {
    if (text == "csv") return OutputFormat::Csv;
    if (text == "json") return OutputFormat::Json;
    if (text == "both") return OutputFormat::Both;
    return std::nullopt;
}

std::string frames_csv(const SimReport& r) {
    std::ostringstream os;
    os << "stream,frame,decoder_ms,streammux_ms,detect_ms,recognize_ms,encode_ms,total_ms,faces\n";
    for (const auto& f : r.frames) {
        os << f.stream << ',' << f.frame;
        for (double v : f.stage_ms) os << ',' << fixed(v);
        os << ',' << fixed(f.total_ms) << ',' << f.faces << "\n";
    }
    return os.str();
}

std::string summary_json(const SchemeResult& res) {
    const SimReport& r = res.run;
    ojson j;
    j["scheme"] = std::string(to_string(res.scheme));
    j["frames"] = r.completed;
    j["throughput_fps"] = round6(r.throughput_fps);
    auto per_stream = ojson::array();
    for (double v : r.per_stream_fps) per_stream.push_back(round6(v));
    j["per_stream_fps"] = per_stream;
    ojson stages = ojson::object();
    for (PipelineStage s : kAllStages) stages[std::string(to_string(s))] = round6(r.avg_stage_ms[index_of(s)]);
    stages["total"] = round6(r.avg_total_ms);
    j["avg_stage_ms"] = stages;
    ojson util = ojson::object();
    for (const auto& [e, u] : r.utilization) util[std::string(to_string(e))] = round6(u);
    j["utilization"] = util;
    j["power_mw"] = power_json(r.power);
    j["energy_mj"] = round6(r.energy_mj);

    const double svc = service_ms(res.capacity);
    j["capacity"] = ojson{{"throughput_fps", round6(res.capacity.steady_state_fps.value_or(res.capacity.throughput_fps))},
                          {"service_ms_per_frame", round6(svc)},
                          {"power_mw", power_json(res.capacity.power)}};
    // Both readings of the real-time bound: the 30 ms figure and the 30 fps period.
    j["realtime"] = ojson{{"max_total_ms", round6(r.max_total_ms)},
                          {"service_within_30ms", svc <= kStrictRealtimeMs},
                          {"service_within_frame_period", svc <= kFramePeriodMs}};
    return j.dump(2) + "\n";
}

std::string comparison_csv(const std::vector<SchemeResult>& results) {
    std::ostringstream os;
    os << "scheme,avg_latency_ms,throughput_fps,cuda_mw,cpu_mw,dla_mw\n";
    for (const auto& r : results) {
        const auto& cap = r.capacity;
        os << to_string(r.scheme) << ',' << fixed(r.run.avg_total_ms) << ','
           << fixed(cap.steady_state_fps.value_or(cap.throughput_fps)) << ',' << fixed(cap.power.cuda_mw) << ','
           << fixed(cap.power.cpu_mw) << ',' << fixed(cap.power.dla_mw) << "\n";
    }
    return os.str();
}

std::vector<Scheme> schemes_for(const std::string& name) {
    if (name == "all") return {kModelLevelSchemes.begin(), kModelLevelSchemes.end()};
    auto s = parse_scheme(name);
    if (!s) throw std::invalid_argument("unknown scheme '" + name + "'");
    return {*s};
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    ScenarioFile file;
    std::vector<Scheme> schemes;
    try {
        schemes = schemes_for(cfg.scheme);
        if (cfg.scenario_path) {
            if (!std::filesystem::exists(*cfg.scenario_path)) {
                err << "error: scenario file not found: " << cfg.scenario_path->string() << "\n";
                return exit_code::kConfig;
            }
            file = ScenarioFile::load(*cfg.scenario_path);
        }
        if (cfg.seed) file.seed = *cfg.seed;
        if (cfg.streams) {
            if (*cfg.streams <= 0) throw std::invalid_argument("--streams must be positive");
            file.streams = *cfg.streams;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kConfig;
    }

    StageMeasurementTable table;
    CalibratedSystem sys;
    try {
        table = cfg.calibration_path ? StageMeasurementTable::load_csv(*cfg.calibration_path) : default_measurements();
        SystemOptions opt;
        opt.plan.dla_precision = file.dla_precision;
        opt.plan.balance_mode = file.balance;
        opt.source.width = file.width;
        opt.source.height = file.height;
        opt.source.fps = file.fps;
        opt.source.gop_pattern = file.gop;
        opt.source.faces = file.faces;
        opt.source.codec = file.codec;
        opt.queue_capacity = file.queue_capacity;
        opt.enable_encoder = file.encoder;
        sys = calibrate_system(table, opt);
    } catch (const CalibrationError& e) {
        err << "calibration error: " << e.what() << "\n";
        return exit_code::kCalibration;
    } catch (const DomainError& e) {
        err << "validation error: " << e.what() << "\n";
        return exit_code::kValidation;
    }

    std::vector<SchemeResult> results;
    try {
        ScenarioFile capacity = file;
        capacity.pacing = Pacing::Saturated;
        capacity.duration_frames = std::max<int>(file.duration_frames, static_cast<int>(kCapacityFrames));
        for (Scheme s : schemes) {
            SchemeResult r;
            r.scheme = s;
            r.run = simulate(sys.scenario(s, file));
            r.capacity = simulate(sys.scenario(s, capacity));
            results.push_back(std::move(r));
        }
    } catch (const DomainError& e) {
        err << "validation error: " << e.what() << "\n";
        return exit_code::kValidation;
    }

    try {
        std::filesystem::create_directories(cfg.output_dir);
        for (const auto& r : results) {
            const std::string name(to_string(r.scheme));
            if (cfg.format != OutputFormat::Json) write_file(cfg.output_dir / (name + "_frames.csv"), frames_csv(r.run));
            if (cfg.format != OutputFormat::Csv) write_file(cfg.output_dir / (name + "_summary.json"), summary_json(r));
        }
        if (cfg.compare) write_file(cfg.output_dir / "comparison.csv", comparison_csv(results));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kConfig;
    }

    out << std::left << std::setw(16) << "scheme" << std::right << std::setw(12) << "latency_ms" << std::setw(12)
        << "ms/frame" << std::setw(12) << "cuda_mw" << std::setw(12) << "cpu_mw" << std::setw(12) << "dla_mw" << "\n";
    for (const auto& r : results) {
        out << std::left << std::setw(16) << to_string(r.scheme) << std::right << std::setw(12) << fixed(r.run.avg_total_ms, 1)
            << std::setw(12) << fixed(service_ms(r.capacity), 2) << std::setw(12) << fixed(r.capacity.power.cuda_mw, 0)
            << std::setw(12) << fixed(r.capacity.power.cpu_mw, 0) << std::setw(12) << fixed(r.capacity.power.dla_mw, 0)
            << "\n";
    }
    return exit_code::kOk;
}

namespace {

void flatten(const nlohmann::json& j, const std::string& path, std::map<std::string, double>& leaves,
             std::set<std::string>& keys) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string p = path.empty() ? it.key() : path + "." + it.key();
            keys.insert(p);
            flatten(it.value(), p, leaves, keys);
        }
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], path + "[" + std::to_string(i) + "]", leaves, keys);
    } else if (j.is_number()) {
        leaves[path] = j.get<double>();
    } else if (j.is_boolean()) {
        leaves[path] = j.get<bool>() ? 1.0 : 0.0;
    }
}

}  // namespace

std::vector<MetricDelta> diff_reports(const std::string& summary_a, const std::string& summary_b,
                                      double power_threshold) {
    nlohmann::json a;
    nlohmann::json b;
    try {
        a = nlohmann::json::parse(summary_a);
        b = nlohmann::json::parse(summary_b);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("summary does not parse: ") + e.what());
    }
    if (!a.is_object() || !b.is_object()) throw SchemaError("summary must be a JSON object");
    std::map<std::string, double> la;
    std::map<std::string, double> lb;
    std::set<std::string> ka;
    std::set<std::string> kb;
    flatten(a, "", la, ka);
    flatten(b, "", lb, kb);
    if (ka != kb) {
        for (const auto& k : ka) {
            if (!kb.count(k)) throw SchemaError("key '" + k + "' missing from the second summary");
        }
        for (const auto& k : kb) {
            if (!ka.count(k)) throw SchemaError("key '" + k + "' missing from the first summary");
        }
    }
    std::vector<MetricDelta> out;
    for (const auto& [k, va] : la) {
        auto it = lb.find(k);
        if (it == lb.end()) continue;  // arrays of different length
        MetricDelta d;
        d.metric = k;
        d.a = va;
        d.b = it->second;
        d.abs_delta = d.b - d.a;
        d.rel_delta = d.a != 0.0 ? d.abs_delta / std::abs(d.a) : (d.b == 0.0 ? 0.0 : std::copysign(INFINITY, d.abs_delta));
        d.flagged = k.rfind("power_mw.", 0) == 0 && std::abs(d.rel_delta) > power_threshold;
        out.push_back(d);
    }
    return out;
}

std::string format_deltas(const std::vector<MetricDelta>& deltas) {
    std::ostringstream os;
    os << "metric,a,b,abs_delta,rel_delta,flag\n";
    for (const auto& d : deltas) {
        os << d.metric << ',' << fixed(d.a) << ',' << fixed(d.b) << ',' << fixed(d.abs_delta) << ','
           << fixed(d.rel_delta, 6) << ',' << (d.flagged ? "POWER_DELTA" : "") << "\n";
    }
    return os.str();
}

}  // namespace hetpipe
