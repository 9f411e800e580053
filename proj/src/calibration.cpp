// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hetpipe/engine_model.h"

namespace hetpipe {

namespace {

const std::set<std::string> kKnownStages = {"decoder", "streammux", "detect", "recognize", "encode", "frame"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<double> StageMeasurementTable::avg_ms(Scheme s, const std::string& stage) const {
    auto it = rows.find(s);
    if (it == rows.end()) return std::nullopt;
    auto jt = it->second.find(stage);
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
}

StageMeasurementTable StageMeasurementTable::parse_csv(const std::string& text) {
    StageMeasurementTable t;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line != "scheme,stage,avg_ms") {
                throw CalibrationError("line " + std::to_string(line_no) + ": expected header 'scheme,stage,avg_ms'");
            }
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(trim(cell));
        if (f.size() != 3) throw CalibrationError("line " + std::to_string(line_no) + ": expected 3 fields");
        auto scheme = parse_scheme(f[0]);
        if (!scheme || *scheme == Scheme::LayerBalanced) {
            throw CalibrationError("line " + std::to_string(line_no) + ": unknown scheme '" + f[0] + "'");
        }
        if (!kKnownStages.count(f[1])) {
            throw CalibrationError("line " + std::to_string(line_no) + ": unknown stage '" + f[1] + "'");
        }
        double v = 0.0;
        auto [p, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), v);
        if (ec != std::errc() || p != f[2].data() + f[2].size() || !std::isfinite(v)) {
            throw CalibrationError("line " + std::to_string(line_no) + ": bad number '" + f[2] + "'");
        }
        t.set(*scheme, f[1], v);
    }
    if (!header) throw CalibrationError("calibration table is empty");
    return t;
}

StageMeasurementTable StageMeasurementTable::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CalibrationError("cannot open calibration file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

std::string StageMeasurementTable::to_csv() const {
    std::ostringstream os;
    os << "scheme,stage,avg_ms\n";
    for (const auto& [scheme, stages] : rows) {
        for (const auto& [stage, ms] : stages) os << to_string(scheme) << ',' << stage << ',' << ms << "\n";
    }
    return os.str();
}

StageMeasurementTable default_measurements() {
    StageMeasurementTable t;
    struct Row {
        Scheme scheme;
        double decoder, streammux, detect, recognize, encode, frame;
    };
    const Row rows[] = {
        {Scheme::FdGpuFnGpu, 9.9, 21.2, 8.8, 19.7, 3.7, 5.2},
        {Scheme::FdDlaFnGpu, 7.5, 14.8, 9.2, 15.6, 3.2, 4.9},
        {Scheme::FdGpuFnDla, 8.8, 33.4, 10.6, 38.7, 11.4, 15.8},
        {Scheme::FdDlaFnDla, 14.0, 33.9, 10.7, 35.4, 16.0, 16.1},
    };
    for (const auto& r : rows) {
        t.set(r.scheme, "decoder", r.decoder);
        t.set(r.scheme, "streammux", r.streammux);
        t.set(r.scheme, "detect", r.detect);
        t.set(r.scheme, "recognize", r.recognize);
        t.set(r.scheme, "encode", r.encode);
        t.set(r.scheme, "frame", r.frame);
    }
    return t;
}

double mean_decoder_base_ms(const CostParams& p, const std::string& gop_pattern) {
    if (gop_pattern.empty()) throw DomainError("empty GOP pattern");
    double sum = 0.0;
    for (char c : gop_pattern) {
        switch (c) {
            case 'I': sum += p.decoder_base_ms[0]; break;
            case 'P': sum += p.decoder_base_ms[1]; break;
            case 'B': sum += p.decoder_base_ms[2]; break;
            default: throw DomainError(std::string("bad GOP symbol '") + c + "'");
        }
    }
    return sum / static_cast<double>(gop_pattern.size());
}

std::map<Scheme, CostParams> calibrate(const StageMeasurementTable& measurements,
                                       std::span<const StageRawCost> raw_costs, const CostParams& base,
                                       const CalibrationOptions& options) {
    std::map<Scheme, CostParams> out;
    for (const auto& [scheme, stages] : measurements.rows) {
        for (const char* required : {"decoder", "streammux", "detect", "recognize", "encode"}) {
            auto it = stages.find(required);
            if (it == stages.end()) {
                throw CalibrationError("scheme " + std::string(to_string(scheme)) + " lacks a '" + required + "' row");
            }
            if (!(it->second > 0.0)) {
                throw CalibrationError("scheme " + std::string(to_string(scheme)) + " has non-positive '" + required + "'");
            }
        }
        CostParams p = base;
        const double base_mean = mean_decoder_base_ms(base, options.gop_pattern);
        const double k = stages.at("decoder") / base_mean;
        for (auto& b : p.decoder_base_ms) b *= k;
        p.streammux_latency_ms = std::max(stages.at("streammux") - p.preprocess_ms, p.streammux_occupancy_ms);
        p.encode_latency_ms = std::max(stages.at("encode"), p.encode_occupancy_ms);
        if (auto f = stages.find("frame"); f != stages.end()) {
            if (!(f->second > 0.0)) {
                throw CalibrationError("scheme " + std::string(to_string(scheme)) + " has non-positive 'frame'");
            }
            p.frame_service_target_ms = f->second;
        }
        out.emplace(scheme, std::move(p));
    }

    for (const auto& rc : raw_costs) {
        auto it = out.find(rc.scheme);
        if (it == out.end()) {
            throw CalibrationError("no measurements for scheme " + std::string(to_string(rc.scheme)));
        }
        const double measured_s = measurements.avg_ms(rc.scheme, std::string(to_string(rc.stage))).value() * 1e-3;
        if (!(rc.scaled_s > 0.0) || !(rc.multiplicity > 0.0)) {
            throw CalibrationError("raw cost for " + rc.model + " must be positive");
        }
        const double scale = ((measured_s - rc.overhead_s) / rc.multiplicity - rc.fixed_s) / rc.scaled_s;
        if (!(scale > 0.0)) {
            throw CalibrationError("measured " + std::string(to_string(rc.stage)) + " for " +
                                   std::string(to_string(rc.scheme)) + " is below the model's fixed costs");
        }
        it->second.scale[{rc.model, rc.engine_class}] = scale;
    }
    return out;
}

}  // namespace hetpipe
