// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <fstream>
#include <sstream>

#include "hetpipe/pipeline_sim.h"

namespace hetpipe {

namespace {

constexpr std::string_view kHeader = "#hetpipe-scenario v1";

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw DomainError("scenario line " + std::to_string(line) + ": " + what);
}

template <typename T>
T number(int line, const std::string& key, const std::string& v) {
    T out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) fail(line, "bad value for " + key + ": '" + v + "'");
    return out;
}

bool boolean(int line, const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    fail(line, "bad value for " + key + ": '" + v + "'");
}

}  // namespace

ScenarioFile ScenarioFile::parse(const std::string& text) {
    ScenarioFile f;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    bool header = false;
    while (std::getline(in, raw)) {
        ++line;
        const std::string l = trim(raw);
        if (l.empty()) continue;
        if (!header) {
            if (l != kHeader) fail(line, "expected '" + std::string(kHeader) + "'");
            header = true;
            continue;
        }
        if (l.front() == '#') continue;
        const auto eq = l.find('=');
        if (eq == std::string::npos) fail(line, "expected key=value");
        const std::string key = trim(std::string_view(l).substr(0, eq));
        const std::string v = trim(std::string_view(l).substr(eq + 1));
        if (key == "streams") {
            f.streams = number<int>(line, key, v);
            if (f.streams <= 0) fail(line, "streams must be positive");
        } else if (key == "resolution") {
            const auto x = v.find('x');
            if (x == std::string::npos) fail(line, "resolution must be WIDTHxHEIGHT");
            f.width = number<int>(line, key, v.substr(0, x));
            f.height = number<int>(line, key, v.substr(x + 1));
            if (f.width <= 0 || f.height <= 0) fail(line, "resolution must be positive");
        } else if (key == "fps") {
            f.fps = number<double>(line, key, v);
            if (!(f.fps > 0.0)) fail(line, "fps must be positive");
        } else if (key == "gop") {
            if (v.empty() || v.front() != 'I' || v.find_first_not_of("IPB") != std::string::npos) {
                fail(line, "gop must start with I and use only I, P, B");
            }
            f.gop = v;
        } else if (key == "faces") {
            f.faces.clear();
            std::istringstream cells(v);
            std::string cell;
            while (std::getline(cells, cell, ',')) {
                const int n = number<int>(line, key, trim(cell));
                if (n < 0) fail(line, "face counts must be non-negative");
                f.faces.push_back(n);
            }
            if (f.faces.empty()) fail(line, "faces needs at least one value");
        } else if (key == "duration_frames") {
            f.duration_frames = number<int>(line, key, v);
            if (f.duration_frames < 0) fail(line, "duration_frames must be non-negative");
        } else if (key == "seed") {
            f.seed = number<std::uint64_t>(line, key, v);
        } else if (key == "queue_capacity") {
            f.queue_capacity = number<int>(line, key, v);
            if (f.queue_capacity <= 0) fail(line, "queue_capacity must be positive");
        } else if (key == "encoder") {
            f.encoder = boolean(line, key, v);
        } else if (key == "pacing") {
            auto p = parse_pacing(v);
            if (!p) fail(line, "pacing must be realtime or saturated");
            f.pacing = *p;
        } else if (key == "codec") {
            auto c = parse_codec(v);
            if (!c) fail(line, "codec must be h264 or h265");
            f.codec = *c;
        } else if (key == "dla_precision") {
            auto p = parse_precision(v);
            if (!p || *p == Precision::FP32) fail(line, "dla_precision must be fp16 or int8");
            f.dla_precision = *p;
        } else if (key == "balance") {
            if (v == "equal_busy") {
                f.balance = BalanceMode::EqualBusy;
            } else if (v == "literal") {
                f.balance = BalanceMode::Literal;
            } else {
                fail(line, "balance must be equal_busy or literal");
            }
        } else if (key == "hypothetical_dual_dla") {
            f.hypothetical_dual_dla = boolean(line, key, v);
        } else {
            fail(line, "unknown key '" + key + "'");
        }
    }
    if (!header) throw DomainError("scenario is empty");
    return f;
}

ScenarioFile ScenarioFile::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open scenario file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string ScenarioFile::to_text() const {
    std::ostringstream os;
    os << kHeader << "\n";
    os << "streams=" << streams << "\n";
    os << "resolution=" << width << "x" << height << "\n";
    os << "fps=" << fps << "\n";
    os << "gop=" << gop << "\n";
    os << "faces=";
    for (std::size_t i = 0; i < faces.size(); ++i) os << (i ? "," : "") << faces[i];
    os << "\n";
    os << "duration_frames=" << duration_frames << "\n";
    os << "seed=" << seed << "\n";
    os << "queue_capacity=" << queue_capacity << "\n";
    os << "encoder=" << (encoder ? "true" : "false") << "\n";
    os << "pacing=" << to_string(pacing) << "\n";
    os << "codec=" << to_string(codec) << "\n";
    os << "dla_precision=" << to_string(dla_precision) << "\n";
    os << "balance=" << (balance == BalanceMode::EqualBusy ? "equal_busy" : "literal") << "\n";
    os << "hypothetical_dual_dla=" << (hypothetical_dual_dla ? "true" : "false") << "\n";
    return os.str();
}

Scenario make_scenario(const ScenarioFile& file, const AllocationPlan& plan, const EngineCatalog& cat) {
    Scenario sc;
    SourceSpec src;
    src.width = file.width;
    src.height = file.height;
    src.fps = file.fps;
    src.gop_pattern = file.gop;
    src.faces = file.faces;
    src.codec = file.codec;
    sc.sources.assign(static_cast<std::size_t>(file.streams), src);
    sc.plan = plan;
    sc.catalog = cat;
    sc.queue_capacity_frames = file.queue_capacity;
    sc.duration_frames = file.duration_frames;
    sc.seed = file.seed;
    sc.enable_encoder = file.encoder;
    sc.pacing = file.pacing;
    sc.hypothetical_dual_dla = file.hypothetical_dual_dla;
    check_scenario(sc);
    return sc;
}

}  // namespace hetpipe
