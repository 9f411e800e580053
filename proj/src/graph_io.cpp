// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "hetpipe/model_graph.h"

namespace hetpipe {

namespace {

constexpr std::string_view kHeader = "#hetpipe-graph v1";

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto at = s.find(sep, start);
        parts.push_back(trim(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start)));
        if (at == std::string_view::npos) break;
        start = at + 1;
    }
    return parts;
}

std::optional<int> to_int(std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string format_extent(const std::optional<Extent2>& e) {
    if (!e) return "-";
    return std::to_string(e->h) + "x" + std::to_string(e->w);
}

std::string format_dims(const Dims& d) {
    return std::to_string(d.height) + "x" + std::to_string(d.width) + "x" + std::to_string(d.channels);
}

std::optional<Dims> parse_dims(std::string_view s) {
    auto parts = split(s, 'x');
    if (parts.size() != 3) return std::nullopt;
    auto h = to_int(parts[0]);
    auto w = to_int(parts[1]);
    auto c = to_int(parts[2]);
    if (!h || !w || !c || *h <= 0 || *w <= 0 || *c <= 0) return std::nullopt;
    return Dims{*h, *w, *c};
}

}  // namespace

GraphParseError::GraphParseError(int line, std::string field, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", field '" + field + "': " + what),
      line_(line),
      field_(std::move(field)) {}

namespace {
std::string summarize(const std::vector<Violation>& v) {
    std::ostringstream os;
    os << "graph validation failed:";
    for (const auto& x : v) os << " [" << x.code << " @" << x.layer_id << "] " << x.message << ";";
    return os.str();
}
}  // namespace

GraphValidationError::GraphValidationError(std::vector<Violation> violations)
    : std::runtime_error(summarize(violations)), violations_(std::move(violations)) {}

std::string serialize_graph(const ModelGraph& g) {
    std::ostringstream os;
    os << kHeader << "\n";
    os << "# id|kind|kernel|stride|in_ch|out_ch|out_dims|precision|preds\n";
    os << "name=" << g.name << "\n";
    os << "input=" << format_dims(g.input_dims) << "\n";
    if (g.embedding_size) os << "embedding=" << *g.embedding_size << "\n";
    for (const auto& l : g.layers) {
        os << l.id << '|' << to_string(l.kind) << '|' << format_extent(l.kernel) << '|'
           << format_extent(l.stride) << '|' << l.in_channels << '|' << l.out_channels << '|'
           << format_dims(l.output_dims) << '|' << to_string(l.precision) << '|';
        if (l.preds.empty()) {
            os << '-';
        } else {
            for (std::size_t i = 0; i < l.preds.size(); ++i) os << (i ? "," : "") << l.preds[i];
        }
        os << "\n";
    }
    return os.str();
}

ModelGraph parse_graph(std::string_view text) {
    ModelGraph g;
    std::set<int> seen_ids;
    bool header_seen = false;
    bool input_seen = false;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        std::string line = trim(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kHeader) throw GraphParseError(line_no, "header", "expected '" + std::string(kHeader) + "'");
            header_seen = true;
            continue;
        }
        if (line.front() == '#') continue;

        if (line.find('|') == std::string::npos) {
            auto eq = line.find('=');
            if (eq == std::string::npos) throw GraphParseError(line_no, "record", "expected key=value or a layer record");
            const std::string key = trim(std::string_view(line).substr(0, eq));
            const std::string value = trim(std::string_view(line).substr(eq + 1));
            if (key == "name") {
                g.name = value;
            } else if (key == "input") {
                auto d = parse_dims(value);
                if (!d) throw GraphParseError(line_no, "input", "bad dims '" + value + "'");
                g.input_dims = *d;
                input_seen = true;
            } else if (key == "embedding") {
                auto v = to_int(value);
                if (!v || *v <= 0) throw GraphParseError(line_no, "embedding", "bad size '" + value + "'");
                g.embedding_size = *v;
            } else {
                throw GraphParseError(line_no, key, "unknown key");
            }
            continue;
        }

        auto f = split(line, '|');
        if (f.size() != 9) {
            throw GraphParseError(line_no, "record", "expected 9 fields, found " + std::to_string(f.size()));
        }
        LayerNode l;
        auto id = to_int(f[0]);
        if (!id || *id < 0) throw GraphParseError(line_no, "id", "bad id '" + f[0] + "'");
        if (!seen_ids.insert(*id).second) throw GraphParseError(line_no, "id", "duplicate id " + f[0]);
        l.id = *id;
        auto kind = parse_layer_kind(f[1]);
        if (!kind) throw GraphParseError(line_no, "kind", "unknown layer kind '" + f[1] + "'");
        l.kind = *kind;
        auto extent = [&](const std::string& s, const char* field) -> std::optional<Extent2> {
            if (s == "-") return std::nullopt;
            auto parts = split(s, 'x');
            std::optional<int> h;
            std::optional<int> w;
            if (parts.size() == 2) {
                h = to_int(parts[0]);
                w = to_int(parts[1]);
            }
            if (!h || !w || *h <= 0 || *w <= 0) throw GraphParseError(line_no, field, "bad extent '" + s + "'");
            return Extent2{*h, *w};
        };
        l.kernel = extent(f[2], "kernel");
        l.stride = extent(f[3], "stride");
        auto in_ch = to_int(f[4]);
        if (!in_ch || *in_ch <= 0) throw GraphParseError(line_no, "in_ch", "bad channel count '" + f[4] + "'");
        auto out_ch = to_int(f[5]);
        if (!out_ch || *out_ch <= 0) throw GraphParseError(line_no, "out_ch", "bad channel count '" + f[5] + "'");
        l.in_channels = *in_ch;
        l.out_channels = *out_ch;
        auto dims = parse_dims(f[6]);
        if (!dims) throw GraphParseError(line_no, "out_dims", "bad dims '" + f[6] + "'");
        l.output_dims = *dims;
        auto prec = parse_precision(f[7]);
        if (!prec) throw GraphParseError(line_no, "precision", "unknown precision '" + f[7] + "'");
        l.precision = *prec;
        if (f[8] != "-") {
            for (const auto& p : split(f[8], ',')) {
                auto pid = to_int(p);
                if (!pid || *pid < 0) throw GraphParseError(line_no, "preds", "bad predecessor '" + p + "'");
                l.preds.push_back(*pid);
            }
        }
        g.layers.push_back(std::move(l));
    }
    if (!header_seen) throw GraphParseError(line_no, "header", "empty document");
    if (!input_seen) throw GraphParseError(line_no, "input", "missing input=HxWxC line");

    link_successors(g);
    for (auto& l : g.layers) l.macs = expected_macs(g, l);
    auto violations = validate(g);
    if (!violations.empty()) throw GraphValidationError(std::move(violations));
    return g;
}

ModelGraph load_graph(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open graph file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_graph(buf.str());
}

void save_graph(const ModelGraph& g, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write graph file " + path.string());
    out << serialize_graph(g);
}

}  // namespace hetpipe
