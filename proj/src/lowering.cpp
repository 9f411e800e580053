// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

#include "hetpipe/allocator.h"

namespace hetpipe {

std::string_view to_string(FallbackReason r) {
    switch (r) {
        case FallbackReason::Kind: return "kind";
        case FallbackReason::Precision: return "precision";
        case FallbackReason::Kernel: return "kernel";
        case FallbackReason::Channels: return "channels";
    }
    return "?";
}

DlaSupport classify_dla_support(const LayerNode& layer, const DlaCapabilities& caps) {
    if (!caps.supported_kinds.count(layer.kind)) return {FallbackReason::Kind};
    if (!caps.supported_precisions.count(layer.precision)) return {FallbackReason::Precision};
    if (layer.kernel) {
        auto in_range = [&](int k) { return k >= caps.kernel_min && k <= caps.kernel_max; };
        if (!in_range(layer.kernel->h) || !in_range(layer.kernel->w)) return {FallbackReason::Kernel};
    }
    auto ch_ok = [&](int c) { return c >= caps.channels_min && c <= caps.channels_max; };
    if (!ch_ok(layer.in_channels) || !ch_ok(layer.out_channels)) return {FallbackReason::Channels};
    return {};
}

LoweringRules LoweringRules::parse_csv(const std::string& text) {
    LoweringRules out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line != "model,anchor,pairs") throw std::invalid_argument("lowering rules: expected header 'model,anchor,pairs'");
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        auto num = [&](const std::string& s) {
            int v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size() || v < 0) {
                throw std::invalid_argument("lowering rules line " + std::to_string(line_no) + ": bad number '" + s + "'");
            }
            return v;
        };
        if (f.size() != 3 || f[0].empty()) {
            throw std::invalid_argument("lowering rules line " + std::to_string(line_no) + ": expected 3 fields");
        }
        out.rules.push_back({f[0], num(f[1]), num(f[2])});
    }
    return out;
}

std::string LoweringRules::to_csv() const {
    std::ostringstream os;
    os << "model,anchor,pairs\n";
    for (const auto& r : rules) os << r.model << ',' << r.anchor_id << ',' << r.pairs << "\n";
    return os.str();
}

LoweringRules default_lowering_rules() {
    // Blocks 3a and 3b need one layout change each way; every later block also
    // reformats its reduction branch.
    return LoweringRules{{
        {"facenet", 8, 2},    // 3a concat
        {"facenet", 10, 2},   // 3b concat
        {"facenet", 12, 3},   // 3c concat
        {"facenet", 13, 3},   // 4a
        {"facenet", 14, 3},   // 4b
        {"facenet", 15, 3},   // 4c
        {"facenet", 16, 3},   // 4d
        {"facenet", 18, 3},   // 4e concat
        {"facenet", 19, 3},   // 5a
        {"facenet", 20, 3},   // 5b
    }};
}

ModelGraph emulate_lowering(const ModelGraph& g, EngineId target, const LoweringRules& rules) {
    if (!is_dla(target)) return g;

    std::map<int, int> pairs_at;
    for (const auto& r : rules.rules) {
        if (r.model == g.name && r.pairs > 0 && g.contains(r.anchor_id)) pairs_at[r.anchor_id] += r.pairs;
    }
    for (auto it = pairs_at.begin(); it != pairs_at.end();) {
        const auto& anchor = g.layer(it->first);
        const bool lowered = std::any_of(anchor.succs.begin(), anchor.succs.end(), [&](int s) {
            const auto k = g.layer(s).kind;
            return k == LayerKind::Shuffle || k == LayerKind::Constant;
        });
        it = lowered ? pairs_at.erase(it) : std::next(it);
    }
    if (pairs_at.empty()) return g;

    ModelGraph out = g;
    out.layers.clear();
    int next_id = g.max_id() + 1;
    std::map<int, int> redirect;  // anchor -> last inserted shuffle
    for (const auto& src : g.layers) {
        LayerNode l = src;
        for (int& p : l.preds) {
            if (auto r = redirect.find(p); r != redirect.end()) p = r->second;
        }
        out.layers.push_back(l);
        auto it = pairs_at.find(src.id);
        if (it == pairs_at.end()) continue;

        int feed = src.id;
        for (int i = 0; i < it->second; ++i) {
            LayerNode c;
            c.id = next_id++;
            c.kind = LayerKind::Constant;
            c.in_channels = src.output_dims.channels;
            c.out_channels = src.output_dims.channels;
            c.output_dims = Dims{1, 1, src.output_dims.channels};
            c.precision = src.precision;
            c.preds = {src.id};
            LayerNode s;
            s.id = next_id++;
            s.kind = LayerKind::Shuffle;
            s.in_channels = src.output_dims.channels;
            s.out_channels = src.output_dims.channels;
            s.output_dims = src.output_dims;
            s.precision = src.precision;
            s.preds = {feed, c.id};
            feed = s.id;
            out.layers.push_back(std::move(c));
            out.layers.push_back(std::move(s));
        }
        redirect[src.id] = feed;
    }
    link_successors(out);
    for (auto& l : out.layers) l.macs = expected_macs(out, l);
    return out;
}

Int8Exclusions default_int8_exclusions() {
    // Stem conv and pool, the second conv of every residual pair, and the head.
    return Int8Exclusions{{{"facedetect", {1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 19, 20}}}};
}

ModelGraph precision_fallback(const ModelGraph& g, const Engine& engine, Precision requested,
                              const Int8Exclusions& exclusions) {
    if (engine.engine_class != EngineClass::DeepLearningAccel || requested != Precision::INT8) return g;
    static const std::set<int> kNone;
    auto it = exclusions.by_model.find(g.name);
    const std::set<int>& excluded = it == exclusions.by_model.end() ? kNone : it->second;
    ModelGraph out = g;
    for (auto& l : out.layers) l.precision = excluded.count(l.id) ? Precision::FP16 : Precision::INT8;
    return out;
}

}  // namespace hetpipe
