// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0

#include "hetpipe/model_graph.h"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace hetpipe {

std::optional<std::size_t> ModelGraph::position_of(int id) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].id == id) return i;
    }
    return std::nullopt;
}

const LayerNode& ModelGraph::layer(int id) const {
    auto pos = position_of(id);
    if (!pos) throw std::out_of_range("unknown layer id " + std::to_string(id) + " in " + name);
    return layers[*pos];
}

LayerNode& ModelGraph::layer(int id) {
    auto pos = position_of(id);
    if (!pos) throw std::out_of_range("unknown layer id " + std::to_string(id) + " in " + name);
    return layers[*pos];
}

int ModelGraph::max_id() const {
    int m = -1;
    for (const auto& l : layers) m = std::max(m, l.id);
    return m;
}

namespace {

bool is_zero_mac_kind(LayerKind k) {
    return k == LayerKind::Shuffle || k == LayerKind::Constant || k == LayerKind::Input ||
           k == LayerKind::Output;
}

bool needs_kernel(LayerKind k) {
    return k == LayerKind::Conv || k == LayerKind::Deconv || k == LayerKind::MaxPool ||
           k == LayerKind::AvgPool;
}

int pooled_extent(int in, int k, int s, int pad) { return (in + 2 * pad - k) / s + 1; }

// Appends layers one after another; each new layer consumes the previous one.
class ChainBuilder {
public:
    ChainBuilder(std::string name, Dims input, Precision precision) : precision_(precision) {
        g_.name = std::move(name);
        g_.input_dims = input;
        LayerNode in;
        in.id = 0;
        in.kind = LayerKind::Input;
        in.in_channels = input.channels;
        in.out_channels = input.channels;
        in.output_dims = input;
        in.precision = precision;
        g_.layers.push_back(in);
    }

    int conv(int k, int s, int out_ch) { return spatial(LayerKind::Conv, k, s, out_ch); }
    int max_pool(int k, int s) { return spatial(LayerKind::MaxPool, k, s, current().channels); }
    int avg_pool(int k, int s) { return spatial(LayerKind::AvgPool, k, s, current().channels); }

    int fully_connected(int out_ch) {
        LayerNode n = next(LayerKind::FullyConnected);
        n.kernel = Extent2{1, 1};
        n.stride = Extent2{1, 1};
        n.in_channels = static_cast<int>(current().elements());
        n.out_channels = out_ch;
        return push(std::move(n));
    }

    // Kinds whose output mirrors the input shape (or collapses it, for global pooling).
    int elementwise(LayerKind kind) {
        LayerNode n = next(kind);
        n.in_channels = current().channels;
        n.out_channels = current().channels;
        return push(std::move(n));
    }

    ModelGraph finish() {
        LayerNode out = next(LayerKind::Output);
        out.in_channels = current().channels;
        out.out_channels = current().channels;
        push(std::move(out));
        link_successors(g_);
        for (auto& l : g_.layers) l.macs = expected_macs(g_, l);
        return std::move(g_);
    }

    ModelGraph& graph() { return g_; }
    Dims current() const { return g_.layers.back().output_dims; }

private:
    LayerNode next(LayerKind kind) {
        LayerNode n;
        n.id = static_cast<int>(g_.layers.size());
        n.kind = kind;
        n.precision = precision_;
        n.preds = {g_.layers.back().id};
        return n;
    }

    int spatial(LayerKind kind, int k, int s, int out_ch) {
        LayerNode n = next(kind);
        n.kernel = Extent2{k, k};
        n.stride = Extent2{s, s};
        n.in_channels = current().channels;
        n.out_channels = out_ch;
        return push(std::move(n));
    }

    int push(LayerNode n) {
        auto dims = derived_output_dims(n, current());
        n.output_dims = dims.value_or(current());
        g_.layers.push_back(std::move(n));
        return g_.layers.back().id;
    }

    ModelGraph g_;
    Precision precision_;
};

}  // namespace

std::uint64_t tensor_bytes(const Dims& d, Precision p) { return d.elements() * bytes_per_element(p); }

Dims input_dims_of(const ModelGraph& g, const LayerNode& layer) {
    if (layer.kind == LayerKind::Input || layer.preds.empty()) return g.input_dims;
    auto first = g.position_of(layer.preds.front());
    if (!first) return g.input_dims;
    Dims in = g.layers[*first].output_dims;
    if (layer.kind == LayerKind::Concat) {
        in.channels = 0;
        for (int p : layer.preds) {
            if (auto pos = g.position_of(p)) in.channels += g.layers[*pos].output_dims.channels;
        }
    }
    return in;
}

std::optional<Dims> derived_output_dims(const LayerNode& layer, const Dims& in) {
    const Extent2 k = layer.kernel.value_or(Extent2{1, 1});
    const Extent2 s = layer.stride.value_or(Extent2{1, 1});
    if (s.h <= 0 || s.w <= 0) return std::nullopt;
    switch (layer.kind) {
        case LayerKind::Conv:
        case LayerKind::MaxPool:
            // Padding (k - 1) / 2 keeps "same" geometry at stride 1.
            return Dims{pooled_extent(in.height, k.h, s.h, (k.h - 1) / 2),
                        pooled_extent(in.width, k.w, s.w, (k.w - 1) / 2),
                        layer.kind == LayerKind::Conv ? layer.out_channels : in.channels};
        case LayerKind::AvgPool:
            return Dims{pooled_extent(in.height, k.h, s.h, 0), pooled_extent(in.width, k.w, s.w, 0),
                        in.channels};
        case LayerKind::Deconv:
            return Dims{in.height * s.h, in.width * s.w, layer.out_channels};
        case LayerKind::FullyConnected:
            return Dims{1, 1, layer.out_channels};
        case LayerKind::GlobalAvgPool:
            return Dims{1, 1, in.channels};
        case LayerKind::Activation:
        case LayerKind::BatchNorm:
        case LayerKind::Pow:
        case LayerKind::L2Norm:
        case LayerKind::Shuffle:
        case LayerKind::Concat:
        case LayerKind::Output:
            return in;
        case LayerKind::Input:
        case LayerKind::Constant:
            return std::nullopt;
    }
    return std::nullopt;
}

std::uint64_t expected_macs(const ModelGraph& g, const LayerNode& layer) {
    if (is_zero_mac_kind(layer.kind)) return 0;
    const Dims out = layer.output_dims;
    switch (layer.kind) {
        case LayerKind::Conv:
        case LayerKind::Deconv:
        case LayerKind::FullyConnected: {
            const Extent2 k = layer.kernel.value_or(Extent2{1, 1});
            return static_cast<std::uint64_t>(k.h) * static_cast<std::uint64_t>(k.w) *
                   static_cast<std::uint64_t>(layer.in_channels) * out.elements();
        }
        default:
            (void)g;
            return out.elements();
    }
}

std::uint64_t parameter_count(const ModelGraph& g, const LayerNode& layer) {
    (void)g;
    switch (layer.kind) {
        case LayerKind::Conv:
        case LayerKind::Deconv:
        case LayerKind::FullyConnected: {
            const Extent2 k = layer.kernel.value_or(Extent2{1, 1});
            return static_cast<std::uint64_t>(k.h) * static_cast<std::uint64_t>(k.w) *
                   static_cast<std::uint64_t>(layer.in_channels) *
                   static_cast<std::uint64_t>(layer.out_channels);
        }
        case LayerKind::BatchNorm:
            return 2ULL * static_cast<std::uint64_t>(layer.out_channels);
        case LayerKind::Constant:
            return layer.output_dims.elements();
        default:
            return 0;
    }
}

WorkingSet layer_working_set(const ModelGraph& g, int id) {
    const LayerNode& l = g.layer(id);
    WorkingSet ws;
    for (int p : l.preds) {
        if (auto pos = g.position_of(p)) ws.input_bytes += tensor_bytes(g.layers[*pos].output_dims, l.precision);
    }
    ws.output_bytes = tensor_bytes(l.output_dims, l.precision);
    ws.parameter_bytes = parameter_count(g, l) * bytes_per_element(l.precision);
    return ws;
}

std::size_t count_kind(const ModelGraph& g, LayerKind kind) {
    return static_cast<std::size_t>(
        std::count_if(g.layers.begin(), g.layers.end(), [&](const LayerNode& l) { return l.kind == kind; }));
}

void link_successors(ModelGraph& g) {
    for (auto& l : g.layers) l.succs.clear();
    for (const auto& l : g.layers) {
        for (int p : l.preds) {
            if (auto pos = g.position_of(p)) g.layers[*pos].succs.push_back(l.id);
        }
    }
}

ModelGraph topological_sort(const ModelGraph& g) {
    std::unordered_map<int, int> indegree;
    for (const auto& l : g.layers) indegree[l.id] = 0;
    for (const auto& l : g.layers) {
        for (int p : l.preds) {
            if (indegree.count(p)) ++indegree[l.id];
        }
    }
    ModelGraph sorted = g;
    sorted.layers.clear();
    std::vector<bool> placed(g.layers.size(), false);
    // Repeatedly take the earliest listed ready node to keep the order stable.
    while (sorted.layers.size() < g.layers.size()) {
        bool progressed = false;
        for (std::size_t i = 0; i < g.layers.size(); ++i) {
            if (placed[i] || indegree[g.layers[i].id] != 0) continue;
            placed[i] = true;
            sorted.layers.push_back(g.layers[i]);
            for (const auto& l : g.layers) {
                for (int p : l.preds) {
                    if (p == g.layers[i].id) --indegree[l.id];
                }
            }
            progressed = true;
            break;
        }
        if (!progressed) throw std::invalid_argument("graph " + g.name + " has a cycle");
    }
    link_successors(sorted);
    return sorted;
}

std::vector<Violation> validate(const ModelGraph& g) {
    std::vector<Violation> out;
    auto report = [&](std::string code, int id, std::string msg) {
        out.push_back(Violation{std::move(code), id, std::move(msg)});
    };

    std::map<int, std::size_t> pos;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (!pos.emplace(g.layers[i].id, i).second) {
            report("duplicate", g.layers[i].id, "duplicate id");
        }
    }

    // Edges and list order.
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const auto& l = g.layers[i];
        for (int p : l.preds) {
            auto it = pos.find(p);
            if (it == pos.end()) {
                report("edge", l.id, "predecessor " + std::to_string(p) + " does not exist");
            } else if (it->second >= i) {
                report("order", l.id, "predecessor " + std::to_string(p) + " listed after its consumer");
            }
        }
        std::vector<int> expected_succs;
        for (const auto& other : g.layers) {
            if (std::find(other.preds.begin(), other.preds.end(), l.id) != other.preds.end()) {
                expected_succs.push_back(other.id);
            }
        }
        auto actual = l.succs;
        std::sort(actual.begin(), actual.end());
        std::sort(expected_succs.begin(), expected_succs.end());
        if (actual != expected_succs) report("edge", l.id, "successor list disagrees with predecessor lists");
    }

    // Cycle detection over pred edges (iterative DFS, colours 0/1/2).
    {
        std::map<int, int> colour;
        bool cyclic = false;
        for (const auto& start : g.layers) {
            if (colour[start.id] != 0) continue;
            std::vector<std::pair<int, std::size_t>> stack{{start.id, 0}};
            colour[start.id] = 1;
            while (!stack.empty() && !cyclic) {
                auto& [id, next] = stack.back();
                const auto& node = g.layers[pos.at(id)];
                if (next < node.preds.size()) {
                    int p = node.preds[next++];
                    if (!pos.count(p)) continue;
                    if (colour[p] == 1) {
                        cyclic = true;
                        report("cycle", p, "cycle through layer " + std::to_string(p));
                    } else if (colour[p] == 0) {
                        colour[p] = 1;
                        stack.emplace_back(p, 0);
                    }
                } else {
                    colour[id] = 2;
                    stack.pop_back();
                }
            }
            if (cyclic) break;
        }
    }

    // Exactly one Input and one Output; everything between them.
    std::vector<int> inputs;
    std::vector<int> outputs;
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::Input) inputs.push_back(l.id);
        if (l.kind == LayerKind::Output) outputs.push_back(l.id);
    }
    if (inputs.size() != 1) report("io", -1, "expected exactly one Input, found " + std::to_string(inputs.size()));
    if (outputs.size() != 1) report("io", -1, "expected exactly one Output, found " + std::to_string(outputs.size()));
    if (inputs.size() == 1 && outputs.size() == 1) {
        std::map<int, std::vector<int>> fwd;
        std::map<int, std::vector<int>> bwd;
        for (const auto& l : g.layers) {
            for (int p : l.preds) {
                if (!pos.count(p)) continue;
                fwd[p].push_back(l.id);
                bwd[l.id].push_back(p);
            }
        }
        auto reach = [](int from, std::map<int, std::vector<int>>& adj) {
            std::set<int> seen{from};
            std::deque<int> q{from};
            while (!q.empty()) {
                int n = q.front();
                q.pop_front();
                for (int m : adj[n]) {
                    if (seen.insert(m).second) q.push_back(m);
                }
            }
            return seen;
        };
        auto from_input = reach(inputs.front(), fwd);
        auto to_output = reach(outputs.front(), bwd);
        for (const auto& l : g.layers) {
            if (!from_input.count(l.id)) report("reachability", l.id, "not reachable from Input");
            if (!to_output.count(l.id)) report("reachability", l.id, "does not reach Output");
        }
    }

    // Per-layer shape, channel and MAC rules.
    for (const auto& l : g.layers) {
        if (l.in_channels <= 0 || l.out_channels <= 0) report("channels", l.id, "channel counts must be positive");
        if (needs_kernel(l.kind) && !l.kernel) report("kernel", l.id, "spatial layer without kernel");
        if (l.kernel && (l.kernel->h <= 0 || l.kernel->w <= 0)) report("kernel", l.id, "kernel must be positive");
        if (l.stride && (l.stride->h <= 0 || l.stride->w <= 0)) report("kernel", l.id, "stride must be positive");

        if (is_zero_mac_kind(l.kind)) {
            if (l.macs != 0) report("macs", l.id, "zero-MAC kind carries a MAC count");
        } else if (l.macs == 0) {
            report("macs", l.id, "compute layer claims zero MACs");
        } else if (l.macs != expected_macs(g, l)) {
            report("macs", l.id, "MAC count disagrees with kernel/channel/output arithmetic");
        }

        const bool weighted = l.kind == LayerKind::Conv || l.kind == LayerKind::Deconv ||
                              l.kind == LayerKind::FullyConnected;
        if (weighted && l.preds.size() == 1 && pos.count(l.preds.front())) {
            const Dims in = input_dims_of(g, l);
            const int expect_in = l.kind == LayerKind::FullyConnected ? static_cast<int>(in.elements()) : in.channels;
            if (l.in_channels != expect_in) report("channels", l.id, "in_channels disagrees with predecessor output");
            auto derived = derived_output_dims(l, in);
            if (!derived || *derived != l.output_dims) {
                report("dims", l.id, "output dims disagree with kernel/stride arithmetic");
            }
        }
        if (weighted && l.output_dims.channels != l.out_channels) {
            report("dims", l.id, "output channels disagree with out_channels");
        }
    }

    if (g.embedding_size) {
        bool ok = false;
        if (outputs.size() == 1) {
            const auto& o = g.layers[pos.at(outputs.front())];
            if (o.preds.size() == 1 && pos.count(o.preds.front())) {
                const auto& norm = g.layers[pos.at(o.preds.front())];
                const Dims emb{1, 1, *g.embedding_size};
                if (norm.kind == LayerKind::L2Norm && norm.output_dims == emb) {
                    for (int p : norm.preds) {
                        if (!pos.count(p)) continue;
                        const auto& fc = g.layers[pos.at(p)];
                        if (fc.kind == LayerKind::FullyConnected && fc.output_dims == emb) ok = true;
                    }
                }
            }
        }
        if (!ok) report("embedding", -1, "embedding graph must end with fully-connected then L2Norm");
    }
    return out;
}

ModelGraph build_facedetect() {
    ChainBuilder b("facedetect", Dims{224, 224, 3}, Precision::FP16);
    b.conv(7, 2, 64);
    b.max_pool(3, 2);
    // Four residual stages, each two pairs of 3x3 convs; the first conv of a
    // stage after the first downsamples.
    const int widths[] = {64, 128, 256, 512};
    for (int stage = 0; stage < 4; ++stage) {
        for (int i = 0; i < 4; ++i) {
            b.conv(3, (stage > 0 && i == 0) ? 2 : 1, widths[stage]);
        }
    }
    b.avg_pool(7, 1);
    b.fully_connected(1000);
    return b.finish();
}

ModelGraph build_facenet() {
    ChainBuilder b("facenet", Dims{224, 224, 3}, Precision::FP16);
    b.conv(7, 2, 64);
    b.max_pool(3, 2);
    b.elementwise(LayerKind::BatchNorm);
    // "inception (2)": the conv2 reduce/expand pair, no branch concat.
    b.conv(3, 1, 192);
    b.elementwise(LayerKind::BatchNorm);
    b.max_pool(3, 2);

    // Composite inception blocks as one 3x3-equivalent conv each. Blocks that
    // widen their input keep an explicit concat of their branches.
    struct Block {
        int stride;
        int out_ch;
        bool concat;
    };
    const Block blocks[] = {
        {1, 256, true},    // 3a
        {1, 320, true},    // 3b
        {2, 640, true},    // 3c
        {1, 640, false},   // 4a
        {1, 640, false},   // 4b
        {1, 640, false},   // 4c
        {1, 640, false},   // 4d
        {2, 1024, true},   // 4e
        {1, 1024, false},  // 5a
        {1, 1024, false},  // 5b
    };
    for (const auto& blk : blocks) {
        b.conv(3, blk.stride, blk.out_ch);
        if (blk.concat) b.elementwise(LayerKind::Concat);
    }
    b.elementwise(LayerKind::GlobalAvgPool);
    const int fc = b.fully_connected(128);
    const int pow = b.elementwise(LayerKind::Pow);
    b.elementwise(LayerKind::L2Norm);
    // The normaliser divides the embedding by the norm derived from the squares.
    b.graph().layers.back().preds = {fc, pow};
    ModelGraph g = b.finish();
    g.embedding_size = 128;
    return g;
}

}  // namespace hetpipe
