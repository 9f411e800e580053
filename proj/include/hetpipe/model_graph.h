// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0
//
// CNN layer graphs: representation, the two built-in face models, validation,
// traversal and the line-oriented text format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hetpipe/types.h"

namespace hetpipe {

struct Dims {
    int height = 0;
    int width = 0;
    int channels = 0;

    std::uint64_t elements() const {
        return static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width) *
               static_cast<std::uint64_t>(channels);
    }
    friend bool operator==(const Dims&, const Dims&) = default;
};

struct Extent2 {
    int h = 1;
    int w = 1;
    friend bool operator==(const Extent2&, const Extent2&) = default;
};

struct LayerNode {
    int id = 0;
    LayerKind kind = LayerKind::Conv;
    std::optional<Extent2> kernel;
    std::optional<Extent2> stride;
    int in_channels = 1;
    int out_channels = 1;
    Dims output_dims;
    Precision precision = Precision::FP16;
    std::uint64_t macs = 0;
    std::vector<int> preds;
    std::vector<int> succs;

    friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

struct ModelGraph {
    std::string name;
    std::vector<LayerNode> layers;
    Dims input_dims;
    std::optional<int> embedding_size;

    // Index into `layers`, or nullopt.
    std::optional<std::size_t> position_of(int id) const;
    const LayerNode& layer(int id) const;
    LayerNode& layer(int id);
    bool contains(int id) const { return position_of(id).has_value(); }
    int max_id() const;

    friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

struct Violation {
    std::string code;  // cycle, order, reachability, io, macs, dims, kernel, channels, edge, duplicate
    int layer_id = -1;
    std::string message;
};

// ResNet18-shaped detector backbone, 224x224x3 input, all FP16.
ModelGraph build_facedetect();
// Inception-shaped embedding network ending in a 128-wide L2-normalised vector.
ModelGraph build_facenet();

// Every invariant violation found; empty when the graph is valid.
std::vector<Violation> validate(const ModelGraph& g);

// Rebuilds every node's succs list from the preds lists.
void link_successors(ModelGraph& g);

// Kahn toposort, stable with respect to the current list order. Throws
// std::invalid_argument when the graph has a cycle.
ModelGraph topological_sort(const ModelGraph& g);

// Dims entering a layer: the first predecessor's output, with channels summed
// over all predecessors for Concat. Input layers see the graph input.
Dims input_dims_of(const ModelGraph& g, const LayerNode& layer);

// Output dims implied by kernel/stride arithmetic against the input dims.
std::optional<Dims> derived_output_dims(const LayerNode& layer, const Dims& in);

// MAC count implied by the layer's kind and dims.
std::uint64_t expected_macs(const ModelGraph& g, const LayerNode& layer);

std::uint64_t tensor_bytes(const Dims& d, Precision p);
std::uint64_t parameter_count(const ModelGraph& g, const LayerNode& layer);

struct WorkingSet {
    std::uint64_t input_bytes = 0;
    std::uint64_t output_bytes = 0;
    std::uint64_t parameter_bytes = 0;
    std::uint64_t total() const { return input_bytes + output_bytes + parameter_bytes; }
};

// Throws std::out_of_range for an unknown id.
WorkingSet layer_working_set(const ModelGraph& g, int id);

std::size_t count_kind(const ModelGraph& g, LayerKind kind);

// Graph text format ------------------------------------------------------

class GraphParseError : public std::runtime_error {
public:
    GraphParseError(int line, std::string field, const std::string& what);
    int line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    int line_;
    std::string field_;
};

class GraphValidationError : public std::runtime_error {
public:
    explicit GraphValidationError(std::vector<Violation> violations);
    const std::vector<Violation>& violations() const { return violations_; }

private:
    std::vector<Violation> violations_;
};

std::string serialize_graph(const ModelGraph& g);
ModelGraph parse_graph(std::string_view text);
ModelGraph load_graph(const std::filesystem::path& path);
void save_graph(const ModelGraph& g, const std::filesystem::path& path);

}  // namespace hetpipe
