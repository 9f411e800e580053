// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0
//
// Report writers and the end-to-end run behind the command-line tool.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetpipe/pipeline_sim.h"

namespace hetpipe {

enum class OutputFormat { Csv, Json, Both };
std::optional<OutputFormat> parse_format(std::string_view text);

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kConfig = 2;
inline constexpr int kValidation = 3;
inline constexpr int kCalibration = 4;
}  // namespace exit_code

struct RunConfig {
    std::optional<std::filesystem::path> scenario_path;  // built-in defaults when empty
    std::string scheme = "all";
    std::optional<std::filesystem::path> calibration_path;
    std::filesystem::path output_dir = "out";
    OutputFormat format = OutputFormat::Both;
    bool compare = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> streams;
};

struct SchemeResult {
    Scheme scheme = Scheme::FdGpuFnGpu;
    SimReport run;       // the scenario as configured
    SimReport capacity;  // the same sources offered as fast as the pipeline accepts them
};

std::string frames_csv(const SimReport& r);
std::string summary_json(const SchemeResult& r);
// One row per result, in the order given.
std::string comparison_csv(const std::vector<SchemeResult>& results);

// Schemes named by a --scheme value, in scheme order for "all".
std::vector<Scheme> schemes_for(const std::string& name);

// Runs every requested scheme and writes its artifacts. Returns an exit code;
// diagnostics go to `err`, a short table to `out`.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MetricDelta {
    std::string metric;
    double a = 0.0;
    double b = 0.0;
    double abs_delta = 0.0;
    double rel_delta = 0.0;  // relative to a; 0 when a is 0 and b is 0
    bool flagged = false;    // power metric moved by more than the threshold
};

// Numeric leaves of two summary documents, paired by path. Arrays pair by
// index over their common length. Throws SchemaError when the object keys
// differ or either document does not parse.
std::vector<MetricDelta> diff_reports(const std::string& summary_a, const std::string& summary_b,
                                      double power_threshold = 0.05);
std::string format_deltas(const std::vector<MetricDelta>& deltas);

}  // namespace hetpipe
