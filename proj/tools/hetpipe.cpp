// Copyright (c) 2026, hetpipe authors
// SPDX-License-Identifier: Apache-2.0
//
// hetpipe: simulate the face-recognition pipeline under each placement scheme.
//
//   hetpipe --scheme all --compare --out out/
//   hetpipe diff out/a_summary.json out/b_summary.json
//   hetpipe plan --scheme fd_dla_fn_gpu
//   hetpipe graph --model facenet

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hetpipe/allocator.h"
#include "hetpipe/model_graph.h"
#include "hetpipe/report.h"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
    using namespace hetpipe;

    CLI::App app{"Pipeline simulator for heterogeneous GPU/DLA face recognition"};
    app.set_help_all_flag("--help-all");

    RunConfig cfg;
    std::string scenario;
    std::string calibration;
    std::string format = "both";
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int streams = 0;
    app.add_option("--scenario", scenario, "scenario file (built-in defaults when omitted)");
    app.add_option("--scheme", cfg.scheme, "fdfn_gpu, fd_dla_fn_gpu, fd_gpu_fn_dla, fdfn_dla, layer_balanced or all");
    app.add_option("--calibration", calibration, "stage-average CSV (defaults to the shipped table)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--format", format, "csv, json or both");
    app.add_flag("--compare", cfg.compare, "also write comparison.csv");
    auto* seed_opt = app.add_option("--seed", seed, "override the scenario seed");
    auto* streams_opt = app.add_option("--streams", streams, "override the scenario stream count");

    auto* diff = app.add_subcommand("diff", "compare two summary JSON files");
    std::string diff_a;
    std::string diff_b;
    double threshold = 0.05;
    diff->add_option("a", diff_a)->required();
    diff->add_option("b", diff_b)->required();
    diff->add_option("--power-threshold", threshold, "relative power change to flag");

    auto* plan = app.add_subcommand("plan", "print the allocation plan of a scheme as JSON");
    std::string plan_scheme_name = "fd_dla_fn_gpu";
    plan->add_option("--scheme", plan_scheme_name);

    auto* graph = app.add_subcommand("graph", "print a built-in model graph");
    std::string model = "facedetect";
    bool lowered = false;
    graph->add_option("--model", model, "facedetect or facenet")->check(CLI::IsMember({"facedetect", "facenet"}));
    graph->add_flag("--lowered", lowered, "after DLA lowering");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code::kConfig;
    }

    try {
        if (*diff) {
            const auto deltas = diff_reports(slurp(diff_a), slurp(diff_b), threshold);
            std::cout << format_deltas(deltas);
            return exit_code::kOk;
        }
        if (*plan) {
            auto s = parse_scheme(plan_scheme_name);
            if (!s) {
                std::cerr << "error: unknown scheme '" << plan_scheme_name << "'\n";
                return exit_code::kConfig;
            }
            const CalibratedSystem sys = calibrate_system(default_measurements());
            std::cout << plan_to_json(sys.plan_for(*s)) << "\n";
            return exit_code::kOk;
        }
        if (*graph) {
            ModelGraph g = model == "facenet" ? build_facenet() : build_facedetect();
            if (lowered) g = emulate_lowering(g, EngineId::Dla0);
            std::cout << serialize_graph(g);
            return exit_code::kOk;
        }
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return exit_code::kValidation;
    } catch (const CalibrationError& e) {
        std::cerr << "calibration error: " << e.what() << "\n";
        return exit_code::kCalibration;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::kConfig;
    }

    auto fmt = parse_format(format);
    if (!fmt) {
        std::cerr << "error: --format must be csv, json or both\n";
        return exit_code::kConfig;
    }
    cfg.format = *fmt;
    cfg.output_dir = out_dir;
    if (!scenario.empty()) cfg.scenario_path = scenario;
    if (!calibration.empty()) cfg.calibration_path = calibration;
    if (*seed_opt) cfg.seed = seed;
    if (*streams_opt) cfg.streams = streams;
    return run(cfg, std::cout, std::cerr);
}
