#pragma once

#include <string>

#include "syscade/config_file.hpp"
#include "syscade/deep/model.hpp"
#include "syscade/forest.hpp"
#include "syscade/replay.hpp"
#include "syscade/trace.hpp"

namespace syscade {

// Everything one experiment needs, read from a single flat key = value file.
// Every key is optional and falls back to these defaults; unknown keys are
// rejected. Path keys may be overridden by command-line flags.
struct ExperimentConfig {
    GeneratorConfig generator;
    WindowConfig window;
    ForestConfig forest;
    deep::DeepConfig deep;
    deep::DeepTrainConfig deep_train;
    ReplayConfig replay;
    bool delay_targets_given = false; // delay.targets key present

    std::string trace_path = "trace.tsv";
    std::string labels_path = "labels.tsv";
    std::string fast_model_path = "fast_model.json";
    std::string slow_model_path = "slow_model.json";
    std::string report_path = "report.json";
    std::string csv_path = "per_process.csv";
    std::string verdicts_path = "verdicts.tsv";
};

ExperimentConfig experiment_from_config(const KeyValueConfig& kv);
ExperimentConfig experiment_from_file(const std::string& path);

// Entry point behind the `syscade` binary: subcommands generate,
// train-fast, train-slow, replay, report. Returns the process exit code.
int run_cli(int argc, const char* const* argv);

} // namespace syscade
