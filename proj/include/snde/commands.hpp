#pragma once

// Experiment commands behind the command-line driver. Each command
// reads/writes artifacts under the config's output directory and
// leaves a config snapshot beside them.

#include <string>

#include "snde/config.hpp"

namespace snde {

int cmd_generate(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_eval(const ExperimentConfig& cfg);
int cmd_sweep_gamma(const ExperimentConfig& cfg);
int cmd_measure(const ExperimentConfig& cfg);
int cmd_report(const ExperimentConfig& cfg);

/// Dispatch by name; returns the process exit code (0 ok, 2 failure).
int run_command(const std::string& command, const ExperimentConfig& cfg);

}  // namespace snde
