#pragma once

#include <string>
#include <vector>

#include "raceproxy/config.hpp"

namespace raceproxy::cli {

// Subcommand bodies. Each validates its key set, runs, and writes the
// resolved config alongside its outputs. Errors surface as the exception
// types in errors.hpp; main() maps them to exit codes.
void cmd_synth(RunConfig cfg);
void cmd_build_tables(RunConfig cfg);
void cmd_predict(RunConfig cfg);
void cmd_train(RunConfig cfg);
void cmd_tune(RunConfig cfg);
void cmd_evaluate(RunConfig cfg);
void cmd_loso(RunConfig cfg);

// Dispatch by subcommand name; returns a process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace raceproxy::cli
