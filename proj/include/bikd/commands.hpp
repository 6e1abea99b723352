#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "bikd/config.hpp"

namespace bikd {

// Pipeline stages behind the CLI commands. Each writes its declared outputs
// under cfg.out_dir and never mutates its inputs.
void cmd_pretrain(const RunConfig& cfg);
void cmd_transfer(const RunConfig& cfg);
void cmd_analyze(const RunConfig& cfg);
void cmd_experiment(const RunConfig& cfg);

// Full argv-style entry point: parses command and flags, runs the command,
// maps failures to exit codes (0 success, 1 runtime/training, 2 configuration).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace bikd
