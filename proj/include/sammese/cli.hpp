// SPDX-License-Identifier: Apache-2.0
//
// Subcommand front end: train, predict, eval, ablate, synth-data.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sammese/config.hpp"

namespace sammese {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Runs one command line. Output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

/// Applies a comma-separated list of ablation switches such as
/// "no-mcfm,no-semantic". Throws ConfigError on unknown names.
void apply_ablation(RunConfig& cfg, const std::string& list);

struct AblationRow {
  std::string label;
  RunConfig cfg;
};

/// Rows of one ablation table: "mcfm", "madapter", "prompts", "queries" or
/// "level". `values` feeds the queries / level sweeps.
std::vector<AblationRow> ablation_rows(const RunConfig& base, const std::string& which,
                                       const std::vector<int64_t>& values);

}  // namespace sammese
