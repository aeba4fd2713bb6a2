#pragma once

// Batch front end: one experiment per invocation, configured from a flat
// key = value file and command-line overrides.

#include "osd/config.hpp"
#include "osd/report.hpp"

#include <string>
#include <vector>

namespace osd {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failed = 1;
inline constexpr int invalid_config = 2;
}  // namespace exit_code

struct Artifact {
  std::string name;  // file name inside out_path
  std::string content;
};

struct Outcome {
  Report report;
  std::vector<Artifact> artifacts;
};

/// Runs a resolved, validated configuration. Throws Error on failure.
Outcome run_experiment(const RunConfig& config);

/// Resolves, validates and runs; writes report.json and data files into
/// out_path (created if missing) or prints the report to stdout when
/// out_path is empty. Messages go to stderr.
int run(const RunConfig& config);

/// Entry point of the osdtool executable.
int cli_main(int argc, const char* const* argv);

}  // namespace osd
