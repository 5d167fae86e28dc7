#pragma once

#include <string>
#include <vector>

#include "rbsde/cli/config.hpp"
#include "rbsde/error.hpp"

namespace rbsde::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitHypothesis = 3,
  kExitResource = 4,
  kExitNumerical = 5,
};

int exit_code_for(ErrorKind kind) noexcept;

struct RunOptions {
  /// Overrides [output] directory when non-empty.
  std::string out_dir;
  /// Escalates stability warnings to a failure with exit code 5.
  bool strict = false;
  int jobs = 1;
};

struct RunResult {
  int exit_code = kExitOk;
  std::string out_dir;
  std::vector<std::string> files;
  std::vector<std::string> warnings;
  /// Machine-readable error, empty on success.
  std::string error_json;
};

/// Runs one experiment and writes its outputs plus manifest.json (file names
/// with SHA-256 digests). Never throws; failures come back as an exit code
/// and an error JSON that is also written to error.json when possible.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options);
RunResult run_config_file(const std::string& path, const RunOptions& options);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

/// Reads a result directory and writes whitespace-separated .dat series for
/// plotting. Returns the written file names; throws a data error when the
/// directory holds nothing plottable.
std::vector<std::string> write_plot_data(const std::string& result_dir, double m_curve_time = 0.0);

}  // namespace rbsde::cli
