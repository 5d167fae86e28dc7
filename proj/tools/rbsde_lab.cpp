// rbsde-lab: run RBSDE experiments from INI configs and export plot series.

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

#include "rbsde/cli/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Reflected BSDE lattice experiments"};
  app.require_subcommand(1);

  std::string config_path;
  rbsde::cli::RunOptions options;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "INI experiment config")->required();
  run->add_option("--out", options.out_dir, "Output directory (overrides [output] directory)");
  run->add_flag("--strict", options.strict, "Fail with exit code 5 on stability warnings");
  run->add_option("--jobs", options.jobs, "Worker threads")->check(CLI::Range(1, 64));

  std::string result_dir;
  double m_time = 0.0;
  auto* plot = app.add_subcommand("plot", "Write whitespace-separated .dat series from a result directory");
  plot->add_option("result_dir", result_dir, "Directory written by 'run'")->required();
  plot->add_option("--t", m_time, "Time at which m(t, c) is sliced");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rbsde::cli::kExitConfig;
  }

  if (*run) {
    const auto result = rbsde::cli::run_config_file(config_path, options);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    if (result.exit_code != 0) {
      std::cerr << result.error_json << '\n';
      return result.exit_code;
    }
    for (const auto& f : result.files) std::cout << result.out_dir << '/' << f << '\n';
    return 0;
  }

  try {
    for (const auto& f : rbsde::cli::write_plot_data(result_dir, m_time)) std::cout << result_dir << '/' << f << '\n';
  } catch (const rbsde::Error& e) {
    const nlohmann::json err{{"status", "error"}, {"kind", rbsde::to_string(e.kind())}, {"message", e.what()},
                             {"exit_code", rbsde::cli::kExitConfig}};
    std::cerr << err.dump() << '\n';
    return rbsde::cli::kExitConfig;
  }
  return 0;
}
