#include "rbsde/cli/runner.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <new>
#include <sstream>

#include "rbsde/cli/expression.hpp"
#include "rbsde/envelope_flow.hpp"
#include "rbsde/io.hpp"
#include "rbsde/pasting.hpp"
#include "rbsde/solver.hpp"
#include "rbsde/uniqueness.hpp"

namespace rbsde::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::Index:
    case ErrorKind::Data:
    case ErrorKind::EnvelopeUndefined:
    case ErrorKind::LatticeMismatch:
      return kExitConfig;
    case ErrorKind::HypothesisViolated:
    case ErrorKind::CertificateUnavailable:
    case ErrorKind::CertificateRefused:
      return kExitHypothesis;
    case ErrorKind::Resource:
      return kExitResource;
    case ErrorKind::Iteration:
      return kExitNumerical;
  }
  return kExitConfig;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot read " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::Resource, "SHA-256 unavailable");
  }
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &length);
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

namespace {

/// Non-finite values become null in JSON.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_number(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }

class Outputs {
 public:
  Outputs(fs::path dir, bool csv) : dir_(std::move(dir)), csv_(csv) {}

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  bool csv() const noexcept { return csv_; }

  std::string add(const std::string& name) {
    files_.push_back(name);
    return path(name);
  }
  void write_json(const std::string& name, const json& value) {
    std::ofstream out(add(name), std::ios::binary);
    out << value.dump(2) << '\n';
    if (!out) fail(ErrorKind::Resource, "cannot write " + path(name));
  }
  const std::vector<std::string>& files() const noexcept { return files_; }

 private:
  fs::path dir_;
  bool csv_;
  std::vector<std::string> files_;
};

struct Context {
  const ExperimentConfig& config;
  const RunOptions& options;
  Outputs& out;
  std::vector<std::string>& warnings;
  bool unstable = false;
};

EnvelopeDirection direction_from(const std::string& name) {
  return name == "upper" ? EnvelopeDirection::Upper : EnvelopeDirection::Lower;
}

Driver config_driver(const ExperimentConfig& config, const GeneratorSpec& g) {
  if (config.generator.envelope == "none") {
    if (!g.lipschitz) {
      fail(ErrorKind::InvalidConfig, "generator " + g.name +
                                         " is not Lipschitz; set [generator] envelope = lower|upper and envelope_n");
    }
    return make_driver(g);
  }
  return make_driver(EnvelopeGenerator(g, config.generator.envelope_n, direction_from(config.generator.envelope),
                                       config.generator.envelope_h));
}

FlowOptions flow_options(const ExperimentConfig& config, const RunOptions& options) {
  FlowOptions f;
  f.n_schedule = config.n_schedule;
  f.h = config.envelope_h;
  f.solver = config.scheme;
  f.parallel_pair = options.jobs > 1;
  return f;
}

void note_stability(Context& ctx, const RBSDEProblem& problem) {
  for (const auto& w : problem.warnings()) ctx.warnings.push_back(w);
  if (!problem.stability_ok()) ctx.unstable = true;
}

void run_solve(Context& ctx, const ProblemData& data) {
  const RBSDEProblem problem(data, config_driver(ctx.config, data.generator));
  note_stability(ctx, problem);
  const RBSDESolution sol = solve_backward(problem, ctx.config.scheme);
  const ResidualReport res = residual_check(problem, sol);
  if (ctx.out.csv()) write_solution_csv(sol, ctx.out.add("solution.csv"));
  json summary{{"y0", number(sol.y0())},
               {"K_T_mean", number(expected_total_push(sol.dk_plus))},
               {"residual_max", number(res.equation_max)},
               {"flatoff_max", number(res.flatoff_max)},
               {"barrier_violation_max", number(res.barrier_violation_max)},
               {"stability_ok", problem.stability_ok()},
               {"scheme", to_string(sol.scheme)},
               {"driver", problem.driver().label}};
  if (sol.dk_minus) summary["K_minus_T_mean"] = number(expected_total_push(*sol.dk_minus));
  ctx.out.write_json("summary.json", summary);
}

EnvelopeFlowResult run_flow(Context& ctx, const ProblemData& data) {
  EnvelopeFlowResult flow = solve_extremal(data, flow_options(ctx.config, ctx.options));
  for (const auto& w : flow.warnings) ctx.warnings.push_back(w);
  for (const auto& level : flow.levels) {
    if (!level.stability_ok) ctx.unstable = true;
  }
  return flow;
}

void write_gap_curve(Outputs& out, const std::string& name, const GapDiagnostic& diag) {
  CsvWriter csv(out.add(name), "t,measured_gap,bound");
  for (std::size_t k = 0; k < diag.times.size(); ++k) {
    csv << diag.times[k] << diag.measured[k];
    if (diag.bound && diag.bound_applicable) {
      csv << *diag.bound;
    } else {
      csv << std::string_view("");
    }
    csv.end_row();
  }
}

void run_envelope(Context& ctx, const ProblemData& data) {
  const EnvelopeFlowResult flow = run_flow(ctx, data);
  json levels = json::array();
  for (const auto& level : flow.levels) {
    const GapDiagnostic diag = gap_diagnostic(flow, level.n);
    levels.push_back({{"n", level.n},
                      {"y_lower_0", number(level.y_lower_0)},
                      {"y_upper_0", number(level.y_upper_0)},
                      {"gap0", number(level.gap_curve.front())},
                      {"bound", optional_number(diag.bound)},
                      {"bound_applicable", diag.bound_applicable},
                      {"bound_note", diag.note},
                      {"stability_ok", level.stability_ok},
                      {"K_plus_lower_mean", number(level.k_plus_lower_mean)},
                      {"K_plus_upper_mean", number(level.k_plus_upper_mean)},
                      {"sandwich_violation", number(level.sandwich_violation)},
                      {"monotone_lower_violation", number(level.monotone_lower_violation)},
                      {"monotone_upper_violation", number(level.monotone_upper_violation)}});
    if (ctx.out.csv()) {
      std::ostringstream name;
      name << "gap_curve_n" << level.n << ".csv";
      write_gap_curve(ctx.out, name.str(), diag);
    }
  }
  if (ctx.out.csv()) write_gap_curve(ctx.out, "gap_curve.csv", gap_diagnostic(flow, flow.final_level().n));
  ctx.out.write_json("flow_summary.json", {{"levels", levels},
                                           {"skipped", flow.skipped},
                                           {"warnings", flow.warnings},
                                           {"generator", data.generator.name}});
}

void run_paste(Context& ctx, const ProblemData& data) {
  const EnvelopeFlowResult flow = run_flow(ctx, data);
  const auto& pc = ctx.config.paste;
  PastingPlan plan;
  plan.k0 = pc.k0 < 0 ? data.lattice.steps() / 2 : pc.k0;
  plan.eta = eta_from_rule(flow, plan.k0, pc.eta_rule, pc.eta_value);
  plan.z2 = pc.z2;
  plan.subtree_cap = pc.subtree_cap;
  const PastedSolution sol = build_intermediate_solution(data, flow, plan);
  const PastingReport rep = verify_pasted(data, flow, sol);
  if (ctx.out.csv()) write_pasted_csv(sol, ctx.out.add("pasted.csv"));
  ctx.out.write_json("paste_report.json",
                     {{"k0", plan.k0},
                      {"n", flow.final_level().n},
                      {"z2", plan.z2},
                      {"y0", number(sol.segment1 ? sol.segment1->y0() : sol.eta.front())},
                      {"eta_mismatch_max", number(rep.eta_mismatch_max)},
                      {"off_crossing_residual_max", number(rep.off_crossing_residual_max)},
                      {"crossing_residual_max", number(rep.crossing_residual_max)},
                      {"crossing_states", rep.crossing_states},
                      {"flatoff_max", number(rep.flatoff_max)},
                      {"barrier_violation_max", number(rep.barrier_violation_max)},
                      {"band_violation_max", number(rep.band_violation_max)},
                      {"forward_push_max", number(rep.forward_push_max)},
                      {"terminal_mismatch_max", number(rep.terminal_mismatch_max)},
                      {"forward_states_at_terminal", rep.forward_states_at_terminal},
                      {"total_states", rep.total_states},
                      {"max_forward_states", sol.max_forward_states},
                      {"min_band_margin", number(rep.min_band_margin)}});
}

void run_certify(Context& ctx, const ProblemData& data) {
  const CertificateReport rep =
      uniqueness_certificate(data, flow_options(ctx.config, ctx.options), ctx.config.certify_target_eps,
                             ctx.config.certify_slack);
  json levels = json::array();
  for (const auto& l : rep.levels) {
    levels.push_back({{"n", l.n},
                      {"measured_gap0", number(l.measured_gap0)},
                      {"bound", number(l.bound)},
                      {"within", l.within}});
  }
  ctx.out.write_json("certificate.json", {{"verdict", rep.verdict},
                                          {"target_eps", rep.target_eps},
                                          {"slack", rep.slack},
                                          {"levels", levels}});
}

double auto_n_max(const Lattice& lattice) {
  double n = 64.0;
  while (n > 1.0 && n * lattice.sqrt_dt() > 1.0) n /= 2.0;
  return n;
}

void run_scan(Context& ctx, const ProblemData& data) {
  const double n_max = ctx.config.scan.n_max > 0.0 ? ctx.config.scan.n_max : auto_n_max(data.lattice);
  const MCurve curve = compute_m_curves(data, ctx.config.scan.c_grid, n_max,
                                        flow_options(ctx.config, ctx.options), std::max(1, ctx.options.jobs));
  const ScanReport rep = scan_nonuniqueness(curve, ctx.config.scan.tol);
  const MonotonicityReport mono = check_m_monotone(curve, curve.slack);
  if (ctx.out.csv()) {
    CsvWriter csv(ctx.out.add("m_curves.csv"), "c,t,m_lower,m_upper");
    for (std::size_t i = 0; i < curve.c_grid.size(); ++i) {
      for (std::size_t k = 0; k < curve.times.size(); ++k) {
        csv << curve.c_grid[i] << curve.times[k] << curve.m_lower[i][k] << curve.m_upper[i][k];
        csv.end_row();
      }
    }
  }
  json gaps = json::array();
  for (std::size_t i = 0; i < curve.c_grid.size(); ++i) gaps.push_back({{"c", curve.c_grid[i]}, {"gap", number(curve.gap[i])}});
  ctx.out.write_json("scan.json", {{"flagged", rep.flagged},
                                   {"tol", rep.tol},
                                   {"slack", rep.slack},
                                   {"n_max", rep.n_max},
                                   {"note", rep.note},
                                   {"gaps", gaps},
                                   {"monotone_violations", mono.violations},
                                   {"monotone_max_violation", number(mono.max_violation)}});
}

ProcessPtr shift_process(const ProcessPtr& p, double shift) {
  if (!p || shift == 0.0) return p;
  auto out = std::make_shared<LatticeProcess>(*p);
  for (double& v : out->raw()) v += shift;
  return out;
}

void run_compare(Context& ctx, const ProblemData& base) {
  const auto& cc = ctx.config.compare;
  ProblemData shifted = base;
  for (double& v : shifted.terminal) v += cc.xi_shift;
  shifted.generator = generators::shifted(base.generator, cc.g_shift);
  shifted.lower = shift_process(base.lower, cc.lower_shift);
  shifted.upper = shift_process(base.upper, cc.upper_shift);
  validate_problem_data(shifted.lattice, shifted.terminal, shifted.lower, shifted.upper);

  const RBSDEProblem pa(shifted, config_driver(ctx.config, shifted.generator));
  const RBSDEProblem pb(base, config_driver(ctx.config, base.generator));
  note_stability(ctx, pa);
  note_stability(ctx, pb);
  const RBSDESolution a = solve_backward(pa, ctx.config.scheme);
  const RBSDESolution b = solve_backward(pb, ctx.config.scheme);
  const ComparisonReport rep = check_comparison(a, b);
  const bool ordered_inputs = cc.xi_shift >= 0 && cc.g_shift >= 0 && cc.lower_shift >= 0 && cc.upper_shift >= 0;
  ctx.out.write_json("comparison.json", {{"inputs_ordered", ordered_inputs},
                                         {"y0_shifted", number(a.y0())},
                                         {"y0_base", number(b.y0())},
                                         {"min_y_difference", number(rep.min_y_difference)},
                                         {"y_violations", rep.y_violations},
                                         {"barriers_equal", rep.barriers_equal},
                                         {"k_plus_violation_max", number(rep.k_plus_violation_max)},
                                         {"k_minus_violation_max", number(rep.k_minus_violation_max)},
                                         {"k_violations", rep.k_violations},
                                         {"stability_ok", pa.stability_ok() && pb.stability_ok()}});
}

void write_manifest(Outputs& out, const ExperimentConfig& config, const std::vector<std::string>& warnings) {
  std::vector<std::string> names = out.files();
  std::sort(names.begin(), names.end());
  json files = json::array();
  for (const auto& name : names) {
    const std::string p = out.path(name);
    files.push_back({{"name", name}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
  }
  std::ofstream m(out.path("manifest.json"), std::ios::binary);
  m << json{{"experiment", to_string(config.kind)}, {"files", files}, {"warnings", warnings}}.dump(2) << '\n';
}

std::string error_json(ErrorKind kind, const std::string& message, int code) {
  return json{{"status", "error"}, {"kind", to_string(kind)}, {"message", message}, {"exit_code", code}}.dump();
}

void record_error(RunResult& result, ErrorKind kind, const std::string& message) {
  result.exit_code = exit_code_for(kind);
  result.error_json = error_json(kind, message, result.exit_code);
  if (result.out_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(result.out_dir, ec);
  std::ofstream out(fs::path(result.out_dir) / "error.json", std::ios::binary);
  if (out) out << result.error_json << '\n';
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  RunResult result;
  result.out_dir = options.out_dir.empty() ? config.output_directory : options.out_dir;
  try {
    fs::create_directories(result.out_dir);
    fs::remove(fs::path(result.out_dir) / "error.json");
    Outputs out(result.out_dir, config.write_csv);
    Context ctx{config, options, out, result.warnings};
    const ProblemData data = build_problem(config);
    switch (config.kind) {
      case ExperimentKind::Solve: run_solve(ctx, data); break;
      case ExperimentKind::Envelope: run_envelope(ctx, data); break;
      case ExperimentKind::Paste: run_paste(ctx, data); break;
      case ExperimentKind::Certify: run_certify(ctx, data); break;
      case ExperimentKind::Scan: run_scan(ctx, data); break;
      case ExperimentKind::Compare: run_compare(ctx, data); break;
    }
    write_manifest(out, config, result.warnings);
    result.files = out.files();
    result.files.push_back("manifest.json");
    if (options.strict && ctx.unstable) {
      record_error(result, ErrorKind::Iteration, "stability condition violated (strict mode)");
      result.exit_code = kExitNumerical;
    }
  } catch (const Error& e) {
    record_error(result, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    record_error(result, ErrorKind::Resource, e.what());
  } catch (const std::bad_alloc&) {
    record_error(result, ErrorKind::Resource, "out of memory");
  }
  return result;
}

RunResult run_config_file(const std::string& path, const RunOptions& options) {
  try {
    return run_experiment(load_config(path), options);
  } catch (const Error& e) {
    RunResult result;
    result.out_dir = options.out_dir;
    record_error(result, e.kind(), e.what());
    return result;
  }
}

}  // namespace rbsde::cli
