#include "rbsde/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rbsde/cli/expression.hpp"
#include "rbsde/error.hpp"

namespace rbsde::cli {

namespace pt = boost::property_tree;

const char* to_string(ExperimentKind kind) noexcept {
  switch (kind) {
    case ExperimentKind::Solve: return "solve";
    case ExperimentKind::Envelope: return "envelope";
    case ExperimentKind::Paste: return "paste";
    case ExperimentKind::Certify: return "certify";
    case ExperimentKind::Scan: return "scan";
    case ExperimentKind::Compare: return "compare";
  }
  return "unknown";
}

namespace {

ExperimentKind kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::Solve, ExperimentKind::Envelope, ExperimentKind::Paste, ExperimentKind::Certify,
                 ExperimentKind::Scan, ExperimentKind::Compare}) {
    if (name == to_string(k)) return k;
  }
  fail(ErrorKind::InvalidConfig, "unknown experiment kind '" + name + "'");
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != t.size() || !std::isfinite(value)) {
    fail(ErrorKind::InvalidConfig, key + ": expected a finite number, got '" + text + "'");
  }
  return value;
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(to_number(key, item));
  }
  if (out.empty()) fail(ErrorKind::InvalidConfig, key + ": expected a comma-separated list");
  return out;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> text(const std::string& key) const {
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'))) return trim(*v);
    return std::nullopt;
  }
  double number(const std::string& key, double fallback) const {
    auto v = text(key);
    return v ? to_number(key, *v) : fallback;
  }
  int integer(const std::string& key, int fallback) const {
    auto v = text(key);
    if (!v) return fallback;
    const double d = to_number(key, *v);
    if (d != std::floor(d) || std::abs(d) > 1e9) fail(ErrorKind::InvalidConfig, key + ": expected an integer");
    return static_cast<int>(d);
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    auto v = text(key);
    return v ? *v : fallback;
  }

 private:
  const pt::ptree& tree_;
};

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  }
  const Reader r(tree);
  ExperimentConfig c;
  c.kind = kind_from_string(r.string("experiment.kind", "solve"));
  c.horizon = r.number("lattice.T", c.horizon);
  c.steps = r.integer("lattice.N", c.steps);

  c.generator.name = r.string("generator.generator", r.string("generator.name", c.generator.name));
  c.generator.a = r.number("generator.a", 0.0);
  c.generator.b = r.number("generator.b", 0.0);
  c.generator.c = r.number("generator.c", 0.0);
  c.generator.shift_c = r.number("generator.shift_c", 0.0);
  c.generator.envelope = r.string("generator.envelope", "none");
  c.generator.envelope_n = r.number("generator.envelope_n", 0.0);
  c.generator.envelope_h = r.number("generator.envelope_h", c.generator.envelope_h);
  if (c.generator.envelope != "none" && c.generator.envelope != "lower" && c.generator.envelope != "upper") {
    fail(ErrorKind::InvalidConfig, "generator.envelope must be none, lower or upper");
  }

  c.terminal = r.string("terminal.value", c.terminal);
  c.lower = r.string("barriers.lower", c.lower);
  c.upper = r.text("barriers.upper");
  if (c.upper && c.upper->empty()) c.upper.reset();

  c.scheme.scheme = scheme_from_string(r.string("scheme.kind", "explicit"));
  c.scheme.picard_tol = r.number("scheme.picard_tol", c.scheme.picard_tol);
  c.scheme.picard_max = r.integer("scheme.picard_max", c.scheme.picard_max);

  if (auto s = r.text("envelope.n_schedule")) c.n_schedule = to_list("envelope.n_schedule", *s);
  c.envelope_h = r.number("envelope.h", c.envelope_h);

  c.paste.k0 = r.integer("paste.k0", c.paste.k0);
  c.paste.eta_rule = eta_rule_from_string(r.string("paste.eta_rule", "midpoint"));
  c.paste.eta_value = r.number("paste.eta_value", 0.0);
  c.paste.z2 = r.number("paste.z2", 0.0);
  c.paste.subtree_cap = r.integer("paste.subtree_cap", c.paste.subtree_cap);

  if (auto s = r.text("scan.c_grid")) {
    c.scan.c_grid = to_list("scan.c_grid", *s);
  } else {
    for (int i = 0; i <= 20; ++i) c.scan.c_grid.push_back(-0.5 + 0.05 * i);
  }
  c.scan.tol = r.number("scan.tol", c.scan.tol);
  c.scan.n_max = r.number("scan.n_max", c.scan.n_max);

  c.certify_target_eps = r.number("certify.target_eps", c.certify_target_eps);
  c.certify_slack = r.number("certify.slack", c.certify_slack);

  c.compare.xi_shift = r.number("compare.xi_shift", 0.0);
  c.compare.g_shift = r.number("compare.g_shift", 0.0);
  c.compare.lower_shift = r.number("compare.lower_shift", 0.0);
  c.compare.upper_shift = r.number("compare.upper_shift", 0.0);

  c.output_directory = r.string("output.directory", c.output_directory);
  const std::string formats = r.string("output.formats", "csv,json");
  c.write_csv = formats.find("csv") != std::string::npos;

  if (!(c.horizon > 0.0)) fail(ErrorKind::InvalidConfig, "lattice.T must be positive");
  if (c.steps < 1) fail(ErrorKind::InvalidConfig, "lattice.N must be at least 1");
  if (!(c.envelope_h > 0.0) || !(c.generator.envelope_h > 0.0)) {
    fail(ErrorKind::InvalidConfig, "envelope grid steps must be positive");
  }

  const GeneratorSpec g = make_generator(c);
  const bool uses_schedule = c.kind == ExperimentKind::Envelope || c.kind == ExperimentKind::Paste ||
                             c.kind == ExperimentKind::Certify;
  if (uses_schedule) {
    for (double n : c.n_schedule) {
      if (!(n > g.mu())) {
        std::ostringstream msg;
        msg << "envelope.n_schedule entry " << n << " must exceed mu = " << g.mu() << " of " << g.name;
        fail(ErrorKind::InvalidConfig, msg.str());
      }
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::InvalidConfig, "cannot read config file " + path);
  return parse_config(in);
}

GeneratorSpec make_generator(const ExperimentConfig& config) {
  const auto& g = config.generator;
  return generators::shifted(generators::by_name(g.name, g.a, g.b, g.c), g.shift_c);
}

ProblemData build_problem(const ExperimentConfig& config) {
  const Lattice lattice(config.horizon, config.steps);
  const Expression terminal = parse_expression(config.terminal);
  std::vector<double> xi(static_cast<std::size_t>(config.steps) + 1);
  for (int j = 0; j <= config.steps; ++j) {
    xi[j] = terminal(lattice.horizon(), lattice.brownian(config.steps, j));
    if (!std::isfinite(xi[j])) fail(ErrorKind::Data, "terminal expression is not finite on the lattice");
  }
  auto lower = std::make_shared<LatticeProcess>(process_from_function(lattice, parse_expression(config.lower)));
  ProcessPtr upper;
  if (config.upper) upper = std::make_shared<LatticeProcess>(process_from_function(lattice, parse_expression(*config.upper)));
  validate_problem_data(lattice, xi, lower, upper);
  return ProblemData{lattice, std::move(xi), make_generator(config), std::move(lower), std::move(upper)};
}

}  // namespace rbsde::cli
