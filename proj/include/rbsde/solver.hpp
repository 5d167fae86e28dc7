#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbsde/generators.hpp"
#include "rbsde/lattice.hpp"

namespace rbsde {

enum class Scheme { Explicit, Implicit };

const char* to_string(Scheme scheme) noexcept;
Scheme scheme_from_string(const std::string& name);

struct SolverOptions {
  Scheme scheme = Scheme::Explicit;
  double picard_tol = 1e-12;
  int picard_max = 500;
};

/// The Lipschitz driver the backward solver integrates.
struct Driver {
  std::string label;
  DriverFn eval;
  double lipschitz = 0.0;
  IncrementFn increment;
  /// One-sided evaluation error (nonzero only for grid-searched envelopes).
  double slack = 0.0;

  double operator()(double t, double y, double z) const { return eval(t, y, z); }
  double delta(double t, double y, double z, double dy, double dz) const;
};

/// Requires the generator to declare a Lipschitz constant.
Driver make_driver(const GeneratorSpec& g);
/// Closed-form envelopes are evaluated directly; grid-searched ones go through
/// a per-driver cache keyed by (t, y/h, z/h), evaluated at the quantised point.
Driver make_driver(const EnvelopeGenerator& envelope);

using ProcessPtr = std::shared_ptr<const LatticeProcess>;

/// Raw problem data (xi, g, L[, U]) before a Lipschitz driver is chosen.
struct ProblemData {
  Lattice lattice;
  std::vector<double> terminal;
  GeneratorSpec generator;
  ProcessPtr lower;
  ProcessPtr upper;

  bool two_barrier() const noexcept { return static_cast<bool>(upper); }
};

/// Checks the barrier ordering L_T <= xi <= U_T and L <= U; throws a config
/// error otherwise.
void validate_problem_data(const Lattice& lattice, std::span<const double> terminal,
                           const ProcessPtr& lower, const ProcessPtr& upper);

class RBSDEProblem {
 public:
  RBSDEProblem(Lattice lattice, std::vector<double> terminal, Driver driver, ProcessPtr lower,
               ProcessPtr upper = nullptr);
  RBSDEProblem(const ProblemData& data, Driver driver);

  const Lattice& lattice() const noexcept { return lattice_; }
  std::span<const double> terminal() const noexcept { return terminal_; }
  const Driver& driver() const noexcept { return driver_; }
  const ProcessPtr& lower() const noexcept { return lower_; }
  const ProcessPtr& upper() const noexcept { return upper_; }
  bool two_barrier() const noexcept { return static_cast<bool>(upper_); }

  /// lip * sqrt(dt) <= 1, the condition under which the explicit one-step map
  /// is monotone. A violation is recorded as a warning, not an error.
  bool stability_ok() const noexcept { return stability_ok_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  Lattice lattice_;
  std::vector<double> terminal_;
  Driver driver_;
  ProcessPtr lower_;
  ProcessPtr upper_;
  bool stability_ok_ = true;
  std::vector<std::string> warnings_;
};

/// Adapted (y, z) with the reflection pushes stored as per-node increments:
/// dk_plus(k, j) is the push applied at node (k, j) over [t_k, t_{k+1}].
/// Cumulative K along a path is the running sum of increments; on a
/// recombining lattice it is path dependent, so only increments live on nodes.
struct RBSDESolution {
  LatticeProcess y;
  LatticeProcess z;
  LatticeProcess dk_plus;
  std::optional<LatticeProcess> dk_minus;
  Scheme scheme = Scheme::Explicit;
  ProcessPtr lower;
  ProcessPtr upper;
  bool stability_ok = true;

  const Lattice& lattice() const noexcept { return y.lattice(); }
  double y0() const noexcept { return y(0, 0); }
};

/// E[K_T] = sum_k E[dK_k].
double expected_total_push(const LatticeProcess& increments);

struct StepResult {
  std::vector<double> y;
  std::vector<double> z;
  std::vector<double> dk_plus;
  std::vector<double> dk_minus;
  /// Pre-reflection value.
  std::vector<double> y_tilde;
};

/// One backward step from values at step k+1 to step k.
StepResult backward_step(const RBSDEProblem& problem, int k, std::span<const double> next,
                         const SolverOptions& options);

RBSDESolution solve_backward(const RBSDEProblem& problem, const SolverOptions& options = {});

struct ResidualReport {
  double equation_max = 0.0;
  double flatoff_max = 0.0;
  double barrier_violation_max = 0.0;
  double negative_push_max = 0.0;
  double push_product_max = 0.0;
  double terminal_mismatch_max = 0.0;

  bool skorokhod_exact() const noexcept {
    return flatoff_max == 0.0 && barrier_violation_max == 0.0 && negative_push_max == 0.0 &&
           push_product_max == 0.0;
  }
};

ResidualReport residual_check(const RBSDEProblem& problem, const RBSDESolution& solution);

struct ComparisonReport {
  /// min over nodes of yA - yB.
  double min_y_difference = 0.0;
  std::size_t y_violations = 0;
  bool barriers_equal = false;
  /// max over nodes of (dK+_A - dK+_B)^+ and (dK-_B - dK-_A)^+; only when
  /// barriers are equal. Node-wise ordering of increments is equivalent to
  /// ordering of K_t - K_s for every s <= t on every path.
  double k_plus_violation_max = 0.0;
  double k_minus_violation_max = 0.0;
  std::size_t k_violations = 0;
};

ComparisonReport check_comparison(const RBSDESolution& a, const RBSDESolution& b);

/// Solution CSV with header "k,j,t,B,y,z,Kplus,Kminus"; the K columns carry the
/// node increments.
void write_solution_csv(const RBSDESolution& solution, const std::string& path);

}  // namespace rbsde
