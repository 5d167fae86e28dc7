#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbsde/envelope_flow.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

enum class CrossSide : std::uint8_t { None = 0, Upper = 1, Lower = 2 };

struct PastingPlan {
  int k0 = 0;
  /// Prescribed value at each step-k0 node.
  std::vector<double> eta;
  /// Constant integrand of the forward segment.
  double z2 = 0.0;
  /// log2 of the largest number of distinct post-k0 states allowed at one step.
  int subtree_cap = 20;
};

enum class EtaRule { Upper, Lower, Midpoint, Constant };

EtaRule eta_rule_from_string(const std::string& name);

/// eta at step k0 from the flow's final bracket.
std::vector<double> eta_from_rule(const EnvelopeFlowResult& flow, int k0, EtaRule rule, double value = 0.0);

/// One state of the post-k0 tree. Paths that reach the same node with the same
/// forward value (or after crossing to the same side) share a state, so the
/// tree is stored with exact merging and every path still maps to a unique
/// state sequence.
struct PostState {
  int j = 0;
  CrossSide side = CrossSide::None;
  double y = 0.0;
  double z = 0.0;
  double dk_plus = 0.0;
  double dk_minus = 0.0;
  std::int32_t up = -1;
  std::int32_t down = -1;
  /// Forward state with at least one child that left the open band.
  bool crossing = false;
  double overshoot = 0.0;
};

struct PastedSolution {
  int k0 = 0;
  std::vector<double> eta;
  double z2 = 0.0;
  /// Backward solve on [0, k0] with terminal eta; absent when k0 = 0.
  std::optional<RBSDESolution> segment1;
  /// layers[i] holds the states at step k0 + i.
  std::vector<std::vector<PostState>> layers;
  /// Index into layers[0] of the state at node (k0, j).
  std::vector<std::int32_t> roots;
  std::size_t max_forward_states = 0;
};

/// Backward solve up to k0 with terminal eta, then the forward equation
/// y' = y - g(t, y, z2) dt + z2 dB from eta until it leaves the open band
/// (lower_y, upper_y), then the crossed extremal approximant.
PastedSolution build_intermediate_solution(const ProblemData& data, const EnvelopeFlowResult& flow,
                                           const PastingPlan& plan);

struct PastingReport {
  double eta_mismatch_max = 0.0;
  double off_crossing_residual_max = 0.0;
  double crossing_residual_max = 0.0;
  std::size_t crossing_states = 0;
  double flatoff_max = 0.0;
  double barrier_violation_max = 0.0;
  double band_violation_max = 0.0;
  double forward_push_max = 0.0;
  double terminal_mismatch_max = 0.0;
  std::size_t forward_states_at_terminal = 0;
  std::size_t total_states = 0;
  /// min over forward roots of min(eta - lower_y, upper_y - eta); +inf when
  /// every root starts on the boundary.
  double min_band_margin = 0.0;
};

PastingReport verify_pasted(const ProblemData& data, const EnvelopeFlowResult& flow, const PastedSolution& sol);

/// Header "path_id,k,y,z,dKplus,dKminus,crossed"; path_id numbers the post-k0
/// states, crossed is 0 (forward), 1 (upper) or 2 (lower).
void write_pasted_csv(const PastedSolution& sol, const std::string& path);

}  // namespace rbsde
