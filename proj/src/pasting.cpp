#include "rbsde/pasting.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "rbsde/error.hpp"
#include "rbsde/io.hpp"

namespace rbsde {

EtaRule eta_rule_from_string(const std::string& name) {
  if (name == "upper") return EtaRule::Upper;
  if (name == "lower") return EtaRule::Lower;
  if (name == "midpoint") return EtaRule::Midpoint;
  if (name == "constant") return EtaRule::Constant;
  fail(ErrorKind::InvalidConfig, "unknown eta rule '" + name + "'");
}

std::vector<double> eta_from_rule(const EnvelopeFlowResult& flow, int k0, EtaRule rule, double value) {
  const int n = flow.lower.lattice().steps();
  if (k0 < 0 || k0 > n) fail(ErrorKind::InvalidConfig, "k0 outside the lattice");
  std::vector<double> eta(static_cast<std::size_t>(k0) + 1);
  for (int j = 0; j <= k0; ++j) {
    const double lo = flow.lower.y(k0, j);
    const double hi = flow.upper.y(k0, j);
    switch (rule) {
      case EtaRule::Upper: eta[j] = hi; break;
      case EtaRule::Lower: eta[j] = lo; break;
      case EtaRule::Midpoint: eta[j] = 0.5 * (lo + hi); break;
      case EtaRule::Constant: eta[j] = value; break;
    }
  }
  return eta;
}

namespace {

ProcessPtr truncate_process(const LatticeProcess& p, const Lattice& shorter) {
  auto out = std::make_shared<LatticeProcess>(shorter);
  for (int k = 0; k <= shorter.steps(); ++k) {
    const auto src = p.step(k);
    std::copy(src.begin(), src.end(), out->step(k).begin());
  }
  return out;
}

RBSDEProblem segment1_problem(const ProblemData& data, const EnvelopeFlowResult& flow, int k0,
                              const std::vector<double>& eta) {
  const Lattice shorter = data.lattice.truncated(k0);
  ProcessPtr lower = truncate_process(*data.lower, shorter);
  ProcessPtr upper = data.upper ? truncate_process(*data.upper, shorter) : nullptr;
  return RBSDEProblem(shorter, eta, flow.lower_driver, std::move(lower), std::move(upper));
}

const RBSDESolution& extremal(const EnvelopeFlowResult& flow, CrossSide side) {
  return side == CrossSide::Upper ? flow.upper : flow.lower;
}

PostState crossed_state(const EnvelopeFlowResult& flow, int k, int j, CrossSide side) {
  const RBSDESolution& ext = extremal(flow, side);
  PostState s;
  s.j = j;
  s.side = side;
  s.y = ext.y(k, j);
  s.z = ext.z(k, j);
  s.dk_plus = ext.dk_plus(k, j);
  s.dk_minus = ext.dk_minus ? (*ext.dk_minus)(k, j) : 0.0;
  return s;
}

// Builds one layer while merging identical states.
class LayerBuilder {
 public:
  LayerBuilder(const EnvelopeFlowResult& flow, int k, double z2) : flow_(flow), k_(k), z2_(z2) {}

  std::int32_t crossed(int j, CrossSide side) {
    const auto key = std::make_pair(j, static_cast<int>(side));
    if (auto it = crossed_.find(key); it != crossed_.end()) return it->second;
    const auto idx = static_cast<std::int32_t>(states_.size());
    states_.push_back(crossed_state(flow_, k_, j, side));
    crossed_.emplace(key, idx);
    return idx;
  }

  std::int32_t forward(int j, double y) {
    const auto key = std::make_pair(j, std::bit_cast<std::uint64_t>(y));
    if (auto it = forward_.find(key); it != forward_.end()) return it->second;
    const auto idx = static_cast<std::int32_t>(states_.size());
    PostState s;
    s.j = j;
    s.y = y;
    s.z = z2_;
    states_.push_back(s);
    forward_.emplace(key, idx);
    return idx;
  }

  struct Placement {
    std::int32_t index;
    bool crossed;
    double overshoot;
  };

  /// Places a forward value at node (k, j): a forward state if strictly inside
  /// the band, else the state of the crossed side, clamped onto it.
  Placement place(int j, double y) {
    const double lo = flow_.lower.y(k_, j);
    const double hi = flow_.upper.y(k_, j);
    if (lo < y && y < hi) return {forward(j, y), false, 0.0};
    const CrossSide side = y >= hi ? CrossSide::Upper : CrossSide::Lower;
    const double boundary = side == CrossSide::Upper ? hi : lo;
    return {crossed(j, side), true, std::abs(y - boundary)};
  }

  std::size_t forward_count() const noexcept { return forward_.size(); }
  std::vector<PostState> take() { return std::move(states_); }

 private:
  const EnvelopeFlowResult& flow_;
  int k_;
  double z2_;
  std::vector<PostState> states_;
  std::map<std::pair<int, int>, std::int32_t> crossed_;
  std::map<std::pair<int, std::uint64_t>, std::int32_t> forward_;
};

}  // namespace

PastedSolution build_intermediate_solution(const ProblemData& data, const EnvelopeFlowResult& flow,
                                           const PastingPlan& plan) {
  const Lattice& lat = data.lattice;
  const int n = lat.steps();
  if (!(flow.lower.lattice() == lat)) fail(ErrorKind::LatticeMismatch, "flow result lives on a different lattice");
  if (plan.k0 < 0 || plan.k0 > n) fail(ErrorKind::InvalidConfig, "k0 outside the lattice");
  if (plan.eta.size() != static_cast<std::size_t>(plan.k0) + 1) {
    fail(ErrorKind::InvalidConfig, "eta needs one value per step-k0 node");
  }
  if (!std::isfinite(plan.z2)) fail(ErrorKind::InvalidConfig, "z2 must be finite");
  if (plan.subtree_cap < 1 || plan.subtree_cap > 30) fail(ErrorKind::InvalidConfig, "subtree_cap must lie in [1, 30]");
  for (int j = 0; j <= plan.k0; ++j) {
    const double e = plan.eta[j];
    const double lo = flow.lower.y(plan.k0, j);
    const double hi = flow.upper.y(plan.k0, j);
    if (!std::isfinite(e) || e < lo || e > hi) {
      std::ostringstream msg;
      msg << "eta = " << e << " at node (" << plan.k0 << ", " << j << ") lies outside the band [" << lo << ", "
          << hi << "]";
      fail(ErrorKind::HypothesisViolated, msg.str());
    }
  }

  PastedSolution sol;
  sol.k0 = plan.k0;
  sol.eta = plan.eta;
  sol.z2 = plan.z2;
  if (plan.k0 > 0) {
    sol.segment1 = solve_backward(segment1_problem(data, flow, plan.k0, plan.eta), flow.solver);
  }

  const std::size_t cap = std::size_t{1} << plan.subtree_cap;
  const double dt = lat.dt();
  const double s = lat.sqrt_dt();
  {
    LayerBuilder root(flow, plan.k0, plan.z2);
    sol.roots.resize(plan.eta.size());
    for (int j = 0; j <= plan.k0; ++j) sol.roots[j] = root.place(j, plan.eta[j]).index;
    sol.max_forward_states = root.forward_count();
    sol.layers.push_back(root.take());
  }
  for (int k = plan.k0; k < n; ++k) {
    LayerBuilder next(flow, k + 1, plan.z2);
    auto& layer = sol.layers.back();
    const double t = lat.time(k);
    for (auto& st : layer) {
      if (st.side != CrossSide::None) {
        st.up = next.crossed(st.j + 1, st.side);
        st.down = next.crossed(st.j, st.side);
        continue;
      }
      const double drift = st.y - data.generator(t, st.y, plan.z2) * dt;
      const auto up = next.place(st.j + 1, drift + plan.z2 * s);
      const auto down = next.place(st.j, drift - plan.z2 * s);
      st.up = up.index;
      st.down = down.index;
      st.crossing = up.crossed || down.crossed;
      st.overshoot = std::max(up.overshoot, down.overshoot);
    }
    if (next.forward_count() > cap) {
      std::ostringstream msg;
      msg << "pasting tree exceeds 2^" << plan.subtree_cap << " forward states at step " << k + 1;
      fail(ErrorKind::Resource, msg.str());
    }
    sol.max_forward_states = std::max(sol.max_forward_states, next.forward_count());
    sol.layers.push_back(next.take());
  }
  return sol;
}

PastingReport verify_pasted(const ProblemData& data, const EnvelopeFlowResult& flow, const PastedSolution& sol) {
  const Lattice& lat = data.lattice;
  const int n = lat.steps();
  const double dt = lat.dt();
  const double s = lat.sqrt_dt();
  PastingReport rep;
  rep.min_band_margin = std::numeric_limits<double>::infinity();

  for (int j = 0; j <= sol.k0; ++j) {
    const double e = sol.eta[j];
    const PostState& root = sol.layers.front()[sol.roots[j]];
    rep.eta_mismatch_max = std::max(rep.eta_mismatch_max, std::abs(root.y - e));
    if (sol.segment1) rep.eta_mismatch_max = std::max(rep.eta_mismatch_max, std::abs(sol.segment1->y(sol.k0, j) - e));
    if (root.side == CrossSide::None) {
      rep.min_band_margin =
          std::min({rep.min_band_margin, e - flow.lower.y(sol.k0, j), flow.upper.y(sol.k0, j) - e});
    }
  }

  if (sol.segment1) {
    const RBSDEProblem problem = segment1_problem(data, flow, sol.k0, sol.eta);
    const ResidualReport r = residual_check(problem, *sol.segment1);
    rep.off_crossing_residual_max = r.equation_max;
    rep.flatoff_max = std::max(rep.flatoff_max, r.flatoff_max);
    rep.barrier_violation_max = std::max(rep.barrier_violation_max, r.barrier_violation_max);
  }

  for (std::size_t i = 0; i < sol.layers.size(); ++i) {
    const int k = sol.k0 + static_cast<int>(i);
    const double t = lat.time(k);
    const auto& layer = sol.layers[i];
    rep.total_states += layer.size();
    for (const PostState& st : layer) {
      const double lo = (*data.lower)(k, st.j);
      rep.barrier_violation_max = std::max(rep.barrier_violation_max, lo - st.y);
      rep.flatoff_max = std::max(rep.flatoff_max, std::abs(st.dk_plus * (st.y - lo)));
      if (data.upper) {
        const double hi = (*data.upper)(k, st.j);
        rep.barrier_violation_max = std::max(rep.barrier_violation_max, st.y - hi);
        rep.flatoff_max = std::max(rep.flatoff_max, std::abs(st.dk_minus * (hi - st.y)));
      }
      if (st.side == CrossSide::None) {
        rep.forward_push_max = std::max({rep.forward_push_max, std::abs(st.dk_plus), std::abs(st.dk_minus)});
        rep.band_violation_max = std::max(
            {rep.band_violation_max, flow.lower.y(k, st.j) - st.y, st.y - flow.upper.y(k, st.j)});
      }
      if (k == n) {
        rep.terminal_mismatch_max = std::max(rep.terminal_mismatch_max, std::abs(st.y - data.terminal[st.j]));
        if (st.side == CrossSide::None) ++rep.forward_states_at_terminal;
        continue;
      }
      const auto& next = sol.layers[i + 1];
      const double a = next[st.up].y;
      const double b = next[st.down].y;
      const double e = one_step_mean(a, b);
      const double z = one_step_coefficient(a, b, s);
      double residual = 0.0;
      if (st.side == CrossSide::None) {
        // Forward segment: y_k = E[y_{k+1}] + g(t, y_k, z) dt with no push.
        residual = std::abs(st.y - (e + data.generator(t, st.y, z) * dt));
      } else {
        const Driver& drv = st.side == CrossSide::Upper ? flow.upper_driver : flow.lower_driver;
        const double y_hat = flow.solver.scheme == Scheme::Explicit ? e : (st.y - st.dk_plus) + st.dk_minus;
        const double drift = e + drv(t, y_hat, z) * dt;
        residual = std::abs(st.y - ((drift + st.dk_plus) - st.dk_minus));
      }
      if (st.crossing) {
        ++rep.crossing_states;
        rep.crossing_residual_max = std::max(rep.crossing_residual_max, residual);
      } else {
        rep.off_crossing_residual_max = std::max(rep.off_crossing_residual_max, residual);
      }
    }
  }
  return rep;
}

void write_pasted_csv(const PastedSolution& sol, const std::string& path) {
  CsvWriter csv(path, "path_id,k,y,z,dKplus,dKminus,crossed");
  long long id = 0;
  for (std::size_t i = 0; i < sol.layers.size(); ++i) {
    const int k = sol.k0 + static_cast<int>(i);
    for (const PostState& st : sol.layers[i]) {
      csv << id++ << k << st.y << st.z << st.dk_plus << st.dk_minus << static_cast<int>(st.side);
      csv.end_row();
    }
  }
}

}  // namespace rbsde
