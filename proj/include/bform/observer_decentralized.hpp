#pragma once

#include "bform/common.hpp"
#include "bform/dynamics.hpp"
#include "bform/formation_analysis.hpp"
#include "bform/graph.hpp"
#include "bform/riccati.hpp"
#include "bform/sensing.hpp"

#include <map>
#include <tuple>
#include <set>
#include <utility>
#include <vector>

namespace bform {

// ---------------------------------------------------------------------------
// Edge level: relative Riccati observer for one PE bearing.
//
// The relative state follows the stored edge orientation (i, j):
//   p_bar = p_j - p_i,  v_bar = v_j - v_i,  u_bar = u_j - u_i,
// with output matrix C_k = pi_{g_k} [I 0]. Since pi_{g_k} p_bar = 0 the
// observer needs no measured output, only the bearing itself.
// ---------------------------------------------------------------------------

struct EdgeGains {
  double kappa = 10.0;
  Mat Q;   ///< d x d
  Mat S;   ///< 2d x 2d
  Mat M0;  ///< 2d x 2d

  static EdgeGains scaled_identity(int d, double kappa, double q, double s, double m0) {
    return {kappa, q * Mat::Identity(d, d), s * Mat::Identity(2 * d, 2 * d), m0 * Mat::Identity(2 * d, 2 * d)};
  }
};

inline void validate(const EdgeGains& gains, int d) {
  if (gains.kappa < 0.5) throw ValidationError("edge observer kappa must be >= 1/2");
  if (gains.Q.rows() != d || gains.Q.cols() != d) throw ValidationError("edge observer Q must be d x d");
  if (gains.S.rows() != 2 * d || gains.S.cols() != 2 * d) throw ValidationError("edge observer S must be 2d x 2d");
  if (gains.M0.rows() != 2 * d || gains.M0.cols() != 2 * d)
    throw ValidationError("edge observer M0 must be 2d x 2d");
  if (min_eigenvalue(symmetrized(gains.Q)) <= 0 || min_eigenvalue(symmetrized(gains.S)) <= 0 ||
      min_eigenvalue(symmetrized(gains.M0)) <= 0)
    throw ValidationError("edge observer Q, S and M0 must be positive definite");
}

struct EdgeObserverState {
  int edge = -1;
  Vec p;  ///< estimate of p_j - p_i
  Vec v;  ///< estimate of v_j - v_i
  Mat M;

  friend EdgeObserverState operator+(const EdgeObserverState& a, const EdgeObserverState& b) {
    return {a.edge, a.p + b.p, a.v + b.v, a.M + b.M};
  }
  friend EdgeObserverState operator*(double h, const EdgeObserverState& a) {
    return {a.edge, h * a.p, h * a.v, h * a.M};
  }
};

/// Scalar count of integrated states: 2d relative coordinates plus the
/// d(2d+1) free entries of the symmetric M_k.
constexpr long edge_observer_state_count(int d) { return 2L * d + static_cast<long>(d) * (2L * d + 1); }

constexpr long decentralized_state_count(int pe_edges, int n, int d) {
  return pe_edges * edge_observer_state_count(d) + 2L * d * n;
}

constexpr long centralized_state_count(int n, int d) {
  const long N = static_cast<long>(d) * n;
  return 2 * N + N * (2 * N + 1);
}

/// C_k = pi_g [I_d 0_d].
inline Mat edge_output_matrix(const Vec& bearing) {
  const auto d = bearing.size();
  Mat C = Mat::Zero(d, 2 * d);
  C.leftCols(d) = projector(bearing);
  return C;
}

inline EdgeObserverState edge_derivative(const EdgeObserverState& x, const EdgeGains& gains, const Vec& bearing,
                                         const Vec& u_bar) {
  const auto d = static_cast<int>(bearing.size());
  const Mat C = edge_output_matrix(bearing);
  const Mat MCt = x.M * C.transpose();
  // K_k C_k x_hat with K_k = kappa M C^T Q; C_k x_hat = pi_g p_hat.
  const Vec injection = gains.kappa * MCt * (gains.Q * (C.leftCols(d) * x.p));
  EdgeObserverState dx;
  dx.edge = x.edge;
  dx.p = x.v - injection.head(d);
  dx.v = u_bar - injection.tail(d);
  dx.M = riccati_rate(double_integrator_matrix(d), x.M, C, gains.Q, gains.S);
  return dx;
}

inline void condition_check(EdgeObserverState& x, double t) {
  x.M = symmetrized(x.M);
  const double lmin = min_eigenvalue(x.M);
  if (!(lmin >= kMinRiccatiEigenvalue))
    throw SimulationAbort(t, "edge observer " + std::to_string(x.edge + 1) +
                                 " lost conditioning: lambda_min(M_k) = " + std::to_string(lmin));
  if (!x.p.allFinite() || !x.v.allFinite())
    throw SimulationAbort(t, "non-finite estimate in edge observer " + std::to_string(x.edge + 1));
}

/// One RK4 step with the bearing and relative input held over the step.
inline EdgeObserverState edge_observer_step(const EdgeObserverState& x, const EdgeGains& gains, const Vec& bearing,
                                            const Vec& u_bar, double t, double dt) {
  auto f = [&](double, const EdgeObserverState& s) { return edge_derivative(s, gains, bearing, u_bar); };
  EdgeObserverState next = rk4_step(f, t, x, dt);
  condition_check(next, t + dt);
  return next;
}

// ---------------------------------------------------------------------------
// Agent level: distributed Luenberger observer fed by neighbor messages.
// ---------------------------------------------------------------------------

/// Payload one agent broadcasts to its neighbors each round.
struct EstimateMessage {
  int sender = -1;
  long round = 0;
  Vec p;
  Vec v;
  Vec u;
  /// Edge estimates p_hat_bar_k (stored orientation) for edges the sender owns.
  std::map<int, Vec> edge_estimates;
};

enum class LeaderGainForm {
  gained,  ///< leader term scaled by kappa_o1 / kappa_o2
  unit     ///< leader term -(p_hat_1 - p_1) with unit gain in both rows
};

struct DistributedGains {
  double kappa_o1 = 10.0;
  double kappa_o2 = 5.0;
  LeaderGainForm leader_form = LeaderGainForm::gained;
};

inline void validate(const DistributedGains& gains) {
  if (!(gains.kappa_o1 > 0) || !(gains.kappa_o2 > 0))
    throw ValidationError("distributed observer gains kappa_o1, kappa_o2 must be positive");
}

/// Per-agent position/velocity estimates, stacked.
struct DistributedObserverState {
  Vec p;
  Vec v;

  friend DistributedObserverState operator+(const DistributedObserverState& a, const DistributedObserverState& b) {
    return {a.p + b.p, a.v + b.v};
  }
  friend DistributedObserverState operator*(double h, const DistributedObserverState& a) { return {h * a.p, h * a.v}; }
};

/// Raised when a neighbor's message is absent; the observer never extrapolates.
class StaleDataError : public SimulationAbort {
public:
  using SimulationAbort::SimulationAbort;
};

/// Agent i's consensus correction: sum over neighbors j of
/// sigma_ij (q_hat_ij - (p_hat_i - p_hat_j)), where q_hat_ij estimates p_i - p_j.
/// On PE edges sigma = I and q_hat comes from the edge observer (sign-flipped
/// from the stored p_to - p_from orientation); on the remaining edges
/// sigma = pi_{g^m} and q_hat = 0.
///
/// `own_edges` holds p_hat_bar_k for the edges agent i owns (initial node);
/// estimates for edges owned by a neighbor arrive in that neighbor's message.
inline Vec fused_correction(const FormationGraph& g, int i, const Vec& own_p,
                            const std::vector<EstimateMessage>& inbox, const std::set<int>& pe_edges,
                            const std::map<int, Vec>& own_edges, const BearingSnapshot& measured) {
  const int d = g.dimension();
  Vec c = Vec::Zero(d);
  for (int j : g.neighbors(i)) {
    const EstimateMessage* msg = nullptr;
    for (const auto& m : inbox)
      if (m.sender == j) {
        msg = &m;
        break;
      }
    if (!msg)
      throw StaleDataError(measured.t, "agent " + std::to_string(i + 1) + " has no message from neighbor " +
                                           std::to_string(j + 1));
    const int k = g.edge_index(i, j);
    const Vec gap = own_p - msg->p;  // p_hat_i - p_hat_j
    if (pe_edges.count(k)) {
      const bool owner = g.edge(k).from == i;
      const std::map<int, Vec>& source = owner ? own_edges : msg->edge_estimates;
      auto it = source.find(k);
      if (it == source.end())
        throw StaleDataError(measured.t, "agent " + std::to_string(i + 1) + " lacks the estimate of edge " +
                                             edge_label(g.edge(k)));
      const Vec q_hat = owner ? Vec(-it->second) : it->second;
      c += q_hat - gap;
    } else {
      c -= projector(measured.at(k)) * gap;
    }
  }
  return c;
}

/// Agent i's estimate derivative given its correction. `leader_p` is set only
/// for the leader, which adds its own absolute position error.
inline std::pair<Vec, Vec> agent_estimate_rate(const Vec& p_hat, const Vec& v_hat, const Vec& u, const Vec& correction,
                                               const DistributedGains& gains, const Vec* leader_p) {
  Vec dp = v_hat + gains.kappa_o1 * correction;
  Vec dv = u + gains.kappa_o2 * correction;
  if (leader_p) {
    const Vec err = *leader_p - p_hat;
    if (gains.leader_form == LeaderGainForm::gained) {
      dp += gains.kappa_o1 * err;
      dv += gains.kappa_o2 * err;
    } else {
      dp += err;
      dv += err;
    }
  }
  return {dp, dv};
}

/// One RK4 step of every agent's estimate with corrections held over the
/// step. The closed-loop harness instead re-evaluates corrections per stage.
inline DistributedObserverState distributed_step(const DistributedObserverState& x, const std::vector<Vec>& corrections,
                                                 const MeasurementSet& leader_meas, const Vec& u,
                                                 const DistributedGains& gains, double dt) {
  const auto d = static_cast<int>(leader_meas.leader_p.size());
  const auto n = static_cast<int>(corrections.size());
  auto f = [&](double, const DistributedObserverState& s) {
    DistributedObserverState dx{Vec(s.p.size()), Vec(s.v.size())};
    for (int i = 0; i < n; ++i) {
      const Vec* lp = (i == leader_meas.leader) ? &leader_meas.leader_p : nullptr;
      auto [dp, dv] = agent_estimate_rate(s.p.segment(i * d, d), s.v.segment(i * d, d), u.segment(i * d, d),
                                          corrections[i], gains, lp);
      dx.p.segment(i * d, d) = dp;
      dx.v.segment(i * d, d) = dv;
    }
    return dx;
  };
  DistributedObserverState next = rk4_step(f, leader_meas.t, x, dt);
  if (!next.p.allFinite() || !next.v.allFinite())
    throw SimulationAbort(leader_meas.t + dt, "non-finite distributed estimate");
  return next;
}

/// Everything agent i holds locally when it updates: its own estimates and
/// input, the edge observers it owns, its own bearing measurements and, for
/// the leader only, its measured position.
struct AgentLocalView {
  int id = -1;
  Vec p_hat;
  Vec v_hat;
  Vec u;
  std::vector<EdgeObserverState> owned_edges;
  const BearingSnapshot* bearings = nullptr;
  const Vec* leader_p = nullptr;
};

struct AgentRates {
  Vec dp;
  Vec dv;
  std::vector<EdgeObserverState> edge_rates;  ///< same order as owned_edges
};

inline EstimateMessage compose_message(const AgentLocalView& view, long round) {
  EstimateMessage m{view.id, round, view.p_hat, view.v_hat, view.u, {}};
  for (const auto& e : view.owned_edges) m.edge_estimates.emplace(e.edge, e.p);
  return m;
}

/// Derivatives of agent i's estimates and of the edge observers it runs,
/// computed from its local view and this round's inbox alone.
inline AgentRates agent_rates(const FormationGraph& g, const AgentLocalView& view,
                              const std::vector<EstimateMessage>& inbox, const std::set<int>& pe_edges,
                              const EdgeGains& edge_gains, const DistributedGains& gains) {
  std::map<int, Vec> own;
  for (const auto& e : view.owned_edges) own.emplace(e.edge, e.p);
  const Vec c = fused_correction(g, view.id, view.p_hat, inbox, pe_edges, own, *view.bearings);

  AgentRates out;
  std::tie(out.dp, out.dv) = agent_estimate_rate(view.p_hat, view.v_hat, view.u, c, gains, view.leader_p);
  out.edge_rates.reserve(view.owned_edges.size());
  for (const auto& e : view.owned_edges) {
    const int j = g.edge(e.edge).to;
    const EstimateMessage* msg = nullptr;
    for (const auto& m : inbox)
      if (m.sender == j) msg = &m;
    if (!msg)
      throw StaleDataError(view.bearings->t, "edge " + edge_label(g.edge(e.edge)) + " owner has no input from agent " +
                                                 std::to_string(j + 1));
    out.edge_rates.push_back(edge_derivative(e, edge_gains, view.bearings->at(e.edge), msg->u - view.u));
  }
  return out;
}

}  // namespace bform
