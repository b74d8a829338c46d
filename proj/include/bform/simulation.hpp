#pragma once

#include "bform/common.hpp"
#include "bform/controller.hpp"
#include "bform/dynamics.hpp"
#include "bform/formation_analysis.hpp"
#include "bform/graph.hpp"
#include "bform/network.hpp"
#include "bform/observer_centralized.hpp"
#include "bform/observer_decentralized.hpp"
#include "bform/scenario.hpp"
#include "bform/sensing.hpp"
#include "bform/trace.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bform {

/// Largest h * rho a substep may take; RK4 is stable on the negative real axis
/// up to about 2.78.
inline constexpr double kRk4StableStep = 2.0;

/// Plant, every active observer, and nothing else: the joint ODE state.
/// Unused blocks stay empty.
struct LoopState {
  Vec p;
  Vec v;
  CentralizedObserverState central;
  std::vector<EdgeObserverState> edges;
  DistributedObserverState dist;

  friend LoopState operator+(const LoopState& a, const LoopState& b) {
    LoopState out{a.p + b.p, a.v + b.v, a.central + b.central, {}, a.dist + b.dist};
    out.edges.reserve(a.edges.size());
    for (std::size_t k = 0; k < a.edges.size(); ++k) out.edges.push_back(a.edges[k] + b.edges[k]);
    return out;
  }
  friend LoopState operator*(double h, const LoopState& a) {
    LoopState out{h * a.p, h * a.v, h * a.central, {}, h * a.dist};
    out.edges.reserve(a.edges.size());
    for (const auto& e : a.edges) out.edges.push_back(h * e);
    return out;
  }
};

struct Metrics {
  double initial_delta_p = 0, initial_delta_v = 0, final_delta_p = 0, final_delta_v = 0;
  double initial_track_p = 0, initial_track_v = 0, final_track_p = 0, final_track_v = 0;
  ExponentialFit rate_delta_p, rate_delta_v, rate_track_p, rate_track_v;
  std::vector<double> final_edge_error;  ///< per PE edge, full relative-state norm
  double min_edge_distance = 0;
  double max_cond = 0;
  std::optional<PEReport> pe;
  double wall_seconds = 0;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  Metrics metrics;
  std::vector<std::string> warnings;
  bool aborted = false;
  double abort_time = 0;
  std::string abort_reason;
};

/// Checks a scenario before any stepping. Throws ValidationError on hard
/// failures; returns advisory warnings.
inline std::vector<std::string> validate_scenario(const Scenario& sc) {
  std::vector<std::string> warnings;
  const FormationGraph g = sc.graph();
  if (!(sc.dt > 0)) throw ValidationError("dt must be positive");
  if (!(sc.duration >= sc.dt)) throw ValidationError("duration must be at least one step");
  if (sc.leader < 0 || sc.leader >= sc.n) throw ValidationError("leader index outside 1..n");
  if (!is_connected(g)) throw ValidationError("interaction graph is disconnected");
  if (sc.network_delay < 0) throw ValidationError("network delay must be non-negative");
  BearingSensor(sc.noise, g.edge_count(), sc.d);  // rejects unsupported noise/dimension pairs

  const auto ref = sc.make_reference();
  if (ref->agents() != sc.n || ref->dimension() != sc.d)
    throw ValidationError("reference '" + to_string(sc.reference) + "' is defined for " +
                          std::to_string(ref->agents()) + " agents in " + std::to_string(ref->dimension()) +
                          "D, scenario has " + std::to_string(sc.n) + " in " + std::to_string(sc.d) + "D");
  if (sc.initial_p_hat.size() != sc.n * sc.d || sc.initial_v_hat.size() != sc.n * sc.d)
    throw ValidationError("initial estimates must cover every agent");

  if (sc.uses_centralized()) validate(sc.central, sc.n, sc.d);
  const auto pe = sc.pe_edge_indices();
  if (sc.uses_decentralized()) {
    validate(sc.edge, sc.d);
    validate(sc.distributed);
    const Vec p0 = sc.initial_p.value_or(ref->sample(0.0).p);
    const Mat M = pseudo_bearing_laplacian(g, pe, bearings(p0, g)) + leader_selector(sc.n, sc.d, sc.leader);
    Eigen::JacobiSVD<Mat> svd(M);
    const double smin = svd.singularValues().minCoeff();
    if (!(smin > 1e-9))
      throw ValidationError("pseudo-bearing Laplacian plus leader block is singular (sigma_min = " +
                            format_double(smin) + "); declare more PE edges");
  }
  if (sc.closes_loop()) validate(sc.controller, sc.n);

  const int m = g.edge_count();
  const bool below_ibr = !sc.ibr_edge_threshold || m < *sc.ibr_edge_threshold;
  if (m >= sc.n - 1 && below_ibr) {
    const int bound = lemma2_bound(g, std::nullopt);
    if (static_cast<int>(pe.size()) < bound)
      warnings.push_back("declared PE edge count " + std::to_string(pe.size()) + " is below the necessary bound " +
                         std::to_string(bound) + " for a BPE formation");
  }
  return warnings;
}

class Simulation {
public:
  explicit Simulation(Scenario sc)
      : sc_(std::move(sc)),
        warnings_(validate_scenario(sc_)),
        g_(sc_.graph()),
        ref_(sc_.make_reference()),
        sensor_(sc_.noise, g_.edge_count(), sc_.d),
        pe_(sc_.pe_edge_indices()) {
    for (int k : pe_) pe_list_.push_back(k);
    if (sc_.uses_centralized() && sc_.central.Q.size() > 0)
      central_q_ = max_eigenvalue(symmetrized(sc_.central.Q));
    if (sc_.uses_decentralized() && sc_.edge.Q.size() > 0) edge_q_ = max_eigenvalue(symmetrized(sc_.edge.Q));
  }

  const Scenario& scenario() const { return sc_; }
  const FormationGraph& graph() const { return g_; }
  const std::vector<int>& pe_edges() const { return pe_list_; }

  LoopState initial_state() const {
    const ReferenceSample r0 = ref_->sample(0.0);
    LoopState x;
    x.p = sc_.initial_p.value_or(r0.p);
    x.v = sc_.initial_v.value_or(r0.v);
    x.central = {Vec(0), Vec(0), Mat(0, 0)};
    x.dist = {Vec(0), Vec(0)};
    if (sc_.mode == Mode::truth_feedback_control) return x;
    if (sc_.uses_centralized()) x.central = {sc_.initial_p_hat, sc_.initial_v_hat, sc_.central.M0};
    if (sc_.uses_decentralized()) {
      x.dist = {sc_.initial_p_hat, sc_.initial_v_hat};
      // Edge observers start from the difference of their endpoints' estimates.
      for (int k : pe_list_) {
        const auto& e = g_.edge(k);
        x.edges.push_back({k, sc_.initial_p_hat.segment(e.to * sc_.d, sc_.d) - sc_.initial_p_hat.segment(e.from * sc_.d, sc_.d),
                           sc_.initial_v_hat.segment(e.to * sc_.d, sc_.d) - sc_.initial_v_hat.segment(e.from * sc_.d, sc_.d),
                           sc_.edge.M0});
      }
    }
    return x;
  }

  /// Estimates the controller and the trace report: the active observer's,
  /// or the true state when no observer runs.
  std::pair<Vec, Vec> estimates(const LoopState& x) const {
    if (sc_.uses_centralized()) return {x.central.p, x.central.v};
    if (sc_.uses_decentralized()) return {x.dist.p, x.dist.v};
    return {x.p, x.v};
  }

  /// Applied accelerations: the reference feedforward in observer-only modes,
  /// the tracking law otherwise.
  Vec inputs(double t, const LoopState& x) const {
    const ReferenceSample ref = ref_->sample(t);
    if (!sc_.closes_loop()) return ref.u;
    const auto [ph, vh] = estimates(x);
    const int d = sc_.d;
    Vec u(sc_.n * d);
    for (int i = 0; i < sc_.n; ++i)
      u.segment(i * d, d) = control(i, ph.segment(i * d, d), vh.segment(i * d, d), ref, sc_.controller);
    return u;
  }

  MeasurementSet measurements(double t, const LoopState& x, const NoiseDraw& noise) const {
    BearingSnapshot truth;
    try {
      truth = bearings(x.p, g_, t);
    } catch (const DegenerateBearingError& e) {
      throw SimulationAbort(t, e.what());
    }
    const int d = sc_.d;
    const AgentState leader{x.p.segment(sc_.leader * d, d), x.v.segment(sc_.leader * d, d)};
    return BearingSensor::measure_with(truth, leader, sc_.leader, noise);
  }

  AgentLocalView local_view(int i, const LoopState& x, const Vec& u, const MeasurementSet& meas) const {
    const int d = sc_.d;
    AgentLocalView view;
    view.id = i;
    view.p_hat = x.dist.p.segment(i * d, d);
    view.v_hat = x.dist.v.segment(i * d, d);
    view.u = u.segment(i * d, d);
    for (const auto& e : x.edges)
      if (g_.edge(e.edge).from == i) view.owned_edges.push_back(e);
    view.bearings = &meas.bearings;
    view.leader_p = (i == sc_.leader) ? &meas.leader_p : nullptr;
    return view;
  }

  std::vector<EstimateMessage> outgoing(const LoopState& x, const Vec& u, const MeasurementSet& meas,
                                        long round) const {
    std::vector<EstimateMessage> out;
    out.reserve(sc_.n);
    for (int i = 0; i < sc_.n; ++i) out.push_back(compose_message(local_view(i, x, u, meas), round));
    return out;
  }

  /// Right-hand side of the joint ODE. `held` replaces stage-fresh messages
  /// when the network runs with delay.
  LoopState derivative(double t, const LoopState& x, const NoiseDraw& noise, const Round* held = nullptr) const {
    const MeasurementSet meas = measurements(t, x, noise);
    const Vec u = inputs(t, x);
    if (!u.allFinite()) throw SimulationAbort(t, "non-finite acceleration input");

    LoopState dx;
    dx.p = x.v;
    dx.v = u;
    dx.central = {Vec(0), Vec(0), Mat(0, 0)};
    dx.dist = {Vec(0), Vec(0)};
    if (sc_.uses_centralized() && sc_.mode != Mode::truth_feedback_control)
      dx.central = centralized_derivative(x.central, sc_.central, g_, meas, u);
    if (sc_.uses_decentralized()) {
      const Round fresh = held ? Round{} : deliver(outgoing(x, u, meas, 0), g_);
      const Round& round = held ? *held : fresh;
      const int d = sc_.d;
      dx.dist = {Vec(sc_.n * d), Vec(sc_.n * d)};
      dx.edges.resize(x.edges.size());
      for (int i = 0; i < sc_.n; ++i) {
        const AgentLocalView view = local_view(i, x, u, meas);
        AgentRates rates = agent_rates(g_, view, round.mailbox[i], pe_, sc_.edge, sc_.distributed);
        dx.dist.p.segment(i * d, d) = rates.dp;
        dx.dist.v.segment(i * d, d) = rates.dv;
        for (auto& er : rates.edge_rates)
          for (std::size_t slot = 0; slot < x.edges.size(); ++slot)
            if (x.edges[slot].edge == er.edge) dx.edges[slot] = std::move(er);
      }
    }
    return dx;
  }

  RunResult run() {
    const auto wall0 = std::chrono::steady_clock::now();
    RunResult res;
    res.warnings = warnings_;
    LoopState x = initial_state();
    const long steps = std::lround(sc_.duration / sc_.dt);
    Network net(g_, sc_.network_delay);
    try {
      res.trace.push_back(record(0.0, x));
      for (long s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) * sc_.dt;
        const NoiseDraw noise = sensor_.draw();
        std::optional<Round> held;
        if (sc_.network_delay > 0 && sc_.uses_decentralized()) {
          const Vec u = inputs(t, x);
          held = net.exchange(outgoing(x, u, measurements(t, x, noise), s));
        }
        auto f = [&](double tau, const LoopState& y) { return derivative(tau, y, noise, held ? &*held : nullptr); };
        const int sub = substeps(x);
        const double h = sc_.dt / sub;
        for (int j = 0; j < sub; ++j) {
          x = rk4_step(f, t + j * h, x, h);
          post_step(x, t + (j + 1) * h);
        }
        const double t1 = static_cast<double>(s + 1) * sc_.dt;
        res.trace.push_back(record(t1, x));
      }
    } catch (const SimulationAbort& e) {
      res.aborted = true;
      res.abort_time = e.time();
      res.abort_reason = e.what();
    }
    res.metrics = summarize(res);
    res.metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return res;
  }

  /// Trace row for state x at time t.
  TraceRecord record(double t, const LoopState& x) const {
    const int d = sc_.d;
    TraceRecord r;
    r.t = t;
    r.p = x.p;
    r.v = x.v;
    std::tie(r.p_hat, r.v_hat) = estimates(x);
    r.u = inputs(t, x);
    const ReferenceSample ref = ref_->sample(t);
    r.delta_p = (r.p_hat - x.p).norm();
    r.delta_v = (r.v_hat - x.v).norm();
    r.track_p = (x.p - ref.p).norm();
    r.track_v = (x.v - ref.v).norm();
    r.min_edge_distance = min_edge_distance(x.p, g_);
    if (!(r.min_edge_distance > kCollisionTol))
      throw SimulationAbort(t, "agents collided: minimum edge distance " + format_double(r.min_edge_distance));
    if (sc_.uses_centralized() && x.central.M.size() > 0) {
      Eigen::SelfAdjointEigenSolver<Mat> es(x.central.M, Eigen::EigenvaluesOnly);
      r.lambda_min = es.eigenvalues()(0);
      r.cond = es.eigenvalues()(es.eigenvalues().size() - 1) / r.lambda_min;
      Vec delta(2 * sc_.n * d);
      delta << x.central.p - x.p, x.central.v - x.v;
      r.lyapunov = riccati_lyapunov(delta, x.central.M);
    } else if (!x.edges.empty()) {
      r.lambda_min = std::numeric_limits<double>::infinity();
      r.cond = 0.0;
      for (const auto& e : x.edges) {
        Eigen::SelfAdjointEigenSolver<Mat> es(e.M, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(es.eigenvalues().size() - 1);
        r.lambda_min = std::min(r.lambda_min, lo);
        r.cond = std::max(r.cond, hi / lo);
        const auto& edge = g_.edge(e.edge);
        Vec delta(2 * d);
        delta << e.p - (x.p.segment(edge.to * d, d) - x.p.segment(edge.from * d, d)),
            e.v - (x.v.segment(edge.to * d, d) - x.v.segment(edge.from * d, d));
        r.edge_dp.push_back(delta.head(d).norm());
        r.edge_dv.push_back(delta.tail(d).norm());
        r.lyapunov += riccati_lyapunov(delta, e.M);
      }
    }
    return r;
  }

  void write_trace_csv(std::ostream& out, const RunResult& res) const {
    std::vector<Edge> pe;
    if (sc_.uses_decentralized())
      for (int k : pe_list_) pe.push_back(g_.edge(k));
    write_trace(out, res.trace, sc_.n, sc_.d, pe);
  }

  nlohmann::json metrics_json(const RunResult& res) const {
    const Metrics& m = res.metrics;
    auto fit = [](const ExponentialFit& f) {
      return nlohmann::json{{"slope", f.slope}, {"r2", f.r2}, {"samples", f.samples}};
    };
    nlohmann::json j;
    j["scenario"] = sc_.name;
    j["mode"] = to_string(sc_.mode);
    j["steps"] = res.trace.empty() ? 0 : res.trace.size() - 1;
    j["aborted"] = res.aborted;
    if (res.aborted) j["abort"] = {{"time", res.abort_time}, {"reason", res.abort_reason}};
    j["warnings"] = res.warnings;
    j["errors"] = {{"initial_delta_p", m.initial_delta_p}, {"initial_delta_v", m.initial_delta_v},
                   {"final_delta_p", m.final_delta_p},     {"final_delta_v", m.final_delta_v},
                   {"initial_track_p", m.initial_track_p}, {"initial_track_v", m.initial_track_v},
                   {"final_track_p", m.final_track_p},     {"final_track_v", m.final_track_v}};
    j["rates"] = {{"delta_p", fit(m.rate_delta_p)},
                  {"delta_v", fit(m.rate_delta_v)},
                  {"track_p", fit(m.rate_track_p)},
                  {"track_v", fit(m.rate_track_v)}};
    nlohmann::json edges = nlohmann::json::array();
    if (sc_.uses_decentralized())
      for (std::size_t k = 0; k < pe_list_.size() && k < m.final_edge_error.size(); ++k)
        edges.push_back({{"edge", edge_label(g_.edge(pe_list_[k]))}, {"final_error", m.final_edge_error[k]}});
    j["edge_observers"] = edges;
    j["min_edge_distance"] = m.min_edge_distance;
    j["max_condition_number"] = m.max_cond;
    if (m.pe) {
      nlohmann::json levels = nlohmann::json::array();
      for (int k = 0; k < g_.edge_count(); ++k)
        levels.push_back({{"edge", edge_label(g_.edge(k))}, {"mu", m.pe->edge_levels[k]}});
      nlohmann::json verified = nlohmann::json::array();
      for (int k : m.pe->pe_edges) verified.push_back(edge_label(g_.edge(k)));
      j["pe_report"] = {{"window", m.pe->window},         {"threshold", m.pe->threshold},
                        {"edge_levels", levels},          {"formation_mu", m.pe->formation_level},
                        {"pe_edges", verified},           {"connected", m.pe->connected},
                        {"bpe", m.pe->bpe},               {"reason", m.pe->reason}};
    }
    j["wall_seconds"] = m.wall_seconds;
    return j;
  }

private:
  /// RK4 substeps needed to keep h * rho inside the real-axis stability
  /// interval, where rho bounds the stiffest observer mode. Large M_k(0)
  /// makes the first few hundred milliseconds far stiffer than the plant.
  int substeps(const LoopState& x) const {
    auto lmax = [](const Mat& m) {
      return Eigen::SelfAdjointEigenSolver<Mat>(m, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    };
    double rho = 0.0;
    if (x.central.M.size() > 0) {
      int deg = 0;
      for (int i = 0; i < sc_.n; ++i) deg = std::max(deg, static_cast<int>(g_.neighbors(i).size()));
      const double c2 = std::pow(2.0 * deg + 1.0, 2);
      rho = std::max(sc_.central.kappa, 2.0) * lmax(x.central.M) * central_q_ * c2;
    }
    for (const auto& e : x.edges) rho = std::max(rho, std::max(sc_.edge.kappa, 2.0) * lmax(e.M) * edge_q_);
    const double need = std::ceil(sc_.dt * rho / kRk4StableStep);
    return need > 1.0 ? static_cast<int>(std::min(need, 1e4)) : 1;
  }

  void post_step(LoopState& x, double t) const {
    if (!x.p.allFinite() || !x.v.allFinite()) throw SimulationAbort(t, "non-finite agent state");
    if (x.central.M.size() > 0) condition_check(x.central, t);
    for (auto& e : x.edges) condition_check(e, t);
    if (!x.dist.p.allFinite() || !x.dist.v.allFinite()) throw SimulationAbort(t, "non-finite distributed estimate");
  }

  Metrics summarize(RunResult& res) const {
    Metrics m;
    if (res.trace.empty()) return m;
    const auto& first = res.trace.front();
    const auto& last = res.trace.back();
    m.initial_delta_p = first.delta_p, m.initial_delta_v = first.delta_v;
    m.final_delta_p = last.delta_p, m.final_delta_v = last.delta_v;
    m.initial_track_p = first.track_p, m.initial_track_v = first.track_v;
    m.final_track_p = last.track_p, m.final_track_v = last.track_v;
    for (std::size_t k = 0; k < last.edge_dp.size(); ++k) m.final_edge_error.push_back(std::hypot(last.edge_dp[k], last.edge_dv[k]));

    std::vector<double> t, dp, dv, tp, tv;
    m.min_edge_distance = std::numeric_limits<double>::infinity();
    for (const auto& r : res.trace) {
      t.push_back(r.t), dp.push_back(r.delta_p), dv.push_back(r.delta_v);
      tp.push_back(r.track_p), tv.push_back(r.track_v);
      m.min_edge_distance = std::min(m.min_edge_distance, r.min_edge_distance);
      m.max_cond = std::max(m.max_cond, r.cond);
    }
    const double t0 = 0.1 * last.t, t1 = last.t;
    m.rate_delta_p = fit_exponential(t, dp, t0, t1);
    m.rate_delta_v = fit_exponential(t, dv, t0, t1);
    m.rate_track_p = fit_exponential(t, tp, t0, t1);
    m.rate_track_v = fit_exponential(t, tv, t0, t1);

    if (last.t >= sc_.pe_window + sc_.dt) {
      std::vector<BearingSnapshot> snaps;
      snaps.reserve(res.trace.size());
      for (const auto& r : res.trace) snaps.push_back(bearings(r.p, g_, r.t));
      m.pe = bpe_check(snaps, g_, sc_.pe_window, sc_.pe_threshold);
      std::set<int> verified(m.pe->pe_edges.begin(), m.pe->pe_edges.end());
      if (!pe_.empty() && verified != pe_) {
        std::string declared, found;
        for (int k : pe_) declared += " " + edge_label(g_.edge(k));
        for (int k : verified) found += " " + edge_label(g_.edge(k));
        res.warnings.push_back("declared PE edges {" + declared + " } differ from the verified set {" + found + " }");
      }
      if (!m.pe->bpe) res.warnings.push_back("formation is not BPE over the run: " + m.pe->reason);
    }
    return m;
  }

  Scenario sc_;
  std::vector<std::string> warnings_;
  FormationGraph g_;
  std::unique_ptr<ReferenceTrajectory> ref_;
  BearingSensor sensor_;
  std::set<int> pe_;
  std::vector<int> pe_list_;
  double central_q_ = 0.0;
  double edge_q_ = 0.0;
};

inline RunResult run(const Scenario& sc) { return Simulation(sc).run(); }

}  // namespace bform
