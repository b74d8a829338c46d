#include "support.hpp"

#include "bform/network.hpp"
#include "bform/observer_centralized.hpp"
#include "bform/observer_decentralized.hpp"

#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

using namespace bform;

namespace {

MeasurementSet truth_measurement(const FormationGraph& g, double t) {
  const ReferenceSample r = paper_reference(t);
  return {t, bearings(r.p, g, t), 0, r.p.head(3), r.v.head(3)};
}

Scenario noiseless(const std::string& name) {
  Scenario sc = builtin_scenario(name);
  sc.noise.kind = NoiseKind::none;
  return sc;
}

}  // namespace

// --------------------------------------------------------------------------
// Centralized observer
// --------------------------------------------------------------------------

TEST(Centralized, OutputMatrixLayout) {
  const FormationGraph g = test::paper_graph();
  const auto s = bearings(paper_reference(0.0).p, g);
  const Mat C = output_matrix(s, g, 0);
  EXPECT_EQ(C.rows(), 12);
  EXPECT_EQ(C.cols(), 24);
  EXPECT_TRUE(C.rightCols(12).isZero());
  EXPECT_TRUE((C.leftCols(12) - bearing_laplacian(s, g)).block(0, 0, 3, 3).isApprox(Mat::Identity(3, 3)));
  EXPECT_TRUE((C.leftCols(12) - bearing_laplacian(s, g)).bottomRows(9).isZero());
}

TEST(Centralized, ImplicitOutputWithoutLeader) {
  const FormationGraph g = test::paper_graph();
  const ReferenceSample r = paper_reference(0.8);
  Vec x(24);
  x << r.p, r.v;
  EXPECT_LT((output_matrix(bearings(r.p, g), g, std::nullopt) * x).norm(), 1e-12);
}

TEST(Centralized, TrueStateIsEquilibrium) {
  const FormationGraph g = test::paper_graph();
  const CentralizedGains gains = CentralizedGains::scaled_identity(4, 3, 10, 10, 0.01, 1);
  const ReferenceSample r = paper_reference(0.3);
  const CentralizedObserverState x{r.p, r.v, gains.M0};
  const auto dx = centralized_derivative(x, gains, g, truth_measurement(g, 0.3), r.u);
  EXPECT_LT((dx.p - r.v).norm(), 1e-12);
  EXPECT_LT((dx.v - r.u).norm(), 1e-12);
}

TEST(Centralized, ExactStartStaysExact) {
  Scenario sc = noiseless("paper-centralized");
  sc.duration = 2.0;
  sc.initial_p_hat = paper_reference(0.0).p;
  sc.initial_v_hat = paper_reference(0.0).v;
  const RunResult res = Simulation(sc).run();
  ASSERT_FALSE(res.aborted) << res.abort_reason;
  for (const auto& rec : res.trace) {
    ASSERT_LT(rec.delta_p, 1e-10) << "t = " << rec.t;
    ASSERT_LT(rec.delta_v, 1e-10) << "t = " << rec.t;
  }
}

TEST(Centralized, StepKeepsRiccatiSymmetricPositive) {
  const FormationGraph g = test::paper_graph();
  const CentralizedGains gains = CentralizedGains::scaled_identity(4, 3, 10, 10, 0.01, 1);
  CentralizedObserverState x{Vec::Zero(12), Vec::Zero(12), gains.M0};
  for (int k = 0; k < 500; ++k) {
    const double t = k * 1e-3;
    x = observer_step(x, gains, g, truth_measurement(g, t), paper_reference(t).u, 1e-3);
    ASSERT_LT((x.M - x.M.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_GT(min_eigenvalue(x.M), 0.0);
  }
}

TEST(Centralized, ValidationAndConditioning) {
  CentralizedGains gains = CentralizedGains::scaled_identity(4, 3, 10, 10, 0.01, 1);
  EXPECT_NO_THROW(validate(gains, 4, 3));
  auto bad = gains;
  bad.kappa = 0.4;
  EXPECT_THROW(validate(bad, 4, 3), ValidationError);
  bad = gains;
  bad.Q(0, 0) = -1;
  EXPECT_THROW(validate(bad, 4, 3), ValidationError);
  EXPECT_THROW(validate(gains, 3, 3), ValidationError);

  CentralizedObserverState x{Vec::Zero(12), Vec::Zero(12), -Mat::Identity(24, 24)};
  EXPECT_THROW(condition_check(x, 1.0), SimulationAbort);
}

// --------------------------------------------------------------------------
// Edge observers
// --------------------------------------------------------------------------

TEST(EdgeObserver, StateCounts) {
  EXPECT_EQ(edge_observer_state_count(3), 6 + 21);
  EXPECT_EQ(edge_observer_state_count(2), 4 + 10);
  EXPECT_EQ(decentralized_state_count(2, 4, 3), 2 * 27 + 24);
  EXPECT_EQ(centralized_state_count(4, 3), 24 + 12 * 25);
  // Fixed PE edge count: the decentralized total grows by 2d per agent, the centralized one quadratically.
  for (int n = 4; n < 40; ++n) {
    EXPECT_EQ(decentralized_state_count(2, n + 1, 3) - decentralized_state_count(2, n, 3), 6);
    EXPECT_LT(decentralized_state_count(n - 1, n, 3), centralized_state_count(n, 3));
  }
}

TEST(EdgeObserver, ExactStartStaysExact) {
  // Relative motion along a fixed bearing: p_bar(t) = (1 + 0.5 t^2) g.
  const EdgeGains gains = EdgeGains::scaled_identity(3, 10, 10, 0.01, 100);
  Vec g(3);
  g << 2, -1, 2;
  g /= 3.0;
  EdgeObserverState x{0, g, Vec::Zero(3), gains.M0};
  const double dt = 1e-3;
  for (int k = 0; k < 5000; ++k) x = edge_observer_step(x, gains, g, g, k * dt, dt);
  const double t = 5.0;
  EXPECT_LT((x.p - (1 + 0.5 * t * t) * g).norm(), 1e-10);
  EXPECT_LT((x.v - t * g).norm(), 1e-10);
}

TEST(EdgeObserver, ConstantBearingGramianIsSingularAlongBearing) {
  const int d = 3;
  Vec g(3);
  g << 1, 2, -2;
  g.normalize();
  const Mat A = double_integrator_matrix(d), C = edge_output_matrix(g);
  Mat W = Mat::Zero(2 * d, 2 * d);
  const int steps = 2000;
  const double T = 2.0, h = T / steps;
  for (int k = 0; k <= steps; ++k) {
    const Mat Phi = (A * (k * h)).exp();
    W += ((k == 0 || k == steps) ? 0.5 : 1.0) * h * Phi.transpose() * C.transpose() * C * Phi;
  }
  EXPECT_EQ(numerical_rank(W), 2 * d - 2);
  Vec along_p = Vec::Zero(2 * d), along_v = Vec::Zero(2 * d);
  along_p.head(d) = g;
  along_v.tail(d) = g;
  EXPECT_LT((W * along_p).norm(), 1e-12);
  EXPECT_LT((W * along_v).norm(), 1e-12);
}

TEST(EdgeObserver, ConstantBearingLeavesAlongComponent) {
  const int d = 3;
  const EdgeGains gains = EdgeGains::scaled_identity(d, 10, 10, 0.01, 100);
  const Vec g = Vec::Unit(3, 0);
  Vec err_p(3), err_v(3);
  err_p << 0.5, 0.3, -0.2;
  err_v << 0.0, 0.1, 0.05;
  EdgeObserverState x{0, g + err_p, err_v, gains.M0};  // true p_bar = g, v_bar = 0
  const double dt = 1e-4;
  for (int k = 0; k < 100000; ++k) x = edge_observer_step(x, gains, g, Vec::Zero(3), k * dt, dt);
  const Vec e = x.p - g;
  const Mat P = projector(g);
  EXPECT_LT((P * e).norm() / (projector(g) * err_p).norm(), 1e-3);
  EXPECT_NEAR(g.dot(e), 0.5, 1e-9);
}

TEST(EdgeObserver, Validation) {
  EXPECT_NO_THROW(validate(EdgeGains::scaled_identity(3, 10, 10, 0.01, 100), 3));
  EXPECT_THROW(validate(EdgeGains::scaled_identity(3, 0.25, 10, 0.01, 100), 3), ValidationError);
  EXPECT_THROW(validate(EdgeGains::scaled_identity(3, 10, 10, 0.0, 100), 3), ValidationError);
  EXPECT_THROW(validate(EdgeGains::scaled_identity(2, 10, 10, 0.01, 100), 3), ValidationError);
}

// --------------------------------------------------------------------------
// Distributed observer and message flow
// --------------------------------------------------------------------------

TEST(Distributed, ExactEstimatesGiveZeroCorrection) {
  const FormationGraph g = test::paper_graph();
  const ReferenceSample r = paper_reference(0.6);
  const auto s = bearings(r.p, g, 0.6);
  std::vector<EstimateMessage> all;
  for (int i = 0; i < 4; ++i) all.push_back({i, 0, r.p.segment(3 * i, 3), r.v.segment(3 * i, 3), r.u.segment(3 * i, 3), {}});
  all[0].edge_estimates[0] = r.p.segment(3, 3) - r.p.head(3);
  all[0].edge_estimates[3] = r.p.segment(9, 3) - r.p.head(3);
  const Round round = deliver(all, g);
  for (int i = 0; i < 4; ++i) {
    const auto own = i == 0 ? all[0].edge_estimates : std::map<int, Vec>{};
    EXPECT_LT(fused_correction(g, i, r.p.segment(3 * i, 3), round.mailbox[i], {0, 3}, own, s).norm(), 1e-14);
  }
}

TEST(Distributed, TwoAgentLinearResidual) {
  const FormationGraph g = build_graph(2, {{1, 2}}, 3);
  Vec p(6), e(3);
  p << 0, 0, 0, 1, 1, 0;
  e << 0.2, -0.1, 0.4;
  const auto s = bearings(p, g);
  const Vec p1 = p.head(3), p2 = p.tail(3) + e;
  const std::map<int, Vec> edge{{0, Vec(p.tail(3) - p.head(3))}};
  EstimateMessage from1{0, 0, p1, Vec::Zero(3), Vec::Zero(3), edge}, from2{1, 0, p2, Vec::Zero(3), Vec::Zero(3), {}};
  const Vec c1 = fused_correction(g, 0, p1, {from2}, {0}, edge, s);
  const Vec c2 = fused_correction(g, 1, p2, {from1}, {0}, {}, s);
  EXPECT_TRUE(c1.isApprox(e, 1e-14));
  EXPECT_TRUE(c2.isApprox(-e, 1e-14));
  EXPECT_NEAR(c1.norm(), e.norm(), 1e-14);
}

TEST(Distributed, MissingNeighborMessageIsStale) {
  const FormationGraph g = test::paper_graph();
  const auto s = bearings(paper_reference(0.0).p, g);
  EXPECT_THROW(fused_correction(g, 1, Vec::Zero(3), {}, {0, 3}, {}, s), StaleDataError);
  EstimateMessage from0{0, 0, Vec::Zero(3), Vec::Zero(3), Vec::Zero(3), {}};
  EstimateMessage from2{2, 0, Vec::Ones(3), Vec::Zero(3), Vec::Zero(3), {}};
  // Agent 2 owns nothing; the estimate of edge (1,2) must come from agent 1.
  EXPECT_THROW(fused_correction(g, 1, Vec::Zero(3), {from0, from2}, {0, 3}, {}, s), StaleDataError);
}

TEST(Distributed, NonNeighborMessagesAreIgnored) {
  const FormationGraph g = test::paper_graph();
  Scenario sc = noiseless("paper-decentralized");
  Simulation sim(sc);
  const LoopState x = sim.initial_state();
  const Vec u = sim.inputs(0.0, x);
  const MeasurementSet meas = sim.measurements(0.0, x, NoiseDraw{});
  const auto out = sim.outgoing(x, u, meas, 0);
  Round round = deliver(out, g);
  const AgentLocalView view = sim.local_view(0, x, u, meas);
  const AgentRates base = agent_rates(g, view, round.mailbox[0], {0, 3}, sc.edge, sc.distributed);
  EstimateMessage stranger = out[2];
  stranger.p = Vec::Constant(3, 1e6);
  stranger.u = Vec::Constant(3, -1e6);
  round.mailbox[0].push_back(stranger);
  const AgentRates again = agent_rates(g, view, round.mailbox[0], {0, 3}, sc.edge, sc.distributed);
  EXPECT_EQ(base.dp, again.dp);
  EXPECT_EQ(base.dv, again.dv);
  ASSERT_EQ(base.edge_rates.size(), 2u);
  EXPECT_EQ(base.edge_rates[0].p, again.edge_rates[0].p);
  EXPECT_EQ(base.edge_rates[1].M, again.edge_rates[1].M);
}

TEST(Distributed, CascadeJacobianIsHurwitz) {
  const Scenario sc = noiseless("paper-decentralized");
  const Simulation sim(sc);
  const FormationGraph g = sim.graph();
  const double t = 0.5;
  const ReferenceSample r = paper_reference(t);
  LoopState x = sim.initial_state();
  x.p = r.p;
  x.v = r.v;
  x.dist = {r.p, r.v};
  for (auto& e : x.edges) {
    const Edge& ed = g.edge(e.edge);
    e.p = r.p.segment(3 * ed.to, 3) - r.p.segment(3 * ed.from, 3);
    e.v = r.v.segment(3 * ed.to, 3) - r.v.segment(3 * ed.from, 3);
  }
  auto rate = [&](const Vec& z) {
    LoopState y = x;
    y.dist = {z.head(12), z.tail(12)};
    const LoopState dy = sim.derivative(t, y, NoiseDraw{});
    Vec out(24);
    out << dy.dist.p, dy.dist.v;
    return out;
  };
  Vec z0(24);
  z0 << r.p, r.v;
  Mat J(24, 24);
  const double eps = 1e-6;
  for (int c = 0; c < 24; ++c) {
    Vec a = z0, b = z0;
    a(c) += eps;
    b(c) -= eps;
    J.col(c) = (rate(a) - rate(b)) / (2 * eps);
  }
  // Frozen-edge error dynamics: [[-k1 X, I], [-k2 X, 0]] with X = pseudo L_B + C1.
  const Mat X = pseudo_bearing_laplacian(g, {0, 3}, bearings(r.p, g, t)) + leader_selector(4, 3, 0);
  Mat expected = Mat::Zero(24, 24);
  expected.topLeftCorner(12, 12) = -sc.distributed.kappa_o1 * X;
  expected.topRightCorner(12, 12) = Mat::Identity(12, 12);
  expected.bottomLeftCorner(12, 12) = -sc.distributed.kappa_o2 * X;
  EXPECT_LT((J - expected).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(J.eigenvalues().real().maxCoeff(), 0.0);
}

TEST(Distributed, WithoutLeaderOnlyTranslationPersists) {
  const FormationGraph g = test::paper_graph();
  const DistributedGains gains{10, 5, LeaderGainForm::gained};
  const EdgeGains edge_gains = EdgeGains::scaled_identity(3, 10, 10, 0.01, 100);
  const std::set<int> pe{0, 3};
  std::mt19937_64 rng(17);
  const Vec dp0 = test::random_vector(rng, 12);

  auto f = [&](double t, const DistributedObserverState& s) {
    const ReferenceSample r = paper_reference(t);
    const auto snap = bearings(r.p, g, t);
    std::vector<AgentLocalView> views(4);
    std::vector<EstimateMessage> out;
    for (int i = 0; i < 4; ++i) {
      auto& v = views[i];
      v = {i, s.p.segment(3 * i, 3), s.v.segment(3 * i, 3), r.u.segment(3 * i, 3), {}, &snap, nullptr};
      for (int k : pe)
        if (g.edge(k).from == i)
          v.owned_edges.push_back({k, Vec(r.p.segment(3 * g.edge(k).to, 3) - r.p.segment(3 * i, 3)),
                                   Vec(r.v.segment(3 * g.edge(k).to, 3) - r.v.segment(3 * i, 3)), edge_gains.M0});
      out.push_back(compose_message(v, 0));
    }
    const Round round = deliver(out, g);
    DistributedObserverState ds{Vec(12), Vec(12)};
    for (int i = 0; i < 4; ++i) {
      const AgentRates a = agent_rates(g, views[i], round.mailbox[i], pe, edge_gains, gains);
      ds.p.segment(3 * i, 3) = a.dp;
      ds.v.segment(3 * i, 3) = a.dv;
    }
    return ds;
  };

  const ReferenceSample r0 = paper_reference(0.0);
  DistributedObserverState s{r0.p + dp0, r0.v};
  const double dt = 1e-3;
  for (int k = 0; k < 20000; ++k) s = rk4_step(f, k * dt, s, dt);
  const Vec delta = s.p - paper_reference(20.0).p;

  const Mat U = translation_basis(4, 3) / 2.0;  // orthonormal columns
  const Vec trans0 = U * (U.transpose() * dp0), trans = U * (U.transpose() * delta);
  EXPECT_LT((trans - trans0).norm(), 1e-9);
  EXPECT_GT(trans.norm(), 0.1);
  EXPECT_LT((delta - trans).norm(), 1e-4 * (dp0 - trans0).norm());
}

TEST(Distributed, ExactStartTracksTruth) {
  Scenario sc = noiseless("paper-decentralized");
  sc.duration = 2.0;
  sc.initial_p_hat = paper_reference(0.0).p;
  sc.initial_v_hat = paper_reference(0.0).v;
  const RunResult res = Simulation(sc).run();
  ASSERT_FALSE(res.aborted) << res.abort_reason;
  for (const auto& rec : res.trace) {
    ASSERT_LT(rec.delta_p, 1e-9) << "t = " << rec.t;
    ASSERT_LT(rec.delta_v, 1e-9) << "t = " << rec.t;
  }
}

TEST(Distributed, LeaderGainForms) {
  const Vec p_hat = Vec::Zero(3), v_hat = Vec::Zero(3), u = Vec::Zero(3), c = Vec::Zero(3), leader = Vec::Ones(3);
  auto [dp_g, dv_g] = agent_estimate_rate(p_hat, v_hat, u, c, {10, 5, LeaderGainForm::gained}, &leader);
  auto [dp_u, dv_u] = agent_estimate_rate(p_hat, v_hat, u, c, {10, 5, LeaderGainForm::unit}, &leader);
  EXPECT_TRUE(dp_g.isApprox(10 * leader));
  EXPECT_TRUE(dv_g.isApprox(5 * leader));
  EXPECT_TRUE(dp_u.isApprox(leader));
  EXPECT_TRUE(dv_u.isApprox(leader));
  EXPECT_THROW(validate(DistributedGains{0, 5, LeaderGainForm::gained}), ValidationError);
}

// --------------------------------------------------------------------------
// Network
// --------------------------------------------------------------------------

namespace {

std::vector<EstimateMessage> stamped(int n, long round) {
  std::vector<EstimateMessage> out;
  for (int i = 0; i < n; ++i) out.push_back({i, round, Vec::Zero(3), Vec::Zero(3), Vec::Zero(3), {}});
  return out;
}

std::set<int> senders(const std::vector<EstimateMessage>& inbox) {
  std::set<int> s;
  for (const auto& m : inbox) s.insert(m.sender);
  return s;
}

}  // namespace

TEST(NetworkTest, ZeroDelayNeighborSets) {
  const FormationGraph g = test::paper_graph();
  const Round r = deliver(stamped(4, 0), g);
  EXPECT_EQ(senders(r.mailbox[0]), (std::set<int>{1, 3}));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(r.mailbox[i].size(), 2u);

  const FormationGraph k3 = build_graph(3, {{1, 2}, {2, 3}, {1, 3}}, 3);
  Network net(k3, 0);
  const Round rk = net.exchange(stamped(3, 0));
  for (const auto& inbox : rk.mailbox) EXPECT_EQ(inbox.size(), 2u);
}

TEST(NetworkTest, DelayedRoundsAreFifo) {
  const FormationGraph g = test::paper_graph();
  Network net(g, 2);
  for (long r = 0; r < 8; ++r) {
    const Round got = net.exchange(stamped(4, r));
    EXPECT_EQ(got.index, r);
    for (const auto& inbox : got.mailbox) {
      EXPECT_EQ(inbox.size(), 2u);
      for (const auto& m : inbox) EXPECT_EQ(m.round, std::max(0L, r - 2));
    }
  }
}

TEST(NetworkTest, RejectsPartialRounds) {
  const FormationGraph g = test::paper_graph();
  Network net(g, 0);
  EXPECT_THROW(net.exchange(stamped(3, 0)), ValidationError);
  EXPECT_THROW(Network(g, -1), ValidationError);
}
