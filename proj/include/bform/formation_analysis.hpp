#pragma once

#include "bform/common.hpp"
#include "bform/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace bform {

inline constexpr double kCollisionTol = 1e-6;
inline constexpr double kDefaultPeThreshold = 1e-3;

/// I - y y^T for a unit vector y.
inline Mat projector(const Vec& y) {
  const double norm = y.norm();
  if (std::abs(norm - 1.0) > 1e-9)
    throw ValidationError("projector needs a unit vector, got norm " + std::to_string(norm));
  return Mat::Identity(y.size(), y.size()) - y * y.transpose();
}

/// Unit bearings of every edge at one instant, keyed by edge index. Each is
/// p_to - p_from normalized, following the graph's stored orientation.
struct BearingSnapshot {
  double t = 0.0;
  std::map<int, Vec> bearings;

  const Vec& at(int k) const {
    auto it = bearings.find(k);
    if (it == bearings.end())
      throw ValidationError("bearing snapshot has no entry for edge index " + std::to_string(k));
    return it->second;
  }

  /// Bearing of edge k as seen from `agent`: g_ij when agent is the initial
  /// node, g_ji = -g_ij otherwise.
  Vec seen_from(const FormationGraph& g, int k, int agent) const {
    return g.edge(k).from == agent ? at(k) : Vec(-at(k));
  }
};

/// Slice of a stacked nd vector belonging to agent i.
inline auto agent_block(const Vec& stacked, int i, int d) { return stacked.segment(i * d, d); }

inline BearingSnapshot bearings(const Vec& positions, const FormationGraph& g, double t = 0.0,
                                double collision_tol = kCollisionTol) {
  const int d = g.dimension();
  BearingSnapshot s;
  s.t = t;
  for (int k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    Vec rel = positions.segment(e.to * d, d) - positions.segment(e.from * d, d);
    const double len = rel.norm();
    if (!(len > collision_tol))
      throw DegenerateBearingError(k, "edge " + edge_label(e) + " has coincident endpoints (|p_ij| = " +
                                          std::to_string(len) + ")");
    s.bearings.emplace(k, rel / len);
  }
  return s;
}

/// Smallest inter-agent distance over the edges of g.
inline double min_edge_distance(const Vec& positions, const FormationGraph& g) {
  const int d = g.dimension();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : g.edges())
    best = std::min(best, (positions.segment(e.to * d, d) - positions.segment(e.from * d, d)).norm());
  return best;
}

/// H_bar^T diag(blocks) H_bar assembled block-wise; blocks[k] is d x d.
inline Mat assemble_edge_laplacian(const FormationGraph& g, const std::vector<Mat>& blocks) {
  const int d = g.dimension();
  Mat L = Mat::Zero(g.vertex_count() * d, g.vertex_count() * d);
  for (int k = 0; k < g.edge_count(); ++k) {
    const int i = g.edge(k).from, j = g.edge(k).to;
    const Mat& s = blocks[k];
    L.block(i * d, i * d, d, d) += s;
    L.block(j * d, j * d, d, d) += s;
    L.block(i * d, j * d, d, d) -= s;
    L.block(j * d, i * d, d, d) -= s;
  }
  return L;
}

inline Mat bearing_laplacian(const BearingSnapshot& s, const FormationGraph& g) {
  std::vector<Mat> blocks;
  blocks.reserve(g.edge_count());
  for (int k = 0; k < g.edge_count(); ++k) blocks.push_back(projector(s.at(k)));
  return assemble_edge_laplacian(g, blocks);
}

/// Bearing Laplacian with identity blocks on PE edges. Only non-PE entries of
/// the snapshot are read.
inline Mat pseudo_bearing_laplacian(const FormationGraph& g, const std::set<int>& pe_edges,
                                    const BearingSnapshot& s) {
  for (int k : pe_edges)
    if (k < 0 || k >= g.edge_count())
      throw ValidationError("PE edge index " + std::to_string(k) + " is not an edge of the graph");
  const int d = g.dimension();
  std::vector<Mat> blocks;
  blocks.reserve(g.edge_count());
  for (int k = 0; k < g.edge_count(); ++k)
    blocks.push_back(pe_edges.count(k) ? Mat(Mat::Identity(d, d)) : projector(s.at(k)));
  return assemble_edge_laplacian(g, blocks);
}

/// C_1: identity on the leader's diagonal block, zero elsewhere (nd x nd).
inline Mat leader_selector(int n, int d, int leader) {
  Mat c = Mat::Zero(n * d, n * d);
  c.block(leader * d, leader * d, d, d).setIdentity();
  return c;
}

namespace detail {

inline double uniform_step(const std::vector<double>& times) {
  if (times.size() < 2) throw ValidationError("excitation analysis needs at least two samples");
  const double dt = times[1] - times[0];
  if (!(dt > 0)) throw ValidationError("sample times must be strictly increasing");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (std::abs((times[k] - times[k - 1]) - dt) > 1e-6 * dt + 1e-12)
      throw ValidationError("samples are not uniformly spaced");
  return dt;
}

inline std::size_t window_samples(double T, double dt, std::size_t n_samples) {
  if (!(T > 0)) throw ValidationError("excitation window must be positive");
  const auto w = static_cast<std::size_t>(std::llround(T / dt));
  if (w < 1 || w > n_samples - 1)
    throw ValidationError("window T = " + std::to_string(T) + " s is longer than the signal (" +
                          std::to_string(dt * static_cast<double>(n_samples - 1)) + " s)");
  return w;
}

/// Cumulative trapezoid integrals: out[k] = integral from t_0 to t_k.
inline std::vector<Mat> cumulative_trapezoid(const std::vector<Mat>& samples, double dt) {
  std::vector<Mat> out;
  out.reserve(samples.size());
  out.push_back(Mat::Zero(samples[0].rows(), samples[0].cols()));
  for (std::size_t k = 1; k < samples.size(); ++k)
    out.push_back(out.back() + 0.5 * dt * (samples[k - 1] + samples[k]));
  return out;
}

}  // namespace detail

/// Minimum over all windows [t, t+T] of lambda_min((1/T) * integral of the
/// signal). Windows slide by one sample; quadrature is trapezoidal.
inline double pe_level(const std::vector<Mat>& samples, const std::vector<double>& times, double T) {
  if (samples.size() != times.size()) throw ValidationError("sample/time count mismatch");
  const double dt = detail::uniform_step(times);
  const std::size_t w = detail::window_samples(T, dt, samples.size());
  const auto cum = detail::cumulative_trapezoid(samples, dt);
  const double span = dt * static_cast<double>(w);
  double mu = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + w < samples.size(); ++s)
    mu = std::min(mu, min_eigenvalue(symmetrized((cum[s + w] - cum[s]) / span)));
  return std::max(mu, 0.0);
}

struct PEReport {
  double window = 0.0;
  double threshold = kDefaultPeThreshold;
  std::vector<double> edge_levels;  ///< mu_k per edge, from the edge's projector
  double formation_level = 0.0;     ///< min over windows of the largest mu with avg(L_B) >= mu L
  std::vector<int> pe_edges;
  bool connected = false;
  bool bpe = false;
  std::string reason;
};

/// Formation-level excitation of one window: the smallest generalized
/// eigenvalue of (W, L) on the orthogonal complement of the translations.
/// `basis` spans that complement (columns orthonormal).
inline double formation_window_level(const Mat& window_avg, const Mat& L, const Mat& basis) {
  const Mat Lr = basis.transpose() * L * basis;
  const Mat Wr = symmetrized(basis.transpose() * window_avg * basis);
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(Wr, symmetrized(Lr), Eigen::EigenvaluesOnly);
  return ges.eigenvalues()(0);
}

/// Orthonormal basis of range(L); for connected graphs that is the complement
/// of Span(1 kron I_d).
inline Mat laplacian_range_basis(const Mat& L) {
  Eigen::SelfAdjointEigenSolver<Mat> es(L);
  const double cut = 1e-9 * std::max(1.0, es.eigenvalues().maxCoeff());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > cut) keep.push_back(i);
  Mat basis(L.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) basis.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]);
  return basis;
}

/// Verifies bearing persistence of excitation over a sampled bearing trace.
inline PEReport bpe_check(const std::vector<BearingSnapshot>& trace, const FormationGraph& g, double T,
                          double threshold = kDefaultPeThreshold) {
  PEReport rep;
  rep.window = T;
  rep.threshold = threshold;
  rep.connected = is_connected(g);

  std::vector<double> times;
  times.reserve(trace.size());
  for (const auto& s : trace) times.push_back(s.t);
  const double dt = detail::uniform_step(times);
  const std::size_t w = detail::window_samples(T, dt, trace.size());
  const double span = dt * static_cast<double>(w);

  const int m = g.edge_count();
  std::vector<std::vector<Mat>> cum(m);
  for (int k = 0; k < m; ++k) {
    std::vector<Mat> proj;
    proj.reserve(trace.size());
    for (const auto& s : trace) proj.push_back(projector(s.at(k)));
    cum[k] = detail::cumulative_trapezoid(proj, dt);
  }

  rep.edge_levels.assign(m, std::numeric_limits<double>::infinity());
  const Mat L = laplacian(g);
  const Mat basis = laplacian_range_basis(L);
  double formation = std::numeric_limits<double>::infinity();
  std::vector<Mat> blocks(m);
  for (std::size_t s = 0; s + w < trace.size(); ++s) {
    for (int k = 0; k < m; ++k) {
      blocks[k] = symmetrized((cum[k][s + w] - cum[k][s]) / span);
      rep.edge_levels[k] = std::min(rep.edge_levels[k], min_eigenvalue(blocks[k]));
    }
    if (rep.connected)
      formation = std::min(formation, formation_window_level(assemble_edge_laplacian(g, blocks), L, basis));
  }
  for (int k = 0; k < m; ++k) {
    rep.edge_levels[k] = std::max(rep.edge_levels[k], 0.0);
    if (rep.edge_levels[k] > threshold) rep.pe_edges.push_back(k);
  }
  if (!rep.connected) {
    rep.formation_level = 0.0;
    rep.bpe = false;
    rep.reason = "graph is disconnected";
    return rep;
  }
  rep.formation_level = std::max(formation, 0.0);
  rep.bpe = rep.formation_level > threshold;
  if (!rep.bpe) rep.reason = "averaged bearing Laplacian does not dominate mu*L above the threshold";
  return rep;
}

/// Necessary number of PE bearings for a BPE formation with n-1 <= m < m_bar:
/// d(n-1) - (d-1)m, floored at zero. `ibr_edge_threshold` is m_bar when known.
inline int lemma2_bound(const FormationGraph& g, std::optional<int> ibr_edge_threshold = std::nullopt) {
  const int n = g.vertex_count(), m = g.edge_count(), d = g.dimension();
  if (m < n - 1) throw ValidationError("edge count below n-1: the graph cannot be connected");
  if (ibr_edge_threshold && m >= *ibr_edge_threshold)
    throw ValidationError("edge count " + std::to_string(m) + " is not below the IBR threshold " +
                          std::to_string(*ibr_edge_threshold));
  return std::max(0, d * (n - 1) - (d - 1) * m);
}

}  // namespace bform
