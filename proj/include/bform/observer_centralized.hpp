#pragma once

#include "bform/common.hpp"
#include "bform/dynamics.hpp"
#include "bform/formation_analysis.hpp"
#include "bform/graph.hpp"
#include "bform/riccati.hpp"
#include "bform/sensing.hpp"

#include <optional>

namespace bform {

struct CentralizedGains {
  double kappa = 10.0;
  Mat Q;   ///< dn x dn
  Mat S;   ///< 2dn x 2dn
  Mat M0;  ///< 2dn x 2dn

  static CentralizedGains scaled_identity(int n, int d, double kappa, double q, double s, double m0) {
    const int N = n * d;
    return {kappa, q * Mat::Identity(N, N), s * Mat::Identity(2 * N, 2 * N), m0 * Mat::Identity(2 * N, 2 * N)};
  }
};

struct CentralizedObserverState {
  Vec p;  ///< stacked position estimates
  Vec v;  ///< stacked velocity estimates
  Mat M;  ///< Riccati matrix, 2dn x 2dn

  friend CentralizedObserverState operator+(const CentralizedObserverState& a, const CentralizedObserverState& b) {
    return {a.p + b.p, a.v + b.v, a.M + b.M};
  }
  friend CentralizedObserverState operator*(double h, const CentralizedObserverState& a) {
    return {h * a.p, h * a.v, h * a.M};
  }
};

/// C = [L_B + C_1, 0]. With no leader C_1 is dropped and the output is implicit.
inline Mat output_matrix(const BearingSnapshot& s, const FormationGraph& g, std::optional<int> leader) {
  const int N = g.vertex_count() * g.dimension();
  Mat C = Mat::Zero(N, 2 * N);
  C.leftCols(N) = bearing_laplacian(s, g);
  if (leader) C.block(*leader * g.dimension(), *leader * g.dimension(), g.dimension(), g.dimension()) +=
      Mat::Identity(g.dimension(), g.dimension());
  return C;
}

inline void validate(const CentralizedGains& gains, int n, int d) {
  const int N = n * d;
  if (gains.kappa < 0.5) throw ValidationError("centralized kappa must be >= 1/2");
  if (gains.Q.rows() != N || gains.Q.cols() != N) throw ValidationError("centralized Q must be dn x dn");
  if (gains.S.rows() != 2 * N || gains.S.cols() != 2 * N) throw ValidationError("centralized S must be 2dn x 2dn");
  if (gains.M0.rows() != 2 * N || gains.M0.cols() != 2 * N)
    throw ValidationError("centralized M0 must be 2dn x 2dn");
  if (min_eigenvalue(symmetrized(gains.Q)) <= 0 || min_eigenvalue(symmetrized(gains.S)) <= 0 ||
      min_eigenvalue(symmetrized(gains.M0)) <= 0)
    throw ValidationError("centralized Q, S and M0 must be positive definite");
}

/// Time derivative of the full-state Riccati observer.
///
/// The innovation y - C x_hat is formed from measurable quantities only:
/// -L_B(g^m) p_hat on every block plus the leader's own position error, since
/// L_B(g) p vanishes for the true configuration.
inline CentralizedObserverState centralized_derivative(const CentralizedObserverState& x,
                                                       const CentralizedGains& gains, const FormationGraph& g,
                                                       const MeasurementSet& meas, const Vec& u) {
  const int d = g.dimension();
  const int N = g.vertex_count() * d;
  const Mat C = output_matrix(meas.bearings, g, meas.leader);
  Vec residual = -C.leftCols(N) * x.p;
  residual.segment(meas.leader * d, d) += meas.leader_p;

  const Mat MCt = x.M * C.transpose();
  const Vec correction = gains.kappa * MCt * (gains.Q * residual);

  CentralizedObserverState dx;
  dx.p = x.v + correction.head(N);
  dx.v = u + correction.tail(N);
  dx.M = riccati_rate(double_integrator_matrix(N), x.M, C, gains.Q, gains.S);
  return dx;
}

/// Symmetrizes M and aborts if it lost positive definiteness.
inline void condition_check(CentralizedObserverState& x, double t) {
  x.M = symmetrized(x.M);
  const double lmin = min_eigenvalue(x.M);
  if (!(lmin >= kMinRiccatiEigenvalue))
    throw SimulationAbort(t, "centralized Riccati matrix lost conditioning: lambda_min(M) = " + std::to_string(lmin));
  if (!x.p.allFinite() || !x.v.allFinite()) throw SimulationAbort(t, "non-finite centralized estimate");
}

/// One RK4 step with the measurement and input held over the step.
inline CentralizedObserverState observer_step(const CentralizedObserverState& x, const CentralizedGains& gains,
                                              const FormationGraph& g, const MeasurementSet& meas, const Vec& u,
                                              double dt) {
  auto f = [&](double, const CentralizedObserverState& s) { return centralized_derivative(s, gains, g, meas, u); };
  CentralizedObserverState next = rk4_step(f, meas.t, x, dt);
  condition_check(next, meas.t + dt);
  return next;
}

}  // namespace bform
