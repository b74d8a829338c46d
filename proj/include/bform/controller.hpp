#pragma once

#include "bform/common.hpp"
#include "bform/dynamics.hpp"

#include <vector>

namespace bform {

struct ControllerGains {
  std::vector<double> kappa_p;  ///< per agent
  std::vector<double> kappa_v;  ///< per agent

  static ControllerGains uniform(int n, double kp, double kv) {
    return {std::vector<double>(n, kp), std::vector<double>(n, kv)};
  }
};

inline void validate(const ControllerGains& gains, int n) {
  if (static_cast<int>(gains.kappa_p.size()) != n || static_cast<int>(gains.kappa_v.size()) != n)
    throw ValidationError("controller needs one kappa_p and one kappa_v per agent");
  for (int i = 0; i < n; ++i)
    if (!(gains.kappa_p[i] > 0) || !(gains.kappa_v[i] > 0))
      throw ValidationError("controller gains must be strictly positive (agent " + std::to_string(i + 1) + ")");
}

/// Tracking law for agent i: PD feedback on the estimated errors plus the
/// desired acceleration as feedforward.
inline Vec control(int i, const Vec& p_hat, const Vec& v_hat, const ReferenceSample& ref, const ControllerGains& gains) {
  const auto d = p_hat.size();
  const auto off = static_cast<Eigen::Index>(i) * d;
  return -gains.kappa_p[i] * (p_hat - ref.p.segment(off, d)) - gains.kappa_v[i] * (v_hat - ref.v.segment(off, d)) +
         ref.u.segment(off, d);
}

/// Per-axis closed-loop matrix [[0, 1], [-kappa_p, -kappa_v]] under exact state feedback.
inline Eigen::Matrix2d tracking_error_matrix(double kp, double kv) {
  Eigen::Matrix2d a;
  a << 0.0, 1.0, -kp, -kv;
  return a;
}

}  // namespace bform
