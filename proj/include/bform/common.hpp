#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace bform {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Scenario, graph or parameter is rejected before any stepping happens.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Requested combination of options is unsupported (e.g. skew noise outside 3D).
class ConfigError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// A bearing is undefined because the two endpoints of an edge coincide.
class DegenerateBearingError : public std::runtime_error {
public:
  DegenerateBearingError(int edge, const std::string& what)
      : std::runtime_error(what), edge_(edge) {}
  int edge() const { return edge_; }

private:
  int edge_;
};

/// Integration had to stop: non-finite state, ill-conditioned Riccati matrix,
/// collision, or missing neighbor data.
class SimulationAbort : public std::runtime_error {
public:
  SimulationAbort(double t, const std::string& what)
      : std::runtime_error(what), time_(t) {}
  double time() const { return time_; }

private:
  double time_;
};

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double min_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

/// Numerical rank by singular values, relative tolerance.
inline int numerical_rank(const Mat& m, double rel_tol = 1e-9) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  const double cut = rel_tol * std::max(1.0, s(0));
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return r;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace bform
