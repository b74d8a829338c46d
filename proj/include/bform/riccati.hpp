#pragma once

#include "bform/common.hpp"

namespace bform {

/// A = [[0, I], [0, 0]] of size 2N for N stacked position coordinates.
inline Mat double_integrator_matrix(int N) {
  Mat A = Mat::Zero(2 * N, 2 * N);
  A.topRightCorner(N, N).setIdentity();
  return A;
}

/// Right-hand side of the continuous Riccati equation
/// M' = A M + M A^T - M C^T Q C M + S.
inline Mat riccati_rate(const Mat& A, const Mat& M, const Mat& C, const Mat& Q, const Mat& S) {
  const Mat MCt = M * C.transpose();
  return A * M + M * A.transpose() - MCt * Q * MCt.transpose() + S;
}

/// delta^T M^{-1} delta for symmetric positive definite M.
inline double riccati_lyapunov(const Vec& delta, const Mat& M) {
  Eigen::LLT<Mat> llt(M);
  return delta.dot(llt.solve(delta));
}

inline double condition_number(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return ev(ev.size() - 1) / ev(0);
}

inline constexpr double kMinRiccatiEigenvalue = 1e-10;

}  // namespace bform
