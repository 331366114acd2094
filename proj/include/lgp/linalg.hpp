#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "lgp/dataset.hpp"

namespace lgp {

// Cholesky factorization with an escalating relative jitter ladder. Returns
// false when the matrix stays indefinite even at the largest jitter.
// `jitter_used` reports the absolute jitter that was added to the diagonal.
inline bool safe_llt(const Eigen::MatrixXd& A, Eigen::LLT<Eigen::MatrixXd>& llt,
                     double* jitter_used = nullptr) {
  static const double ladder[] = {0.0, 1e-8, 1e-6, 1e-4};
  double mean_diag = A.diagonal().mean();
  if (!(mean_diag > 0.0)) mean_diag = 1.0;
  for (double eps : ladder) {
    double jitter = eps * mean_diag;
    if (jitter == 0.0) {
      llt.compute(A);
    } else {
      Eigen::MatrixXd Aj = A;
      Aj.diagonal().array() += jitter;
      llt.compute(Aj);
    }
    if (llt.info() == Eigen::Success) {
      if (jitter_used != nullptr) *jitter_used = jitter;
      return true;
    }
  }
  return false;
}

// Reverse-mode derivative through a Cholesky factorization K = L L^T: given
// the adjoint Lbar = d(objective)/dL (lower triangular), returns the
// symmetric adjoint Kbar = d(objective)/dK such that
// <Kbar, dK> = <Lbar, dL> for symmetric perturbations dK.
inline Eigen::MatrixXd chol_rev(const Eigen::MatrixXd& L, const Eigen::MatrixXd& Lbar) {
  int n = static_cast<int>(L.rows());
  Eigen::MatrixXd P = (L.transpose() * Lbar).triangularView<Eigen::Lower>();
  P.diagonal() *= 0.5;
  Eigen::MatrixXd X = L.transpose().triangularView<Eigen::Upper>().solve(P);
  Eigen::MatrixXd Kraw =
      L.transpose().triangularView<Eigen::Upper>().solve(X.transpose()).transpose();
  return 0.5 * (Kraw + Kraw.transpose());
}

// Draw from N(0, K) given the lower Cholesky factor and a standard normal
// vector.
inline Eigen::VectorXd chol_draw(const Eigen::MatrixXd& L, const Eigen::VectorXd& z) {
  return L.template triangularView<Eigen::Lower>() * z;
}

}  // namespace lgp
