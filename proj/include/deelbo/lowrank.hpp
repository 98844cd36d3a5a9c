#ifndef DEELBO_LOWRANK_HPP
#define DEELBO_LOWRANK_HPP

#include <Eigen/Core>

namespace deelbo {

// Diagonal-plus-low-rank covariance in the source-posterior convention:
//   Sigma = (diag(sigma_diag) + Q Q^T / (K - 1)) / 2,   Q: F x K, K >= 2.
// All routines below work through the Woodbury identity / matrix
// determinant lemma with A = diag(sigma_diag)/2, U = Q / sqrt(2K - 2),
// so no F x F matrix is ever formed.

double lowrank_trace_inverse(const Eigen::VectorXd& sigma_diag,
                             const Eigen::MatrixXd& Q);

// delta^T Sigma^{-1} delta.
double lowrank_mahalanobis(const Eigen::VectorXd& delta,
                           const Eigen::VectorXd& sigma_diag,
                           const Eigen::MatrixXd& Q);

// log det(Sigma).
double lowrank_logdet(const Eigen::VectorXd& sigma_diag,
                      const Eigen::MatrixXd& Q);

// Sigma^{-1} delta.
Eigen::VectorXd lowrank_solve(const Eigen::VectorXd& delta,
                              const Eigen::VectorXd& sigma_diag,
                              const Eigen::MatrixXd& Q);

}  // namespace deelbo

#endif  // DEELBO_LOWRANK_HPP
