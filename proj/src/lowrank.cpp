#include "deelbo/lowrank.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace deelbo {

namespace {

void check_inputs(const Eigen::VectorXd& sigma_diag,
                  const Eigen::MatrixXd& Q) {
  if (Q.cols() < 2)
    throw std::invalid_argument("lowrank: rank count K must be >= 2");
  if (Q.rows() != sigma_diag.size())
    throw std::invalid_argument("lowrank: Q rows must match diagonal size");
  if ((sigma_diag.array() <= 0.0).any())
    throw std::invalid_argument("lowrank: diagonal entries must be > 0");
}

// Scaled factor U = Q / sqrt(2K - 2), so Sigma = A + U U^T with
// A = diag(sigma_diag) / 2.
Eigen::MatrixXd scaled_factor(const Eigen::MatrixXd& Q) {
  return Q / std::sqrt(2.0 * static_cast<double>(Q.cols()) - 2.0);
}

// Cholesky of the K x K capacitance I_K + U^T A^{-1} U.
Eigen::LLT<Eigen::MatrixXd> capacitance_llt(
    const Eigen::VectorXd& inv_a_diag, const Eigen::MatrixXd& U) {
  const Eigen::Index k = U.cols();
  Eigen::MatrixXd cap =
      U.transpose() * inv_a_diag.asDiagonal() * U;
  cap += Eigen::MatrixXd::Identity(k, k);
  Eigen::LLT<Eigen::MatrixXd> llt(cap);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("lowrank: capacitance solve failed");
  return llt;
}

}  // namespace

double lowrank_trace_inverse(const Eigen::VectorXd& sigma_diag,
                             const Eigen::MatrixXd& Q) {
  check_inputs(sigma_diag, Q);
  const Eigen::MatrixXd U = scaled_factor(Q);
  const Eigen::VectorXd inv_a = 2.0 / sigma_diag.array();
  const auto llt = capacitance_llt(inv_a, U);
  // tr(A^{-1}) - tr((I + U^T A^{-1} U)^{-1} U^T A^{-2} U)
  const Eigen::MatrixXd a2u =
      inv_a.cwiseProduct(inv_a).asDiagonal() * U;       // A^{-2} U
  const Eigen::MatrixXd correction = llt.solve(U.transpose() * a2u);
  return inv_a.sum() - correction.trace();
}

double lowrank_mahalanobis(const Eigen::VectorXd& delta,
                           const Eigen::VectorXd& sigma_diag,
                           const Eigen::MatrixXd& Q) {
  check_inputs(sigma_diag, Q);
  if (delta.size() != sigma_diag.size())
    throw std::invalid_argument("lowrank_mahalanobis: dimension mismatch");
  const Eigen::MatrixXd U = scaled_factor(Q);
  const Eigen::VectorXd inv_a = 2.0 / sigma_diag.array();
  const auto llt = capacitance_llt(inv_a, U);
  const Eigen::VectorXd a_delta = inv_a.cwiseProduct(delta);  // A^{-1} d
  const Eigen::VectorXd projected = U.transpose() * a_delta;  // K
  return delta.dot(a_delta) - projected.dot(llt.solve(projected));
}

double lowrank_logdet(const Eigen::VectorXd& sigma_diag,
                      const Eigen::MatrixXd& Q) {
  check_inputs(sigma_diag, Q);
  const Eigen::MatrixXd U = scaled_factor(Q);
  const Eigen::VectorXd inv_a = 2.0 / sigma_diag.array();
  const auto llt = capacitance_llt(inv_a, U);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < Q.cols(); ++i)
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  // log det(A) with A = diag(sigma_diag)/2
  log_det += (sigma_diag.array() / 2.0).log().sum();
  return log_det;
}

Eigen::VectorXd lowrank_solve(const Eigen::VectorXd& delta,
                              const Eigen::VectorXd& sigma_diag,
                              const Eigen::MatrixXd& Q) {
  check_inputs(sigma_diag, Q);
  if (delta.size() != sigma_diag.size())
    throw std::invalid_argument("lowrank_solve: dimension mismatch");
  const Eigen::MatrixXd U = scaled_factor(Q);
  const Eigen::VectorXd inv_a = 2.0 / sigma_diag.array();
  const auto llt = capacitance_llt(inv_a, U);
  const Eigen::VectorXd a_delta = inv_a.cwiseProduct(delta);
  const Eigen::VectorXd projected = llt.solve(U.transpose() * a_delta);
  return a_delta - inv_a.cwiseProduct(U * projected);
}

}  // namespace deelbo
