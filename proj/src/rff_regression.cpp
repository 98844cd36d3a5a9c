#include "deelbo/rff_regression.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace deelbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_noise(double noise_std) {
  if (!(noise_std > 0.0) || !std::isfinite(noise_std))
    throw std::invalid_argument("noise_std must be > 0");
}

void check_shapes(const FeatureMatrix& Phi, const Eigen::VectorXd& y) {
  if (Phi.rows() != y.size())
    throw std::invalid_argument("feature rows must match target length");
}

// Shared solve path for the posterior covariance, so exact_posterior and
// optimal_fullrank_covariance agree bit for bit.
Eigen::MatrixXd posterior_covariance(const FeatureMatrix& Phi,
                                     double noise_std) {
  const Eigen::Index R = Phi.cols();
  Eigen::MatrixXd precision = Phi.values.transpose() * Phi.values /
                              (noise_std * noise_std);
  precision += Eigen::MatrixXd::Identity(R, R);
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("posterior covariance: factorization failed");
  return llt.solve(Eigen::MatrixXd::Identity(R, R));
}

}  // namespace

void RegressionModel::validate() const {
  kernel.validate();
  check_noise(noise_std);
}

void IsotropicGaussianQ::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw std::invalid_argument("IsotropicGaussianQ: variance must be > 0");
}

FullRankPosterior exact_posterior(const FeatureMatrix& Phi,
                                  const Eigen::VectorXd& y,
                                  double noise_std) {
  check_noise(noise_std);
  check_shapes(Phi, y);
  FullRankPosterior post;
  post.covariance = posterior_covariance(Phi, noise_std);
  post.mean = post.covariance *
              (Phi.values.transpose() * y / (noise_std * noise_std));
  return post;
}

double log_marginal_likelihood(const FeatureMatrix& Phi,
                               const Eigen::VectorXd& y, double noise_std) {
  check_noise(noise_std);
  check_shapes(Phi, y);
  const Eigen::Index N = y.size();
  Eigen::MatrixXd cov = Phi.values * Phi.values.transpose();
  cov.diagonal().array() += noise_std * noise_std;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("log_marginal_likelihood: Cholesky failed");
  const Eigen::VectorXd alpha = llt.solve(y);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < N; ++i)
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (static_cast<double>(N) * kLog2Pi + log_det + y.dot(alpha));
}

double elbo_fullrank(const Eigen::VectorXd& mu_q,
                     const Eigen::MatrixXd& Sigma_q, const FeatureMatrix& Phi,
                     const Eigen::VectorXd& y, double noise_std) {
  check_noise(noise_std);
  check_shapes(Phi, y);
  const Eigen::Index R = Phi.cols();
  if (mu_q.size() != R || Sigma_q.rows() != R || Sigma_q.cols() != R)
    throw std::invalid_argument("elbo_fullrank: q dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma_q);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("elbo_fullrank: Sigma_q not positive definite");
  double log_det_q = 0.0;
  for (Eigen::Index i = 0; i < R; ++i)
    log_det_q += 2.0 * std::log(llt.matrixL()(i, i));

  const double noise_var = noise_std * noise_std;
  const double n = static_cast<double>(Phi.rows());
  const double fit = (y - Phi.values * mu_q).squaredNorm() / noise_var;
  const double smear =
      (Phi.values * Sigma_q).cwiseProduct(Phi.values).sum() / noise_var;
  return -0.5 * (n * (kLog2Pi + std::log(noise_var)) + fit + smear +
                 Sigma_q.trace() + mu_q.squaredNorm() -
                 static_cast<double>(R) - log_det_q);
}

Eigen::MatrixXd optimal_fullrank_covariance(const FeatureMatrix& Phi,
                                            double noise_std) {
  check_noise(noise_std);
  return posterior_covariance(Phi, noise_std);
}

ObjectiveBreakdown elbo_isotropic(const IsotropicGaussianQ& q,
                                  const FeatureMatrix& Phi,
                                  const Eigen::VectorXd& y, double noise_std,
                                  double kappa) {
  check_noise(noise_std);
  check_shapes(Phi, y);
  q.validate();
  if (!(kappa > 0.0))
    throw std::invalid_argument("elbo_isotropic: kappa must be > 0");
  if (q.mean.size() != Phi.cols())
    throw std::invalid_argument("elbo_isotropic: q dimension mismatch");

  const double noise_var = noise_std * noise_std;
  const double n = static_cast<double>(Phi.rows());
  const double r = static_cast<double>(Phi.cols());
  const double trace_phi = Phi.values.squaredNorm();  // tr(Phi Phi^T)

  ObjectiveBreakdown out;
  out.kappa = kappa;
  out.expected_loglik =
      -0.5 * (n * (kLog2Pi + std::log(noise_var)) +
              (y - Phi.values * q.mean).squaredNorm() / noise_var +
              q.variance * trace_phi / noise_var);
  out.kl = 0.5 * (q.variance * r + q.mean.squaredNorm() - r -
                  r * std::log(q.variance));
  out.total = kappa * out.expected_loglik - out.kl;
  return out;
}

double optimal_isotropic_variance(const FeatureMatrix& Phi, double noise_std,
                                  double kappa) {
  check_noise(noise_std);
  if (!(kappa > 0.0))
    throw std::invalid_argument(
        "optimal_isotropic_variance: kappa must be > 0");
  const double r = static_cast<double>(Phi.cols());
  const double trace_phi = Phi.values.squaredNorm();
  return r / (kappa * trace_phi / (noise_std * noise_std) + r);
}

Predictive predictive_posterior(const IsotropicGaussianQ& q,
                                const FeatureMatrix& Phi_star,
                                double noise_std) {
  check_noise(noise_std);
  q.validate();
  if (q.mean.size() != Phi_star.cols())
    throw std::invalid_argument("predictive_posterior: dimension mismatch");
  Predictive pred;
  pred.mean = Phi_star.values * q.mean;
  pred.variance = (q.variance * Phi_star.values.rowwise().squaredNorm())
                      .array() +
                  noise_std * noise_std;
  return pred;
}

Predictive predictive_posterior(const FullRankPosterior& q,
                                const FeatureMatrix& Phi_star,
                                double noise_std) {
  check_noise(noise_std);
  if (q.mean.size() != Phi_star.cols())
    throw std::invalid_argument("predictive_posterior: dimension mismatch");
  Predictive pred;
  pred.mean = Phi_star.values * q.mean;
  pred.variance = ((Phi_star.values * q.covariance)
                       .cwiseProduct(Phi_star.values)
                       .rowwise()
                       .sum())
                      .array() +
                  noise_std * noise_std;
  return pred;
}

}  // namespace deelbo
