#ifndef DEELBO_RFF_REGRESSION_HPP
#define DEELBO_RFF_REGRESSION_HPP

#include <Eigen/Core>

#include "deelbo/feature_map.hpp"
#include "deelbo/kernel.hpp"

namespace deelbo {

// Bayesian linear regression on RFF features:
//   v ~ N(0, I_R),  y_i ~ N(v^T phi(x_i), noise_std^2).
struct RegressionModel {
  RffFeatureMap feature_map;
  KernelParams kernel;
  double noise_std = 0.1;

  void validate() const;
};

// Exact posterior over the weights: multivariate Gaussian.
struct FullRankPosterior {
  Eigen::VectorXd mean;        // R
  Eigen::MatrixXd covariance;  // R x R, symmetric PD
};

// Variational family: Gaussian with free mean and one shared scalar
// variance. Used both for the RFF weight vector and (concatenated) for
// the transfer model's backbone + head blocks.
struct IsotropicGaussianQ {
  Eigen::VectorXd mean;
  double variance = 1.0;

  void validate() const;
};

// One objective evaluation split into its additive pieces.
// total = kappa * expected_loglik - kl, and kl >= 0.
struct ObjectiveBreakdown {
  double expected_loglik = 0.0;
  double kl = 0.0;
  double kappa = 1.0;
  double total = 0.0;
};

// Posterior N(mean, Sigma) with Sigma = (I_R + Phi^T Phi / noise^2)^{-1}
// and mean = Sigma Phi^T y / noise^2.
FullRankPosterior exact_posterior(const FeatureMatrix& Phi,
                                  const Eigen::VectorXd& y, double noise_std);

// log N(y | 0, noise^2 I_N + Phi Phi^T).
double log_marginal_likelihood(const FeatureMatrix& Phi,
                               const Eigen::VectorXd& y, double noise_std);

// Closed-form ELBo for a full-rank Gaussian q(v) = N(mu_q, Sigma_q).
double elbo_fullrank(const Eigen::VectorXd& mu_q,
                     const Eigen::MatrixXd& Sigma_q, const FeatureMatrix& Phi,
                     const Eigen::VectorXd& y, double noise_std);

// The ELBo-optimal full-rank covariance; identical to the exact
// posterior's covariance (same solve path as exact_posterior).
Eigen::MatrixXd optimal_fullrank_covariance(const FeatureMatrix& Phi,
                                            double noise_std);

// Tempered closed-form ELBo for isotropic q. kappa = 1 is the standard
// ELBo; kappa multiplies only the expected log-likelihood term.
ObjectiveBreakdown elbo_isotropic(const IsotropicGaussianQ& q,
                                  const FeatureMatrix& Phi,
                                  const Eigen::VectorXd& y, double noise_std,
                                  double kappa);

// Stationary point of elbo_isotropic in the shared variance:
//   R / (kappa * tr(Phi Phi^T) / noise^2 + R).
double optimal_isotropic_variance(const FeatureMatrix& Phi, double noise_std,
                                  double kappa);

// Predictive mean and variance per test point. Variance includes the
// observation noise, so it is > noise^2 whenever phi(x*) is nonzero.
struct Predictive {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

Predictive predictive_posterior(const IsotropicGaussianQ& q,
                                const FeatureMatrix& Phi_star,
                                double noise_std);
Predictive predictive_posterior(const FullRankPosterior& q,
                                const FeatureMatrix& Phi_star,
                                double noise_std);

}  // namespace deelbo

#endif  // DEELBO_RFF_REGRESSION_HPP
