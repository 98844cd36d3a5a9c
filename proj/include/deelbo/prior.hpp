#ifndef DEELBO_PRIOR_HPP
#define DEELBO_PRIOR_HPP

#include <Eigen/Core>

#include "deelbo/rff_regression.hpp"

namespace deelbo {

// Gaussian prior over a parameter block: N(mean, lambda * Sigma_base)
// where Sigma_base is the identity, a diagonal matrix, or the
// diagonal-plus-low-rank form handled by the lowrank routines. The base
// trace-inverse and log-determinant are cached at construction; the
// Mahalanobis form is re-evaluated per query.
class GaussianPrior {
 public:
  enum class Form { kScaledIdentity, kDiagonal, kDiagPlusLowRank };

  static GaussianPrior scaled_identity(Eigen::VectorXd mean, double lambda);
  static GaussianPrior diagonal(Eigen::VectorXd mean,
                                Eigen::VectorXd variances, double lambda);
  static GaussianPrior diag_plus_lowrank(Eigen::VectorXd mean,
                                         Eigen::VectorXd sigma_diag,
                                         Eigen::MatrixXd column_factors,
                                         double lambda);

  Form form() const { return form_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  double lambda() const { return lambda_; }
  Eigen::Index dim() const { return mean_.size(); }

  // Queries on Sigma_base (the lambda scale excluded).
  double base_trace_inverse() const { return base_trace_inverse_; }
  double base_logdet() const { return base_logdet_; }
  double base_mahalanobis(const Eigen::VectorXd& x) const;
  Eigen::VectorXd base_solve(const Eigen::VectorXd& delta) const;

  GaussianPrior with_lambda(double lambda) const;

 private:
  GaussianPrior() = default;

  Form form_ = Form::kScaledIdentity;
  Eigen::VectorXd mean_;
  double lambda_ = 1.0;
  Eigen::VectorXd diag_;             // kDiagonal
  Eigen::VectorXd sigma_diag_;       // kDiagPlusLowRank
  Eigen::MatrixXd column_factors_;   // kDiagPlusLowRank
  double base_trace_inverse_ = 0.0;
  double base_logdet_ = 0.0;
};

// Zero-mean isotropic prior over the classifier head, N(0, tau I_{HC}).
struct HeadPrior {
  double tau = 1.0;
  Eigen::Index head_dim = 0;

  void validate() const;
};

// KL( N(m, sq I) || N(mu_p, lambda Sigma_base) ) with optional gradients
// with respect to m and the shared variance sq.
double kl_isotropic_vs_gaussian(const Eigen::VectorXd& q_mean,
                                double q_variance, const GaussianPrior& prior,
                                double lambda,
                                Eigen::VectorXd* grad_mean = nullptr,
                                double* grad_variance = nullptr);

// Module-level form using the prior's stored lambda.
double kl_isotropic_q_vs_prior(const IsotropicGaussianQ& q,
                               const GaussianPrior& prior);

// KL( N(vec(V), sq I) || N(0, tau I) ) for the head block.
double kl_isotropic_vs_head(const Eigen::VectorXd& head_mean,
                            double q_variance, double tau,
                            Eigen::VectorXd* grad_mean = nullptr,
                            double* grad_variance = nullptr);

double kl_head_q_vs_prior(const Eigen::VectorXd& head_mean, double q_variance,
                          const HeadPrior& head);

// Closed-form maximizer of -KL in the prior scale:
//   lambda* = (sq tr(Sigma_base^{-1}) + (mu_p - m)^T Sigma_base^{-1}
//              (mu_p - m)) / F.
double optimal_lambda(const Eigen::VectorXd& q_mean, double q_variance,
                      const GaussianPrior& prior);

// tau* = sq + ||vec(V)||^2 / HC.
double optimal_tau(const Eigen::VectorXd& head_mean, double q_variance,
                   Eigen::Index head_dim);

enum class ClosedFormKind { kLambda, kTau };

// Second derivative of -KL at the closed-form optimum:
// -F / (2 lambda*^2) or -HC / (2 tau*^2). Always negative.
double second_derivative_at_optimum(ClosedFormKind kind, double optimum,
                                    Eigen::Index dim);

}  // namespace deelbo

#endif  // DEELBO_PRIOR_HPP
