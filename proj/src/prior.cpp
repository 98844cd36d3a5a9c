#include "deelbo/prior.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "deelbo/lowrank.hpp"

namespace deelbo {

namespace {

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("GaussianPrior: lambda must be > 0");
}

}  // namespace

GaussianPrior GaussianPrior::scaled_identity(Eigen::VectorXd mean,
                                             double lambda) {
  check_lambda(lambda);
  GaussianPrior p;
  p.form_ = Form::kScaledIdentity;
  p.mean_ = std::move(mean);
  p.lambda_ = lambda;
  p.base_trace_inverse_ = static_cast<double>(p.mean_.size());
  p.base_logdet_ = 0.0;
  return p;
}

GaussianPrior GaussianPrior::diagonal(Eigen::VectorXd mean,
                                      Eigen::VectorXd variances,
                                      double lambda) {
  check_lambda(lambda);
  if (mean.size() != variances.size())
    throw std::invalid_argument("GaussianPrior: diagonal size mismatch");
  if ((variances.array() <= 0.0).any())
    throw std::invalid_argument("GaussianPrior: variances must be > 0");
  GaussianPrior p;
  p.form_ = Form::kDiagonal;
  p.mean_ = std::move(mean);
  p.lambda_ = lambda;
  p.diag_ = std::move(variances);
  p.base_trace_inverse_ = p.diag_.cwiseInverse().sum();
  p.base_logdet_ = p.diag_.array().log().sum();
  return p;
}

GaussianPrior GaussianPrior::diag_plus_lowrank(Eigen::VectorXd mean,
                                               Eigen::VectorXd sigma_diag,
                                               Eigen::MatrixXd column_factors,
                                               double lambda) {
  check_lambda(lambda);
  if (mean.size() != sigma_diag.size() ||
      mean.size() != column_factors.rows())
    throw std::invalid_argument("GaussianPrior: low-rank size mismatch");
  GaussianPrior p;
  p.form_ = Form::kDiagPlusLowRank;
  p.mean_ = std::move(mean);
  p.lambda_ = lambda;
  p.sigma_diag_ = std::move(sigma_diag);
  p.column_factors_ = std::move(column_factors);
  p.base_trace_inverse_ =
      lowrank_trace_inverse(p.sigma_diag_, p.column_factors_);
  p.base_logdet_ = lowrank_logdet(p.sigma_diag_, p.column_factors_);
  return p;
}

double GaussianPrior::base_mahalanobis(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size())
    throw std::invalid_argument("GaussianPrior: dimension mismatch");
  const Eigen::VectorXd delta = x - mean_;
  switch (form_) {
    case Form::kScaledIdentity:
      return delta.squaredNorm();
    case Form::kDiagonal:
      return (delta.array().square() / diag_.array()).sum();
    case Form::kDiagPlusLowRank:
      return lowrank_mahalanobis(delta, sigma_diag_, column_factors_);
  }
  return 0.0;
}

Eigen::VectorXd GaussianPrior::base_solve(const Eigen::VectorXd& delta) const {
  if (delta.size() != mean_.size())
    throw std::invalid_argument("GaussianPrior: dimension mismatch");
  switch (form_) {
    case Form::kScaledIdentity:
      return delta;
    case Form::kDiagonal:
      return delta.cwiseQuotient(diag_);
    case Form::kDiagPlusLowRank:
      return lowrank_solve(delta, sigma_diag_, column_factors_);
  }
  return delta;
}

GaussianPrior GaussianPrior::with_lambda(double lambda) const {
  check_lambda(lambda);
  GaussianPrior p = *this;
  p.lambda_ = lambda;
  return p;
}

void HeadPrior::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw std::invalid_argument("HeadPrior: tau must be > 0");
  if (head_dim < 1)
    throw std::invalid_argument("HeadPrior: head_dim must be >= 1");
}

double kl_isotropic_vs_gaussian(const Eigen::VectorXd& q_mean,
                                double q_variance, const GaussianPrior& prior,
                                double lambda, Eigen::VectorXd* grad_mean,
                                double* grad_variance) {
  check_lambda(lambda);
  if (!(q_variance > 0.0))
    throw std::invalid_argument("kl: q variance must be > 0");
  if (q_mean.size() != prior.dim())
    throw std::invalid_argument("kl: dimension mismatch");
  const double f = static_cast<double>(prior.dim());
  const double trace_inv = prior.base_trace_inverse();
  const double maha = prior.base_mahalanobis(q_mean);
  const double kl =
      0.5 * (q_variance / lambda * trace_inv + maha / lambda - f +
             f * std::log(lambda) + prior.base_logdet() -
             f * std::log(q_variance));
  if (grad_mean != nullptr)
    *grad_mean = prior.base_solve(q_mean - prior.mean()) / lambda;
  if (grad_variance != nullptr)
    *grad_variance = 0.5 * (trace_inv / lambda - f / q_variance);
  return kl;
}

double kl_isotropic_q_vs_prior(const IsotropicGaussianQ& q,
                               const GaussianPrior& prior) {
  q.validate();
  return kl_isotropic_vs_gaussian(q.mean, q.variance, prior, prior.lambda());
}

double kl_isotropic_vs_head(const Eigen::VectorXd& head_mean,
                            double q_variance, double tau,
                            Eigen::VectorXd* grad_mean,
                            double* grad_variance) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw std::invalid_argument("kl: tau must be > 0");
  if (!(q_variance > 0.0))
    throw std::invalid_argument("kl: q variance must be > 0");
  const double hc = static_cast<double>(head_mean.size());
  const double kl = 0.5 * (q_variance / tau * hc +
                           head_mean.squaredNorm() / tau - hc +
                           hc * std::log(tau) - hc * std::log(q_variance));
  if (grad_mean != nullptr) *grad_mean = head_mean / tau;
  if (grad_variance != nullptr)
    *grad_variance = 0.5 * (hc / tau - hc / q_variance);
  return kl;
}

double kl_head_q_vs_prior(const Eigen::VectorXd& head_mean, double q_variance,
                          const HeadPrior& head) {
  head.validate();
  if (head_mean.size() != head.head_dim)
    throw std::invalid_argument("kl_head: dimension mismatch");
  return kl_isotropic_vs_head(head_mean, q_variance, head.tau);
}

double optimal_lambda(const Eigen::VectorXd& q_mean, double q_variance,
                      const GaussianPrior& prior) {
  if (!(q_variance > 0.0))
    throw std::invalid_argument("optimal_lambda: q variance must be > 0");
  const double f = static_cast<double>(prior.dim());
  return (q_variance * prior.base_trace_inverse() +
          prior.base_mahalanobis(q_mean)) /
         f;
}

double optimal_tau(const Eigen::VectorXd& head_mean, double q_variance,
                   Eigen::Index head_dim) {
  if (head_dim < 1)
    throw std::invalid_argument("optimal_tau: head_dim must be >= 1");
  if (!(q_variance > 0.0))
    throw std::invalid_argument("optimal_tau: q variance must be > 0");
  return q_variance +
         head_mean.squaredNorm() / static_cast<double>(head_dim);
}

double second_derivative_at_optimum(ClosedFormKind /*kind*/, double optimum,
                                    Eigen::Index dim) {
  if (!(optimum > 0.0))
    throw std::invalid_argument(
        "second_derivative_at_optimum: optimum must be > 0");
  return -static_cast<double>(dim) / (2.0 * optimum * optimum);
}

}  // namespace deelbo
