#include "deelbo/problems.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "deelbo/unconstrained.hpp"

namespace deelbo {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

RffRegressionProblem::RffRegressionProblem(RffFeatureMap map,
                                           KernelParams kernel_init,
                                           double noise_std,
                                           Eigen::MatrixXd X,
                                           Eigen::VectorXd y)
    : map_(std::move(map)),
      kernel_init_(kernel_init),
      noise_std_(noise_std),
      X_(std::move(X)),
      y_(std::move(y)) {
  kernel_init_.validate();
  if (!(noise_std_ > 0.0))
    throw std::invalid_argument("RffRegressionProblem: noise_std must be > 0");
  if (X_.rows() != y_.size())
    throw std::invalid_argument("RffRegressionProblem: X rows != y length");
  if (X_.cols() != map_.input_dim())
    throw std::invalid_argument("RffRegressionProblem: input dim mismatch");
}

Eigen::Index RffRegressionProblem::theta_dim() const {
  return map_.feature_count();
}

Eigen::VectorXd RffRegressionProblem::initial_mean() const {
  return Eigen::VectorXd::Zero(theta_dim());
}

Eigen::VectorXd RffRegressionProblem::initial_eta() const {
  Eigen::VectorXd eta(2);
  eta[0] = inv_softplus(kernel_init_.length_scale);
  eta[1] = inv_softplus(kernel_init_.output_scale);
  return eta;
}

KernelParams RffRegressionProblem::kernel_from_eta(
    const Eigen::VectorXd& eta) const {
  if (eta.size() != 2)
    throw std::invalid_argument("RffRegressionProblem: eta must have size 2");
  return {softplus(eta[0]), softplus(eta[1])};
}

double RffRegressionProblem::loglik(const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& eta,
                                    Eigen::VectorXd* grad_theta,
                                    Eigen::VectorXd* grad_eta) const {
  const KernelParams params = kernel_from_eta(eta);
  const FeatureMatrix phi = featurize(map_, params, X_);
  const double noise_var = noise_std_ * noise_std_;
  const Eigen::VectorXd residual = y_ - phi.values * theta;
  const double value =
      -0.5 * (static_cast<double>(y_.size()) *
                  (kLog2Pi + std::log(noise_var)) +
              residual.squaredNorm() / noise_var);
  if (grad_theta != nullptr)
    *grad_theta = phi.values.transpose() * residual / noise_var;
  if (grad_eta != nullptr) {
    const FeatureJacobians jac = feature_jacobians(map_, params, X_);
    // d loglik / d Phi = residual theta^T / noise_var
    const Eigen::VectorXd jl = jac.d_length_scale * theta;
    const Eigen::VectorXd js = jac.d_output_scale * theta;
    grad_eta->resize(2);
    (*grad_eta)[0] =
        residual.dot(jl) / noise_var * softplus_grad(eta[0]);
    (*grad_eta)[1] =
        residual.dot(js) / noise_var * softplus_grad(eta[1]);
  }
  return value;
}

double RffRegressionProblem::kl(const IsotropicGaussianQ& q,
                                const PriorScales& /*scales*/,
                                Eigen::VectorXd* grad_mean,
                                double* grad_variance) const {
  q.validate();
  const double r = static_cast<double>(theta_dim());
  const double kl_value = 0.5 * (q.variance * r + q.mean.squaredNorm() - r -
                                 r * std::log(q.variance));
  if (grad_mean != nullptr) *grad_mean = q.mean;
  if (grad_variance != nullptr)
    *grad_variance = 0.5 * (r - r / q.variance);
  return kl_value;
}

}  // namespace deelbo
