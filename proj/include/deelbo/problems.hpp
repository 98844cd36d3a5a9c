#ifndef DEELBO_PROBLEMS_HPP
#define DEELBO_PROBLEMS_HPP

#include <cstdint>

#include <Eigen/Core>

#include "deelbo/engine.hpp"
#include "deelbo/feature_map.hpp"
#include "deelbo/kernel.hpp"

namespace deelbo {

// RFF regression for the trainer: theta = weight vector v (dim R) with
// prior N(0, I_R); eta = softplus-unconstrained (length_scale,
// output_scale); Gaussian likelihood with fixed noise_std.
class RffRegressionProblem final : public VariationalProblem {
 public:
  RffRegressionProblem(RffFeatureMap map, KernelParams kernel_init,
                       double noise_std, Eigen::MatrixXd X,
                       Eigen::VectorXd y);

  Eigen::Index theta_dim() const override;
  Eigen::Index data_count() const override { return y_.size(); }
  Eigen::VectorXd initial_mean() const override;
  Eigen::VectorXd initial_eta() const override;

  double loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& eta,
                Eigen::VectorXd* grad_theta,
                Eigen::VectorXd* grad_eta) const override;

  double kl(const IsotropicGaussianQ& q, const PriorScales& scales,
            Eigen::VectorXd* grad_mean,
            double* grad_variance) const override;

  KernelParams kernel_from_eta(const Eigen::VectorXd& eta) const;
  const RffFeatureMap& map() const { return map_; }
  double noise_std() const { return noise_std_; }
  const Eigen::MatrixXd& inputs() const { return X_; }
  const Eigen::VectorXd& targets() const { return y_; }

 private:
  RffFeatureMap map_;
  KernelParams kernel_init_;
  double noise_std_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
};

}  // namespace deelbo

#endif  // DEELBO_PROBLEMS_HPP
