#ifndef DEELBO_GP_HPP
#define DEELBO_GP_HPP

#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "deelbo/kernel.hpp"

namespace deelbo {

// Zero-mean GP regression with RBF kernel and fixed observation noise.
struct GpModel {
  KernelParams kernel;
  double noise_std = 0.1;

  void validate() const;
};

// Fitted GP state: training data plus the Cholesky factor of
// K + noise^2 I, reused for prediction.
class GpFit {
 public:
  GpFit(GpModel model, Eigen::MatrixXd train_inputs,
        Eigen::VectorXd train_targets);

  const GpModel& model() const { return model_; }
  const Eigen::MatrixXd& train_inputs() const { return train_inputs_; }
  const Eigen::VectorXd& train_targets() const { return train_targets_; }

  struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;  // includes observation noise
  };
  Prediction predict(const Eigen::MatrixXd& X_star) const;

 private:
  GpModel model_;
  Eigen::MatrixXd train_inputs_;
  Eigen::VectorXd train_targets_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;  // (K + noise^2 I)^{-1} y
};

// log N(y | 0, K + noise^2 I).
double gp_log_marginal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const GpModel& model);

// Same value plus analytic gradient with respect to
// (length_scale, output_scale).
struct GpMarginalGradient {
  double value = 0.0;
  double d_length_scale = 0.0;
  double d_output_scale = 0.0;
};
GpMarginalGradient gp_log_marginal_gradient(const Eigen::MatrixXd& X,
                                            const Eigen::VectorXd& y,
                                            const GpModel& model);

// One gradient-ascent candidate's record.
struct GpCandidateTrace {
  double learning_rate = 0.0;
  std::vector<double> objective;  // log marginal per step
  KernelParams final_params;
  double final_objective = 0.0;
  double final_grad_norm = 0.0;
  bool failed = false;
};

struct GpHyperFit {
  KernelParams params;
  int selected = -1;
  std::vector<GpCandidateTrace> candidates;
  double final_grad_norm = 0.0;
};

// Gradient ascent on the log marginal likelihood over
// softplus-unconstrained (length_scale, output_scale), one run per
// candidate learning rate; the candidate with the highest final
// objective wins. Candidates that go non-finite are marked failed and
// excluded; if all fail, throws.
GpHyperFit gp_fit_hyperparams(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y,
                              const KernelParams& init, double noise_std,
                              const std::vector<double>& learning_rates,
                              int steps);

}  // namespace deelbo

#endif  // DEELBO_GP_HPP
