#include "deelbo/gp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "deelbo/unconstrained.hpp"

namespace deelbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Factorizes K + noise^2 I; on failure retries once with a jitter of
// 1e-10 * output_scale^2 on the diagonal, then gives up.
Eigen::LLT<Eigen::MatrixXd> factorize_noisy_gram(Eigen::MatrixXd noisy_gram,
                                                 const GpModel& model) {
  Eigen::LLT<Eigen::MatrixXd> llt(noisy_gram);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter =
      1e-10 * model.kernel.output_scale * model.kernel.output_scale;
  noisy_gram.diagonal().array() += jitter;
  llt.compute(noisy_gram);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gp: Cholesky of K + noise^2 I failed");
  return llt;
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt,
                        Eigen::Index n) {
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return log_det;
}

void check_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() < 1) throw std::invalid_argument("gp: need at least one row");
  if (X.rows() != y.size())
    throw std::invalid_argument("gp: X rows must match y length");
}

}  // namespace

void GpModel::validate() const {
  kernel.validate();
  if (!(noise_std > 0.0) || !std::isfinite(noise_std))
    throw std::invalid_argument("GpModel: noise_std must be > 0");
}

GpFit::GpFit(GpModel model, Eigen::MatrixXd train_inputs,
             Eigen::VectorXd train_targets)
    : model_(std::move(model)),
      train_inputs_(std::move(train_inputs)),
      train_targets_(std::move(train_targets)) {
  model_.validate();
  check_data(train_inputs_, train_targets_);
  Eigen::MatrixXd noisy = kernel_gram(train_inputs_, model_.kernel);
  noisy.diagonal().array() += model_.noise_std * model_.noise_std;
  chol_ = factorize_noisy_gram(std::move(noisy), model_);
  alpha_ = chol_.solve(train_targets_);
}

GpFit::Prediction GpFit::predict(const Eigen::MatrixXd& X_star) const {
  if (X_star.cols() != train_inputs_.cols())
    throw std::invalid_argument("gp_predict: input dimension mismatch");
  const Eigen::Index m = X_star.rows();
  const Eigen::Index n = train_inputs_.rows();
  const double s2 =
      model_.kernel.output_scale * model_.kernel.output_scale;
  const double inv_two_l2 = 1.0 / (2.0 * model_.kernel.length_scale *
                                   model_.kernel.length_scale);

  Eigen::MatrixXd cross(n, m);  // k(x_i, x*_j)
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      cross(i, j) =
          s2 * std::exp(-inv_two_l2 *
                        (train_inputs_.row(i) - X_star.row(j)).squaredNorm());

  Prediction pred;
  pred.mean = cross.transpose() * alpha_;
  const Eigen::MatrixXd solved = chol_.solve(cross);
  pred.variance.resize(m);
  const double noise_var = model_.noise_std * model_.noise_std;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double reduction = cross.col(j).dot(solved.col(j));
    pred.variance[j] = s2 - reduction + noise_var;
  }
  return pred;
}

double gp_log_marginal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const GpModel& model) {
  model.validate();
  check_data(X, y);
  Eigen::MatrixXd noisy = kernel_gram(X, model.kernel);
  noisy.diagonal().array() += model.noise_std * model.noise_std;
  const auto llt = factorize_noisy_gram(std::move(noisy), model);
  const Eigen::VectorXd alpha = llt.solve(y);
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi +
                 log_det_from_llt(llt, y.size()) + y.dot(alpha));
}

GpMarginalGradient gp_log_marginal_gradient(const Eigen::MatrixXd& X,
                                            const Eigen::VectorXd& y,
                                            const GpModel& model) {
  model.validate();
  check_data(X, y);
  const Eigen::Index n = y.size();
  const Eigen::MatrixXd d2 = squared_distances(X);
  const Eigen::MatrixXd gram = kernel_gram(X, model.kernel);
  Eigen::MatrixXd noisy = gram;
  noisy.diagonal().array() += model.noise_std * model.noise_std;
  const auto llt = factorize_noisy_gram(std::move(noisy), model);
  const Eigen::VectorXd alpha = llt.solve(y);

  GpMarginalGradient out;
  out.value = -0.5 * (static_cast<double>(n) * kLog2Pi +
                      log_det_from_llt(llt, n) + y.dot(alpha));

  // d logML / d theta = 1/2 tr((alpha alpha^T - Ky^{-1}) dK/dtheta)
  const Eigen::MatrixXd inner =
      alpha * alpha.transpose() -
      llt.solve(Eigen::MatrixXd::Identity(n, n));
  const double l = model.kernel.length_scale;
  const Eigen::MatrixXd dK_dl =
      gram.cwiseProduct(d2) / (l * l * l);
  const Eigen::MatrixXd dK_ds = (2.0 / model.kernel.output_scale) * gram;
  out.d_length_scale = 0.5 * inner.cwiseProduct(dK_dl).sum();
  out.d_output_scale = 0.5 * inner.cwiseProduct(dK_ds).sum();
  return out;
}

GpHyperFit gp_fit_hyperparams(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y,
                              const KernelParams& init, double noise_std,
                              const std::vector<double>& learning_rates,
                              int steps) {
  init.validate();
  check_data(X, y);
  if (steps < 1) throw std::invalid_argument("gp_fit: steps must be >= 1");
  if (learning_rates.empty())
    throw std::invalid_argument("gp_fit: need at least one learning rate");

  GpHyperFit fit;
  fit.candidates.reserve(learning_rates.size());
  for (double lr : learning_rates) {
    GpCandidateTrace trace;
    trace.learning_rate = lr;
    trace.objective.reserve(steps);
    double u_l = inv_softplus(init.length_scale);
    double u_s = inv_softplus(init.output_scale);
    double grad_norm = 0.0;
    for (int step = 0; step < steps; ++step) {
      GpModel model{{softplus(u_l), softplus(u_s)}, noise_std};
      GpMarginalGradient grad;
      try {
        grad = gp_log_marginal_gradient(X, y, model);
      } catch (const std::runtime_error&) {
        trace.failed = true;
        break;
      }
      if (!std::isfinite(grad.value)) {
        trace.failed = true;
        break;
      }
      trace.objective.push_back(grad.value);
      const double g_l = grad.d_length_scale * softplus_grad(u_l);
      const double g_s = grad.d_output_scale * softplus_grad(u_s);
      u_l += lr * g_l;
      u_s += lr * g_s;
      grad_norm = std::hypot(g_l, g_s);
      if (!std::isfinite(u_l) || !std::isfinite(u_s)) {
        trace.failed = true;
        break;
      }
    }
    if (!trace.failed && !trace.objective.empty()) {
      trace.final_params = {softplus(u_l), softplus(u_s)};
      try {
        trace.final_objective =
            gp_log_marginal(X, y, {trace.final_params, noise_std});
      } catch (const std::runtime_error&) {
        trace.failed = true;
      }
      trace.final_grad_norm = grad_norm;
      if (!std::isfinite(trace.final_objective)) trace.failed = true;
    } else {
      trace.failed = true;
    }
    fit.candidates.push_back(std::move(trace));
  }

  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fit.candidates.size(); ++i) {
    const auto& c = fit.candidates[i];
    if (!c.failed && c.final_objective > best) {
      best = c.final_objective;
      fit.selected = static_cast<int>(i);
    }
  }
  if (fit.selected < 0)
    throw std::runtime_error("gp_fit: all learning-rate candidates failed");
  fit.params = fit.candidates[fit.selected].final_params;
  fit.final_grad_norm = fit.candidates[fit.selected].final_grad_norm;
  return fit;
}

}  // namespace deelbo
