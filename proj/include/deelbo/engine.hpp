#ifndef DEELBO_ENGINE_HPP
#define DEELBO_ENGINE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deelbo/rff_regression.hpp"

namespace deelbo {

// Resolves the likelihood upweighting factor kappa: 1 for the standard
// ELBo, D/N for the data-emphasized variant, or a caller-supplied value.
struct TemperedObjectiveConfig {
  enum class KappaPolicy { kStandard, kDataEmphasized, kCustom };

  KappaPolicy kappa_policy = KappaPolicy::kDataEmphasized;
  double custom_kappa = 1.0;
  int sample_count_train = 1;
  int sample_count_eval = 10;
  std::uint64_t seed = 0;

  double resolve_kappa(Eigen::Index param_dim, Eigen::Index data_count) const;
  void validate() const;
};

// One logged training epoch. total = kappa * expected_loglik - kl always.
struct TraceRow {
  int epoch = 0;
  double expected_loglik = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double lambda = 1.0;
  double tau = 1.0;
  double sigma_q_sq = 1.0;
};

// CSV with header: epoch,expected_loglik,kl,total,lambda,tau,sigma_q_sq
std::string trace_to_csv(const std::vector<TraceRow>& rows);

using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;

// Average over sample_count reparameterized draws theta = mean + sigma_q
// * eps of loglik_fn(theta). Deterministic given seed.
double mc_expected_loglik(const IsotropicGaussianQ& q,
                          const LogDensityFn& loglik_fn, int sample_count,
                          std::uint64_t seed);

// Importance-weighted bound: log-mean-exp over draws of
//   kappa * loglik(theta) + log p(theta) - log q(theta),
// stabilized by max subtraction. kappa = 1 gives IWELBo.
double iwelbo_estimate(const IsotropicGaussianQ& q,
                       const LogDensityFn& loglik_fn,
                       const LogDensityFn& prior_logpdf,
                       const LogDensityFn& q_logpdf, double kappa,
                       int sample_count, std::uint64_t seed);

// log q(theta) for an isotropic Gaussian, provided for iwelbo callers.
double isotropic_logpdf(const IsotropicGaussianQ& q,
                        const Eigen::VectorXd& theta);

// Prior scale hyperparameters owned by the training loop; models with
// fixed unit priors leave both at 1.
struct PriorScales {
  double lambda = 1.0;
  double tau = 1.0;
};

// A model fitted by the trainer. Implementations are immutable and
// thread-safe; all mutable optimization state (q, eta, prior scales)
// lives in the loop.
class VariationalProblem {
 public:
  virtual ~VariationalProblem() = default;

  virtual Eigen::Index theta_dim() const = 0;
  virtual Eigen::Index data_count() const = 0;

  virtual Eigen::VectorXd initial_mean() const = 0;
  virtual double initial_variance() const { return 1.0; }

  // Gradient-learned hyperparameters, softplus-unconstrained. Empty when
  // the model has none.
  virtual Eigen::VectorXd initial_eta() const {
    return Eigen::VectorXd(0);
  }

  // sum_i log p(y_i | theta, eta). Gradient outputs are optional.
  virtual double loglik(const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& eta,
                        Eigen::VectorXd* grad_theta,
                        Eigen::VectorXd* grad_eta) const = 0;

  // KL(q || prior) at the given prior scales, with gradients with
  // respect to the q mean and shared variance.
  virtual double kl(const IsotropicGaussianQ& q, const PriorScales& scales,
                    Eigen::VectorXd* grad_mean,
                    double* grad_variance) const = 0;

  virtual bool has_closed_form_updates() const { return false; }
  virtual PriorScales initial_scales() const { return {}; }
  virtual PriorScales closed_form_update(const IsotropicGaussianQ& /*q*/,
                                         const PriorScales& scales) const {
    return scales;
  }
};

// Single-draw tempered objective kappa * loglik(mean + softplus(u_sigma)
// * eps) - KL(q), with gradients with respect to the q mean, the
// unconstrained scale u_sigma, and eta. This is the quantity each
// training epoch ascends; it is deterministic given eps.
struct ObjectiveGradient {
  double loglik = 0.0;
  double kl = 0.0;
  double total = 0.0;
  Eigen::VectorXd d_mean;
  double d_u_sigma = 0.0;
  Eigen::VectorXd d_eta;
};

ObjectiveGradient tempered_objective_gradient(const VariationalProblem& problem,
                                              const Eigen::VectorXd& mean,
                                              double u_sigma,
                                              const Eigen::VectorXd& eta,
                                              const PriorScales& scales,
                                              const Eigen::VectorXd& eps,
                                              double kappa);

// One learning-rate candidate's outcome.
struct CandidateResult {
  double learning_rate = 0.0;
  IsotropicGaussianQ q;
  Eigen::VectorXd eta;  // unconstrained values; empty if none
  PriorScales scales;
  std::vector<TraceRow> trace;
  ObjectiveBreakdown eval;  // estimated with sample_count_eval draws
  bool failed = false;
  std::string failure_reason;
};

struct EngineFitResult {
  int selected = -1;
  double kappa = 1.0;
  std::vector<CandidateResult> candidates;

  const CandidateResult& winner() const { return candidates.at(selected); }
};

// One training run per learning rate (each candidate replays the same
// seeded sample streams, so equal rates give equal results), then
// selection by the eval-sample objective estimate. Throws if every
// candidate fails.
EngineFitResult fit(const VariationalProblem& problem,
                    const TemperedObjectiveConfig& config,
                    const std::vector<double>& learning_rates, int epochs);

}  // namespace deelbo

#endif  // DEELBO_ENGINE_HPP
