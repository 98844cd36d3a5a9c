#include "deelbo/engine.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "deelbo/rng.hpp"
#include "deelbo/unconstrained.hpp"

namespace deelbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Adam state over a flat parameter vector.
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int t = 0;

  explicit Adam(Eigen::Index n)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

  // Ascent step along grad.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
            double lr) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    params += lr * (m / c1).cwiseQuotient(
                       ((v / c2).cwiseSqrt().array() + eps).matrix());
  }
};

}  // namespace

double TemperedObjectiveConfig::resolve_kappa(Eigen::Index param_dim,
                                              Eigen::Index data_count) const {
  switch (kappa_policy) {
    case KappaPolicy::kStandard:
      return 1.0;
    case KappaPolicy::kDataEmphasized:
      return static_cast<double>(param_dim) /
             static_cast<double>(data_count);
    case KappaPolicy::kCustom:
      return custom_kappa;
  }
  return 1.0;
}

void TemperedObjectiveConfig::validate() const {
  if (sample_count_train < 1 || sample_count_eval < 1)
    throw std::invalid_argument("config: sample counts must be >= 1");
  if (kappa_policy == KappaPolicy::kCustom && !(custom_kappa > 0.0))
    throw std::invalid_argument("config: custom kappa must be > 0");
}

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,expected_loglik,kl,total,lambda,tau,sigma_q_sq\n";
  for (const auto& row : rows) {
    out << row.epoch << ',' << row.expected_loglik << ',' << row.kl << ','
        << row.total << ',' << row.lambda << ',' << row.tau << ','
        << row.sigma_q_sq << '\n';
  }
  return out.str();
}

double mc_expected_loglik(const IsotropicGaussianQ& q,
                          const LogDensityFn& loglik_fn, int sample_count,
                          std::uint64_t seed) {
  q.validate();
  if (sample_count < 1)
    throw std::invalid_argument("mc_expected_loglik: sample_count >= 1");
  Rng rng(seed);
  const double sigma = std::sqrt(q.variance);
  double sum = 0.0;
  for (int s = 0; s < sample_count; ++s) {
    const Eigen::VectorXd theta =
        q.mean + sigma * rng.normal_vector(q.mean.size());
    const double value = loglik_fn(theta);
    if (!std::isfinite(value))
      throw std::runtime_error("mc_expected_loglik: non-finite likelihood");
    sum += value;
  }
  return sum / static_cast<double>(sample_count);
}

double isotropic_logpdf(const IsotropicGaussianQ& q,
                        const Eigen::VectorXd& theta) {
  q.validate();
  const double d = static_cast<double>(theta.size());
  return -0.5 * (d * (kLog2Pi + std::log(q.variance)) +
                 (theta - q.mean).squaredNorm() / q.variance);
}

double iwelbo_estimate(const IsotropicGaussianQ& q,
                       const LogDensityFn& loglik_fn,
                       const LogDensityFn& prior_logpdf,
                       const LogDensityFn& q_logpdf, double kappa,
                       int sample_count, std::uint64_t seed) {
  q.validate();
  if (sample_count < 1)
    throw std::invalid_argument("iwelbo_estimate: sample_count >= 1");
  if (!(kappa > 0.0))
    throw std::invalid_argument("iwelbo_estimate: kappa must be > 0");
  Rng rng(seed);
  const double sigma = std::sqrt(q.variance);
  Eigen::VectorXd log_weights(sample_count);
  for (int s = 0; s < sample_count; ++s) {
    const Eigen::VectorXd theta =
        q.mean + sigma * rng.normal_vector(q.mean.size());
    log_weights[s] =
        kappa * loglik_fn(theta) + prior_logpdf(theta) - q_logpdf(theta);
  }
  const double max_w = log_weights.maxCoeff();
  if (!std::isfinite(max_w))
    throw std::runtime_error("iwelbo_estimate: degenerate weights");
  const double mean_exp =
      (log_weights.array() - max_w).exp().sum() /
      static_cast<double>(sample_count);
  return max_w + std::log(mean_exp);
}

ObjectiveGradient tempered_objective_gradient(const VariationalProblem& problem,
                                              const Eigen::VectorXd& mean,
                                              double u_sigma,
                                              const Eigen::VectorXd& eta,
                                              const PriorScales& scales,
                                              const Eigen::VectorXd& eps,
                                              double kappa) {
  const double sigma_q = softplus(u_sigma);
  const IsotropicGaussianQ q{mean, sigma_q * sigma_q};
  const Eigen::VectorXd theta = mean + sigma_q * eps;

  ObjectiveGradient out;
  Eigen::VectorXd grad_theta, kl_grad_mean;
  double kl_grad_var = 0.0;
  out.loglik = problem.loglik(theta, eta, &grad_theta,
                              eta.size() > 0 ? &out.d_eta : nullptr);
  out.kl = problem.kl(q, scales, &kl_grad_mean, &kl_grad_var);
  out.total = kappa * out.loglik - out.kl;
  out.d_mean = kappa * grad_theta - kl_grad_mean;
  const double d_sigma =
      kappa * grad_theta.dot(eps) - kl_grad_var * 2.0 * sigma_q;
  out.d_u_sigma = d_sigma * softplus_grad(u_sigma);
  if (eta.size() > 0) out.d_eta *= kappa;
  return out;
}

namespace {

CandidateResult run_candidate(const VariationalProblem& problem,
                              const TemperedObjectiveConfig& config,
                              double learning_rate, int epochs, double kappa,
                              std::uint64_t train_seed,
                              std::uint64_t eval_seed) {
  CandidateResult cand;
  cand.learning_rate = learning_rate;

  const Eigen::Index dim = problem.theta_dim();
  Eigen::VectorXd eta = problem.initial_eta();
  const Eigen::Index eta_dim = eta.size();
  PriorScales scales = problem.initial_scales();

  // Flat layout: [mean | u_sigma | eta].
  Adam adam(dim + 1 + eta_dim);
  Eigen::VectorXd params(dim + 1 + eta_dim);
  params.head(dim) = problem.initial_mean();
  params[dim] = inv_softplus(std::sqrt(problem.initial_variance()));
  params.tail(eta_dim) = eta;

  Rng train_rng(train_seed);
  cand.trace.reserve(epochs);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Reparameterized draws (one by default, per the training recipe);
    // the same eps stream is replayed by every candidate so learning
    // rates are compared on equal noise.
    ObjectiveGradient step;
    try {
      for (int s = 0; s < config.sample_count_train; ++s) {
        const Eigen::VectorXd eps = train_rng.normal_vector(dim);
        ObjectiveGradient draw = tempered_objective_gradient(
            problem, params.head(dim), params[dim], params.tail(eta_dim),
            scales, eps, kappa);
        if (s == 0) {
          step = std::move(draw);
        } else {
          step.loglik += draw.loglik;
          step.total += draw.total;
          step.d_mean += draw.d_mean;
          step.d_u_sigma += draw.d_u_sigma;
          if (eta_dim > 0) step.d_eta += draw.d_eta;
        }
      }
      if (config.sample_count_train > 1) {
        const double inv = 1.0 / config.sample_count_train;
        step.loglik *= inv;
        step.total *= inv;
        step.d_mean *= inv;
        step.d_u_sigma *= inv;
        if (eta_dim > 0) step.d_eta *= inv;
      }
    } catch (const std::exception& e) {
      cand.failed = true;
      cand.failure_reason = e.what();
      break;
    }
    if (!std::isfinite(step.total)) {
      cand.failed = true;
      cand.failure_reason = "non-finite objective";
      break;
    }

    const double sigma_q = softplus(params[dim]);
    cand.trace.push_back({epoch, step.loglik, step.kl, step.total,
                          scales.lambda, scales.tau, sigma_q * sigma_q});

    Eigen::VectorXd grad(dim + 1 + eta_dim);
    grad.head(dim) = step.d_mean;
    grad[dim] = step.d_u_sigma;
    if (eta_dim > 0) grad.tail(eta_dim) = step.d_eta;

    adam.step(params, grad, learning_rate);
    if (!params.allFinite()) {
      cand.failed = true;
      cand.failure_reason = "non-finite parameters";
      break;
    }

    if (problem.has_closed_form_updates()) {
      const double s = softplus(params[dim]);
      scales = problem.closed_form_update(
          IsotropicGaussianQ{params.head(dim), s * s}, scales);
    }
  }

  if (!cand.failed) {
    const double sigma_q = softplus(params[dim]);
    cand.q = IsotropicGaussianQ{params.head(dim), sigma_q * sigma_q};
    cand.eta = params.tail(eta_dim);
    cand.scales = scales;
    // Selection objective from the evaluation stream, disjoint from the
    // training stream.
    try {
      const Eigen::VectorXd eta_final = cand.eta;
      const double ell_eval = mc_expected_loglik(
          cand.q,
          [&](const Eigen::VectorXd& theta) {
            return problem.loglik(theta, eta_final, nullptr, nullptr);
          },
          config.sample_count_eval, eval_seed);
      const double kl_eval = problem.kl(cand.q, scales, nullptr, nullptr);
      cand.eval.expected_loglik = ell_eval;
      cand.eval.kl = kl_eval;
      cand.eval.kappa = kappa;
      cand.eval.total = kappa * ell_eval - kl_eval;
      if (!std::isfinite(cand.eval.total)) {
        cand.failed = true;
        cand.failure_reason = "non-finite evaluation objective";
      }
    } catch (const std::exception& e) {
      cand.failed = true;
      cand.failure_reason = e.what();
    }
  }
  return cand;
}

}  // namespace

EngineFitResult fit(const VariationalProblem& problem,
                    const TemperedObjectiveConfig& config,
                    const std::vector<double>& learning_rates, int epochs) {
  config.validate();
  if (learning_rates.empty())
    throw std::invalid_argument("fit: need at least one learning rate");
  if (epochs < 1) throw std::invalid_argument("fit: epochs must be >= 1");

  EngineFitResult result;
  result.kappa =
      config.resolve_kappa(problem.theta_dim(), problem.data_count());

  const std::uint64_t train_seed = stream_seed(config.seed, "mc-train");
  const std::uint64_t eval_seed = stream_seed(config.seed, "mc-eval");

  std::vector<std::future<CandidateResult>> futures;
  futures.reserve(learning_rates.size());
  for (double lr : learning_rates) {
    futures.push_back(std::async(std::launch::async, [&, lr] {
      return run_candidate(problem, config, lr, epochs, result.kappa,
                           train_seed, eval_seed);
    }));
  }
  result.candidates.reserve(learning_rates.size());
  for (auto& f : futures) result.candidates.push_back(f.get());

  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    if (!c.failed && c.eval.total > best) {
      best = c.eval.total;
      result.selected = static_cast<int>(i);
    }
  }
  if (result.selected < 0) {
    std::ostringstream msg;
    msg << "fit: all learning-rate candidates failed:";
    for (const auto& c : result.candidates)
      msg << " [lr=" << c.learning_rate << ": " << c.failure_reason << "]";
    throw std::runtime_error(msg.str());
  }
  return result;
}

}  // namespace deelbo
