#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "deelbo/engine.hpp"
#include "deelbo/feature_map.hpp"
#include "deelbo/problems.hpp"
#include "deelbo/rng.hpp"
#include "deelbo/unconstrained.hpp"
#include "test_util.hpp"

using namespace deelbo;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Conjugate scalar-mean instance: theta ~ N(0, 1), y_i ~ N(theta,
// noise^2). Exact evidence and posterior are closed form.
struct ConjugateInstance {
  Eigen::VectorXd y;
  double noise = 0.5;

  double loglik(const Eigen::VectorXd& theta) const {
    const double noise_var = noise * noise;
    return -0.5 * (y.size() * (kLog2Pi + std::log(noise_var)) +
                   (y.array() - theta[0]).square().sum() / noise_var);
  }
  double evidence() const {
    const Eigen::MatrixXd cov =
        Eigen::MatrixXd::Ones(y.size(), y.size()) +
        noise * noise *
            Eigen::MatrixXd::Identity(y.size(), y.size());
    return test_util::dense_mvn_logpdf(y, Eigen::VectorXd::Zero(y.size()),
                                       cov);
  }
  double posterior_mean() const {
    const double n = static_cast<double>(y.size());
    return y.sum() / (noise * noise) / (n / (noise * noise) + 1.0);
  }
  double posterior_variance() const {
    const double n = static_cast<double>(y.size());
    return 1.0 / (n / (noise * noise) + 1.0);
  }
};

ConjugateInstance make_conjugate(std::uint64_t seed) {
  Rng rng(seed);
  ConjugateInstance inst;
  inst.y = 0.8 + 0.5 * rng.normal_vector(6).array();
  return inst;
}

RffRegressionProblem toy_problem(std::uint64_t seed, Eigen::Index r = 64) {
  Rng rng(seed);
  Eigen::MatrixXd X(12, 1);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) {
    X(i, 0) = -2.0 + 4.0 * rng.uniform01();
    y[i] = std::sin(3.0 * X(i, 0)) + 0.1 * rng.normal();
  }
  return RffRegressionProblem(sample_feature_map(1, r, seed), {1.0, 1.0},
                              0.1, X, y);
}

}  // namespace

TEST_CASE("trace csv schema") {
  std::vector<TraceRow> rows = {{0, -1.5, 0.25, -1.75, 1.0, 2.0, 0.5}};
  const std::string csv = trace_to_csv(rows);
  CHECK(csv.rfind("epoch,expected_loglik,kl,total,lambda,tau,sigma_q_sq\n",
                  0) == 0);
  CHECK(csv.find("0,-1.5,0.25,-1.75,1,2,0.5\n") != std::string::npos);
}

TEST_CASE("mc expected loglik reduces to the plug-in value as q collapses") {
  const ConjugateInstance inst = make_conjugate(1);
  const IsotropicGaussianQ q{Eigen::VectorXd::Constant(1, 0.3), 1e-24};
  const double mc = mc_expected_loglik(
      q, [&](const Eigen::VectorXd& t) { return inst.loglik(t); }, 16, 7);
  CHECK(mc == doctest::Approx(inst.loglik(q.mean)).epsilon(1e-6));
}

TEST_CASE("mc expected loglik is reproducible for a fixed seed") {
  const ConjugateInstance inst = make_conjugate(2);
  const IsotropicGaussianQ q{Eigen::VectorXd::Zero(1), 0.5};
  auto fn = [&](const Eigen::VectorXd& t) { return inst.loglik(t); };
  CHECK(mc_expected_loglik(q, fn, 1, 11) == mc_expected_loglik(q, fn, 1, 11));
  CHECK(mc_expected_loglik(q, fn, 1, 11) != mc_expected_loglik(q, fn, 1, 12));
}

TEST_CASE("mc expected loglik matches the closed form within 3 SE") {
  // Gaussian-likelihood case where the expectation is analytic.
  const RffRegressionProblem problem = toy_problem(3);
  const Eigen::VectorXd eta = problem.initial_eta();
  Rng rng(4);
  const IsotropicGaussianQ q{0.3 * rng.normal_vector(problem.theta_dim()),
                             0.4};
  const FeatureMatrix phi =
      featurize(problem.map(), problem.kernel_from_eta(eta),
                problem.inputs());
  const double closed =
      elbo_isotropic(q, phi, problem.targets(), problem.noise_std(), 1.0)
          .expected_loglik;

  const int replicates = 64;
  Eigen::VectorXd estimates(replicates);
  for (int i = 0; i < replicates; ++i)
    estimates[i] = mc_expected_loglik(
        q,
        [&](const Eigen::VectorXd& theta) {
          return problem.loglik(theta, eta, nullptr, nullptr);
        },
        1024, 1000 + i);
  const double mean = estimates.mean();
  const double sd = std::sqrt((estimates.array() - mean).square().sum() /
                              (replicates - 1));
  const double se = sd / std::sqrt(static_cast<double>(replicates));
  CHECK(std::abs(mean - closed) <= 3.0 * se);
}

TEST_CASE("mc expected loglik is unbiased over seeds") {
  const ConjugateInstance inst = make_conjugate(5);
  const IsotropicGaussianQ q{Eigen::VectorXd::Constant(1, 0.2), 0.3};
  // Analytic E_q[loglik]: quadratic in theta, expectation in closed form.
  const double noise_var = inst.noise * inst.noise;
  const double n = static_cast<double>(inst.y.size());
  const double closed =
      -0.5 * (n * (kLog2Pi + std::log(noise_var)) +
              ((inst.y.array() - q.mean[0]).square().sum() +
               n * q.variance) /
                  noise_var);
  const int seeds = 200;
  Eigen::VectorXd estimates(seeds);
  for (int i = 0; i < seeds; ++i)
    estimates[i] = mc_expected_loglik(
        q, [&](const Eigen::VectorXd& t) { return inst.loglik(t); }, 8,
        500 + i);
  const double mean = estimates.mean();
  const double sd = std::sqrt((estimates.array() - mean).square().sum() /
                              (seeds - 1));
  const double se = sd / std::sqrt(static_cast<double>(seeds));
  CHECK(std::abs(mean - closed) <= 4.0 * se);
}

TEST_CASE("iwelbo with one sample equals the single-sample elbo estimate") {
  const ConjugateInstance inst = make_conjugate(6);
  const IsotropicGaussianQ q{Eigen::VectorXd::Constant(1, 0.1), 0.7};
  auto loglik = [&](const Eigen::VectorXd& t) { return inst.loglik(t); };
  auto prior = [](const Eigen::VectorXd& t) {
    return -0.5 * (kLog2Pi + t.squaredNorm());
  };
  auto q_pdf = [&](const Eigen::VectorXd& t) {
    return isotropic_logpdf(q, t);
  };
  const double kappa = 1.4;
  const double iw = iwelbo_estimate(q, loglik, prior, q_pdf, kappa, 1, 21);
  // Reproduce the same single draw.
  Rng rng(21);
  const Eigen::VectorXd theta =
      q.mean + std::sqrt(q.variance) * rng.normal_vector(1);
  CHECK(iw == doctest::Approx(kappa * loglik(theta) + prior(theta) -
                              q_pdf(theta))
                  .epsilon(1e-12));
}

TEST_CASE("iwelbo with q equal to the prior and constant likelihood") {
  const Eigen::Index d = 3;
  const IsotropicGaussianQ q{Eigen::VectorXd::Zero(d), 1.0};
  auto prior = [](const Eigen::VectorXd& t) {
    return -0.5 * (3.0 * kLog2Pi + t.squaredNorm());
  };
  auto q_pdf = [&](const Eigen::VectorXd& t) {
    return isotropic_logpdf(q, t);
  };
  const double log_c = -0.35;
  const int n = 5;
  auto loglik = [&](const Eigen::VectorXd&) { return n * log_c; };
  for (int s : {1, 4, 64}) {
    CHECK(iwelbo_estimate(q, loglik, prior, q_pdf, 2.0, s, 33) ==
          doctest::Approx(2.0 * n * log_c).epsilon(1e-12));
  }
}

TEST_CASE("iwelbo approaches the exact evidence on a conjugate instance") {
  const ConjugateInstance inst = make_conjugate(7);
  // q close to the true posterior, slightly inflated.
  const IsotropicGaussianQ q{
      Eigen::VectorXd::Constant(1, inst.posterior_mean()),
      1.3 * inst.posterior_variance()};
  auto loglik = [&](const Eigen::VectorXd& t) { return inst.loglik(t); };
  auto prior = [](const Eigen::VectorXd& t) {
    return -0.5 * (kLog2Pi + t.squaredNorm());
  };
  auto q_pdf = [&](const Eigen::VectorXd& t) {
    return isotropic_logpdf(q, t);
  };
  const int replicates = 20;
  Eigen::VectorXd estimates(replicates);
  for (int i = 0; i < replicates; ++i)
    estimates[i] =
        iwelbo_estimate(q, loglik, prior, q_pdf, 1.0, 4096, 900 + i);
  const double mean = estimates.mean();
  const double sd = std::sqrt((estimates.array() - mean).square().sum() /
                              (replicates - 1));
  const double se = sd / std::sqrt(static_cast<double>(replicates));
  CHECK(std::abs(mean - inst.evidence()) <= 3.0 * se);

  // And it dominates the mean single-sample ELBo estimate.
  const int seeds = 200;
  double elbo_sum = 0.0;
  for (int i = 0; i < seeds; ++i)
    elbo_sum +=
        iwelbo_estimate(q, loglik, prior, q_pdf, 1.0, 1, 2000 + i);
  CHECK(mean >= elbo_sum / seeds);
}

TEST_CASE("single-draw objective gradients match finite differences") {
  // Deterministic path: eps fixed, so the objective is a smooth function
  // of (mean, u_sigma, eta).
  const RffRegressionProblem problem = toy_problem(8, 16);
  Rng rng(9);
  const Eigen::VectorXd mean = 0.2 * rng.normal_vector(16);
  const double u_sigma = inv_softplus(0.8);
  Eigen::VectorXd eta = problem.initial_eta();
  eta[0] += 0.3;
  const Eigen::VectorXd eps = rng.normal_vector(16);
  const PriorScales scales;
  const double kappa = 16.0 / 12.0;

  const ObjectiveGradient grad = tempered_objective_gradient(
      problem, mean, u_sigma, eta, scales, eps, kappa);

  auto objective = [&](const Eigen::VectorXd& m, double u,
                       const Eigen::VectorXd& e) {
    const double sigma = softplus(u);
    const IsotropicGaussianQ q{m, sigma * sigma};
    const double ell =
        problem.loglik(m + sigma * eps, e, nullptr, nullptr);
    const double kl = problem.kl(q, scales, nullptr, nullptr);
    return kappa * ell - kl;
  };

  const double h = 1e-6;
  for (Eigen::Index i : {0, 5, 15}) {
    Eigen::VectorXd up = mean, dn = mean;
    up[i] += h;
    dn[i] -= h;
    const double fd =
        (objective(up, u_sigma, eta) - objective(dn, u_sigma, eta)) /
        (2.0 * h);
    CHECK(grad.d_mean[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  const double fd_sigma = (objective(mean, u_sigma + h, eta) -
                           objective(mean, u_sigma - h, eta)) /
                          (2.0 * h);
  CHECK(grad.d_u_sigma == doctest::Approx(fd_sigma).epsilon(1e-5));
  for (Eigen::Index i : {0, 1}) {
    Eigen::VectorXd up = eta, dn = eta;
    up[i] += h;
    dn[i] -= h;
    const double fd =
        (objective(mean, u_sigma, up) - objective(mean, u_sigma, dn)) /
        (2.0 * h);
    CHECK(grad.d_eta[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("reparameterized gradients are unbiased on a quadratic toy") {
  // loglik(theta) = -0.5 theta^T H theta + c^T theta; its expectation
  // under q has an analytic gradient.
  const Eigen::Index d = 4;
  Rng rng(10);
  const Eigen::MatrixXd a = rng.normal_matrix(d, d);
  const Eigen::MatrixXd hess =
      a * a.transpose() / d + Eigen::MatrixXd::Identity(d, d);
  const Eigen::VectorXd c = rng.normal_vector(d);

  class QuadraticProblem final : public VariationalProblem {
   public:
    QuadraticProblem(Eigen::MatrixXd h, Eigen::VectorXd c)
        : h_(std::move(h)), c_(std::move(c)) {}
    Eigen::Index theta_dim() const override { return c_.size(); }
    Eigen::Index data_count() const override { return 1; }
    Eigen::VectorXd initial_mean() const override {
      return Eigen::VectorXd::Zero(c_.size());
    }
    double loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd&,
                  Eigen::VectorXd* grad_theta,
                  Eigen::VectorXd*) const override {
      if (grad_theta != nullptr) *grad_theta = -(h_ * theta) + c_;
      return -0.5 * theta.dot(h_ * theta) + c_.dot(theta);
    }
    double kl(const IsotropicGaussianQ& q, const PriorScales&,
              Eigen::VectorXd* grad_mean,
              double* grad_variance) const override {
      // Standard-normal prior.
      const double dd = static_cast<double>(q.mean.size());
      if (grad_mean != nullptr) *grad_mean = q.mean;
      if (grad_variance != nullptr)
        *grad_variance = 0.5 * (dd - dd / q.variance);
      return 0.5 * (q.variance * dd + q.mean.squaredNorm() - dd -
                    dd * std::log(q.variance));
    }

   private:
    Eigen::MatrixXd h_;
    Eigen::VectorXd c_;
  };
  const QuadraticProblem problem(hess, c);

  const Eigen::VectorXd mean = rng.normal_vector(d);
  const double sigma = 0.6;
  const double u_sigma = inv_softplus(sigma);
  const PriorScales scales;
  const double kappa = 1.0;

  // Analytic gradient of E_q[kappa loglik - KL]:
  //   d/dmean = -H mean + c - mean,
  //   d/dsigma = -sigma tr(H) - (d sigma - d / sigma), chained to u.
  const Eigen::VectorXd d_mean_exact = -(hess * mean) + c - mean;
  const double dd = static_cast<double>(d);
  const double d_sigma_exact =
      (-sigma * hess.trace() - (dd * sigma - dd / sigma)) *
      softplus_grad(u_sigma);

  const int seeds = 200, samples = 256;
  Eigen::MatrixXd mean_draws(seeds, d);
  Eigen::VectorXd sigma_draws(seeds);
  for (int s = 0; s < seeds; ++s) {
    Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(d);
    double sigma_acc = 0.0;
    Rng eps_rng(4000 + s);
    for (int i = 0; i < samples; ++i) {
      const ObjectiveGradient g = tempered_objective_gradient(
          problem, mean, u_sigma, {}, scales, eps_rng.normal_vector(d),
          kappa);
      mean_acc += g.d_mean;
      sigma_acc += g.d_u_sigma;
    }
    mean_draws.row(s) = mean_acc / samples;
    sigma_draws[s] = sigma_acc / samples;
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    const double m = mean_draws.col(i).mean();
    const double sd = std::sqrt(
        (mean_draws.col(i).array() - m).square().sum() / (seeds - 1));
    const double se = sd / std::sqrt(static_cast<double>(seeds));
    CHECK(std::abs(m - d_mean_exact[i]) <= 4.0 * se);
  }
  const double m = sigma_draws.mean();
  const double sd =
      std::sqrt((sigma_draws.array() - m).square().sum() / (seeds - 1));
  const double se = sd / std::sqrt(static_cast<double>(seeds));
  CHECK(std::abs(m - d_sigma_exact) <= 4.0 * se);
}

TEST_CASE("fit with learning rate zero leaves psi unchanged") {
  const RffRegressionProblem problem = toy_problem(11, 16);
  TemperedObjectiveConfig config;
  config.kappa_policy = TemperedObjectiveConfig::KappaPolicy::kStandard;
  config.seed = 5;
  const EngineFitResult result = fit(problem, config, {0.0}, 10);
  const CandidateResult& cand = result.winner();
  CHECK(cand.q.mean.isZero(0.0));
  CHECK(cand.q.variance == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identical learning rates give identical candidates") {
  const RffRegressionProblem problem = toy_problem(12, 16);
  TemperedObjectiveConfig config;
  config.seed = 9;
  const EngineFitResult result = fit(problem, config, {0.01, 0.01}, 50);
  const CandidateResult& a = result.candidates[0];
  const CandidateResult& b = result.candidates[1];
  CHECK(a.q.mean == b.q.mean);
  CHECK(a.q.variance == b.q.variance);
  CHECK(a.eta == b.eta);
  CHECK(a.eval.total == b.eval.total);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i)
    CHECK(a.trace[i].total == b.trace[i].total);
}

TEST_CASE("trace rows satisfy the breakdown identity") {
  const RffRegressionProblem problem = toy_problem(13, 32);
  TemperedObjectiveConfig config;
  config.seed = 3;
  const EngineFitResult result = fit(problem, config, {0.05}, 100);
  for (const TraceRow& row : result.winner().trace)
    CHECK(row.total ==
          doctest::Approx(result.kappa * row.expected_loglik - row.kl)
              .epsilon(1e-12));
}

TEST_CASE("data-emphasized fit beats the standard elbo fit on train rmse") {
  const RffRegressionProblem problem = toy_problem(14, 256);
  auto train_rmse = [&](TemperedObjectiveConfig::KappaPolicy policy) {
    TemperedObjectiveConfig config;
    config.kappa_policy = policy;
    config.seed = 21;
    const EngineFitResult result =
        fit(problem, config, {0.1, 0.01}, 800);
    const CandidateResult& winner = result.winner();
    const FeatureMatrix phi =
        featurize(problem.map(), problem.kernel_from_eta(winner.eta),
                  problem.inputs());
    return std::sqrt((phi.values * winner.q.mean - problem.targets())
                         .squaredNorm() /
                     static_cast<double>(problem.targets().size()));
  };
  const double rmse_de =
      train_rmse(TemperedObjectiveConfig::KappaPolicy::kDataEmphasized);
  const double rmse_standard =
      train_rmse(TemperedObjectiveConfig::KappaPolicy::kStandard);
  CHECK(rmse_de < rmse_standard);
}

TEST_CASE("fit propagates total failure with per-candidate diagnostics") {
  const RffRegressionProblem problem = toy_problem(15, 8);
  TemperedObjectiveConfig config;
  config.seed = 2;
  CHECK_THROWS_AS(fit(problem, config, {1e9}, 30), std::runtime_error);
}

TEST_CASE("config validation") {
  TemperedObjectiveConfig config;
  config.sample_count_train = 0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  TemperedObjectiveConfig custom;
  custom.kappa_policy = TemperedObjectiveConfig::KappaPolicy::kCustom;
  custom.custom_kappa = -1.0;
  CHECK_THROWS_AS(custom.validate(), std::invalid_argument);
  TemperedObjectiveConfig ok;
  CHECK(ok.resolve_kappa(100, 20) == doctest::Approx(5.0));
  ok.kappa_policy = TemperedObjectiveConfig::KappaPolicy::kStandard;
  CHECK(ok.resolve_kappa(100, 20) == doctest::Approx(1.0));
}
