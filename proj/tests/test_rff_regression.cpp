#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "deelbo/rff_regression.hpp"
#include "deelbo/rng.hpp"
#include "test_util.hpp"

using namespace deelbo;

namespace {

FeatureMatrix wrap(const Eigen::MatrixXd& values) {
  FeatureMatrix phi;
  phi.values = values;
  phi.entry_bound = values.size() > 0 ? values.cwiseAbs().maxCoeff() : 0.0;
  return phi;
}

FeatureMatrix random_phi(Eigen::Index n, Eigen::Index r, std::uint64_t seed,
                         double scale = 0.4) {
  Rng rng(seed);
  return wrap(scale * rng.normal_matrix(n, r));
}

}  // namespace

TEST_CASE("zero features recover the prior posterior") {
  const FeatureMatrix phi = wrap(Eigen::MatrixXd::Zero(4, 3));
  Eigen::VectorXd y(4);
  y << 1.0, -2.0, 0.5, 3.0;
  const FullRankPosterior post = exact_posterior(phi, y, 0.1);
  CHECK(post.mean.isZero(1e-15));
  CHECK(post.covariance.isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-14));
}

TEST_CASE("huge noise washes out the likelihood") {
  const FeatureMatrix phi = random_phi(5, 3, 1);
  Rng rng(2);
  const Eigen::VectorXd y = rng.normal_vector(5);
  const FullRankPosterior post = exact_posterior(phi, y, 1e6);
  CHECK(post.mean.cwiseAbs().maxCoeff() < 1e-6);
  CHECK((post.covariance - Eigen::MatrixXd::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-6);
}

TEST_CASE("posterior matches a dense linear-solve oracle") {
  const FeatureMatrix phi = random_phi(3, 2, 3);
  Eigen::VectorXd y(3);
  y << 0.7, -0.1, 1.4;
  const double noise = 0.3;
  const FullRankPosterior post = exact_posterior(phi, y, noise);

  const Eigen::MatrixXd precision =
      Eigen::MatrixXd::Identity(2, 2) +
      phi.values.transpose() * phi.values / (noise * noise);
  const Eigen::MatrixXd cov_oracle =
      Eigen::FullPivLU<Eigen::MatrixXd>(precision).inverse();
  const Eigen::VectorXd mean_oracle =
      cov_oracle * phi.values.transpose() * y / (noise * noise);
  CHECK((post.covariance - cov_oracle).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((post.mean - mean_oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("log marginal of a single zero observation is standard normal") {
  const FeatureMatrix phi = wrap(Eigen::MatrixXd::Zero(1, 2));
  Eigen::VectorXd y(1);
  y << 0.0;
  CHECK(log_marginal_likelihood(phi, y, 1.0) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-12));
}

TEST_CASE("log marginal matches a dense density oracle") {
  const FeatureMatrix phi = random_phi(5, 3, 4);
  Rng rng(5);
  const Eigen::VectorXd y = rng.normal_vector(5);
  const double noise = 0.25;
  const Eigen::MatrixXd cov =
      phi.values * phi.values.transpose() +
      noise * noise * Eigen::MatrixXd::Identity(5, 5);
  const double oracle =
      test_util::dense_mvn_logpdf(y, Eigen::VectorXd::Zero(5), cov);
  CHECK(log_marginal_likelihood(phi, y, noise) ==
        doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("full-rank elbo is tight exactly at the posterior") {
  const FeatureMatrix phi = random_phi(4, 3, 6);
  Rng rng(7);
  const Eigen::VectorXd y = rng.normal_vector(4);
  const double noise = 0.2;
  const FullRankPosterior post = exact_posterior(phi, y, noise);
  const double bound = elbo_fullrank(post.mean, post.covariance, phi, y, noise);
  const double evidence = log_marginal_likelihood(phi, y, noise);
  CHECK(bound == doctest::Approx(evidence).epsilon(1e-10));
}

TEST_CASE("full-rank elbo with prior q and zero features") {
  const Eigen::Index n = 4, r = 3;
  const FeatureMatrix phi = wrap(Eigen::MatrixXd::Zero(n, r));
  Rng rng(8);
  const Eigen::VectorXd y = rng.normal_vector(n);
  const double noise = 0.5;
  const double value = elbo_fullrank(Eigen::VectorXd::Zero(r),
                                     Eigen::MatrixXd::Identity(r, r), phi, y,
                                     noise);
  const double expected =
      -0.5 * (n * std::log(2.0 * M_PI * noise * noise) +
              y.squaredNorm() / (noise * noise));
  CHECK(value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bound property: every q sits at or below the evidence") {
  const FeatureMatrix phi = random_phi(3, 2, 9);
  Rng rng(10);
  const Eigen::VectorXd y = rng.normal_vector(3);
  const double noise = 0.3;
  const double evidence = log_marginal_likelihood(phi, y, noise);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd mu = rng.normal_vector(2);
    const Eigen::MatrixXd a = rng.normal_matrix(2, 2);
    const Eigen::MatrixXd sigma =
        a * a.transpose() + 0.05 * Eigen::MatrixXd::Identity(2, 2);
    const double bound = elbo_fullrank(mu, sigma, phi, y, noise);
    CHECK(evidence - bound >= -1e-9);
  }
  // A deliberately perturbed covariance sits strictly below.
  const FullRankPosterior post = exact_posterior(phi, y, noise);
  const Eigen::MatrixXd perturbed =
      post.covariance + 0.1 * Eigen::MatrixXd::Identity(2, 2);
  CHECK(elbo_fullrank(post.mean, perturbed, phi, y, noise) < evidence - 1e-6);
}

TEST_CASE("elbo_fullrank rejects a non-PD covariance") {
  const FeatureMatrix phi = random_phi(3, 2, 11);
  Eigen::VectorXd y(3);
  y << 1.0, 0.0, -1.0;
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
  CHECK_THROWS_AS(
      elbo_fullrank(Eigen::VectorXd::Zero(2), bad, phi, y, 0.3),
      std::invalid_argument);
}

TEST_CASE("optimal full-rank covariance equals the posterior covariance") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeatureMatrix phi = random_phi(8, 5, 100 + seed);
    Rng rng(200 + seed);
    const Eigen::VectorXd y = rng.normal_vector(8);
    const FullRankPosterior post = exact_posterior(phi, y, 0.2);
    const Eigen::MatrixXd optimal = optimal_fullrank_covariance(phi, 0.2);
    CHECK((optimal - post.covariance).cwiseAbs().maxCoeff() < 1e-12);
  }
  const FeatureMatrix zero = wrap(Eigen::MatrixXd::Zero(3, 4));
  CHECK(optimal_fullrank_covariance(zero, 0.5)
            .isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-14));
}

TEST_CASE("isotropic elbo at the prior has zero KL") {
  const Eigen::Index n = 6, r = 4;
  Rng rng(12);
  const Eigen::VectorXd y = rng.normal_vector(n);
  const double noise = 0.4;

  const IsotropicGaussianQ prior_q{Eigen::VectorXd::Zero(r), 1.0};
  const FeatureMatrix phi0 = wrap(Eigen::MatrixXd::Zero(n, r));
  const ObjectiveBreakdown at_zero =
      elbo_isotropic(prior_q, phi0, y, noise, 2.0);
  CHECK(at_zero.kl == doctest::Approx(0.0).epsilon(1e-14));
  const double expected_ell =
      -0.5 * (n * std::log(2.0 * M_PI * noise * noise) +
              y.squaredNorm() / (noise * noise));
  CHECK(at_zero.total == doctest::Approx(2.0 * expected_ell).epsilon(1e-12));

  // KL term vanishes at the prior for any features.
  const FeatureMatrix phi = random_phi(n, r, 13);
  CHECK(elbo_isotropic(prior_q, phi, y, noise, 1.0).kl ==
        doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("isotropic elbo matches a term-by-term oracle") {
  const Eigen::Index n = 20, r = 16;
  const FeatureMatrix phi = random_phi(n, r, 14);
  Rng rng(15);
  const Eigen::VectorXd y = rng.normal_vector(n);
  const double noise = 0.1;
  const double kappa = static_cast<double>(r) / static_cast<double>(n);
  IsotropicGaussianQ q{rng.normal_vector(r), 0.7};
  const ObjectiveBreakdown breakdown = elbo_isotropic(q, phi, y, noise, kappa);

  // Independent transcription of each term.
  double fit = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pred = phi.values.row(i).dot(q.mean);
    fit += (y[i] - pred) * (y[i] - pred);
  }
  double trace = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      trace += phi.values(i, j) * phi.values(i, j);
  const double ell_oracle =
      -0.5 * (n * std::log(2.0 * M_PI * noise * noise) +
              fit / (noise * noise) +
              q.variance * trace / (noise * noise));
  const double kl_oracle =
      0.5 * (q.variance * r + q.mean.squaredNorm() - r -
             r * std::log(q.variance));
  CHECK(breakdown.expected_loglik ==
        doctest::Approx(ell_oracle).epsilon(1e-11));
  CHECK(breakdown.kl == doctest::Approx(kl_oracle).epsilon(1e-11));
  CHECK(breakdown.total ==
        doctest::Approx(kappa * ell_oracle - kl_oracle).epsilon(1e-11));
  CHECK(breakdown.kl >= 0.0);
}

TEST_CASE("breakdown identity holds for random evaluations") {
  Rng rng(16);
  for (int trial = 0; trial < 25; ++trial) {
    const FeatureMatrix phi = random_phi(5, 3, 300 + trial);
    const Eigen::VectorXd y = rng.normal_vector(5);
    IsotropicGaussianQ q{rng.normal_vector(3), 0.1 + rng.uniform01()};
    const double kappa = 0.1 + 3.0 * rng.uniform01();
    const ObjectiveBreakdown b = elbo_isotropic(q, phi, y, 0.3, kappa);
    CHECK(b.total ==
          doctest::Approx(b.kappa * b.expected_loglik - b.kl).epsilon(1e-12));
    CHECK(b.kl >= -1e-9);
  }
}

TEST_CASE("optimal isotropic variance closed form") {
  const FeatureMatrix zero = wrap(Eigen::MatrixXd::Zero(5, 8));
  CHECK(optimal_isotropic_variance(zero, 0.3, 1.0) == doctest::Approx(1.0));
  CHECK(optimal_isotropic_variance(zero, 0.3, 77.0) == doctest::Approx(1.0));

  // tr(Phi Phi^T) = R sigma_y^2 at kappa = 1 gives exactly 1/2.
  const Eigen::Index r = 4;
  const double noise = 0.7;
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(2, r);
  for (Eigen::Index j = 0; j < r; ++j) values(0, j) = noise;
  CHECK(optimal_isotropic_variance(wrap(values), noise, 1.0) ==
        doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("stationarity of the isotropic optimum in the shared variance") {
  const Eigen::Index n = 12, r = 32;
  const FeatureMatrix phi = random_phi(n, r, 17, 0.2);
  Rng rng(18);
  const Eigen::VectorXd y = rng.normal_vector(n);
  const Eigen::VectorXd mean = rng.normal_vector(r);
  const double noise = 0.3;
  for (double kappa :
       {1.0, static_cast<double>(r) / static_cast<double>(n)}) {
    const double optimum = optimal_isotropic_variance(phi, noise, kappa);
    auto objective = [&](double variance) {
      return elbo_isotropic({mean, variance}, phi, y, noise, kappa).total;
    };
    // Step scaled to the optimum: the KL curvature grows like 1/v^3.
    const double fd =
        test_util::central_diff(objective, optimum, 1e-5 * optimum);
    CHECK(std::abs(fd) < 1e-6);
  }
}

TEST_CASE("predictive posterior from isotropic q") {
  const Eigen::Index r = 6;
  Rng rng(19);
  const FeatureMatrix phi_star = random_phi(5, r, 19);
  const double noise = 0.2;

  SUBCASE("zero mean gives zero predictions") {
    const IsotropicGaussianQ q{Eigen::VectorXd::Zero(r), 0.5};
    const Predictive pred = predictive_posterior(q, phi_star, noise);
    CHECK(pred.mean.isZero(0.0));
    CHECK((pred.variance.array() > noise * noise).all());
  }
  SUBCASE("zero features give exactly the noise variance") {
    const IsotropicGaussianQ q{rng.normal_vector(r), 0.5};
    const FeatureMatrix zero = wrap(Eigen::MatrixXd::Zero(3, r));
    const Predictive pred = predictive_posterior(q, zero, noise);
    CHECK(pred.mean.isZero(0.0));
    for (Eigen::Index i = 0; i < 3; ++i)
      CHECK(pred.variance[i] == doctest::Approx(noise * noise));
  }
  SUBCASE("isotropic and full-rank forms agree when Sigma = s I") {
    const IsotropicGaussianQ q{rng.normal_vector(r), 0.37};
    FullRankPosterior full;
    full.mean = q.mean;
    full.covariance = q.variance * Eigen::MatrixXd::Identity(r, r);
    const Predictive a = predictive_posterior(q, phi_star, noise);
    const Predictive b = predictive_posterior(full, phi_star, noise);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("input validation") {
  const FeatureMatrix phi = random_phi(3, 2, 20);
  Eigen::VectorXd y(4);
  y.setZero();
  CHECK_THROWS_AS(exact_posterior(phi, y, 0.1), std::invalid_argument);
  Eigen::VectorXd y3 = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(exact_posterior(phi, y3, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(
      elbo_isotropic({Eigen::VectorXd::Zero(2), 0.0}, phi, y3, 0.1, 1.0),
      std::invalid_argument);
  CHECK_THROWS_AS(
      elbo_isotropic({Eigen::VectorXd::Zero(2), 1.0}, phi, y3, 0.1, 0.0),
      std::invalid_argument);
}
