#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "deelbo/lowrank.hpp"
#include "deelbo/rng.hpp"
#include "test_util.hpp"

using namespace deelbo;

TEST_CASE("zero low-rank part reduces to the scaled diagonal") {
  Eigen::VectorXd diag(3);
  diag << 1.0, 2.0, 4.0;
  const Eigen::MatrixXd q0 = Eigen::MatrixXd::Zero(3, 2);
  // Sigma = diag/2, so tr(Sigma^{-1}) = sum 2/d_i.
  CHECK(lowrank_trace_inverse(diag, q0) ==
        doctest::Approx(2.0 / 1.0 + 2.0 / 2.0 + 2.0 / 4.0).epsilon(1e-13));
  Eigen::VectorXd delta(3);
  delta << 1.0, -1.0, 2.0;
  CHECK(lowrank_mahalanobis(delta, diag, q0) ==
        doctest::Approx(2.0 * 1.0 / 1.0 + 2.0 * 1.0 / 2.0 +
                        2.0 * 4.0 / 4.0)
            .epsilon(1e-13));
  // diag = 2 * ones makes Sigma the identity.
  CHECK(lowrank_logdet(Eigen::VectorXd::Constant(5, 2.0),
                       Eigen::MatrixXd::Zero(5, 3)) ==
        doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("scalar case reduces to plain arithmetic") {
  // F = 1, K = 2: Sigma = (2 + (1 + 1) / 1) / 2 = 2.
  Eigen::VectorXd diag(1);
  diag << 2.0;
  Eigen::MatrixXd q(1, 2);
  q << 1.0, 1.0;
  CHECK(lowrank_trace_inverse(diag, q) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(lowrank_logdet(diag, q) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-13));
  Eigen::VectorXd delta(1);
  delta << 3.0;
  CHECK(lowrank_mahalanobis(delta, diag, q) ==
        doctest::Approx(9.0 / 2.0).epsilon(1e-13));
}

TEST_CASE("zero displacement has zero Mahalanobis distance") {
  Rng rng(3);
  Eigen::VectorXd diag = rng.normal_vector(6).cwiseAbs().array() + 0.5;
  const Eigen::MatrixXd q = rng.normal_matrix(6, 3);
  CHECK(lowrank_mahalanobis(Eigen::VectorXd::Zero(6), diag, q) ==
        doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("woodbury paths match dense oracles over random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index f = 2 + static_cast<Eigen::Index>(rng.below(49));
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.below(4));
    Eigen::VectorXd diag =
        (rng.normal_vector(f).cwiseAbs().array() + 0.2).matrix();
    const Eigen::MatrixXd q = rng.normal_matrix(f, k);
    const Eigen::MatrixXd dense = test_util::dense_lowrank_cov(diag, q);
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(dense);
    const Eigen::MatrixXd inv = lu.inverse();

    const double trace_oracle = inv.trace();
    CHECK(std::abs(lowrank_trace_inverse(diag, q) - trace_oracle) <=
          1e-10 * std::abs(trace_oracle));

    const Eigen::VectorXd delta = rng.normal_vector(f);
    const double maha_oracle = delta.dot(inv * delta);
    CHECK(std::abs(lowrank_mahalanobis(delta, diag, q) - maha_oracle) <=
          1e-10 * std::abs(maha_oracle));
    CHECK(lowrank_mahalanobis(delta, diag, q) >= 0.0);

    const double logdet_oracle = std::log(lu.determinant());
    CHECK(std::abs(lowrank_logdet(diag, q) - logdet_oracle) <= 1e-8);

    const Eigen::VectorXd solve_oracle = inv * delta;
    CHECK((lowrank_solve(delta, diag, q) - solve_oracle)
              .cwiseAbs()
              .maxCoeff() <= 1e-8 * solve_oracle.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("input validation") {
  Eigen::VectorXd diag(3);
  diag << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(lowrank_trace_inverse(diag, Eigen::MatrixXd::Zero(3, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(lowrank_trace_inverse(diag, Eigen::MatrixXd::Zero(2, 2)),
                  std::invalid_argument);
  Eigen::VectorXd bad(3);
  bad << 1.0, -2.0, 3.0;
  CHECK_THROWS_AS(lowrank_trace_inverse(bad, Eigen::MatrixXd::Zero(3, 2)),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      lowrank_mahalanobis(Eigen::VectorXd::Zero(2), diag,
                          Eigen::MatrixXd::Zero(3, 2)),
      std::invalid_argument);
}
