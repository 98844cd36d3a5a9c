#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "deelbo/kernel.hpp"
#include "deelbo/rng.hpp"

using namespace deelbo;

TEST_CASE("rbf kernel at zero distance is the squared output scale") {
  Eigen::VectorXd x(2);
  x << 0.3, -1.2;
  CHECK(rbf_kernel(x, x, {0.7, 2.5}) == doctest::Approx(2.5 * 2.5));
  CHECK(rbf_kernel(x, x, {3.0, 1.0}) == doctest::Approx(1.0));
}

TEST_CASE("rbf kernel analytic point") {
  // ||x - x'||^2 = 2 at unit scales gives exp(-1).
  Eigen::VectorXd x(2), xp(2);
  x << 1.0, 0.0;
  xp << 0.0, 1.0;
  CHECK(rbf_kernel(x, xp, {1.0, 1.0}) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("rbf kernel matches direct formula on random pairs") {
  Rng rng(17);
  const KernelParams params{0.7, 2.5};
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = rng.normal_vector(3);
    const Eigen::VectorXd xp = rng.normal_vector(3);
    double sq = 0.0;
    for (int i = 0; i < 3; ++i) sq += (x[i] - xp[i]) * (x[i] - xp[i]);
    const double expected =
        2.5 * 2.5 * std::exp(-sq / (2.0 * 0.7 * 0.7));
    CHECK(rbf_kernel(x, xp, params) ==
          doctest::Approx(expected).epsilon(1e-13));
    CHECK(rbf_kernel(x, xp, params) > 0.0);
    CHECK(rbf_kernel(x, xp, params) <= 2.5 * 2.5);
  }
}

TEST_CASE("rbf kernel rejects mismatched dimensions and bad params") {
  Eigen::VectorXd x(2), xp(3);
  x.setZero();
  xp.setZero();
  CHECK_THROWS_AS(rbf_kernel(x, xp, {1.0, 1.0}), std::invalid_argument);
  Eigen::VectorXd z(2);
  z.setZero();
  CHECK_THROWS_AS(rbf_kernel(x, z, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(rbf_kernel(x, z, {1.0, -1.0}), std::invalid_argument);
}

TEST_CASE("gram trace is exactly sigma_k^2 N") {
  Rng rng(23);
  const Eigen::MatrixXd X = rng.normal_matrix(6, 2);
  CHECK(kernel_gram(X, {0.9, 1.0}).trace() == doctest::Approx(6.0));
  CHECK(kernel_gram(X, {0.9, 2.0}).trace() == doctest::Approx(24.0));
}

TEST_CASE("gram of one point is the 1x1 variance") {
  Eigen::MatrixXd X(1, 3);
  X << 0.1, 0.2, 0.3;
  const Eigen::MatrixXd gram = kernel_gram(X, {1.0, 1.5});
  CHECK(gram.rows() == 1);
  CHECK(gram(0, 0) == doctest::Approx(2.25));
}

TEST_CASE("gram entries match pairwise kernel calls and gram is PSD") {
  Rng rng(29);
  const Eigen::MatrixXd X = rng.normal_matrix(3, 2);
  const KernelParams params{0.8, 1.3};
  const Eigen::MatrixXd gram = kernel_gram(X, params);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(gram(i, j) ==
            doctest::Approx(rbf_kernel(X.row(i), X.row(j), params))
                .epsilon(1e-14));
  CHECK(gram.isApprox(gram.transpose()));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  CHECK(eig.eigenvalues().minCoeff() > -1e-12);
}
