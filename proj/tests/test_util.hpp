#ifndef DEELBO_TEST_UTIL_HPP
#define DEELBO_TEST_UTIL_HPP

// Test-only oracles: dense linear-algebra references and finite
// differences, kept independent of the library's solve paths.

#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace test_util {

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Central second difference.
inline double central_second_diff(const std::function<double(double)>& f,
                                  double x, double h) {
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

// Dense log N(x | mean, cov) evaluated through an LU inverse, so it does
// not share the Cholesky path used by the library.
inline double dense_mvn_logpdf(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& mean,
                               const Eigen::MatrixXd& cov) {
  const Eigen::Index n = x.size();
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  const Eigen::VectorXd delta = x - mean;
  const double quad = delta.dot(lu.solve(delta));
  const double log_det = std::log(lu.determinant());
  return -0.5 * (n * std::log(2.0 * M_PI) + log_det + quad);
}

// Dense KL( N(mu0, cov0) || N(mu1, cov1) ).
inline double dense_gaussian_kl(const Eigen::VectorXd& mu0,
                                const Eigen::MatrixXd& cov0,
                                const Eigen::VectorXd& mu1,
                                const Eigen::MatrixXd& cov1) {
  const Eigen::Index n = mu0.size();
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(cov1);
  const Eigen::MatrixXd inv1 = lu.inverse();
  const Eigen::VectorXd delta = mu1 - mu0;
  const double trace_term = (inv1 * cov0).trace();
  const double quad = delta.dot(inv1 * delta);
  const double log_det_ratio =
      std::log(lu.determinant()) -
      std::log(Eigen::FullPivLU<Eigen::MatrixXd>(cov0).determinant());
  return 0.5 * (trace_term + quad - static_cast<double>(n) + log_det_ratio);
}

// Dense form of the diagonal-plus-low-rank prior covariance,
// (diag(sigma_diag) + Q Q^T / (K - 1)) / 2.
inline Eigen::MatrixXd dense_lowrank_cov(const Eigen::VectorXd& sigma_diag,
                                         const Eigen::MatrixXd& Q) {
  const Eigen::MatrixXd dense =
      Eigen::MatrixXd(sigma_diag.asDiagonal()) +
      Q * Q.transpose() / (static_cast<double>(Q.cols()) - 1.0);
  return 0.5 * dense;
}

// Golden-section maximizer of a unimodal scalar function on [lo, hi],
// followed by parabolic-vertex refinement with shrinking step so the
// result beats the sqrt(eps) plateau of pure bracketing.
inline double golden_max(const std::function<double(double)>& f, double lo,
                         double hi, int iterations = 200) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
  }
  double x = 0.5 * (a + b);
  for (double rel_h : {1e-3, 1e-5, 1e-6}) {
    const double h = rel_h * std::max(std::abs(x), 1e-12);
    const double fm = f(x - h), f0 = f(x), fp = f(x + h);
    const double denom = fm - 2.0 * f0 + fp;
    if (denom >= 0.0) continue;  // lost concavity to rounding
    x += 0.5 * h * (fm - fp) / denom;
  }
  return x;
}

}  // namespace test_util

#endif  // DEELBO_TEST_UTIL_HPP
