#include "deelbo/kernel.hpp"

#include <cmath>
#include <stdexcept>

namespace deelbo {

void KernelParams::validate() const {
  if (!(length_scale > 0.0) || !std::isfinite(length_scale))
    throw std::invalid_argument("KernelParams: length_scale must be > 0");
  if (!(output_scale > 0.0) || !std::isfinite(output_scale))
    throw std::invalid_argument("KernelParams: output_scale must be > 0");
}

double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime,
                  const KernelParams& params) {
  params.validate();
  if (x.size() != x_prime.size())
    throw std::invalid_argument("rbf_kernel: dimension mismatch");
  const double sq_dist = (x - x_prime).squaredNorm();
  const double s2 = params.output_scale * params.output_scale;
  return s2 * std::exp(-sq_dist /
                       (2.0 * params.length_scale * params.length_scale));
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (X.row(i) - X.row(j)).squaredNorm();
      d2(i, j) = d;
      d2(j, i) = d;
    }
  }
  return d2;
}

Eigen::MatrixXd kernel_gram(const Eigen::MatrixXd& X,
                            const KernelParams& params) {
  params.validate();
  if (X.rows() < 1)
    throw std::invalid_argument("kernel_gram: need at least one row");
  const double s2 = params.output_scale * params.output_scale;
  const double inv_two_l2 =
      1.0 / (2.0 * params.length_scale * params.length_scale);
  Eigen::MatrixXd gram = squared_distances(X);
  // Diagonal is exactly s2: exp(0) has no rounding.
  gram = s2 * (-inv_two_l2 * gram.array()).exp().matrix();
  return gram;
}

}  // namespace deelbo
