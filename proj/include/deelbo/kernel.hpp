#ifndef DEELBO_KERNEL_HPP
#define DEELBO_KERNEL_HPP

#include <Eigen/Core>

namespace deelbo {

// RBF kernel hyperparameters. length_scale is in input-space units,
// output_scale in target-space units; both strictly positive.
struct KernelParams {
  double length_scale = 1.0;
  double output_scale = 1.0;

  void validate() const;
};

// k(x, x') = output_scale^2 * exp(-||x - x'||^2 / (2 length_scale^2)).
// Result lies in (0, output_scale^2].
double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime,
                  const KernelParams& params);

// N-by-N Gram matrix of rbf_kernel over the rows of X. Symmetric PSD with
// trace exactly output_scale^2 * N.
Eigen::MatrixXd kernel_gram(const Eigen::MatrixXd& X,
                            const KernelParams& params);

// Pairwise squared Euclidean distances between rows of X, computed
// directly (no inner-product expansion).
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& X);

}  // namespace deelbo

#endif  // DEELBO_KERNEL_HPP
