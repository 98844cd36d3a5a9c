#ifndef DEELBO_FEATURE_MAP_HPP
#define DEELBO_FEATURE_MAP_HPP

#include <cstdint>

#include <Eigen/Core>

#include "deelbo/kernel.hpp"

namespace deelbo {

// Frozen random projection for the random-Fourier-feature map
//   phi(x) = output_scale * sqrt(2/R) * cos(projection^T x / length_scale
//                                            + phases).
// projection entries are standard normal, phases uniform on [0, 2pi);
// both fixed at construction and immutable afterwards, so the map is a
// pure function of its inputs.
class RffFeatureMap {
 public:
  RffFeatureMap(Eigen::MatrixXd projection, Eigen::VectorXd phases,
                std::uint64_t seed);

  const Eigen::MatrixXd& projection() const { return projection_; }  // H x R
  const Eigen::VectorXd& phases() const { return phases_; }          // R
  Eigen::Index input_dim() const { return projection_.rows(); }
  Eigen::Index feature_count() const { return projection_.cols(); }
  std::uint64_t seed() const { return seed_; }

 private:
  Eigen::MatrixXd projection_;
  Eigen::VectorXd phases_;
  std::uint64_t seed_;
};

// Feature matrix Phi (N x R) together with the bound every entry obeys,
// |Phi_ij| <= output_scale * sqrt(2/R), and the identity of the map that
// produced it.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  double entry_bound = 0.0;
  std::uint64_t map_seed = 0;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Partial derivatives of Phi with respect to the kernel hyperparameters,
// used by gradient-based learning of (length_scale, output_scale).
struct FeatureJacobians {
  Eigen::MatrixXd d_length_scale;  // N x R
  Eigen::MatrixXd d_output_scale;  // N x R
};

// Draws a fresh map: projection entries ~ N(0,1), phases ~ Unif[0, 2pi).
// Deterministic given (input_dim, feature_count, seed); the draw order is
// projection row-major first, then phases.
RffFeatureMap sample_feature_map(Eigen::Index input_dim,
                                 Eigen::Index feature_count,
                                 std::uint64_t seed);

// Applies the map to the rows of X (N x H). Row i of the result is
// phi(x_i)^T.
FeatureMatrix featurize(const RffFeatureMap& map, const KernelParams& params,
                        const Eigen::MatrixXd& X);

// Phi plus its hyperparameter Jacobians at the same point.
FeatureJacobians feature_jacobians(const RffFeatureMap& map,
                                   const KernelParams& params,
                                   const Eigen::MatrixXd& X);

}  // namespace deelbo

#endif  // DEELBO_FEATURE_MAP_HPP
