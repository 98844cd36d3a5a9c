#include "deelbo/feature_map.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "deelbo/rng.hpp"

namespace deelbo {

RffFeatureMap::RffFeatureMap(Eigen::MatrixXd projection,
                             Eigen::VectorXd phases, std::uint64_t seed)
    : projection_(std::move(projection)),
      phases_(std::move(phases)),
      seed_(seed) {
  if (projection_.cols() != phases_.size())
    throw std::invalid_argument(
        "RffFeatureMap: projection columns must match phase count");
  if (projection_.cols() < 1)
    throw std::invalid_argument("RffFeatureMap: need at least one feature");
  for (Eigen::Index r = 0; r < phases_.size(); ++r) {
    if (phases_[r] < 0.0 || phases_[r] >= 2.0 * M_PI)
      throw std::invalid_argument("RffFeatureMap: phase outside [0, 2pi)");
  }
}

RffFeatureMap sample_feature_map(Eigen::Index input_dim,
                                 Eigen::Index feature_count,
                                 std::uint64_t seed) {
  if (input_dim < 1 || feature_count < 1)
    throw std::invalid_argument(
        "sample_feature_map: dimensions must be >= 1");
  Rng rng(seed);
  Eigen::MatrixXd projection = rng.normal_matrix(input_dim, feature_count);
  Eigen::VectorXd phases(feature_count);
  for (Eigen::Index r = 0; r < feature_count; ++r)
    phases[r] = rng.uniform(2.0 * M_PI);
  return RffFeatureMap(std::move(projection), std::move(phases), seed);
}

namespace {

// featurize tolerates output_scale == 0 (the map degenerates to the
// zero matrix); the length scale must stay strictly positive.
void check_featurize_params(const RffFeatureMap& map,
                            const KernelParams& params,
                            const Eigen::MatrixXd& X) {
  if (!(params.length_scale > 0.0) || !std::isfinite(params.length_scale))
    throw std::invalid_argument("featurize: length_scale must be > 0");
  if (params.output_scale < 0.0 || !std::isfinite(params.output_scale))
    throw std::invalid_argument("featurize: output_scale must be >= 0");
  if (X.cols() != map.input_dim())
    throw std::invalid_argument("featurize: X columns must match input_dim");
}

// Angles t_ir = (X A)_ir / length_scale + phase_r, shared between
// featurize and the Jacobians.
Eigen::MatrixXd angle_matrix(const RffFeatureMap& map,
                             const KernelParams& params,
                             const Eigen::MatrixXd& X) {
  check_featurize_params(map, params, X);
  Eigen::MatrixXd angles =
      (X * map.projection()) / params.length_scale;
  angles.rowwise() += map.phases().transpose();
  return angles;
}

}  // namespace

FeatureMatrix featurize(const RffFeatureMap& map, const KernelParams& params,
                        const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd angles = angle_matrix(map, params, X);
  const double scale =
      params.output_scale *
      std::sqrt(2.0 / static_cast<double>(map.feature_count()));
  FeatureMatrix phi;
  phi.values = scale * angles.array().cos().matrix();
  phi.entry_bound = scale;
  phi.map_seed = map.seed();
  return phi;
}

FeatureJacobians feature_jacobians(const RffFeatureMap& map,
                                   const KernelParams& params,
                                   const Eigen::MatrixXd& X) {
  check_featurize_params(map, params, X);
  const Eigen::MatrixXd raw = X * map.projection();  // N x R, before 1/l
  Eigen::MatrixXd angles = raw / params.length_scale;
  angles.rowwise() += map.phases().transpose();
  const double unit_scale =
      std::sqrt(2.0 / static_cast<double>(map.feature_count()));
  const double inv_l2 = 1.0 / (params.length_scale * params.length_scale);
  FeatureJacobians jac;
  // d/dl cos(raw/l + b) = sin(raw/l + b) * raw / l^2
  jac.d_length_scale =
      params.output_scale * unit_scale *
      (angles.array().sin() * raw.array() * inv_l2).matrix();
  // d/ds [s * sqrt(2/R) cos(.)] = sqrt(2/R) cos(.)
  jac.d_output_scale = unit_scale * angles.array().cos().matrix();
  return jac;
}

}  // namespace deelbo
