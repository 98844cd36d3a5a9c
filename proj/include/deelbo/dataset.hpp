#ifndef DEELBO_DATASET_HPP
#define DEELBO_DATASET_HPP

#include <cstdint>
#include <string>

#include <Eigen/Core>

namespace deelbo {

// Regression CSV contract: header x_1..x_H,y; one finite value per cell.
struct RegressionData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

// Classification CSV contract: header x_1..x_H,label with integer labels
// in {1..C}.
struct ClassificationData {
  Eigen::MatrixXd X;
  Eigen::VectorXi labels;  // 1-based
  int num_classes = 0;
};

// y = sin(3x) + eps, eps ~ N(0, noise_var), x ~ Unif[interval_lo,
// interval_hi]. Defaults match the toy demo: N = 20, noise_var = 0.01,
// interval [-2, 2].
RegressionData generate_toy_regression(int n, double noise_var,
                                       std::uint64_t seed,
                                       double interval_lo = -2.0,
                                       double interval_hi = 2.0);

// C Gaussian blobs in 2-D: class means evenly spaced on a circle of
// radius `radius` at angles 2*pi*c/C + angle_offset, isotropic spread
// `spread`, counts stratified to within one example. The angle offset
// lets a harness generate rotated variants of the task (a source/target
// pair for transfer runs).
ClassificationData generate_toy_classification(int n, int num_classes,
                                               std::uint64_t seed,
                                               double spread = 0.5,
                                               double radius = 2.0,
                                               double angle_offset = 0.0);

std::string regression_to_csv(const RegressionData& data);
std::string classification_to_csv(const ClassificationData& data);

// Parsers reject ragged rows, non-numeric cells, and NaN/Inf values with
// a line-numbered message.
RegressionData parse_regression_csv(const std::string& text);
ClassificationData parse_classification_csv(const std::string& text);

RegressionData read_regression_csv(const std::string& path);
ClassificationData read_classification_csv(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace deelbo

#endif  // DEELBO_DATASET_HPP
