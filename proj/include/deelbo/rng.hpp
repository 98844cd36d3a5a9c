#ifndef DEELBO_RNG_HPP
#define DEELBO_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace deelbo {

// Derives a child seed from a root seed and a stream name, so that every
// consumer of randomness (data, feature-map, init, mc-train, mc-eval)
// draws from its own independent stream. FNV-1a over the name, mixed with
// the root through splitmix64.
std::uint64_t stream_seed(std::uint64_t root_seed, std::string_view stream);

// Counter-indexed variant for families of streams (per learning-rate
// candidate, per sweep seed, ...).
std::uint64_t stream_seed(std::uint64_t root_seed, std::string_view stream,
                          std::uint64_t index);

// Seeded generator with portable output. std::mt19937_64 is bit-exact by
// the standard; the distribution transforms below are hand-rolled because
// std::normal_distribution and friends are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01();

  // Uniform on [0, scale).
  double uniform(double scale) { return scale * uniform01(); }

  // Standard normal via Box-Muller; the spare draw is cached.
  double normal();

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace deelbo

#endif  // DEELBO_RNG_HPP
