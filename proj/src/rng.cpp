#include "deelbo/rng.hpp"

#include <cmath>

namespace deelbo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t root_seed, std::string_view stream) {
  return splitmix64(root_seed ^ fnv1a64(stream));
}

std::uint64_t stream_seed(std::uint64_t root_seed, std::string_view stream,
                          std::uint64_t index) {
  return splitmix64(stream_seed(root_seed, stream) + splitmix64(index));
}

double Rng::uniform01() {
  // Top 53 bits of the engine output, scaled to [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller. u1 is bumped away from zero so the log is finite.
  double u1 = uniform01();
  double u2 = uniform01();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill so the draw order is part of the documented format.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal();
  return m;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling over the smallest covering power-of-two range.
  const std::uint64_t mask = ~std::uint64_t{0} >> __builtin_clzll(n | 1);
  std::uint64_t draw;
  do {
    draw = engine_() & mask;
  } while (draw >= n);
  return draw;
}

}  // namespace deelbo
