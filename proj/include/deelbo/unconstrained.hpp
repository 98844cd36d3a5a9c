#ifndef DEELBO_UNCONSTRAINED_HPP
#define DEELBO_UNCONSTRAINED_HPP

#include <cmath>

namespace deelbo {

// Invertible softplus mapping used for positivity constraints: gradient
// steps act on the unconstrained value u, the model sees softplus(u) > 0.

inline double softplus(double u) {
  return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

inline double inv_softplus(double x) {
  // softplus is numerically the identity beyond ~30.
  return x > 30.0 ? x : std::log(std::expm1(x));
}

// d softplus / du.
inline double softplus_grad(double u) {
  return u > 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

}  // namespace deelbo

#endif  // DEELBO_UNCONSTRAINED_HPP
