#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "hddembed/errors.hpp"

namespace hddembed::quad {

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

/// Adaptive 15-point Gauss-Kronrod on [a, b]. `rel_tol` is relative to the
/// L1 norm of the integrand on the interval.
template <class F>
Estimate gauss_kronrod(F&& f, double a, double b, double rel_tol = 1e-12, unsigned max_depth = 20) {
  double err = 0.0;
  double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      std::forward<F>(f), a, b, max_depth, rel_tol, &err);
  return {v, err};
}

/// Adaptive Gauss-Kronrod over consecutive breakpoints, accumulating errors.
template <class F>
Estimate gauss_kronrod_segments(const F& f, std::span<const double> breaks, double rel_tol = 1e-12,
                                unsigned max_depth = 10) {
  Estimate total;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    auto e = gauss_kronrod(f, breaks[i], breaks[i + 1], rel_tol, max_depth);
    total.value += e.value;
    total.error += e.error;
  }
  return total;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(unsigned order) {
  detail::require(order >= 1, "gauss_legendre: order must be >= 1");
  // legendre_p_zeros returns the nonnegative zeros in increasing order
  auto half = boost::math::legendre_p_zeros<double>(static_cast<int>(order));
  std::vector<double> x;
  x.reserve(order);
  for (auto it = half.rbegin(); it != half.rend(); ++it)
    if (*it != 0.0) x.push_back(-*it);
  for (double z : half) x.push_back(z);
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dp = boost::math::legendre_p_prime<double>(static_cast<int>(order), x[i]);
    w[i] = 2.0 / ((1.0 - x[i] * x[i]) * dp * dp);
  }
  return {x, w};
}

/// Composite Simpson weights for `intervals` (even) equal sub-intervals of
/// [a, b]; returns intervals + 1 weights.
inline std::vector<double> simpson_weights(std::size_t intervals, double a = 0.0, double b = 1.0) {
  detail::require(intervals >= 2 && intervals % 2 == 0, "simpson_weights: interval count must be even");
  double h = (b - a) / static_cast<double>(intervals);
  std::vector<double> w(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) {
    double c = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    w[i] = c * h / 3.0;
  }
  return w;
}

}  // namespace hddembed::quad
