#pragma once

// Homogeneous density distances: pointwise kernels, their spectral measures
// on the half-line, and the g_lambda map that turns the spectral
// representation into an expected squared modulus.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hddembed/errors.hpp"
#include "hddembed/quadrature.hpp"
#include "hddembed/seeding.hpp"

namespace hddembed {

enum class HddKind { JensenShannon, SquaredHellinger, TotalVariation };

inline std::string_view to_string(HddKind k) {
  switch (k) {
    case HddKind::JensenShannon: return "js";
    case HddKind::SquaredHellinger: return "hellinger";
    case HddKind::TotalVariation: return "tv";
  }
  return "?";
}

inline HddKind parse_hdd_kind(std::string_view s) {
  if (s == "js" || s == "jensen-shannon") return HddKind::JensenShannon;
  if (s == "hellinger" || s == "h2") return HddKind::SquaredHellinger;
  if (s == "tv" || s == "total-variation") return HddKind::TotalVariation;
  throw DomainError("unknown divergence '" + std::string(s) + "'");
}

using Complex = std::complex<double>;

/// Pointwise squared distance kappa(x, y); natural log, 0 log 0 = 0.
inline double closed_form_kappa(HddKind kind, double x, double y) {
  detail::require(x >= 0.0 && y >= 0.0, "closed_form_kappa: arguments must be nonnegative");
  switch (kind) {
    case HddKind::JensenShannon: {
      // fixed argument order keeps the result bitwise symmetric
      if (x > y) std::swap(x, y);
      double s = x + y;
      if (s == 0.0) return 0.0;
      double v = 0.0;
      if (x > 0.0) v += 0.5 * x * std::log(2.0 * x / s);
      if (y > 0.0) v += 0.5 * y * std::log(2.0 * y / s);
      return std::max(v, 0.0);
    }
    case HddKind::SquaredHellinger: {
      double d = std::sqrt(x) - std::sqrt(y);
      return 0.5 * d * d;
    }
    case HddKind::TotalVariation:
      return std::abs(x - y);
  }
  return 0.0;
}

/// Total mass Z of the spectral measure. The representation integrand is
/// identically 1 at (1, 0), so kappa(1, 0) is Z for every parametrization.
inline double total_mass(HddKind kind) { return closed_form_kappa(kind, 1.0, 0.0); }

namespace detail {

/// Unnormalized half-line JS spectral density 1 / (cosh(pi l) (1 + c l^2)).
/// Only c = 4 reproduces the JS kernel; c = 1 is kept for the validation test.
inline double js_spectral_density(double lambda, double c = 4.0) {
  double e = std::exp(-std::numbers::pi * lambda);
  double sech = 2.0 * e / (1.0 + e * e);
  return sech / (1.0 + c * lambda * lambda);
}

inline constexpr double kJsLambdaMax = 7.0;
inline constexpr std::size_t kJsTableNodes = 4096;

}  // namespace detail

/// One node of the tabulated JS CDF.
struct CdfNode {
  double lambda;
  double cumulative;
};

/// The normalized spectral measure mu / Z restricted to lambda >= 0. The
/// representation integrand is even in lambda, so the folded half-line
/// measure carries the full mass Z.
class HddMeasure {
 public:
  explicit HddMeasure(HddKind kind) : kind_(kind), z_(hddembed::total_mass(kind)) {
    if (kind_ == HddKind::JensenShannon) build_js_table();
  }

  HddKind kind() const noexcept { return kind_; }
  double total_mass() const noexcept { return z_; }
  bool is_point_mass() const noexcept { return kind_ == HddKind::SquaredHellinger; }

  /// Normalized half-line density. Zero for the Hellinger point mass.
  double density(double lambda) const {
    detail::require(lambda >= 0.0, "HddMeasure::density: lambda must be nonnegative");
    switch (kind_) {
      case HddKind::JensenShannon: return detail::js_spectral_density(lambda) / z_;
      case HddKind::TotalVariation: return (4.0 / std::numbers::pi) / (1.0 + 4.0 * lambda * lambda);
      case HddKind::SquaredHellinger: return 0.0;
    }
    return 0.0;
  }

  /// Inverse CDF of the normalized measure, u in [0, 1).
  double quantile(double u) const {
    detail::require(u >= 0.0 && u <= 1.0, "HddMeasure::quantile: u must lie in [0, 1]");
    switch (kind_) {
      case HddKind::SquaredHellinger: return 0.0;
      case HddKind::TotalVariation:
        if (u >= 1.0) return std::numeric_limits<double>::infinity();
        return 0.5 * std::tan(0.5 * std::numbers::pi * u);
      case HddKind::JensenShannon: return js_quantile(u);
    }
    return 0.0;
  }

  /// Tabulated CDF, present only for Jensen-Shannon.
  const std::vector<CdfNode>& js_cdf_table() const noexcept { return table_; }

 private:
  void build_js_table() {
    const std::size_t n = detail::kJsTableNodes;
    const double step = detail::kJsLambdaMax / static_cast<double>(n - 1);
    table_.resize(n);
    table_[0] = {0.0, 0.0};
    auto f = [this](double l) { return detail::js_spectral_density(l) / z_; };
    double acc = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      double a = static_cast<double>(i - 1) * step;
      double b = static_cast<double>(i) * step;
      acc += quad::gauss_kronrod(f, a, b, 1e-13, 4).value;
      table_[i] = {b, acc};
    }
  }

  double js_quantile(double u) const {
    if (u >= table_.back().cumulative) return table_.back().lambda;
    auto it = std::upper_bound(table_.begin(), table_.end(), u,
                               [](double v, const CdfNode& node) { return v < node.cumulative; });
    const CdfNode& hi = *it;
    const CdfNode& lo = *(it - 1);
    double t = (u - lo.cumulative) / (hi.cumulative - lo.cumulative);
    return lo.lambda + t * (hi.lambda - lo.lambda);
  }

  HddKind kind_;
  double z_;
  std::vector<CdfNode> table_;
};

/// M iid draws from mu / Z on the half-line.
inline std::vector<double> sample_lambdas(const HddMeasure& measure, int m, Rng& rng) {
  detail::require(m >= 1, "sample_lambdas: M must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(m), 0.0);
  if (measure.is_point_mass()) return out;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& l : out) l = measure.quantile(unif(rng));
  return out;
}

inline std::vector<double> sample_lambdas(HddKind kind, int m, std::uint64_t seed) {
  Rng rng(seed);
  return sample_lambdas(HddMeasure(kind), m, rng);
}

/// c_lambda = (-1/2 + i lambda) / (1/2 + i lambda); unit modulus.
inline Complex c_lambda(double lambda) {
  return Complex(-0.5, lambda) / Complex(0.5, lambda);
}

/// x^(1/2 + i lambda), with 0 mapped to 0.
inline Complex complex_power(double x, double lambda) {
  detail::require(x >= 0.0, "complex_power: x must be nonnegative");
  if (x == 0.0) return {0.0, 0.0};
  double r = std::sqrt(x);
  double a = lambda * std::log(x);
  return {r * std::cos(a), r * std::sin(a)};
}

/// g_lambda(x) = sqrt(Z) c_lambda (x^(1/2 + i lambda) - 1).
inline Complex g_lambda(double z, double lambda, double x) {
  detail::require(x >= 0.0, "g_lambda: x must be nonnegative");
  return std::sqrt(z) * c_lambda(lambda) * (complex_power(x, lambda) - 1.0);
}

inline Complex g_lambda(HddKind kind, double z, double lambda, double x) {
  (void)kind;
  return g_lambda(z, lambda, x);
}

/// Monte Carlo estimate (1/M) sum_j |g(x) - g(y)|^2 of kappa(x, y).
inline double kappa_mc(HddKind kind, std::span<const double> lambdas, double x, double y) {
  detail::require(!lambdas.empty(), "kappa_mc: empty lambda set");
  detail::require(x >= 0.0 && y >= 0.0, "kappa_mc: arguments must be nonnegative");
  const double z = total_mass(kind);
  double acc = 0.0;
  for (double l : lambdas) acc += std::norm(g_lambda(z, l, x) - g_lambda(z, l, y));
  return acc / static_cast<double>(lambdas.size());
}

/// Deterministic quadrature of the spectral representation
///   kappa(x, y) = Z * int_0^inf |x^(1/2+il) - y^(1/2+il)|^2 rho(l) dl
/// with rho the normalized half-line density. Expanding the modulus gives
/// Z * (x + y - 2 sqrt(xy) C(ln(x/y))) with C the cosine transform of rho.
/// C is integrated segment-wise up to a cutoff L; the tail beyond L is
/// replaced by its two integration-by-parts boundary terms
///   -rho(L) sin(rL) / r - rho'(L) cos(rL) / r^2,
/// leaving a remainder below |rho'(L)| / r^2 since rho is convex there.
inline double kappa_quadrature(HddKind kind, double x, double y, double tol) {
  detail::require(x >= 0.0 && y >= 0.0, "kappa_quadrature: arguments must be nonnegative");
  detail::require(tol > 0.0, "kappa_quadrature: tol must be positive");
  const HddMeasure measure(kind);
  const double z = measure.total_mass();
  if (measure.is_point_mass()) {
    double d = std::sqrt(x) - std::sqrt(y);
    return z * d * d;
  }
  if (x == y) return 0.0;
  if (x == 0.0 || y == 0.0) return z * (x + y);

  const double r = std::abs(std::log(x / y));
  const double scale = 2.0 * z * std::sqrt(x * y);
  const double budget = tol / scale;

  auto slope = [&](double l) {
    const double d = 1e-4 * l;
    return (measure.density(l + d) - measure.density(l - d)) / (2.0 * d);
  };
  // 2x safety margin on the remainder bound covers the difference quotient
  double cutoff = 2.0;
  while (2.0 * std::abs(slope(cutoff)) / (r * r) > 0.1 * budget) {
    cutoff *= 2.0;
    if (cutoff > 1e12) throw QuadratureError("kappa_quadrature: tail cutoff diverged", HUGE_VAL);
  }
  const double tail_bound = 2.0 * std::abs(slope(cutoff)) / (r * r);
  const double tail = -measure.density(cutoff) * std::sin(r * cutoff) / r -
                      slope(cutoff) * std::cos(r * cutoff) / (r * r);

  const double period = std::numbers::pi / r;
  std::vector<double> breaks{0.0};
  while (breaks.back() < cutoff) {
    double b = breaks.back();
    double w = std::min(period, std::max(0.5, 0.5 * b));
    breaks.push_back(std::min(cutoff, b + w));
    if (breaks.size() > 20'000'000)
      throw QuadratureError("kappa_quadrature: too many segments", tail_bound);
  }
  auto integrand = [&](double l) { return std::cos(l * r) * measure.density(l); };
  auto est = quad::gauss_kronrod_segments(integrand, breaks, 1e-13);
  const double residual = scale * (est.error + tail_bound);
  if (!(residual <= tol)) throw QuadratureError("kappa_quadrature: tolerance not met", residual);
  return z * (x + y) - scale * (est.value + tail);
}

}  // namespace hddembed
