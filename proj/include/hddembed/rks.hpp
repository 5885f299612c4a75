#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

#include "hddembed/errors.hpp"
#include "hddembed/seeding.hpp"
#include "hddembed/types.hpp"

namespace hddembed {

/// Random kitchen sinks for the Gaussian RBF kernel exp(-|x - y|^2 / (2 sigma^2)).
/// Frequencies are stored as standard normals; omega = W / sigma.
class RksMap {
 public:
  RksMap(Eigen::Index dim, Eigen::Index d_out, double sigma, std::uint64_t seed)
      : dim_(dim), d_out_(d_out), sigma_(sigma), seed_(seed) {
    detail::require(dim >= 1, "rks_draw: input dimension must be >= 1");
    detail::require(d_out >= 2 && d_out % 2 == 0, "rks_draw: D must be a positive even integer");
    detail::require(sigma > 0.0 && std::isfinite(sigma), "rks_draw: sigma must be positive");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    w_.resize(d_out / 2, dim);
    for (Eigen::Index i = 0; i < w_.size(); ++i) w_.data()[i] = normal(rng);
  }

  Eigen::Index input_dim() const noexcept { return dim_; }
  Eigen::Index output_dim() const noexcept { return d_out_; }
  double sigma() const noexcept { return sigma_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Frequency matrix Omega, (D/2) x dim, entries N(0, sigma^-2).
  RowMatrix omega() const { return w_ / sigma_; }

  /// sqrt(2/D) (sin w1.x, cos w1.x, sin w2.x, cos w2.x, ...).
  Vector apply(const Eigen::Ref<const Vector>& x) const { return from_projection(project(x)); }

  /// W x with the standard-normal frequencies, before division by sigma.
  Vector project(const Eigen::Ref<const Vector>& x) const {
    detail::require(x.size() == dim_, "rks_apply: input length does not match map dimension");
    return w_ * x;
  }

  /// Features from a precomputed W x; lets a sigma grid share one projection.
  Vector from_projection(const Eigen::Ref<const Vector>& proj, std::optional<double> sigma = std::nullopt) const {
    detail::require(proj.size() == d_out_ / 2, "rks_apply: projection length mismatch");
    const double s = sigma.value_or(sigma_);
    detail::require(s > 0.0 && std::isfinite(s), "rks_apply: sigma must be positive");
    const double scale = std::sqrt(2.0 / static_cast<double>(d_out_));
    const double inv_sigma = 1.0 / s;
    Vector z(d_out_);
    for (Eigen::Index r = 0; r < proj.size(); ++r) {
      double a = proj[r] * inv_sigma;
      z[2 * r] = scale * std::sin(a);
      z[2 * r + 1] = scale * std::cos(a);
    }
    return z;
  }

 private:
  Eigen::Index dim_;
  Eigen::Index d_out_;
  double sigma_;
  std::uint64_t seed_;
  RowMatrix w_;
};

inline RksMap rks_draw(Eigen::Index dim, Eigen::Index d_out, double sigma, std::uint64_t seed) {
  return RksMap(dim, d_out, sigma, seed);
}

inline Vector rks_apply(const RksMap& map, const Eigen::Ref<const Vector>& x) { return map.apply(x); }

}  // namespace hddembed
