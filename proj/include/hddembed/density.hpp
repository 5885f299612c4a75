#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "hddembed/errors.hpp"
#include "hddembed/sample_set.hpp"
#include "hddembed/types.hpp"

namespace hddembed {

enum class BoundaryMode { None, Mirror };

struct KdeOptions {
  /// Per-dimension bandwidths; Silverman's rule when unset.
  std::optional<std::vector<double>> bandwidths;
  /// Multiplier applied to the bandwidths (automatic or explicit).
  double bandwidth_scale = 1.0;
  BoundaryMode boundary = BoundaryMode::Mirror;
  double clip_floor = 1e-12;
  std::optional<double> clip_ceiling;
};

/// Per-dimension Silverman bandwidth sigma_j * (4 / ((dim + 2) n))^(1 / (dim + 4)).
inline std::vector<double> silverman_bandwidth(const SampleSet& sample) {
  const auto n = sample.size();
  const auto dim = sample.dim();
  detail::require(n >= 2, "silverman_bandwidth: at least two points are required");
  const double factor = std::pow(4.0 / ((static_cast<double>(dim) + 2.0) * static_cast<double>(n)),
                                 1.0 / (static_cast<double>(dim) + 4.0));
  std::vector<double> h(static_cast<std::size_t>(dim));
  for (Eigen::Index j = 0; j < dim; ++j) {
    // sorted so the result does not depend on row order
    Eigen::ArrayXd col = sample.points().col(j);
    std::sort(col.begin(), col.end());
    detail::require(col[n - 1] > col[0], "silverman_bandwidth: zero variance in a dimension");
    double mean = col.sum() / static_cast<double>(n);
    double var = (col - mean).square().sum() / static_cast<double>(n - 1);
    h[static_cast<std::size_t>(j)] = std::sqrt(var) * factor;
  }
  return h;
}

/// Gaussian product-kernel density estimate on [0, 1]^dim, optionally with
/// reflection at the cube faces. Immutable; evaluation is thread-safe.
///
/// With mirroring, the per-dimension kernel is
///   k(q, s) = e(q - s) + e(q + s) + e(q - (2/h - s)),  e(t) = exp(-t^2 / 2)
/// in units of the bandwidth. The images are evaluated as
///   e(q + s) = e(q - s) exp(-2 q s),
///   e(q - 2/h + s) = e(q - s) exp(-2 (1/h - q)(1/h - s)),
/// and skipped when the query is more than kReflectReach bandwidths from the
/// face (each image is then below exp(-kReflectReach^2 / 2) ~ 2e-16).
class DensityEstimate {
 public:
  DensityEstimate(const SampleSet& sample, std::vector<double> bandwidths, BoundaryMode boundary,
                  double clip_floor, std::optional<double> clip_ceiling)
      : dim_(sample.dim()),
        n_(sample.size()),
        bandwidths_(std::move(bandwidths)),
        boundary_(boundary),
        clip_floor_(clip_floor),
        clip_ceiling_(clip_ceiling) {
    detail::require(static_cast<Eigen::Index>(bandwidths_.size()) == dim_,
                    "DensityEstimate: bandwidth count must match dimension");
    for (double h : bandwidths_)
      detail::require(h > 0.0 && std::isfinite(h), "DensityEstimate: bandwidths must be positive");
    detail::require(clip_floor_ >= 0.0, "DensityEstimate: clip floor must be nonnegative");
    if (clip_ceiling_)
      detail::require(*clip_ceiling_ > 0.0 && *clip_ceiling_ >= clip_floor_,
                      "DensityEstimate: clip ceiling must be positive and >= floor");

    norm_ = 1.0 / static_cast<double>(n_);
    for (double h : bandwidths_) norm_ /= h * std::sqrt(2.0 * std::numbers::pi);
    for (double h : bandwidths_) inv_h_.push_back(1.0 / h);

    // Sort rows so the summation order, and hence every output bit, is
    // independent of the order the points were supplied in.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_));
    std::iota(order.begin(), order.end(), 0);
    const auto& p = sample.points();
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index j = 0; j < dim_; ++j)
        if (p(a, j) != p(b, j)) return p(a, j) < p(b, j);
      return false;
    });

    scaled_.resize(static_cast<std::size_t>(dim_));
    upper_.resize(static_cast<std::size_t>(dim_));
    for (Eigen::Index j = 0; j < dim_; ++j) {
      const double u = inv_h_[static_cast<std::size_t>(j)];
      auto& s = scaled_[static_cast<std::size_t>(j)];
      auto& up = upper_[static_cast<std::size_t>(j)];
      s.resize(n_);
      up.resize(n_);
      for (Eigen::Index k = 0; k < n_; ++k) {
        s[k] = p(order[static_cast<std::size_t>(k)], j) * u;
        up[k] = u - s[k];
      }
    }
  }

  Eigen::Index dim() const noexcept { return dim_; }
  Eigen::Index sample_size() const noexcept { return n_; }
  const std::vector<double>& bandwidths() const noexcept { return bandwidths_; }
  BoundaryMode boundary() const noexcept { return boundary_; }
  double clip_floor() const noexcept { return clip_floor_; }
  std::optional<double> clip_ceiling() const noexcept { return clip_ceiling_; }

  /// Clipped density at a point of the cube.
  double operator()(std::span<const double> x) const {
    Scratch scratch;
    return eval(x, scratch);
  }

  /// Reusable work arrays for repeated evaluation.
  struct Scratch {
    Eigen::ArrayXd z, factor, tmp;
  };

  double eval(std::span<const double> x, Scratch& w) const {
    detail::require(static_cast<Eigen::Index>(x.size()) == dim_, "DensityEstimate: query dimension mismatch");
    for (double v : x) detail::require(v >= 0.0 && v <= 1.0, "DensityEstimate: query outside the unit cube");
    return clip(raw_sum(x, w) * norm_);
  }

 private:
  static constexpr double kReflectReach = 8.5;

  double clip(double v) const {
    v = std::max(v, clip_floor_);
    if (clip_ceiling_) v = std::min(v, *clip_ceiling_);
    return v;
  }

  double raw_sum(std::span<const double> x, Scratch& w) const {
    w.z.resize(n_);
    w.z.setZero();
    bool reflected = false;
    for (Eigen::Index j = 0; j < dim_; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const double q = x[ju] * inv_h_[ju];
      w.z += (q - scaled_[ju]).square();
      if (boundary_ != BoundaryMode::Mirror) continue;
      const double q_up = inv_h_[ju] - q;
      const bool lo = q < kReflectReach, hi = q_up < kReflectReach;
      if (!lo && !hi) continue;
      w.tmp = Eigen::ArrayXd::Ones(n_);
      if (lo) w.tmp += (-2.0 * q * scaled_[ju]).exp();
      if (hi) w.tmp += (-2.0 * q_up * upper_[ju]).exp();
      if (reflected) {
        w.factor *= w.tmp;
      } else {
        w.factor.swap(w.tmp);
        reflected = true;
      }
    }
    w.z = (-0.5 * w.z).exp();
    if (reflected) w.z *= w.factor;
    return w.z.sum();
  }

  Eigen::Index dim_;
  Eigen::Index n_;
  std::vector<double> bandwidths_;
  std::vector<double> inv_h_;
  BoundaryMode boundary_;
  double clip_floor_;
  std::optional<double> clip_ceiling_;
  double norm_ = 1.0;
  // Per dimension, sorted sample coordinates over h and (1 - x) / h.
  std::vector<Eigen::ArrayXd> scaled_;
  std::vector<Eigen::ArrayXd> upper_;
};

inline DensityEstimate kde_fit(const SampleSet& sample, const KdeOptions& opts = {}) {
  detail::require(sample.size() >= 1, "kde_fit: empty sample");
  detail::require(opts.bandwidth_scale > 0.0, "kde_fit: bandwidth scale must be positive");
  std::vector<double> h = opts.bandwidths ? *opts.bandwidths : silverman_bandwidth(sample);
  for (double& v : h) v *= opts.bandwidth_scale;
  return DensityEstimate(sample, std::move(h), opts.boundary, opts.clip_floor, opts.clip_ceiling);
}

/// Evaluate at each row of `queries`; O(n m dim).
inline std::vector<double> kde_eval(const DensityEstimate& est, const RowMatrix& queries) {
  detail::require(queries.cols() == est.dim(), "kde_eval: query dimension mismatch");
  std::vector<double> out(static_cast<std::size_t>(queries.rows()));
  DensityEstimate::Scratch scratch;
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    out[static_cast<std::size_t>(i)] = est.eval(
        std::span<const double>(queries.data() + i * queries.cols(), static_cast<std::size_t>(queries.cols())),
        scratch);
  return out;
}

}  // namespace hddembed
