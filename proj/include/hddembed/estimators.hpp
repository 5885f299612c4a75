#pragma once

// Reference estimators for divergence Gram matrices: the split-sample
// entropy plug-in estimate of JS and tensor-grid quadrature of the HDD
// between known densities.

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <span>
#include <vector>

#include "hddembed/density.hpp"
#include "hddembed/divergence.hpp"
#include "hddembed/errors.hpp"
#include "hddembed/parallel.hpp"
#include "hddembed/quadrature.hpp"
#include "hddembed/sample_set.hpp"
#include "hddembed/types.hpp"

namespace hddembed {

namespace detail {

/// First ceil(n/2) rows are used for the empirical means, the remainder for
/// the density estimate.
struct EntropySplit {
  SampleSet means;
  DensityEstimate density;
};

inline EntropySplit entropy_split(const SampleSet& s, const KdeOptions& kde) {
  detail::require(s.size() >= 4, "js_entropy_estimate: at least four points per sample are required");
  const Eigen::Index half = (s.size() + 1) / 2;
  return {s.slice(0, half), kde_fit(s.slice(half, s.size()), kde)};
}

inline double mean_log_ratio(std::span<const double> own, std::span<const double> other) {
  double acc = 0.0;
  for (std::size_t m = 0; m < own.size(); ++m) acc += std::log(own[m]) - std::log(0.5 * (own[m] + other[m]));
  return acc / static_cast<double>(own.size());
}

}  // namespace detail

/// JS(p_i, p_j) from plug-in entropies:
///   1/2 E_{X^i}[log p_i - log m] + 1/2 E_{X^j}[log p_j - log m],  m = (p_i + p_j) / 2,
/// with densities fit on the second half of each sample and expectations
/// taken over the first half.
inline double js_entropy_estimate(const SampleSet& chi_i, const SampleSet& chi_j, const KdeOptions& kde = {}) {
  detail::require(chi_i.dim() == chi_j.dim(), "js_entropy_estimate: dimension mismatch");
  auto si = detail::entropy_split(chi_i, kde);
  auto sj = detail::entropy_split(chi_j, kde);
  auto pi_i = kde_eval(si.density, si.means.points());
  auto pj_i = kde_eval(sj.density, si.means.points());
  auto pi_j = kde_eval(si.density, sj.means.points());
  auto pj_j = kde_eval(sj.density, sj.means.points());
  return 0.5 * detail::mean_log_ratio(pi_i, pj_i) + 0.5 * detail::mean_log_ratio(pj_j, pi_j);
}

/// All pairwise entropy JS estimates. Each density is fit once and
/// evaluated once on every sample's mean half.
inline RowMatrix js_entropy_matrix(std::span<const SampleSet> samples, const KdeOptions& kde = {},
                                   unsigned threads = 1) {
  const std::size_t n = samples.size();
  std::vector<std::optional<detail::EntropySplit>> splits(n);
  parallel_for(n, threads, [&](std::size_t i) { splits[i].emplace(detail::entropy_split(samples[i], kde)); });
  // evals[i * n + j] = p_i at the mean half of sample j
  std::vector<std::vector<double>> evals(n * n);
  parallel_for(n * n, threads, [&](std::size_t k) {
    std::size_t i = k / n, j = k % n;
    evals[k] = kde_eval(splits[i]->density, splits[j]->means.points());
  });
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          0.5 * detail::mean_log_ratio(evals[i * n + i], evals[j * n + i]) +
          0.5 * detail::mean_log_ratio(evals[j * n + j], evals[i * n + j]);
  return out;
}

struct BandwidthSelection {
  double scale = 1.0;
  /// (scale, mean held-out log-likelihood) for every candidate.
  std::vector<std::pair<double, double>> scores;
};

/// Picks one global multiplier on the automatic bandwidth by held-out
/// log-likelihood: each density is fit on the second half of its sample and
/// scored on the first half, as in the entropy estimator. Ties go to the
/// larger scale.
inline BandwidthSelection select_bandwidth_scale(std::span<const SampleSet> samples, std::span<const double> scales,
                                                 const KdeOptions& base = {}, unsigned threads = 1) {
  detail::require(!samples.empty(), "select_bandwidth_scale: no samples");
  detail::require(!scales.empty(), "select_bandwidth_scale: empty scale grid");
  BandwidthSelection out;
  bool have = false;
  double best = 0.0;
  for (double scale : scales) {
    detail::require(scale > 0.0, "select_bandwidth_scale: scales must be positive");
    KdeOptions opts = base;
    opts.bandwidth_scale = base.bandwidth_scale * scale;
    std::vector<double> per(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
      auto split = detail::entropy_split(samples[i], opts);
      auto v = kde_eval(split.density, split.means.points());
      double acc = 0.0;
      for (double x : v) acc += std::log(x);
      per[i] = acc / static_cast<double>(v.size());
    });
    double score = 0.0;
    for (double v : per) score += v;
    score /= static_cast<double>(per.size());
    out.scores.emplace_back(scale, score);
    if (!have || score > best || (score == best && scale > out.scale)) {
      best = score;
      out.scale = scale;
      have = true;
    }
  }
  return out;
}

using DensityFn = std::function<double(std::span<const double>)>;

/// Tensor Simpson grid on [0, 1]^dim.
struct SimpsonGrid {
  int dim = 1;
  RowMatrix points;
  std::vector<double> weights;

  SimpsonGrid(int dim_, std::size_t intervals) : dim(dim_) {
    detail::require(dim_ >= 1 && dim_ <= 2, "SimpsonGrid: dimension must be 1 or 2");
    auto w1 = quad::simpson_weights(intervals);
    const auto per = static_cast<Eigen::Index>(w1.size());
    const Eigen::Index total = dim_ == 1 ? per : per * per;
    points.resize(total, dim_);
    weights.resize(static_cast<std::size_t>(total));
    const double h = 1.0 / static_cast<double>(intervals);
    for (Eigen::Index i = 0; i < total; ++i) {
      if (dim_ == 1) {
        points(i, 0) = static_cast<double>(i) * h;
        weights[static_cast<std::size_t>(i)] = w1[static_cast<std::size_t>(i)];
      } else {
        Eigen::Index a = i / per, b = i % per;
        points(i, 0) = static_cast<double>(a) * h;
        points(i, 1) = static_cast<double>(b) * h;
        weights[static_cast<std::size_t>(i)] = w1[static_cast<std::size_t>(a)] * w1[static_cast<std::size_t>(b)];
      }
    }
  }

  std::vector<double> evaluate(const DensityFn& f) const {
    std::vector<double> v(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      v[static_cast<std::size_t>(i)] =
          f(std::span<const double>(points.data() + i * points.cols(), static_cast<std::size_t>(points.cols())));
    return v;
  }

  double hdd(HddKind kind, std::span<const double> p, std::span<const double> q) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * closed_form_kappa(kind, p[i], q[i]);
    return acc;
  }
};

inline constexpr std::size_t kCoarseIntervals = 512;
inline constexpr std::size_t kFineIntervals = 1024;

struct QuadratureResult {
  double value;
  /// |fine - coarse| Richardson discrepancy.
  double residual;
};

/// d^2(p, q) = int kappa(p(x), q(x)) dx by Simpson on a 512-interval grid per
/// dimension, checked against 1024 intervals; returns the fine value.
inline QuadratureResult exact_hdd_quadrature(const DensityFn& p, const DensityFn& q, HddKind kind, int dim,
                                             double tol) {
  detail::require(dim == 1 || dim == 2, "exact_hdd_quadrature: dimension must be 1 or 2");
  SimpsonGrid coarse(dim, kCoarseIntervals), fine(dim, kFineIntervals);
  double vc = coarse.hdd(kind, coarse.evaluate(p), coarse.evaluate(q));
  double vf = fine.hdd(kind, fine.evaluate(p), fine.evaluate(q));
  double res = std::abs(vf - vc);
  if (!(res <= tol)) throw QuadratureError("exact_hdd_quadrature: Richardson check failed", res);
  return {vf, res};
}

struct QuadratureGram {
  RowMatrix d2;
  double max_residual;
};

/// Pairwise exact d^2 for a list of densities; each density is evaluated on
/// each grid once.
inline QuadratureGram exact_hdd_matrix(std::span<const DensityFn> pdfs, HddKind kind, int dim, double tol,
                                       unsigned threads = 1) {
  const std::size_t n = pdfs.size();
  QuadratureGram out{RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)), 0.0};
  RowMatrix coarse_d2 = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t intervals : {kCoarseIntervals, kFineIntervals}) {
    SimpsonGrid grid(dim, intervals);
    std::vector<std::vector<double>> vals(n);
    parallel_for(n, threads, [&](std::size_t i) { vals[i] = grid.evaluate(pdfs[i]); });
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    RowMatrix& target = intervals == kFineIntervals ? out.d2 : coarse_d2;
    parallel_for(pairs.size(), threads, [&](std::size_t k) {
      auto [i, j] = pairs[k];
      double v = grid.hdd(kind, vals[i], vals[j]);
      target(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      target(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    });
  }
  out.max_residual = (out.d2 - coarse_d2).cwiseAbs().maxCoeff();
  if (!(out.max_residual <= tol)) throw QuadratureError("exact_hdd_matrix: Richardson check failed", out.max_residual);
  return out;
}

/// exp(-d2 / (2 sigma^2)) elementwise.
inline RowMatrix rbf_from_sq_distances(const RowMatrix& d2, double sigma) {
  detail::require(sigma > 0.0, "rbf_from_sq_distances: sigma must be positive");
  return (-d2.array() / (2.0 * sigma * sigma)).exp().matrix();
}

/// Pairwise squared Euclidean distances between rows.
inline RowMatrix sq_distance_matrix(const RowMatrix& rows) {
  const Eigen::Index n = rows.rows();
  RowMatrix out = RowMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = (rows.row(i) - rows.row(j)).squaredNorm();
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

}  // namespace hddembed
