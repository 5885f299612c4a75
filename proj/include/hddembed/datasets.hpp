#pragma once

// Synthetic distribution datasets: equally weighted mixtures of Gaussians
// truncated to a box, sampled by per-component rejection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "hddembed/errors.hpp"
#include "hddembed/quadrature.hpp"
#include "hddembed/sample_set.hpp"
#include "hddembed/seeding.hpp"
#include "hddembed/types.hpp"

namespace hddembed {

struct GaussianComponent {
  Vector mean;
  Eigen::MatrixXd cov;
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace detail

/// Equal-weight mixture of Gaussians, each truncated to the box [lo, hi].
class TruncatedGmm {
 public:
  TruncatedGmm(std::vector<GaussianComponent> components, Vector lo, Vector hi)
      : components_(std::move(components)), lo_(std::move(lo)), hi_(std::move(hi)) {
    detail::require(!components_.empty(), "TruncatedGmm: at least one component is required");
    dim_ = lo_.size();
    detail::require(dim_ >= 1 && hi_.size() == dim_, "TruncatedGmm: box bounds dimension mismatch");
    detail::require((hi_.array() > lo_.array()).all(), "TruncatedGmm: box must have positive extent");
    for (const auto& c : components_) {
      detail::require(c.mean.size() == dim_ && c.cov.rows() == dim_ && c.cov.cols() == dim_,
                      "TruncatedGmm: component dimension mismatch");
      Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
      detail::require(llt.info() == Eigen::Success, "TruncatedGmm: covariance must be positive definite");
      Cached k;
      k.chol = llt.matrixL();
      k.prec = llt.solve(Eigen::MatrixXd::Identity(dim_, dim_));
      double logdet = 2.0 * k.chol.diagonal().array().log().sum();
      k.log_norm = -0.5 * (static_cast<double>(dim_) * std::log(2.0 * std::numbers::pi) + logdet);
      k.box_mass = box_mass(c);
      detail::require(k.box_mass > 0.0, "TruncatedGmm: component has no mass inside the box");
      cache_.push_back(std::move(k));
    }
  }

  Eigen::Index dim() const noexcept { return dim_; }
  const std::vector<GaussianComponent>& components() const noexcept { return components_; }
  const Vector& lo() const noexcept { return lo_; }
  const Vector& hi() const noexcept { return hi_; }

  /// Gaussian mass of component k inside the box (truncation normalizer).
  double truncation_mass(std::size_t k) const { return cache_.at(k).box_mass; }

  double pdf(std::span<const double> x) const {
    detail::require(static_cast<Eigen::Index>(x.size()) == dim_, "TruncatedGmm::pdf: dimension mismatch");
    for (Eigen::Index j = 0; j < dim_; ++j)
      if (x[static_cast<std::size_t>(j)] < lo_[j] || x[static_cast<std::size_t>(j)] > hi_[j]) return 0.0;
    Eigen::Map<const Vector> xv(x.data(), dim_);
    double acc = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
      Vector d = xv - components_[k].mean;
      double q = d.dot(cache_[k].prec * d);
      acc += std::exp(cache_[k].log_norm - 0.5 * q) / cache_[k].box_mass;
    }
    return acc / static_cast<double>(components_.size());
  }

  /// n draws: component uniformly at random, then Gaussian draws rejected
  /// until one lands inside the box.
  RowMatrix sample(Eigen::Index n, Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, components_.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    RowMatrix out(n, dim_);
    Vector eps(dim_);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t k = pick(rng);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 1'000'000) throw DomainError("TruncatedGmm::sample: rejection sampler stalled");
        for (Eigen::Index j = 0; j < dim_; ++j) eps[j] = normal(rng);
        Vector x = components_[k].mean + cache_[k].chol * eps;
        if ((x.array() >= lo_.array()).all() && (x.array() <= hi_.array()).all()) {
          out.row(i) = x.transpose();
          break;
        }
      }
    }
    return out;
  }

  /// The same distribution after the affine map of the box onto [0, 1]^dim.
  TruncatedGmm affine_to_unit() const {
    Vector scale = (hi_ - lo_).cwiseInverse();
    std::vector<GaussianComponent> mapped;
    for (const auto& c : components_) {
      Vector m = (c.mean - lo_).cwiseProduct(scale);
      Eigen::MatrixXd cov = scale.asDiagonal() * c.cov * scale.asDiagonal();
      mapped.push_back({m, cov});
    }
    return TruncatedGmm(std::move(mapped), Vector::Zero(dim_), Vector::Ones(dim_));
  }

  RowMatrix map_to_unit(const RowMatrix& points) const {
    RowMatrix out = points;
    for (Eigen::Index j = 0; j < dim_; ++j) {
      double a = lo_[j], w = hi_[j] - lo_[j];
      for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = std::clamp((out(i, j) - a) / w, 0.0, 1.0);
    }
    return out;
  }

 private:
  struct Cached {
    Eigen::MatrixXd chol;
    Eigen::MatrixXd prec;
    double log_norm = 0.0;
    double box_mass = 1.0;
  };

  // Diagonal covariances factor into per-axis normal CDF differences. Full
  // 2x2 covariances integrate the conditional CDF of x2 against the x1
  // marginal with adaptive Gauss-Kronrod.
  double box_mass(const GaussianComponent& c) const {
    const Eigen::MatrixXd& s = c.cov;
    bool diagonal = true;
    for (Eigen::Index a = 0; a < dim_; ++a)
      for (Eigen::Index b = 0; b < dim_; ++b)
        if (a != b && s(a, b) != 0.0) diagonal = false;
    if (diagonal) {
      double mass = 1.0;
      for (Eigen::Index j = 0; j < dim_; ++j) {
        double sd = std::sqrt(s(j, j));
        mass *= detail::normal_cdf((hi_[j] - c.mean[j]) / sd) - detail::normal_cdf((lo_[j] - c.mean[j]) / sd);
      }
      return mass;
    }
    detail::require(dim_ == 2, "TruncatedGmm: full covariances are supported in two dimensions only");
    const double m1 = c.mean[0], m2 = c.mean[1];
    const double s11 = s(0, 0), s12 = s(0, 1), s22 = s(1, 1);
    const double sd1 = std::sqrt(s11);
    const double cond_sd = std::sqrt(s22 - s12 * s12 / s11);
    auto integrand = [&](double x1) {
      double mu = m2 + s12 / s11 * (x1 - m1);
      double marg = std::exp(-0.5 * (x1 - m1) * (x1 - m1) / s11) / (sd1 * std::sqrt(2.0 * std::numbers::pi));
      return marg * (detail::normal_cdf((hi_[1] - mu) / cond_sd) - detail::normal_cdf((lo_[1] - mu) / cond_sd));
    };
    double a = std::max(lo_[0], m1 - 12.0 * sd1);
    double b = std::min(hi_[0], m1 + 12.0 * sd1);
    if (a >= b) return 0.0;
    std::vector<double> breaks;
    const int pieces = 16;
    for (int i = 0; i <= pieces; ++i) breaks.push_back(a + (b - a) * i / pieces);
    return quad::gauss_kronrod_segments(integrand, breaks, 1e-12).value;
  }

  Eigen::Index dim_ = 0;
  std::vector<GaussianComponent> components_;
  Vector lo_, hi_;
  std::vector<Cached> cache_;
};

/// Sample sets with regression targets and, when known, their true densities.
struct LabeledDistributionSet {
  std::vector<SampleSet> samples;
  std::vector<double> targets;
  std::vector<TruncatedGmm> pdfs;  // empty when unknown
};

/// Parameters of one distribution of the Gram experiment: five components,
/// means ~ U([0,1]^2), per-axis standard deviations ~ U([0.05, 0.15]^2).
inline TruncatedGmm draw_gram_gmm(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sd(0.05, 0.15);
  std::vector<GaussianComponent> comps;
  for (int k = 0; k < 5; ++k) {
    Vector m(2);
    m << unit(rng), unit(rng);
    double s1 = sd(rng), s2 = sd(rng);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
    cov(0, 0) = s1 * s1;
    cov(1, 1) = s2 * s2;
    comps.push_back({m, cov});
  }
  return TruncatedGmm(std::move(comps), Vector::Zero(2), Vector::Ones(2));
}

/// N five-component truncated GMMs on [0,1]^2 with n points each.
inline LabeledDistributionSet gen_gram_gmms(int big_n, int n, std::uint64_t seed) {
  detail::require(big_n >= 1 && n >= 1, "gen_gram_gmms: N and n must be >= 1");
  LabeledDistributionSet out;
  for (int i = 0; i < big_n; ++i) {
    Rng rng(derive_seed(seed, "gram-gmm", static_cast<std::uint64_t>(i)));
    auto gmm = draw_gram_gmm(rng);
    out.samples.emplace_back(gmm.sample(n, rng));
    out.targets.push_back(5.0);
    out.pdfs.push_back(std::move(gmm));
  }
  return out;
}

inline constexpr double kMixtureBox = 10.0;

/// One mixture-count distribution in its original coordinates: K ~ U{1..10}
/// components, means ~ U[-5,5]^2, covariance a A A^T + B, truncated to [-10,10]^2.
inline TruncatedGmm draw_mixture_count_gmm(Rng& rng, int* components_out = nullptr) {
  std::uniform_int_distribution<int> count(1, 10);
  std::uniform_real_distribution<double> mean(-5.0, 5.0);
  std::uniform_real_distribution<double> a_dist(1.0, 4.0);
  std::uniform_real_distribution<double> entry(-1.0, 1.0);
  std::uniform_real_distribution<double> diag(0.0, 1.0);
  const int k = count(rng);
  std::vector<GaussianComponent> comps;
  for (int c = 0; c < k; ++c) {
    Vector m(2);
    m << mean(rng), mean(rng);
    double a = a_dist(rng);
    Eigen::Matrix2d big_a;
    big_a << entry(rng), entry(rng), entry(rng), entry(rng);
    Eigen::Matrix2d b = Eigen::Matrix2d::Zero();
    b(0, 0) = diag(rng);
    b(1, 1) = diag(rng);
    Eigen::MatrixXd cov = a * big_a * big_a.transpose() + b;
    comps.push_back({m, cov});
  }
  if (components_out) *components_out = k;
  Vector lo = Vector::Constant(2, -kMixtureBox), hi = Vector::Constant(2, kMixtureBox);
  return TruncatedGmm(std::move(comps), lo, hi);
}

/// N mixtures with n points each, mapped to [0,1]^2; target = component count.
inline LabeledDistributionSet gen_mixture_count(int big_n, int n, std::uint64_t seed) {
  detail::require(big_n >= 1 && n >= 1, "gen_mixture_count: N and n must be >= 1");
  LabeledDistributionSet out;
  for (int i = 0; i < big_n; ++i) {
    Rng rng(derive_seed(seed, "mixture-count", static_cast<std::uint64_t>(i)));
    int k = 0;
    auto gmm = draw_mixture_count_gmm(rng, &k);
    RowMatrix raw = gmm.sample(n, rng);
    out.samples.emplace_back(gmm.map_to_unit(raw));
    out.targets.push_back(static_cast<double>(k));
    out.pdfs.push_back(gmm.affine_to_unit());
  }
  return out;
}

}  // namespace hddembed
