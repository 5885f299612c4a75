#pragma once

// End-to-end feature maps for sample sets: KDE -> A features -> RKS, plus
// the L2 (plain projection) and MMD (mean map) baselines behind the same
// interface.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hddembed/basis.hpp"
#include "hddembed/density.hpp"
#include "hddembed/divergence.hpp"
#include "hddembed/errors.hpp"
#include "hddembed/parallel.hpp"
#include "hddembed/rks.hpp"
#include "hddembed/sample_set.hpp"
#include "hddembed/seeding.hpp"

namespace hddembed {

struct EmbedderConfig {
  HddKind kind = HddKind::JensenShannon;
  int dim = 2;
  int m_lambdas = 5;
  IndexSetDescriptor basis = TensorGrid{10};
  int n_e = 10000;
  int d_out = 7000;
  double sigma_k = 1.0;
  KdeOptions kde;
  NodeScheme node_scheme = NodeScheme::Uniform;
  std::uint64_t seed = 0;
};

inline void validate(const EmbedderConfig& c) {
  detail::require(c.dim >= 1, "config.dim must be >= 1");
  detail::require(c.m_lambdas >= 1, "config.M must be >= 1");
  detail::require(c.n_e >= 1, "config.n_e must be >= 1");
  detail::require(c.d_out >= 2 && c.d_out % 2 == 0, "config.D must be a positive even integer");
  detail::require(c.sigma_k > 0.0 && std::isfinite(c.sigma_k), "config.sigma_k must be positive");
  if (auto* t = std::get_if<TensorGrid>(&c.basis)) {
    detail::require(t->m >= 1, "config.basis.m must be >= 1");
  } else {
    const auto& s = std::get<SobolevBall>(c.basis);
    detail::require(s.s > 0.0 && s.s <= 1.0, "config.basis.s must lie in (0, 1]");
    detail::require(s.t > 0.0, "config.basis.t must be positive");
  }
  if (c.kde.bandwidths) {
    detail::require(static_cast<int>(c.kde.bandwidths->size()) == c.dim, "config.kde.bandwidths length must equal dim");
    for (double h : *c.kde.bandwidths) detail::require(h > 0.0, "config.kde.bandwidths must be positive");
  }
  detail::require(c.kde.bandwidth_scale > 0.0, "config.kde.bandwidth_scale must be positive");
  detail::require(c.node_scheme != NodeScheme::Quadrature, "config.node_scheme must be uniform or halton");
}

inline IndexSet make_index_set(int dim, const IndexSetDescriptor& basis) {
  if (auto* t = std::get_if<TensorGrid>(&basis)) return make_tensor_index_set(dim, t->m);
  const auto& s = std::get<SobolevBall>(basis);
  return make_sobolev_index_set(dim, s.s, s.t);
}

/// Common shape of the distribution embedders: a sigma-independent
/// intermediate vector followed by an outer RKS map.
class DistributionEmbedder {
 public:
  virtual ~DistributionEmbedder() = default;

  virtual int dim() const = 0;
  virtual Eigen::Index intermediate_dim() const = 0;
  virtual Vector intermediate(const SampleSet& sample) const = 0;
  virtual const RksMap& rks() const = 0;

  Vector embed(const SampleSet& sample) const {
    detail::require(sample.dim() == dim(), "embed: sample dimension " + std::to_string(sample.dim()) +
                                               " does not match configured dimension " + std::to_string(dim()));
    return rks().apply(intermediate(sample));
  }
};

/// Frozen randomness for the HDD feature map. Draw order: lambdas, nodes, Omega.
class HddEmbedder final : public DistributionEmbedder {
 public:
  explicit HddEmbedder(EmbedderConfig config)
      : config_((validate(config), std::move(config))),
        measure_(config_.kind),
        lambdas_([&] {
          Rng rng(derive_seed(config_.seed, "lambdas"));
          return sample_lambdas(measure_, config_.m_lambdas, rng);
        }()),
        index_set_(make_index_set(config_.dim, config_.basis)),
        nodes_(draw_integration_nodes(config_.dim, config_.n_e, derive_seed(config_.seed, "nodes"),
                                      config_.node_scheme)),
        plan_(index_set_, nodes_),
        rks_(2 * static_cast<Eigen::Index>(config_.m_lambdas) * static_cast<Eigen::Index>(index_set_.size()),
             config_.d_out, config_.sigma_k, derive_seed(config_.seed, "rks")) {}

  const EmbedderConfig& config() const noexcept { return config_; }
  const HddMeasure& measure() const noexcept { return measure_; }
  const std::vector<double>& lambdas() const noexcept { return lambdas_; }
  const IndexSet& index_set() const noexcept { return index_set_; }
  const IntegrationNodes& nodes() const noexcept { return nodes_; }
  const ProjectionPlan& plan() const noexcept { return plan_; }

  int dim() const override { return config_.dim; }
  Eigen::Index intermediate_dim() const override { return rks_.input_dim(); }
  const RksMap& rks() const override { return rks_; }

  DensityEstimate fit_density(const SampleSet& sample) const {
    detail::require(sample.dim() == config_.dim, "HddEmbedder: sample dimension mismatch");
    return kde_fit(sample, config_.kde);
  }

  AFeatures a_features(const SampleSet& sample) const {
    auto est = fit_density(sample);
    return build_A_from_values(kde_eval(est, nodes_.points), measure_, lambdas_, plan_);
  }

  Vector intermediate(const SampleSet& sample) const override { return a_features(sample).values; }

 private:
  EmbedderConfig config_;
  HddMeasure measure_;
  std::vector<double> lambdas_;
  IndexSet index_set_;
  IntegrationNodes nodes_;
  ProjectionPlan plan_;
  RksMap rks_;
};

/// L2 baseline: projection coefficients of the density estimate itself.
class L2Embedder final : public DistributionEmbedder {
 public:
  explicit L2Embedder(EmbedderConfig config)
      : config_((validate(config), std::move(config))),
        index_set_(make_index_set(config_.dim, config_.basis)),
        nodes_(draw_integration_nodes(config_.dim, config_.n_e, derive_seed(config_.seed, "nodes"),
                                      config_.node_scheme)),
        plan_(index_set_, nodes_),
        rks_(static_cast<Eigen::Index>(index_set_.size()), config_.d_out, config_.sigma_k,
             derive_seed(config_.seed, "rks")) {}

  int dim() const override { return config_.dim; }
  Eigen::Index intermediate_dim() const override { return rks_.input_dim(); }
  const RksMap& rks() const override { return rks_; }
  const EmbedderConfig& config() const noexcept { return config_; }
  const IndexSet& index_set() const noexcept { return index_set_; }
  const IntegrationNodes& nodes() const noexcept { return nodes_; }
  const ProjectionPlan& plan() const noexcept { return plan_; }

  Vector intermediate(const SampleSet& sample) const override {
    detail::require(sample.dim() == config_.dim, "L2Embedder: sample dimension mismatch");
    auto est = kde_fit(sample, config_.kde);
    return project_density(kde_eval(est, nodes_.points), plan_);
  }

 private:
  EmbedderConfig config_;
  IndexSet index_set_;
  IntegrationNodes nodes_;
  ProjectionPlan plan_;
  RksMap rks_;
};

struct MmdOptions {
  double sigma_inner = 0.1;
  int d_inner = 1000;
};

/// MMD baseline: outer RKS of the empirical mean of inner RKS features.
class MmdEmbedder final : public DistributionEmbedder {
 public:
  MmdEmbedder(EmbedderConfig config, MmdOptions opts)
      : config_((validate(config), std::move(config))),
        opts_(opts),
        inner_(config_.dim, opts.d_inner, opts.sigma_inner, derive_seed(config_.seed, "mmd-inner")),
        rks_(opts.d_inner, config_.d_out, config_.sigma_k, derive_seed(config_.seed, "rks")) {}

  int dim() const override { return config_.dim; }
  Eigen::Index intermediate_dim() const override { return rks_.input_dim(); }
  const RksMap& rks() const override { return rks_; }
  const RksMap& inner() const noexcept { return inner_; }
  const MmdOptions& options() const noexcept { return opts_; }

  /// Mean map (1/n) sum_i z(X_i).
  Vector intermediate(const SampleSet& sample) const override {
    detail::require(sample.dim() == config_.dim, "MmdEmbedder: sample dimension mismatch");
    Vector acc = Vector::Zero(inner_.output_dim());
    for (Eigen::Index i = 0; i < sample.size(); ++i) acc += inner_.apply(sample.points().row(i).transpose());
    return acc / static_cast<double>(sample.size());
  }

 private:
  EmbedderConfig config_;
  MmdOptions opts_;
  RksMap inner_;
  RksMap rks_;
};

/// Intermediate vectors for every sample, one row each.
inline RowMatrix intermediate_batch(const DistributionEmbedder& e, std::span<const SampleSet> samples,
                                    unsigned threads = 1) {
  RowMatrix out(static_cast<Eigen::Index>(samples.size()), e.intermediate_dim());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    detail::require(samples[i].dim() == e.dim(), "sample dimension does not match configured dimension");
    out.row(static_cast<Eigen::Index>(i)) = e.intermediate(samples[i]).transpose();
  });
  return out;
}

/// Applies an RKS map to each row.
inline RowMatrix rks_apply_rows(const RksMap& map, const RowMatrix& rows, unsigned threads = 1) {
  detail::require(rows.cols() == map.input_dim(), "rks_apply_rows: input width mismatch");
  RowMatrix out(rows.rows(), map.output_dim());
  parallel_for(static_cast<std::size_t>(rows.rows()), threads, [&](std::size_t i) {
    auto r = static_cast<Eigen::Index>(i);
    out.row(r) = map.apply(rows.row(r).transpose()).transpose();
  });
  return out;
}

/// Row i is embed(samples[i]); independent of order and thread count.
inline RowMatrix embed_batch(const DistributionEmbedder& e, std::span<const SampleSet> samples,
                             unsigned threads = 1) {
  RowMatrix out(static_cast<Eigen::Index>(samples.size()), e.rks().output_dim());
  parallel_for(samples.size(), threads,
               [&](std::size_t i) { out.row(static_cast<Eigen::Index>(i)) = e.embed(samples[i]).transpose(); });
  return out;
}

/// Kernel estimate z_p . z_q.
inline double approx_kernel(const Eigen::Ref<const Vector>& zp, const Eigen::Ref<const Vector>& zq) {
  detail::require(zp.size() == zq.size(), "approx_kernel: length mismatch");
  return zp.dot(zq);
}

inline Vector l2_embed(const EmbedderConfig& config, const SampleSet& sample) {
  return L2Embedder(config).embed(sample);
}

inline Vector mmd_embed(const MmdOptions& opts, const EmbedderConfig& config, const SampleSet& sample) {
  return MmdEmbedder(config, opts).embed(sample);
}

/// Median pairwise Euclidean distance between rows, over at most
/// `max_rows` evenly spaced rows.
inline double median_pairwise_distance(const RowMatrix& rows, Eigen::Index max_rows = 200) {
  detail::require(rows.rows() >= 2, "median_pairwise_distance: need at least two rows");
  std::vector<Eigen::Index> pick;
  const Eigen::Index n = rows.rows();
  const Eigen::Index k = std::min(n, max_rows);
  for (Eigen::Index i = 0; i < k; ++i) pick.push_back(i * n / k);
  std::vector<double> d;
  for (std::size_t a = 0; a < pick.size(); ++a)
    for (std::size_t b = a + 1; b < pick.size(); ++b) d.push_back((rows.row(pick[a]) - rows.row(pick[b])).norm());
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) {
    double lo = *std::max_element(d.begin(), mid);
    med = 0.5 * (med + lo);
  }
  return med;
}

/// Median pairwise distance between raw points pooled over sample sets
/// (MMD inner bandwidth); uses at most `max_points` evenly spaced points.
inline double median_pooled_point_distance(std::span<const SampleSet> samples, Eigen::Index max_points = 1000) {
  detail::require(!samples.empty(), "median_pooled_point_distance: no samples");
  Eigen::Index total = 0;
  for (const auto& s : samples) total += s.size();
  const Eigen::Index k = std::min(total, max_points);
  RowMatrix pooled(k, samples.front().dim());
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::Index flat = i * total / k;
    for (const auto& s : samples) {
      if (flat < s.size()) {
        pooled.row(i) = s.points().row(flat);
        break;
      }
      flat -= s.size();
    }
  }
  return median_pairwise_distance(pooled, max_points);
}

}  // namespace hddembed
