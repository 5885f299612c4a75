#pragma once

// Real trigonometric tensor basis on [0, 1]^dim, index sets, integration
// nodes and the projection of g_lambda-transformed densities (A features).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hddembed/density.hpp"
#include "hddembed/divergence.hpp"
#include "hddembed/errors.hpp"
#include "hddembed/quadrature.hpp"
#include "hddembed/seeding.hpp"
#include "hddembed/types.hpp"

namespace hddembed {

/// One-dimensional factor: 1 (k = 0), sqrt2 cos(2 pi k x) or sqrt2 sin(2 pi k x).
struct TrigFactor {
  int k = 0;
  bool sine = false;

  friend bool operator==(const TrigFactor&, const TrigFactor&) = default;
};

struct BasisIndex {
  std::vector<TrigFactor> factors;

  bool is_constant() const {
    return std::all_of(factors.begin(), factors.end(), [](const TrigFactor& f) { return f.k == 0; });
  }
  friend bool operator==(const BasisIndex&, const BasisIndex&) = default;
};

struct TensorGrid {
  int m;
};
struct SobolevBall {
  double s;
  double t;
};
using IndexSetDescriptor = std::variant<TensorGrid, SobolevBall>;

/// Ordered basis index set; the order fixes the feature layout.
struct IndexSet {
  int dim = 0;
  std::vector<BasisIndex> indices;
  IndexSetDescriptor descriptor = TensorGrid{1};

  std::size_t size() const noexcept { return indices.size(); }
};

namespace detail {

/// First m real trig functions on [0, 1]: 1, cos1, sin1, cos2, sin2, ...
inline std::vector<TrigFactor> lowest_factors(int m) {
  std::vector<TrigFactor> out{{0, false}};
  for (int k = 1; static_cast<int>(out.size()) < m; ++k) {
    out.push_back({k, false});
    if (static_cast<int>(out.size()) < m) out.push_back({k, true});
  }
  return out;
}

inline void tensorize(const std::vector<std::vector<TrigFactor>>& per_dim, std::vector<BasisIndex>& out) {
  std::vector<std::size_t> pos(per_dim.size(), 0);
  while (true) {
    BasisIndex idx;
    for (std::size_t d = 0; d < per_dim.size(); ++d) idx.factors.push_back(per_dim[d][pos[d]]);
    out.push_back(std::move(idx));
    // last dimension varies fastest
    std::size_t d = per_dim.size();
    while (d > 0) {
      --d;
      if (++pos[d] < per_dim[d].size()) break;
      pos[d] = 0;
      if (d == 0) return;
    }
    if (per_dim.empty()) return;
  }
}

}  // namespace detail

/// m lowest-frequency real trig functions per dimension, tensorized; |V| = m^dim.
inline IndexSet make_tensor_index_set(int dim, int m) {
  detail::require(dim >= 1, "make_tensor_index_set: dimension must be >= 1");
  detail::require(m >= 1, "make_tensor_index_set: m must be >= 1");
  IndexSet set{dim, {}, TensorGrid{m}};
  std::vector<std::vector<TrigFactor>> per_dim(static_cast<std::size_t>(dim), detail::lowest_factors(m));
  detail::tensorize(per_dim, set.indices);
  return set;
}

/// Real-form indices whose frequency vector k satisfies sum_j |k_j|^(2s) <= t.
/// Ordered by that sum, then lexicographically by frequency vector.
inline IndexSet make_sobolev_index_set(int dim, double s, double t) {
  detail::require(dim >= 1, "make_sobolev_index_set: dimension must be >= 1");
  detail::require(s > 0.0 && s <= 1.0, "make_sobolev_index_set: s must lie in (0, 1]");
  detail::require(t > 0.0, "make_sobolev_index_set: t must be positive");
  const double slack = t * (1.0 + 1e-12);
  const int kmax = static_cast<int>(std::floor(std::pow(slack, 1.0 / (2.0 * s))));

  struct Freq {
    double cost;
    std::vector<int> k;
  };
  std::vector<Freq> freqs;
  std::vector<int> k(static_cast<std::size_t>(dim), 0);
  while (true) {
    double cost = 0.0;
    for (int v : k) cost += std::pow(static_cast<double>(v), 2.0 * s);
    if (cost <= slack) freqs.push_back({cost, k});
    std::size_t d = k.size();
    bool done = true;
    while (d > 0) {
      --d;
      if (++k[d] <= kmax) {
        done = false;
        break;
      }
      k[d] = 0;
    }
    if (done) break;
  }
  std::stable_sort(freqs.begin(), freqs.end(), [](const Freq& a, const Freq& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.k < b.k;
  });

  IndexSet set{dim, {}, SobolevBall{s, t}};
  for (const auto& f : freqs) {
    std::vector<std::vector<TrigFactor>> per_dim;
    for (int v : f.k) {
      if (v == 0) per_dim.push_back({{0, false}});
      else per_dim.push_back({{v, false}, {v, true}});
    }
    detail::tensorize(per_dim, set.indices);
  }
  return set;
}

inline double basis_factor(const TrigFactor& f, double x) {
  if (f.k == 0) return 1.0;
  double a = 2.0 * std::numbers::pi * static_cast<double>(f.k) * x;
  return std::numbers::sqrt2 * (f.sine ? std::sin(a) : std::cos(a));
}

inline double basis_eval(const BasisIndex& index, std::span<const double> x) {
  detail::require(index.factors.size() == x.size(), "basis_eval: dimension mismatch");
  double v = 1.0;
  for (std::size_t j = 0; j < x.size(); ++j) v *= basis_factor(index.factors[j], x[j]);
  return v;
}

enum class NodeScheme { Uniform, Halton, Quadrature };

inline std::string_view to_string(NodeScheme s) {
  switch (s) {
    case NodeScheme::Uniform: return "uniform";
    case NodeScheme::Halton: return "halton";
    case NodeScheme::Quadrature: return "quadrature";
  }
  return "?";
}

/// Integration nodes in the cube. Monte Carlo nodes carry no weights (plain
/// mean); quadrature nodes carry explicit weights summing to 1.
struct IntegrationNodes {
  RowMatrix points;
  std::vector<double> weights;
  NodeScheme scheme = NodeScheme::Uniform;
  std::uint64_t seed = 0;

  Eigen::Index count() const noexcept { return points.rows(); }
  Eigen::Index dim() const noexcept { return points.cols(); }
};

namespace detail {

inline double radical_inverse(std::uint64_t i, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

inline constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

}  // namespace detail

/// n_e nodes iid uniform in [0, 1]^dim (or a Halton sequence, skipping the origin).
inline IntegrationNodes draw_integration_nodes(int dim, int n_e, std::uint64_t seed,
                                               NodeScheme scheme = NodeScheme::Uniform) {
  detail::require(dim >= 1, "draw_integration_nodes: dimension must be >= 1");
  detail::require(n_e >= 1, "draw_integration_nodes: n_e must be >= 1");
  IntegrationNodes nodes{RowMatrix(n_e, dim), {}, scheme, seed};
  if (scheme == NodeScheme::Halton) {
    detail::require(dim <= 16, "draw_integration_nodes: Halton supports at most 16 dimensions");
    for (int i = 0; i < n_e; ++i)
      for (int j = 0; j < dim; ++j)
        nodes.points(i, j) = detail::radical_inverse(static_cast<std::uint64_t>(i) + 1, detail::kPrimes[j]);
    return nodes;
  }
  detail::require(scheme == NodeScheme::Uniform, "draw_integration_nodes: use make_quadrature_nodes for quadrature");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n_e; ++i)
    for (int j = 0; j < dim; ++j) nodes.points(i, j) = unif(rng);
  return nodes;
}

/// Tensor composite Gauss-Legendre rule on [0, 1]^dim with the given 1-D
/// panel edges (shared by all dimensions).
inline IntegrationNodes make_quadrature_nodes(int dim, std::span<const double> edges, unsigned order) {
  detail::require(dim >= 1, "make_quadrature_nodes: dimension must be >= 1");
  detail::require(edges.size() >= 2 && edges.front() == 0.0 && edges.back() == 1.0,
                  "make_quadrature_nodes: edges must span [0, 1]");
  auto [gx, gw] = quad::gauss_legendre(order);
  std::vector<double> x1, w1;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    double a = edges[p], b = edges[p + 1];
    detail::require(b > a, "make_quadrature_nodes: edges must be increasing");
    for (std::size_t i = 0; i < gx.size(); ++i) {
      x1.push_back(0.5 * (b - a) * gx[i] + 0.5 * (a + b));
      w1.push_back(0.5 * (b - a) * gw[i]);
    }
  }
  const auto per = static_cast<Eigen::Index>(x1.size());
  Eigen::Index total = 1;
  for (int d = 0; d < dim; ++d) total *= per;
  IntegrationNodes nodes{RowMatrix(total, dim), std::vector<double>(static_cast<std::size_t>(total)),
                         NodeScheme::Quadrature, 0};
  for (Eigen::Index i = 0; i < total; ++i) {
    Eigen::Index rem = i;
    double w = 1.0;
    for (int d = dim - 1; d >= 0; --d) {
      auto k = static_cast<std::size_t>(rem % per);
      rem /= per;
      nodes.points(i, d) = x1[k];
      w *= w1[k];
    }
    nodes.weights[static_cast<std::size_t>(i)] = w;
  }
  return nodes;
}

/// Monte Carlo projection coefficient (1/n_e) sum_i phi(u_i) f(u_i).
inline double project_mc(std::span<const double> f_at_nodes, const BasisIndex& index,
                         const IntegrationNodes& nodes) {
  detail::require(static_cast<Eigen::Index>(f_at_nodes.size()) == nodes.count(),
                  "project_mc: value count does not match node count");
  detail::require(static_cast<Eigen::Index>(index.factors.size()) == nodes.dim(), "project_mc: dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < nodes.count(); ++i) {
    std::span<const double> u(nodes.points.data() + i * nodes.dim(), static_cast<std::size_t>(nodes.dim()));
    acc += basis_eval(index, u) * f_at_nodes[static_cast<std::size_t>(i)];
  }
  return acc / static_cast<double>(nodes.count());
}

/// Basis values at the nodes, pre-multiplied by the integration weights:
/// row a of `weighted_basis` dotted with f gives the coefficient a_a(f).
class ProjectionPlan {
 public:
  ProjectionPlan(const IndexSet& set, const IntegrationNodes& nodes)
      : size_(static_cast<Eigen::Index>(set.size())), nodes_(nodes.count()) {
    detail::require(set.dim == nodes.dim(), "ProjectionPlan: index set and node dimensions differ");
    detail::require(nodes.weights.empty() || static_cast<Eigen::Index>(nodes.weights.size()) == nodes.count(),
                    "ProjectionPlan: weight count does not match node count");
    weighted_basis_.resize(size_, nodes_);
    const double mc_weight = 1.0 / static_cast<double>(nodes_);
    for (Eigen::Index a = 0; a < size_; ++a) {
      const auto& idx = set.indices[static_cast<std::size_t>(a)];
      for (Eigen::Index i = 0; i < nodes_; ++i) {
        std::span<const double> u(nodes.points.data() + i * nodes.dim(), static_cast<std::size_t>(nodes.dim()));
        double w = nodes.weights.empty() ? mc_weight : nodes.weights[static_cast<std::size_t>(i)];
        weighted_basis_(a, i) = basis_eval(idx, u) * w;
      }
    }
  }

  Eigen::Index basis_size() const noexcept { return size_; }
  Eigen::Index node_count() const noexcept { return nodes_; }

  /// Coefficients of the function with the given node values.
  Vector project(const Vector& f_at_nodes) const {
    detail::require(f_at_nodes.size() == nodes_, "ProjectionPlan::project: value count mismatch");
    return weighted_basis_ * f_at_nodes;
  }

 private:
  Eigen::Index size_;
  Eigen::Index nodes_;
  RowMatrix weighted_basis_;
};

/// Layout: M real-part blocks then M imaginary-part blocks, each |V| long,
/// all scaled by 1 / sqrt(M).
struct AFeatures {
  Vector values;
  int m_lambdas = 0;
  Eigen::Index basis_size = 0;

  auto real_block(int j) const { return values.segment(static_cast<Eigen::Index>(j) * basis_size, basis_size); }
  auto imag_block(int j) const {
    return values.segment((static_cast<Eigen::Index>(m_lambdas) + j) * basis_size, basis_size);
  }
};

/// A features from density values at the plan's nodes.
inline AFeatures build_A_from_values(std::span<const double> density_at_nodes, const HddMeasure& measure,
                                     std::span<const double> lambdas, const ProjectionPlan& plan) {
  detail::require(!lambdas.empty(), "build_A: empty lambda set");
  detail::require(static_cast<Eigen::Index>(density_at_nodes.size()) == plan.node_count(),
                  "build_A: density value count does not match node count");
  const auto m = static_cast<int>(lambdas.size());
  const Eigen::Index v = plan.basis_size();
  const Eigen::Index ne = plan.node_count();
  const double sqrt_z = std::sqrt(measure.total_mass());
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));

  Vector sqrt_p(ne), log_p(ne);
  for (Eigen::Index i = 0; i < ne; ++i) {
    double p = density_at_nodes[static_cast<std::size_t>(i)];
    detail::require(p >= 0.0, "build_A: density values must be nonnegative");
    sqrt_p[i] = std::sqrt(p);
    log_p[i] = p > 0.0 ? std::log(p) : 0.0;
  }

  AFeatures out{Vector::Zero(2 * m * v), m, v};
  Vector re(ne), im(ne);
  for (int j = 0; j < m; ++j) {
    const double lam = lambdas[static_cast<std::size_t>(j)];
    const Complex c = sqrt_z * c_lambda(lam);
    for (Eigen::Index i = 0; i < ne; ++i) {
      // w = p^(1/2 + i lam) - 1, with 0^(...) = 0
      double wr, wi;
      if (sqrt_p[i] == 0.0) {
        wr = -1.0;
        wi = 0.0;
      } else if (lam == 0.0) {
        wr = sqrt_p[i] - 1.0;
        wi = 0.0;
      } else {
        double a = lam * log_p[i];
        wr = sqrt_p[i] * std::cos(a) - 1.0;
        wi = sqrt_p[i] * std::sin(a);
      }
      re[i] = c.real() * wr - c.imag() * wi;
      im[i] = c.real() * wi + c.imag() * wr;
    }
    out.values.segment(static_cast<Eigen::Index>(j) * v, v) = scale * plan.project(re);
    out.values.segment((static_cast<Eigen::Index>(m) + j) * v, v) = scale * plan.project(im);
  }
  return out;
}

inline std::vector<double> density_at_nodes(const DensityEstimate& est, const IntegrationNodes& nodes) {
  return kde_eval(est, nodes.points);
}

inline AFeatures build_A(const DensityEstimate& est, const HddMeasure& measure, std::span<const double> lambdas,
                         const ProjectionPlan& plan, const IntegrationNodes& nodes) {
  detail::require(est.dim() == nodes.dim(), "build_A: density and node dimensions differ");
  auto values = density_at_nodes(est, nodes);
  return build_A_from_values(values, measure, lambdas, plan);
}

inline AFeatures build_A(const DensityEstimate& est, const HddMeasure& measure, std::span<const double> lambdas,
                         const IndexSet& set, const IntegrationNodes& nodes) {
  return build_A(est, measure, lambdas, ProjectionPlan(set, nodes), nodes);
}

/// Plain projection of the density itself onto V (the L2 baseline).
inline Vector project_density(std::span<const double> density_at_nodes, const ProjectionPlan& plan) {
  detail::require(static_cast<Eigen::Index>(density_at_nodes.size()) == plan.node_count(),
                  "project_density: value count mismatch");
  Vector f = Eigen::Map<const Vector>(density_at_nodes.data(), plan.node_count());
  return plan.project(f);
}

}  // namespace hddembed
