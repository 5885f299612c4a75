#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "hddembed/errors.hpp"
#include "hddembed/seeding.hpp"
#include "hddembed/types.hpp"

namespace hddembed {

struct RidgeModel {
  Vector weights;
  double intercept = 0.0;
  double reg = 0.0;
};

namespace detail {

/// Closed-form ridge fits for several regularization values sharing one
/// centered Gram / normal matrix.
inline std::vector<RidgeModel> ridge_fit_many(const RowMatrix& x, const Vector& y, std::span<const double> regs) {
  const Eigen::Index n = x.rows(), d = x.cols();
  detail::require(n >= 1, "ridge_fit: at least one row is required");
  detail::require(y.size() == n, "ridge_fit: target length does not match row count");
  for (double reg : regs) detail::require(reg >= 0.0 && std::isfinite(reg), "ridge_fit: reg must be nonnegative");

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const RowMatrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  const double nn = static_cast<double>(n);
  const bool primal = d < n;

  Eigen::MatrixXd gram;
  Vector rhs;
  if (primal) {
    gram = (xc.transpose() * xc) / nn;
    rhs = xc.transpose() * yc / nn;
  } else {
    gram = xc * xc.transpose();
  }

  std::vector<RidgeModel> out;
  for (double reg : regs) {
    RidgeModel model;
    model.reg = reg;
    if (reg == 0.0) {
      if (!primal) throw SolverError("ridge_fit: singular normal equations at reg = 0 (D >= N); use reg > 0");
      Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
      const auto& diag = ldlt.vectorD();
      const double top = diag.cwiseAbs().maxCoeff();
      if (ldlt.info() != Eigen::Success || !(diag.minCoeff() > 1e-12 * std::max(top, 1e-300)))
        throw SolverError("ridge_fit: singular normal equations at reg = 0; use reg > 0");
      model.weights = ldlt.solve(rhs);
    } else if (primal) {
      Eigen::MatrixXd a = gram;
      a.diagonal().array() += reg;
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      if (llt.info() != Eigen::Success) throw SolverError("ridge_fit: normal equations are not positive definite");
      model.weights = llt.solve(rhs);
    } else {
      Eigen::MatrixXd k = gram;
      k.diagonal().array() += nn * reg;
      Eigen::LLT<Eigen::MatrixXd> llt(k);
      if (llt.info() != Eigen::Success) throw SolverError("ridge_fit: dual system is not positive definite");
      Vector alpha = llt.solve(yc);
      model.weights = xc.transpose() * alpha;
    }
    model.intercept = y_mean - x_mean.dot(model.weights);
    out.push_back(std::move(model));
  }
  return out;
}

}  // namespace detail

/// Minimizes (1/N) |y - X w - b|^2 + reg |w|^2 in closed form after
/// centering. Uses the D x D normal equations when D < N and the
/// equivalent N x N system otherwise.
inline RidgeModel ridge_fit(const RowMatrix& x, const Vector& y, double reg) {
  return detail::ridge_fit_many(x, y, std::span<const double>(&reg, 1)).front();
}

inline Vector ridge_predict(const RidgeModel& model, const RowMatrix& x) {
  detail::require(x.cols() == model.weights.size(), "ridge_predict: feature width mismatch");
  return (x * model.weights).array() + model.intercept;
}

/// Regularized objective (1/N)|y - Xw - b|^2 + reg |w|^2.
inline double ridge_objective(const RowMatrix& x, const Vector& y, const Vector& w, double b, double reg) {
  Vector r = y - (x * w).array().matrix() - Vector::Constant(y.size(), b);
  return r.squaredNorm() / static_cast<double>(y.size()) + reg * w.squaredNorm();
}

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  detail::require(pred.size() == truth.size() && !pred.empty(), "rmse: length mismatch or empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

inline double rmse(const Vector& pred, const Vector& truth) {
  return rmse(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
              std::span<const double>(truth.data(), static_cast<std::size_t>(truth.size())));
}

/// 1 - SS_res / SS_tot.
inline double r2_score(std::span<const double> pred, std::span<const double> truth) {
  detail::require(pred.size() == truth.size() && !pred.empty(), "r2_score: length mismatch or empty input");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  detail::require(ss_tot > 0.0, "r2_score: truth is constant, R^2 is undefined");
  return 1.0 - ss_res / ss_tot;
}

/// R^2 of an estimated Gram against a reference over all N^2 entries.
inline double gram_r2(const RowMatrix& estimate, const RowMatrix& reference) {
  detail::require(estimate.rows() == reference.rows() && estimate.cols() == reference.cols(),
                  "gram_r2: shape mismatch");
  return r2_score(std::span<const double>(estimate.data(), static_cast<std::size_t>(estimate.size())),
                  std::span<const double>(reference.data(), static_cast<std::size_t>(reference.size())));
}

struct HyperParams {
  double reg = 1e-3;
  double sigma_k = 1.0;
  double kde_scale = 1.0;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct SelectionResult {
  HyperParams best;
  double best_val_rmse = 0.0;
  std::vector<std::pair<HyperParams, double>> table;
  std::vector<Eigen::Index> train_idx;
  std::vector<Eigen::Index> val_idx;
};

/// Deterministic train/validation split; the validation part holds
/// ceil(fraction * N) rows (at least one, and at least one row left to train).
inline std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> validation_split(Eigen::Index n,
                                                                                        double fraction,
                                                                                        std::uint64_t seed) {
  detail::require(n >= 2, "validation_split: need at least two rows");
  detail::require(fraction > 0.0 && fraction < 1.0, "validation_split: fraction must lie in (0, 1)");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, "validation-split"));
  // Fisher-Yates with an explicit index draw (std::shuffle's algorithm is unspecified)
  for (std::size_t i = perm.size() - 1; i > 0; --i) {
    std::uint64_t j = rng() % (i + 1);
    std::swap(perm[i], perm[j]);
  }
  auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, perm.size() - 1);
  std::vector<Eigen::Index> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Eigen::Index> train(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

inline RowMatrix take_rows(const RowMatrix& m, std::span<const Eigen::Index> idx) {
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

inline Vector take(const Vector& v, std::span<const Eigen::Index> idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

/// Feature matrix for a given (sigma_k, kde_scale) pair.
using FeatureFn = std::function<RowMatrix(double sigma_k, double kde_scale)>;

/// Grid search minimizing validation RMSE; ties go to the larger reg.
/// Features are requested once per distinct (sigma_k, kde_scale).
inline SelectionResult model_select(const FeatureFn& features, const Vector& targets,
                                    std::span<const HyperParams> grid, double val_fraction, std::uint64_t seed) {
  detail::require(!grid.empty(), "model_select: empty hyperparameter grid");
  SelectionResult res;
  std::tie(res.train_idx, res.val_idx) = validation_split(targets.size(), val_fraction, seed);
  const Vector y_tr = take(targets, res.train_idx);
  const Vector y_val = take(targets, res.val_idx);

  // distinct (sigma_k, kde_scale) keys in order of first appearance
  std::vector<std::pair<double, double>> keys;
  for (const auto& hp : grid) {
    auto key = std::make_pair(hp.sigma_k, hp.kde_scale);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  std::vector<double> errors(grid.size(), 0.0);
  for (const auto& key : keys) {
    RowMatrix f = features(key.first, key.second);
    detail::require(f.rows() == targets.size(), "model_select: feature rows do not match targets");
    std::vector<std::size_t> members;
    std::vector<double> regs;
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (grid[g].sigma_k == key.first && grid[g].kde_scale == key.second) {
        members.push_back(g);
        regs.push_back(grid[g].reg);
      }
    auto models = detail::ridge_fit_many(take_rows(f, res.train_idx), y_tr, regs);
    const RowMatrix f_val = take_rows(f, res.val_idx);
    for (std::size_t k = 0; k < members.size(); ++k) errors[members[k]] = rmse(ridge_predict(models[k], f_val), y_val);
  }
  bool have_best = false;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto& hp = grid[g];
    double err = errors[g];
    res.table.emplace_back(hp, err);
    if (!have_best || err < res.best_val_rmse || (err == res.best_val_rmse && hp.reg > res.best.reg)) {
      res.best = hp;
      res.best_val_rmse = err;
      have_best = true;
    }
  }
  return res;
}

}  // namespace hddembed
