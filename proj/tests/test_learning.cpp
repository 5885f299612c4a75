#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hddembed/learning.hpp"

using namespace hddembed;

namespace {

RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

Vector random_vector(Eigen::Index n, std::uint64_t seed) { return random_matrix(n, 1, seed).col(0); }

// Minimizer of (1/N)|y - Xw - b|^2 + reg |w|^2 from the full (D+1)-dimensional
// normal equations, intercept unpenalized.
std::pair<Vector, double> dense_ridge(const RowMatrix& x, const Vector& y, double reg) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::MatrixXd a(n, d + 1);
  a.leftCols(d) = x;
  a.col(d).setOnes();
  Eigen::MatrixXd h = a.transpose() * a / static_cast<double>(n);
  h.topLeftCorner(d, d).diagonal().array() += reg;
  Vector rhs = a.transpose() * y / static_cast<double>(n);
  Vector sol = h.fullPivLu().solve(rhs);
  return {sol.head(d), sol[d]};
}

}  // namespace

TEST(Ridge, RecoversLinearTargets) {
  RowMatrix x = random_matrix(200, 5, 1);
  Vector w = random_vector(5, 2);
  Vector y = (x * w).array() + 3.0;
  auto m = ridge_fit(x, y, 1e-10);
  EXPECT_LE(rmse(ridge_predict(m, x), y), 1e-6);
  EXPECT_NEAR(m.intercept, 3.0, 1e-6);
}

TEST(Ridge, HugeRegularizationPredictsMean) {
  RowMatrix x = random_matrix(50, 4, 3);
  Vector y = random_vector(50, 4);
  auto m = ridge_fit(x, y, 1e9);
  Vector p = ridge_predict(m, x);
  EXPECT_LE((p.array() - y.mean()).abs().maxCoeff(), 1e-6);
}

TEST(Ridge, MatchesDenseSolveInBothRegimes) {
  for (auto [n, d] : {std::pair<Eigen::Index, Eigen::Index>{60, 8}, {20, 45}}) {
    RowMatrix x = random_matrix(n, d, 5 + static_cast<std::uint64_t>(d));
    Vector y = random_vector(n, 6);
    for (double reg : {1e-4, 0.1, 3.0}) {
      auto m = ridge_fit(x, y, reg);
      auto [w, b] = dense_ridge(x, y, reg);
      EXPECT_LE((m.weights - w).cwiseAbs().maxCoeff(), 1e-8) << n << "x" << d << " reg " << reg;
      EXPECT_NEAR(m.intercept, b, 1e-8);
    }
  }
}

TEST(Ridge, GradientVanishesAtSolution) {
  for (auto [n, d] : {std::pair<Eigen::Index, Eigen::Index>{40, 6}, {15, 30}}) {
    RowMatrix x = random_matrix(n, d, 7);
    Vector y = random_vector(n, 8);
    const double reg = 0.05;
    auto m = ridge_fit(x, y, reg);
    // analytic gradient
    Vector r = y - (x * m.weights).array().matrix() - Vector::Constant(n, m.intercept);
    Vector gw = -2.0 / static_cast<double>(n) * x.transpose() * r + 2.0 * reg * m.weights;
    EXPECT_LE(gw.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(std::abs(-2.0 * r.mean()), 1e-8);
    // central differences of the objective
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < d; ++j) {
      Vector wp = m.weights, wm = m.weights;
      wp[j] += h;
      wm[j] -= h;
      double g = (ridge_objective(x, y, wp, m.intercept, reg) - ridge_objective(x, y, wm, m.intercept, reg)) / (2 * h);
      EXPECT_LE(std::abs(g), 1e-8);
    }
    double gb = (ridge_objective(x, y, m.weights, m.intercept + h, reg) -
                 ridge_objective(x, y, m.weights, m.intercept - h, reg)) /
                (2 * h);
    EXPECT_LE(std::abs(gb), 1e-8);
  }
}

TEST(Ridge, DuplicatedRowsLeaveSolutionUnchanged) {
  for (auto [n, d] : {std::pair<Eigen::Index, Eigen::Index>{30, 4}, {10, 25}}) {
    RowMatrix x = random_matrix(n, d, 9);
    Vector y = random_vector(n, 10);
    RowMatrix x2(2 * n, d);
    x2 << x, x;
    Vector y2(2 * n);
    y2 << y, y;
    auto a = ridge_fit(x, y, 0.2), b = ridge_fit(x2, y2, 0.2);
    EXPECT_LE((a.weights - b.weights).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(a.intercept, b.intercept, 1e-10);
  }
}

TEST(Ridge, SingularUnregularizedSystemsRejected) {
  RowMatrix wide = random_matrix(5, 10, 11);
  EXPECT_THROW(ridge_fit(wide, random_vector(5, 12), 0.0), SolverError);
  RowMatrix tall = random_matrix(20, 3, 13);
  tall.col(2) = tall.col(1);
  EXPECT_THROW(ridge_fit(tall, random_vector(20, 14), 0.0), SolverError);
  EXPECT_NO_THROW(ridge_fit(random_matrix(20, 3, 15), random_vector(20, 16), 0.0));
  EXPECT_THROW(ridge_fit(tall, random_vector(20, 14), -1.0), DomainError);
  EXPECT_THROW(ridge_fit(tall, random_vector(19, 14), 1.0), DomainError);
}

TEST(ValidationSplit, ReproduciblePartition) {
  auto [tr, va] = validation_split(37, 0.25, 5);
  auto [tr2, va2] = validation_split(37, 0.25, 5);
  EXPECT_EQ(tr, tr2);
  EXPECT_EQ(va, va2);
  EXPECT_EQ(va.size(), 10u);
  std::vector<int> seen(37, 0);
  for (auto i : tr) ++seen[static_cast<std::size_t>(i)];
  for (auto i : va) ++seen[static_cast<std::size_t>(i)];
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_NE(validation_split(37, 0.25, 6).second, va);
  EXPECT_THROW(validation_split(1, 0.5, 1), DomainError);
  EXPECT_THROW(validation_split(10, 1.0, 1), DomainError);
}

TEST(ModelSelect, SingleElementGrid) {
  RowMatrix x = random_matrix(40, 3, 20);
  Vector y = random_vector(40, 21);
  std::vector<HyperParams> grid{{0.5, 2.0, 0.7}};
  auto res = model_select([&](double, double) { return x; }, y, grid, 0.25, 1);
  EXPECT_EQ(res.best, grid[0]);
  ASSERT_EQ(res.table.size(), 1u);
  EXPECT_EQ(res.best_val_rmse, res.table[0].second);
}

TEST(ModelSelect, RecoversGeneratingParameters) {
  RowMatrix x = random_matrix(300, 4, 22);
  RowMatrix noise = random_matrix(300, 4, 23);
  Vector y = x * random_vector(4, 24);
  int calls = 0;
  FeatureFn f = [&](double sigma, double scale) {
    ++calls;
    return RowMatrix(x + (std::abs(sigma - 2.0) + std::abs(scale - 0.5)) * noise);
  };
  std::vector<HyperParams> grid;
  for (double reg : {1e-6, 1e-2, 1.0})
    for (double s : {1.0, 2.0, 4.0})
      for (double c : {0.5, 1.0}) grid.push_back({reg, s, c});
  auto res = model_select(f, y, grid, 0.25, 3);
  EXPECT_EQ(res.best.sigma_k, 2.0);
  EXPECT_EQ(res.best.kde_scale, 0.5);
  EXPECT_EQ(res.best.reg, 1e-6);
  EXPECT_EQ(calls, 6);
  EXPECT_EQ(res.table.size(), grid.size());
  auto again = model_select(f, y, grid, 0.25, 3);
  EXPECT_EQ(again.best, res.best);
  EXPECT_EQ(again.val_idx, res.val_idx);
}

TEST(ModelSelect, TiesGoToLargerRegularization) {
  RowMatrix zero = RowMatrix::Zero(20, 3);
  Vector y = random_vector(20, 25);
  std::vector<HyperParams> grid{{0.1, 1.0, 1.0}, {10.0, 1.0, 1.0}, {1.0, 1.0, 1.0}};
  auto res = model_select([&](double, double) { return zero; }, y, grid, 0.3, 4);
  EXPECT_EQ(res.best.reg, 10.0);
}

TEST(ModelSelect, EmptyGridRejected) {
  std::vector<HyperParams> none;
  EXPECT_THROW(model_select([](double, double) { return RowMatrix(); }, Vector::Zero(4), none, 0.25, 1),
               DomainError);
}

TEST(Metrics, RmseAndR2) {
  std::vector<double> t{1.0, 2.0, 4.0, 5.0};
  EXPECT_EQ(rmse(t, t), 0.0);
  EXPECT_EQ(r2_score(t, t), 1.0);
  std::vector<double> mean(4, 3.0);
  EXPECT_NEAR(r2_score(mean, t), 0.0, 1e-15);
  std::vector<double> zero(2, 0.0), a{1.0, 2.0};
  EXPECT_NEAR(rmse(zero, a), std::sqrt(2.5), 1e-15);
  EXPECT_THROW(r2_score(a, std::vector<double>{3.0, 3.0}), DomainError);
  EXPECT_THROW(rmse(a, t), DomainError);
}

TEST(Metrics, GramR2InvariantUnderReordering) {
  RowMatrix f = random_matrix(6, 3, 30);
  RowMatrix ref = f * f.transpose();
  RowMatrix est = ref + 0.1 * random_matrix(6, 6, 31);
  std::vector<Eigen::Index> perm{3, 0, 5, 1, 4, 2};
  RowMatrix pr(6, 6), pe(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      pr(i, j) = ref(perm[i], perm[j]);
      pe(i, j) = est(perm[i], perm[j]);
    }
  EXPECT_NEAR(gram_r2(est, ref), gram_r2(pe, pr), 1e-12);
  EXPECT_LT(gram_r2(est, ref), 1.0);
  EXPECT_THROW(gram_r2(est, RowMatrix::Zero(5, 5)), DomainError);
}
