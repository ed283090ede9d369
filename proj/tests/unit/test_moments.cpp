#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fdboot/errors.hpp"
#include "fdboot/moments.hpp"
#include "oracles.hpp"

using namespace fdboot;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double max_abs(const MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

FunctionalDataset hand_dataset() {
  // Two curves per group on a 3-point grid.
  MatrixXd g1(2, 3), g2(2, 3);
  g1 << 1, 2, 3,
        3, 2, 1;
  g2 << 0, 0, 0,
        2, 4, 6;
  return FunctionalDataset(Grid::uniform(3), {g1, g2});
}

}  // namespace

TEST(Means, HandExample) {
  const auto d = hand_dataset();
  EXPECT_LE(max_abs(group_mean(d, 0) - VectorXd::Constant(3, 2.0)), 1e-15);
  VectorXd m2(3);
  m2 << 1, 2, 3;
  EXPECT_LE(max_abs(group_mean(d, 1) - m2), 1e-15);
  VectorXd pooled(3);
  pooled << 1.5, 2.0, 2.5;
  EXPECT_LE(max_abs(pooled_mean(d) - pooled), 1e-15);
}

TEST(Means, PooledMeanWeightsBySize) {
  MatrixXd a(1, 2), b(3, 2);
  a << 4, 4;
  b << 0, 0, 0, 0, 0, 0;
  const FunctionalDataset d(Grid::uniform(2), {a, b});
  EXPECT_DOUBLE_EQ(pooled_mean(d)[0], 1.0);
  EXPECT_DOUBLE_EQ(pooled_mean(d)[1], 1.0);
}

TEST(Covariance, HandExample) {
  const auto d = hand_dataset();
  // Residuals of group 1 are +-(-1, 0, 1): C_1 = v v^T with v = (-1, 0, 1).
  MatrixXd c1(3, 3);
  c1 << 1, 0, -1,
        0, 0, 0,
       -1, 0, 1;
  EXPECT_LE(max_abs(group_covariance(d, 0).values - c1), 1e-15);
  // Residuals of group 2 are +-(1, 2, 3).
  VectorXd v(3);
  v << 1, 2, 3;
  EXPECT_LE(max_abs(group_covariance(d, 1).values - v * v.transpose()), 1e-14);
  EXPECT_LE(max_abs(pooled_covariance(d).values - 0.5 * (c1 + v * v.transpose())), 1e-14);
}

TEST(Covariance, MatchesLoopOracle) {
  std::mt19937_64 gen(21);
  const auto d = oracle::random_dataset(gen, 13, {5, 8});
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_LE(max_abs(group_covariance(d, i).values - oracle::covariance_loop(d.group(i))), 1e-12);
  }
  EXPECT_LE(max_abs(pooled_covariance(d).values - oracle::pooled_covariance_loop(d)), 1e-12);
  EXPECT_LE(max_abs(mean_test_pooled_kernel(d).values - oracle::mean_kernel_loop(d)), 1e-12);
}

TEST(Covariance, CrossedWeightsDifferFromPooled) {
  std::mt19937_64 gen(22);
  auto d = oracle::random_dataset(gen, 6, {3, 9});
  const MatrixXd c1 = oracle::covariance_loop(d.group(0));
  const MatrixXd c2 = oracle::covariance_loop(d.group(1));
  EXPECT_LE(max_abs(mean_test_pooled_kernel(d).values - (0.75 * c1 + 0.25 * c2)), 1e-12);
  EXPECT_LE(max_abs(pooled_covariance(d).values - (0.25 * c1 + 0.75 * c2)), 1e-12);
}

TEST(Covariance, FactorDenseMatchesKernel) {
  std::mt19937_64 gen(23);
  const auto d = oracle::random_dataset(gen, 9, {4, 6});
  EXPECT_LE(max_abs(pooled_covariance_factor(d).dense().values - pooled_covariance(d).values), 1e-12);
  EXPECT_LE(max_abs(mean_test_kernel_factor(d).dense().values - mean_test_pooled_kernel(d).values), 1e-12);
  EXPECT_LE(max_abs(group_covariance_factor(d, 1).dense().values - group_covariance(d, 1).values), 1e-12);
}

TEST(Covariance, SingleCurveGroupIsDegenerate) {
  MatrixXd a(1, 3), b(2, 3);
  a.setOnes();
  b.setZero();
  const FunctionalDataset d(Grid::uniform(3), {a, b});
  EXPECT_THROW(group_covariance(d, 0), DegenerateGroup);
  EXPECT_THROW(pooled_covariance(d), DegenerateGroup);
  EXPECT_NO_THROW(pooled_mean(d));
}

TEST(Covariance, MeanKernelNeedsTwoGroups) {
  std::mt19937_64 gen(24);
  const auto d = oracle::random_dataset(gen, 4, {3, 3, 3});
  EXPECT_THROW(mean_test_pooled_kernel(d), UnsupportedK);
  EXPECT_NO_THROW(pooled_covariance(d));
}

TEST(Residuals, CentredPerGroup) {
  std::mt19937_64 gen(25);
  const auto d = oracle::random_dataset(gen, 5, {4, 7});
  const auto e = residuals(d);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_LE(group_mean(e, i).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE(max_abs(e.group(i) - (d.group(i).rowwise() - group_mean(d, i).transpose())), 1e-14);
  }
}

TEST(Eigen, MatchesGeneralSolverOracle) {
  std::mt19937_64 gen(31);
  const auto d = oracle::random_walk_dataset(gen, 40, {30, 25});
  const KernelMatrix k = pooled_covariance(d);
  const EigenSystem sys = eigen_decompose(k, 4);
  const auto ref = oracle::operator_eigen(k.values, d.grid().weights(), 4);
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(sys.eigenvalues[j], ref.values[j], 1e-10 * ref.values[0]) << j;
    EXPECT_LE(max_abs(sys.eigenfunctions.col(j) - ref.functions.col(j)), 1e-7) << j;
  }
}

TEST(Eigen, GramAndKernelRoutesAgree) {
  std::mt19937_64 gen(32);
  const auto d = oracle::random_walk_dataset(gen, 120, {15, 12});
  for (const auto& factor : {pooled_covariance_factor(d), mean_test_kernel_factor(d)}) {
    const EigenSystem gram = eigen_decompose(factor, 5, EigenRoute::Gram);
    const EigenSystem kern = eigen_decompose(factor, 5, EigenRoute::Kernel);
    const EigenSystem dense = eigen_decompose(factor.dense(), 5);
    EXPECT_LE(max_abs(gram.eigenvalues - kern.eigenvalues), 1e-10 * kern.eigenvalues[0]);
    EXPECT_LE(max_abs(gram.eigenvalues - dense.eigenvalues), 1e-10 * kern.eigenvalues[0]);
    EXPECT_LE(max_abs(gram.eigenfunctions - kern.eigenfunctions), 1e-6);
    EXPECT_NEAR(gram.total_variance, kern.total_variance, 1e-10 * kern.total_variance);
    EXPECT_LE(max_abs(gram.explained_fraction - kern.explained_fraction), 1e-10);
  }
}

TEST(Eigen, RankOneKernel) {
  const Grid g = Grid::uniform(101);
  const VectorXd phi = std::sqrt(2.0) * (std::numbers::pi * g.points().array()).sin();
  const VectorXd unit = phi / norm(phi, g);
  const KernelMatrix k{3.0 * unit * unit.transpose(), g};
  const EigenSystem sys = eigen_decompose(k, 2);
  EXPECT_NEAR(sys.eigenvalues[0], 3.0, 1e-12);
  EXPECT_NEAR(sys.eigenvalues[1], 0.0, 1e-12);
  EXPECT_LE(max_abs(sys.eigenfunctions.col(0) - unit), 1e-10);
  EXPECT_NEAR(sys.explained_fraction[0], 1.0, 1e-12);
  EXPECT_LE(sys.explained_fraction[0], 1.0);
}

TEST(Eigen, BrownianKernelSpectrum) {
  const Grid g = Grid::uniform(500);
  MatrixXd k(500, 500);
  for (int i = 0; i < 500; ++i) {
    for (int j = 0; j < 500; ++j) k(i, j) = std::min(g.points()[i], g.points()[j]);
  }
  const EigenSystem sys = eigen_decompose(KernelMatrix{k, g}, 3);
  for (int j = 0; j < 3; ++j) {
    const double exact = 1.0 / std::pow((j + 0.5) * std::numbers::pi, 2);
    EXPECT_NEAR(sys.eigenvalues[j], exact, 2e-3 * exact) << j;
    const VectorXd f = std::sqrt(2.0) * ((j + 0.5) * std::numbers::pi * g.points().array()).sin();
    EXPECT_GT(std::abs(inner_product(sys.eigenfunctions.col(j), f, g)), 0.999) << j;
  }
  EXPECT_NEAR(sys.total_variance, 0.5, 2e-3);
}

TEST(Eigen, TraceAndOrthonormality) {
  std::mt19937_64 gen(33);
  const auto d = oracle::random_walk_dataset(gen, 60, {20, 20});
  const KernelMatrix k = pooled_covariance(d);
  const EigenSystem sys = eigen_decompose(k, 6);
  double trace = 0.0;
  for (Eigen::Index t = 0; t < 60; ++t) trace += d.grid().weights()[t] * k.values(t, t);
  EXPECT_NEAR(sys.total_variance, trace, 1e-12 * trace);
  const MatrixXd gram = sys.eigenfunctions.transpose() * d.grid().weights().asDiagonal() * sys.eigenfunctions;
  EXPECT_LE(max_abs(gram - MatrixXd::Identity(6, 6)), 1e-10);
  for (int j = 0; j + 1 < 6; ++j) EXPECT_GE(sys.eigenvalues[j], sys.eigenvalues[j + 1]);
  for (int j = 0; j + 1 < 6; ++j) EXPECT_LE(sys.explained_fraction[j], sys.explained_fraction[j + 1]);
  EXPECT_NEAR(sys.explained_fraction[5], sys.eigenvalues.sum() / trace, 1e-12);
  for (int j = 0; j < 6; ++j) {
    Eigen::Index arg = 0;
    sys.eigenfunctions.col(j).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(sys.eigenfunctions(arg, j), 0.0);
  }
}

TEST(Eigen, OperatorEquation) {
  std::mt19937_64 gen(34);
  const auto d = oracle::random_walk_dataset(gen, 50, {18, 22});
  const KernelMatrix k = mean_test_pooled_kernel(d);
  const EigenSystem sys = eigen_decompose(k, 3);
  const VectorXd& w = d.grid().weights();
  for (int j = 0; j < 3; ++j) {
    const VectorXd lhs = k.values * w.asDiagonal() * sys.eigenfunctions.col(j);
    EXPECT_LE(max_abs(lhs - sys.eigenvalues[j] * sys.eigenfunctions.col(j)), 1e-10 * sys.eigenvalues[0]);
  }
}

TEST(Eigen, AsymmetricKernelRejected) {
  const Grid g = Grid::uniform(4);
  MatrixXd k = MatrixXd::Identity(4, 4);
  k(0, 3) = 0.5;
  EXPECT_THROW(eigen_decompose(KernelMatrix{k, g}, 1), InvalidKernel);
}

TEST(Eigen, CountOutOfRange) {
  const Grid g = Grid::uniform(4);
  const KernelMatrix k{MatrixXd::Identity(4, 4), g};
  EXPECT_THROW(eigen_decompose(k, 0), InvalidParameter);
  EXPECT_THROW(eigen_decompose(k, 5), InvalidParameter);
}

TEST(Scores, MatchLoopAndEigenvalues) {
  std::mt19937_64 gen(35);
  const auto d = oracle::random_walk_dataset(gen, 40, {25, 25});
  const EigenSystem sys = eigen_decompose(pooled_covariance(d), 3);
  const VectorXd& w = d.grid().weights();
  MatrixXd second = MatrixXd::Zero(3, 3);
  for (std::size_t i = 0; i < 2; ++i) {
    const Curve center = group_mean(d, i);
    const MatrixXd s = project_scores(d, i, center, sys.eigenfunctions);
    EXPECT_LE(max_abs(s - oracle::scores_loop(d.group(i), center, sys.eigenfunctions, w)), 1e-12);
    second += s.transpose() * s / 50.0;
  }
  // Pooled second moment of the scores is diag(lambda).
  EXPECT_LE(max_abs(second - MatrixXd(sys.eigenvalues.asDiagonal())), 1e-10 * sys.eigenvalues[0]);
}

TEST(Scores, VectorBasisOverload) {
  std::mt19937_64 gen(36);
  const auto d = oracle::random_dataset(gen, 10, {3, 4});
  const EigenSystem sys = eigen_decompose(pooled_covariance(d), 2);
  const std::vector<Curve> basis{sys.eigenfunction(0), sys.eigenfunction(1)};
  const Curve c = pooled_mean(d);
  EXPECT_LE(max_abs(project_scores(d, 1, c, basis) - project_scores(d, 1, c, sys.eigenfunctions)), 1e-15);
}

TEST(Degeneracy, FlagsRepeatedEigenvalue) {
  const Grid g = Grid::uniform(5);
  MatrixXd k = MatrixXd::Zero(5, 5);
  k.diagonal() << 2, 2, 1, 0.5, 0.1;
  k = (g.sqrt_weights().cwiseInverse().asDiagonal() * k * g.sqrt_weights().cwiseInverse().asDiagonal()).eval();
  const EigenSystem sys = eigen_decompose(KernelMatrix{k, g}, 3);
  const auto pairs = near_degenerate_pairs(sys, 3);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], 1);
}
