#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fdboot/errors.hpp"
#include "fdboot/moments.hpp"
#include "fdboot/statistics.hpp"
#include "oracles.hpp"

using namespace fdboot;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

FunctionalDataset walks(std::uint64_t seed, Eigen::Index m, Eigen::Index n1, Eigen::Index n2) {
  std::mt19937_64 gen(seed);
  return oracle::random_walk_dataset(gen, m, {n1, n2});
}

FunctionalDataset swapped(const FunctionalDataset& d) {
  return FunctionalDataset(d.grid(), {d.group(1), d.group(0)});
}

FunctionalDataset transformed(const FunctionalDataset& d, double scale, const VectorXd& shift1,
                              const VectorXd& shift2) {
  MatrixXd a = scale * d.group(0);
  MatrixXd b = scale * d.group(1);
  a.rowwise() += shift1.transpose();
  b.rowwise() += shift2.transpose();
  return FunctionalDataset(d.grid(), {a, b});
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(Names, ParseAndPrint) {
  for (auto k : {StatisticKind::TN, StatisticKind::TPN_G, StatisticKind::TPN, StatisticKind::SN,
                 StatisticKind::SP1, StatisticKind::SP2}) {
    EXPECT_EQ(parse_statistic(statistic_name(k)), k);
  }
  EXPECT_EQ(parse_statistic("TPNG"), StatisticKind::TPN_G);
  EXPECT_THROW(parse_statistic("foo"), InvalidParameter);
  EXPECT_TRUE(is_projection(StatisticKind::SP2));
  EXPECT_FALSE(is_projection(StatisticKind::SN));
  EXPECT_TRUE(is_covariance_statistic(StatisticKind::TPN));
  EXPECT_FALSE(is_covariance_statistic(StatisticKind::SP1));
}

TEST(Vech, ColumnMajorLowerTriangle) {
  const auto idx = vech_indices(3);
  const std::vector<std::pair<int, int>> expected{{0, 0}, {1, 0}, {2, 0}, {1, 1}, {2, 1}, {2, 2}};
  EXPECT_EQ(idx, expected);
  EXPECT_EQ(idx, oracle::lower_pairs(3));
  MatrixXd s(3, 3);
  s << 1, 2, 3,
       2, 4, 5,
       3, 5, 6;
  VectorXd v(6);
  v << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(vech(s), v);
  EXPECT_EQ(vech_indices(1).size(), 1u);
}

TEST(TN, HandExample) {
  // Grid {0, 1} has weights (1/2, 1/2). C_1 is all ones, C_2 = [[1,-1],[-1,1]];
  // their difference has off-diagonal 2, so T_N = 4 * (1/4)(4 + 4) = 8.
  MatrixXd a(2, 2), b(2, 2);
  a << 1, 1, -1, -1;
  b << 1, -1, -1, 1;
  const FunctionalDataset d(Grid::uniform(2), {a, b});
  EXPECT_NEAR(stat_TN(d).value, 8.0, 1e-12);
}

TEST(SN, HandExample) {
  // Means (3, 3) and (0, 0), n1 n2 / N = 1, squared norm 9.
  MatrixXd a(2, 2), b(2, 2);
  a << 2, 2, 4, 4;
  b << 0, 0, 0, 0;
  const FunctionalDataset d(Grid::uniform(2), {a, b});
  EXPECT_NEAR(stat_SN(d).value, 9.0, 1e-12);
}

TEST(SN, ConstantShiftExample) {
  // Constant curves 0 and 2, n1 = n2 = 25: (625/50) * 4 = 50.
  const FunctionalDataset d(Grid::uniform(11), {MatrixXd::Zero(25, 11), MatrixXd::Constant(25, 11, 2.0)});
  EXPECT_NEAR(stat_SN(d).value, 50.0, 1e-10);
}

TEST(TN, MatchesOracle) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto d = walks(seed, 30, 7, 11);
    EXPECT_LT(rel(stat_TN(d).value, oracle::tn_loop(d)), 1e-12);
  }
}

TEST(SN, MatchesOracle) {
  const auto d = walks(4, 30, 9, 5);
  EXPECT_LT(rel(stat_SN(d).value, oracle::sn_loop(d)), 1e-12);
}

class ProjectionOracle : public ::testing::TestWithParam<int> {};

TEST_P(ProjectionOracle, CovarianceStatistics) {
  const int p = GetParam();
  const auto d = walks(10 + p, 40, 20, 26);
  const KernelMatrix pooled = pooled_covariance(d);
  const auto ref = oracle::operator_eigen(pooled.values, d.grid().weights(), p);
  const auto tpng = stat_TPN_G(d, p);
  EXPECT_LT(rel(tpng.value, oracle::tpng_loop(d, ref.functions, ref.values)), 1e-8);
  EXPECT_LT(rel(stat_TPN(d, p).value, oracle::tpn_loop(d, ref.functions)), 1e-8);
  EXPECT_EQ(tpng.p, p);
  ASSERT_EQ(tpng.eigenvalues.size(), p);
  for (int k = 0; k < p; ++k) EXPECT_LT(rel(tpng.eigenvalues[k], ref.values[k]), 1e-10);
}

TEST_P(ProjectionOracle, LHatMatchesQuadrupleLoop) {
  const int p = GetParam();
  const auto d = walks(20 + p, 30, 15, 18);
  const EigenSystem sys = eigen_decompose(pooled_covariance(d), p);
  const VechCovariance cov = covariance_of_vech(d, p, sys);
  const MatrixXd ref = oracle::lhat_loop(d, sys.eigenfunctions);
  EXPECT_LE((cov.matrix - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
  EXPECT_LE((cov.matrix - cov.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-14 * ref.cwiseAbs().maxCoeff());
  EXPECT_GE(cov.condition_number, 1.0);
}

TEST_P(ProjectionOracle, MeanStatistics) {
  const int p = GetParam();
  auto d = walks(30 + p, 40, 14, 21);
  const KernelMatrix z = mean_test_pooled_kernel(d);
  const auto ref = oracle::operator_eigen(z.values, d.grid().weights(), p);
  EXPECT_LT(rel(stat_SP(d, p, 1).value, oracle::sp_loop(d, ref.functions, ref.values, 1)), 1e-8);
  EXPECT_LT(rel(stat_SP(d, p, 2).value, oracle::sp_loop(d, ref.functions, ref.values, 2)), 1e-8);
}

INSTANTIATE_TEST_SUITE_P(P, ProjectionOracle, ::testing::Values(1, 2, 3, 5));

TEST(Invariants, IdenticalGroupsGiveZero) {
  const auto base = walks(40, 25, 12, 12);
  const FunctionalDataset d(base.grid(), {base.group(0), base.group(0)});
  EXPECT_NEAR(stat_TN(d).value, 0.0, 1e-12);
  EXPECT_NEAR(stat_SN(d).value, 0.0, 1e-12);
  EXPECT_NEAR(stat_TPN_G(d, 2).value, 0.0, 1e-12);
  EXPECT_NEAR(stat_TPN(d, 2).value, 0.0, 1e-12);
  EXPECT_NEAR(stat_SP(d, 3, 1).value, 0.0, 1e-12);
  EXPECT_NEAR(stat_SP(d, 3, 2).value, 0.0, 1e-12);
}

TEST(Invariants, SymmetricUnderRelabelling) {
  const auto d = walks(41, 30, 10, 17);
  const auto s = swapped(d);
  EXPECT_LT(rel(stat_TN(s).value, stat_TN(d).value), 1e-12);
  EXPECT_LT(rel(stat_SN(s).value, stat_SN(d).value), 1e-12);
  EXPECT_LT(rel(stat_TPN_G(s, 3).value, stat_TPN_G(d, 3).value), 1e-9);
  EXPECT_LT(rel(stat_TPN(s, 3).value, stat_TPN(d, 3).value), 1e-9);
  EXPECT_LT(rel(stat_SP(s, 3, 1).value, stat_SP(d, 3, 1).value), 1e-9);
  EXPECT_LT(rel(stat_SP(s, 3, 2).value, stat_SP(d, 3, 2).value), 1e-9);
}

TEST(Invariants, EigenfunctionSignsDoNotMatter) {
  const auto d = walks(42, 30, 16, 16);
  EigenSystem pooled = eigen_decompose(pooled_covariance(d), 3);
  EigenSystem mean = eigen_decompose(mean_test_pooled_kernel(d), 3);
  const double tpng = stat_TPN_G(d, 3, pooled).value;
  const double tpn = stat_TPN(d, 3, pooled).value;
  const double sp1 = stat_SP(d, 3, 1, mean).value;
  pooled.eigenfunctions.col(1) *= -1.0;
  pooled.eigenfunctions.col(2) *= -1.0;
  mean.eigenfunctions.col(0) *= -1.0;
  EXPECT_LT(rel(stat_TPN_G(d, 3, pooled).value, tpng), 1e-12);
  EXPECT_LT(rel(stat_TPN(d, 3, pooled).value, tpn), 1e-10);
  EXPECT_LT(rel(stat_SP(d, 3, 1, mean).value, sp1), 1e-12);
}

TEST(Invariants, GroupShiftLeavesCovarianceStatistics) {
  const auto d = walks(43, 30, 13, 19);
  const VectorXd shift = d.grid().points().array().sin() * 5.0;
  const auto e = transformed(d, 1.0, shift, VectorXd::Zero(30));
  EXPECT_LT(rel(stat_TN(e).value, stat_TN(d).value), 1e-10);
  EXPECT_LT(rel(stat_TPN_G(e, 2).value, stat_TPN_G(d, 2).value), 1e-8);
  EXPECT_LT(rel(stat_TPN(e, 2).value, stat_TPN(d, 2).value), 1e-8);
  EXPECT_GT(stat_SN(e).value, stat_SN(d).value);
}

TEST(Invariants, CommonShiftLeavesEverything) {
  const auto d = walks(44, 30, 13, 19);
  const VectorXd shift = d.grid().points().array().cos() * 3.0;
  const auto e = transformed(d, 1.0, shift, shift);
  EXPECT_LT(rel(stat_SN(e).value, stat_SN(d).value), 1e-10);
  EXPECT_LT(rel(stat_SP(e, 2, 1).value, stat_SP(d, 2, 1).value), 1e-8);
  EXPECT_LT(rel(stat_SP(e, 2, 2).value, stat_SP(d, 2, 2).value), 1e-8);
}

TEST(Invariants, ScalingLaws) {
  const auto d = walks(45, 30, 15, 15);
  const double c = 2.5;
  const auto e = transformed(d, c, VectorXd::Zero(30), VectorXd::Zero(30));
  EXPECT_LT(rel(stat_TN(e).value, std::pow(c, 4) * stat_TN(d).value), 1e-10);
  EXPECT_LT(rel(stat_SN(e).value, c * c * stat_SN(d).value), 1e-10);
  EXPECT_LT(rel(stat_SP(e, 2, 2).value, c * c * stat_SP(d, 2, 2).value), 1e-8);
  EXPECT_LT(rel(stat_TPN_G(e, 2).value, stat_TPN_G(d, 2).value), 1e-8);
  EXPECT_LT(rel(stat_TPN(e, 2).value, stat_TPN(d, 2).value), 1e-8);
  EXPECT_LT(rel(stat_SP(e, 2, 1).value, stat_SP(d, 2, 1).value), 1e-8);
}

TEST(Invariants, NonNegative) {
  for (std::uint64_t seed = 50; seed < 55; ++seed) {
    const auto d = walks(seed, 20, 8, 10);
    EXPECT_GE(stat_TN(d).value, 0.0);
    EXPECT_GE(stat_TPN_G(d, 2).value, 0.0);
    EXPECT_GE(stat_TPN(d, 2).value, 0.0);
    EXPECT_GE(stat_SN(d).value, 0.0);
    EXPECT_GE(stat_SP(d, 2, 1).value, 0.0);
    EXPECT_GE(stat_SP(d, 2, 2).value, 0.0);
  }
}

TEST(OneComponent, ClosedForms) {
  const auto d = walks(46, 30, 12, 14);
  const EigenSystem sys = eigen_decompose(pooled_covariance(d), 1);
  const MatrixXd delta = oracle::delta_loop(d, sys.eigenfunctions);
  const double factor = 12.0 * 14.0 / 26.0;
  const double lambda = sys.eigenvalues[0];
  EXPECT_LT(rel(stat_TPN_G(d, 1).value, factor * delta(0, 0) * delta(0, 0) / (2.0 * lambda * lambda)), 1e-10);
  const double l = oracle::lhat_loop(d, sys.eigenfunctions)(0, 0);
  EXPECT_LT(rel(stat_TPN(d, 1).value, factor * delta(0, 0) * delta(0, 0) / l), 1e-10);
}

TEST(Diagnostics, ExtrasAndSpectrum) {
  const auto d = walks(47, 40, 20, 20);
  const auto t = stat_TPN(d, 3);
  ASSERT_TRUE(t.extras.count("f_p"));
  ASSERT_TRUE(t.extras.count("condition_number"));
  ASSERT_TRUE(t.extras.count("min_relative_gap"));
  EXPECT_GT(t.extras.at("f_p"), 0.0);
  EXPECT_LE(t.extras.at("f_p"), 1.0);
  EXPECT_GT(t.extras.at("min_relative_gap"), 0.0);
  const auto s = stat_SP(d, 3, 2);
  EXPECT_EQ(s.extras.count("condition_number"), 0u);
}

TEST(Batch, ComputeStatisticsMatchesSingleCalls) {
  const auto d = walks(48, 30, 10, 12);
  const std::vector<StatisticSpec> specs{{StatisticKind::TN, 0},  {StatisticKind::TPN_G, 2},
                                         {StatisticKind::TPN, 2}, {StatisticKind::SN, 0},
                                         {StatisticKind::SP1, 3}, {StatisticKind::SP2, 3},
                                         {StatisticKind::TPN, 25}};
  const auto out = compute_statistics(d, specs);
  ASSERT_EQ(out.size(), specs.size());
  for (std::size_t i = 0; i + 1 < specs.size(); ++i) {
    ASSERT_TRUE(out[i].statistic.has_value()) << i;
    EXPECT_EQ(out[i].statistic->value, compute_statistic(d, specs[i]).value) << i;
  }
  EXPECT_FALSE(out.back().statistic.has_value());
  EXPECT_THROW(std::rethrow_exception(out.back().error), NumericalError);
}

TEST(Errors, WrongGroupCount) {
  std::mt19937_64 gen(60);
  const auto d = oracle::random_dataset(gen, 5, {3, 3, 3});
  EXPECT_THROW(stat_TN(d), UnsupportedK);
  EXPECT_THROW(stat_SN(d), UnsupportedK);
  EXPECT_THROW(stat_SP(d, 1, 1), UnsupportedK);
}

TEST(Errors, SingleCurveGroup) {
  MatrixXd a = MatrixXd::Ones(1, 4), b = MatrixXd::Zero(3, 4);
  b(0, 1) = 1.0;
  const FunctionalDataset d(Grid::uniform(4), {a, b});
  EXPECT_THROW(stat_TN(d), DegenerateGroup);
  EXPECT_THROW(stat_TPN(d, 1), DegenerateGroup);
  EXPECT_NO_THROW(stat_SN(d));
}

TEST(Errors, BadParameters) {
  const auto d = walks(61, 10, 5, 5);
  EXPECT_THROW(stat_TPN_G(d, 0), InvalidParameter);
  EXPECT_THROW(stat_TPN(d, 11), InvalidParameter);
  EXPECT_THROW(stat_SP(d, 2, 3), InvalidParameter);
}

TEST(Errors, RankDeficientSpectrum) {
  // Six curves give a pooled covariance of rank at most four.
  const auto d = walks(62, 20, 3, 3);
  try {
    stat_TPN_G(d, 6);
    FAIL() << "expected RankDeficiency";
  } catch (const RankDeficiency& e) {
    EXPECT_EQ(e.index(), 5);
  }
  EXPECT_THROW(stat_SP(d, 6, 1), RankDeficiency);
}

TEST(Errors, SingularVechCovariance) {
  // q = 6 vech coordinates against two 3-curve groups.
  const auto d = walks(63, 20, 3, 3);
  EXPECT_THROW(stat_TPN(d, 3), SingularCovariance);
}

TEST(ChiSquare, CriticalValues) {
  EXPECT_NEAR(chisq_sf(3.8415, 1), 0.05, 1e-4);
  EXPECT_NEAR(chisq_sf(7.8147, 3), 0.05, 1e-4);
  EXPECT_NEAR(chisq_sf(5.9915, 2), 0.05, 1e-4);
  EXPECT_NEAR(chisq_sf(0.0, 4), 1.0, 1e-15);
}

TEST(ChiSquare, MatchesNumericIntegration) {
  for (int df : {1, 2, 3, 6, 10, 15}) {
    for (double x : {0.1, 1.0, 2.5, 7.0, 15.0, 30.0}) {
      EXPECT_NEAR(chisq_sf(x, df), oracle::chisq_sf_numeric(x, df), 1e-7) << df << " " << x;
    }
  }
}

TEST(ChiSquare, QuantileRoundTrip) {
  for (int df : {1, 3, 6}) {
    const double q = oracle::chisq_quantile_numeric(0.05, df);
    EXPECT_NEAR(chisq_sf(q, df), 0.05, 1e-6);
  }
}

TEST(ChiSquare, IncompleteGammaEdges) {
  EXPECT_NEAR(regularized_gamma_q(1.0, 2.0), std::exp(-2.0), 1e-14);
  EXPECT_NEAR(regularized_gamma_q(0.5, 0.0), 1.0, 1e-15);
  EXPECT_THROW(regularized_gamma_q(0.0, 1.0), InvalidParameter);
}

TEST(WeightedChiSquare, ReducesToChiSquare) {
  VectorXd one = VectorXd::Ones(1), three = VectorXd::Ones(3), two = VectorXd::Constant(1, 2.0);
  for (double x : {0.5, 2.0, 6.0}) {
    EXPECT_NEAR(weighted_chisq_sf(x, one, 100000, 7), chisq_sf(x, 1), 0.01);
    EXPECT_NEAR(weighted_chisq_sf(x, three, 100000, 8), chisq_sf(x, 3), 0.01);
    EXPECT_NEAR(weighted_chisq_sf(x, two, 100000, 9), chisq_sf(x / 2.0, 1), 0.01);
  }
  EXPECT_EQ(weighted_chisq_sf(1.0, three, 10000, 5), weighted_chisq_sf(1.0, three, 10000, 5));
}

TEST(WeightedChiSquare, RejectsBadInput) {
  EXPECT_THROW(weighted_chisq_sf(1.0, VectorXd::Ones(2), 100, 1), InvalidParameter);
  EXPECT_THROW(weighted_chisq_sf(1.0, -VectorXd::Ones(2), 100000, 1), InvalidParameter);
  EXPECT_THROW(weighted_chisq_sf(1.0, VectorXd::Zero(2), 100000, 1), DegenerateDistribution);
}

TEST(Asymptotic, ReferenceLaws) {
  TestStatistic t;
  t.kind = StatisticKind::TPN;
  t.p = 2;
  t.value = 7.8147;
  EXPECT_NEAR(asymptotic_pvalue(t, 0), 0.05, 1e-4);
  t.kind = StatisticKind::SP1;
  t.p = 1;
  t.value = 3.8415;
  EXPECT_NEAR(asymptotic_pvalue(t, 0), 0.05, 1e-4);
  t.kind = StatisticKind::TN;
  EXPECT_THROW(asymptotic_pvalue(t, 0), ValidationError);
  t.kind = StatisticKind::SN;
  EXPECT_THROW(asymptotic_pvalue(t, 0), ValidationError);
  EXPECT_FALSE(has_asymptotic_reference(StatisticKind::TN));
  EXPECT_TRUE(has_asymptotic_reference(StatisticKind::SP2));
}

TEST(Asymptotic, SP2UsesEigenvalueWeights) {
  const auto d = walks(64, 30, 20, 20);
  const auto s = stat_SP(d, 3, 2);
  const double p = asymptotic_pvalue(s, 11);
  EXPECT_EQ(p, weighted_chisq_sf(s.value, s.eigenvalues, kWeightedChisqDraws, 11));
}
