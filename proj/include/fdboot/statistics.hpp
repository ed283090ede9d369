#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fdboot/curves.hpp"
#include "fdboot/moments.hpp"

namespace fdboot {

// Two-sample statistics:
//   TN     N ||C_1 - C_2||_HS^2
//   TPN_G  (n1 n2/N) sum_{r,m<=p} Delta(r,m)^2 / (2 lambda_r lambda_m)
//   TPN    (n1 n2/N) xi^T L^-1 xi,  xi = vech(Delta)
//   SN     (n1 n2/N) ||mean_1 - mean_2||^2
//   SP1    (n1 n2/N) sum_{k<=p} a_k^2 / tau_k
//   SP2    (n1 n2/N) sum_{k<=p} a_k^2
// Delta(r,m) is the difference of the group score second moments along the
// pooled-covariance eigenfunctions; a_k projects the mean difference on the
// eigenfunctions of the crossed-weight kernel (n2/N) C_1 + (n1/N) C_2.
enum class StatisticKind { TN, TPN_G, TPN, SN, SP1, SP2 };

std::string_view statistic_name(StatisticKind kind);
// Accepts tn, tpn-g (or tpng), tpn, sn, sp1, sp2, case-insensitive.
StatisticKind parse_statistic(std::string_view name);

bool is_projection(StatisticKind kind);
bool is_covariance_statistic(StatisticKind kind);

struct StatisticSpec {
  StatisticKind kind = StatisticKind::TN;
  int p = 0;  // number of FPCs; ignored by TN and SN
};

struct TestStatistic {
  StatisticKind kind = StatisticKind::TN;
  double value = 0.0;
  int p = 0;
  // Leading p eigenvalues behind a projection statistic (lambda or tau).
  Eigen::VectorXd eigenvalues;
  // Diagnostics: "f_p", "condition_number", "min_relative_gap".
  std::map<std::string, double> extras;
  std::vector<std::string> warnings;
};

// Index pairs (row, col), row >= col, in column-major lower-triangle order:
// (1,1),(2,1),...,(p,1),(2,2),...,(p,p). Zero-based.
std::vector<std::pair<int, int>> vech_indices(int p);
Eigen::VectorXd vech(const Eigen::MatrixXd& symmetric);

struct VechCovariance {
  Eigen::MatrixXd matrix;  // q x q, q = p(p+1)/2
  double condition_number = 0.0;
};

TestStatistic stat_TN(const FunctionalDataset& data);

TestStatistic stat_TPN_G(const FunctionalDataset& data, int p);
TestStatistic stat_TPN_G(const FunctionalDataset& data, int p, const EigenSystem& pooled);

// Estimated covariance of sqrt(n1 n2/N) vech(Delta) from the group score
// fourth moments.
VechCovariance covariance_of_vech(const FunctionalDataset& data, int p, const EigenSystem& pooled);

TestStatistic stat_TPN(const FunctionalDataset& data, int p);
TestStatistic stat_TPN(const FunctionalDataset& data, int p, const EigenSystem& pooled);

TestStatistic stat_SN(const FunctionalDataset& data);

TestStatistic stat_SP(const FunctionalDataset& data, int p, int variant);
TestStatistic stat_SP(const FunctionalDataset& data, int p, int variant, const EigenSystem& mean_kernel);

TestStatistic compute_statistic(const FunctionalDataset& data, const StatisticSpec& spec);

struct StatisticOutcome {
  std::optional<TestStatistic> statistic;
  std::exception_ptr error;  // set when statistic is empty
};

// Evaluates several statistics on one dataset. Specs with the same kernel and
// p share one eigensystem; each outcome equals compute_statistic alone.
std::vector<StatisticOutcome> compute_statistics(const FunctionalDataset& data,
                                                 const std::vector<StatisticSpec>& specs);

// Upper tail of chi-square with `df` degrees of freedom.
double chisq_sf(double x, double df);

// Regularized upper incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);

// Monte Carlo estimate of P(sum_k w_k N_k^2 > x); deterministic given seed.
double weighted_chisq_sf(double x, const Eigen::VectorXd& weights, int draws, std::uint64_t seed);

inline constexpr int kWeightedChisqDraws = 100000;

// Reference-law p-value. TN and SN have none and raise ValidationError.
double asymptotic_pvalue(const TestStatistic& statistic, std::uint64_t seed);

bool has_asymptotic_reference(StatisticKind kind);

}  // namespace fdboot
