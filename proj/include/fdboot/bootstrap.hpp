#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fdboot/curves.hpp"
#include "fdboot/random.hpp"
#include "fdboot/statistics.hpp"

namespace fdboot {

// Null-enforcing resampling schemes. With e_ij the group-centred residuals:
//   CovarianceNull    X*_ij = mean_i + e drawn from all N residuals
//   MeanNull          X+_ij = pooled mean + e drawn from group i's residuals
//   JointNull         Xo_ij = pooled mean + e drawn from all N residuals
//   GaussianCovNull   mean_i + Gaussian process with the pooled covariance
//   GaussianMeanNull  pooled mean + Gaussian process with group i's covariance
// Gaussian draws use the Karhunen-Loeve expansion truncated at gaussian_rank
// components; the default rank is the smallest r with f_r >= 0.999.
enum class SchemeKind { CovarianceNull, MeanNull, JointNull, GaussianCovNull, GaussianMeanNull };

struct BootstrapScheme {
  SchemeKind kind = SchemeKind::CovarianceNull;
  std::optional<int> gaussian_rank;
};

std::string_view scheme_name(SchemeKind kind);
// covariance-null, mean-null, joint-null, gaussian-covariance-null,
// gaussian-mean-null; the short forms cov, mean, joint, gauss-cov, gauss-mean
// are accepted too.
SchemeKind parse_scheme(std::string_view name);
SchemeKind default_scheme(StatisticKind kind);

inline constexpr double kGaussianRankFraction = 0.999;

// Precomputes means, residual pools and (for Gaussian schemes) truncated
// KL factors, then draws pseudo-datasets. Immutable after construction;
// draw() may be called concurrently with distinct Rng objects.
class NullResampler {
 public:
  NullResampler(const FunctionalDataset& data, BootstrapScheme scheme);

  FunctionalDataset draw(Rng& rng) const;

  const BootstrapScheme& scheme() const noexcept { return scheme_; }
  // Null mean used for group i.
  const Curve& null_mean(std::size_t i) const { return means_.at(i); }
  // KL truncation actually used for group i (Gaussian schemes only).
  int gaussian_rank(std::size_t i) const;
  // Residuals a curve of group i is drawn from, each row with probability
  // 1/rows (residual schemes only).
  Eigen::MatrixXd candidates(std::size_t i) const;

 private:
  Grid grid_;
  std::vector<std::string> labels_;
  std::vector<Eigen::Index> sizes_;
  BootstrapScheme scheme_;
  std::vector<Curve> means_;
  Eigen::MatrixXd pool_;                // stacked residuals, N x m
  std::vector<Eigen::Index> offsets_;   // first pool row of each group
  std::vector<Eigen::MatrixXd> factors_;  // m x r per group: phi_k sqrt(lambda_k)
};

FunctionalDataset resample_covariance_null(const FunctionalDataset& data, Rng& rng);
FunctionalDataset resample_mean_null(const FunctionalDataset& data, Rng& rng);
FunctionalDataset resample_joint_null(const FunctionalDataset& data, Rng& rng);
FunctionalDataset resample_gaussian(const FunctionalDataset& data, Rng& rng,
                                    const BootstrapScheme& scheme);

struct BootstrapResult {
  TestStatistic observed;
  // Successful replicate values in replicate order.
  std::vector<double> replicates;
  double p_value = 1.0;
  int B = 0;            // replicates used
  int requested_B = 0;  // replicates drawn
  int failed = 0;
  BootstrapScheme scheme;
  SeedSpec seed;
  std::vector<std::string> warnings;
};

// (1 + #{T*_b >= T_obs}) / (B + 1).
double bootstrap_p_value(double observed, std::span<const double> replicates);

// Fraction of failed replicates above which the bootstrap is abandoned.
inline constexpr double kMaxFailedReplicateFraction = 0.01;

// Replicate b draws from Rng(seed.child(b)) and recomputes the full statistic
// pipeline, eigensystems included. Results are independent of `jobs`.
// Throws BootstrapFailure when more than 1% of replicates fail.
BootstrapResult bootstrap_pvalue(const FunctionalDataset& data, const StatisticSpec& statistic,
                                 const BootstrapScheme& scheme, int B, SeedSpec seed,
                                 unsigned jobs = 1);

struct BootstrapOutcome {
  std::optional<BootstrapResult> result;
  std::string error;  // set when result is empty
};

// Several statistics evaluated on one shared set of pseudo-datasets. Each
// entry equals what bootstrap_pvalue would return for that statistic alone.
std::vector<BootstrapOutcome> bootstrap_pvalues(const FunctionalDataset& data,
                                                const std::vector<StatisticSpec>& statistics,
                                                const BootstrapScheme& scheme, int B,
                                                SeedSpec seed, unsigned jobs = 1);

}  // namespace fdboot
