#include "fdboot/bootstrap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "fdboot/errors.hpp"
#include "fdboot/moments.hpp"
#include "fdboot/parallel.hpp"

namespace fdboot {

namespace {

constexpr double kPositiveTolerance = 1e-12;

bool is_gaussian(SchemeKind kind) {
  return kind == SchemeKind::GaussianCovNull || kind == SchemeKind::GaussianMeanNull;
}

// All nonzero eigenvalues of the operator behind `kernel`, descending, from
// the smaller of the r x r Gram and m x m weighted problems.
Eigen::VectorXd operator_spectrum(const OuterProductKernel& kernel) {
  const Eigen::MatrixXd f = kernel.coefficients.cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                            kernel.rows * kernel.grid.sqrt_weights().asDiagonal();
  const Eigen::MatrixXd gram =
      f.rows() < f.cols() ? Eigen::MatrixXd(f * f.transpose()) : Eigen::MatrixXd(f.transpose() * f);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().reverse();
}

// Columns phi_k sqrt(lambda_k), k < r, for the truncated KL expansion.
Eigen::MatrixXd kl_factor(const OuterProductKernel& kernel, std::optional<int> requested) {
  const Eigen::Index m = kernel.grid.size();
  const Eigen::VectorXd spectrum = operator_spectrum(kernel);
  const double top = spectrum.size() > 0 ? spectrum[0] : 0.0;
  int positive = 0;
  if (top > 0.0) {
    while (positive < spectrum.size() && spectrum[positive] > kPositiveTolerance * top) ++positive;
  }

  int rank = 0;
  if (requested) {
    if (*requested < 1) throw InvalidParameter("Gaussian rank must be at least 1");
    if (positive == 0) return Eigen::MatrixXd::Zero(m, 0);
    if (*requested > positive) {
      throw RankDeficiency("Gaussian rank " + std::to_string(*requested) +
                               " exceeds the number of positive eigenvalues (" +
                               std::to_string(positive) + ")",
                           positive + 1);
    }
    rank = *requested;
  } else {
    if (positive == 0) return Eigen::MatrixXd::Zero(m, 0);
    const double total = spectrum.head(positive).sum();
    double acc = 0.0;
    while (rank < positive) {
      acc += spectrum[rank++];
      if (acc >= kGaussianRankFraction * total) break;
    }
  }
  if (rank == 0) return Eigen::MatrixXd::Zero(m, 0);
  const EigenSystem sys = eigen_decompose(kernel, rank);
  return sys.eigenfunctions * sys.eigenvalues.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string describe(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

bool is_numerical(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const NumericalError&) {
    return true;
  } catch (...) {
    return false;
  }
}

}  // namespace

std::string_view scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::CovarianceNull: return "covariance-null";
    case SchemeKind::MeanNull: return "mean-null";
    case SchemeKind::JointNull: return "joint-null";
    case SchemeKind::GaussianCovNull: return "gaussian-covariance-null";
    case SchemeKind::GaussianMeanNull: return "gaussian-mean-null";
  }
  return "unknown";
}

SchemeKind parse_scheme(std::string_view name) {
  const std::string s = lower(name);
  if (s == "covariance-null" || s == "cov") return SchemeKind::CovarianceNull;
  if (s == "mean-null" || s == "mean") return SchemeKind::MeanNull;
  if (s == "joint-null" || s == "joint") return SchemeKind::JointNull;
  if (s == "gaussian-covariance-null" || s == "gauss-cov") return SchemeKind::GaussianCovNull;
  if (s == "gaussian-mean-null" || s == "gauss-mean") return SchemeKind::GaussianMeanNull;
  throw ValidationError("unknown bootstrap scheme '" + std::string(name) + "'");
}

SchemeKind default_scheme(StatisticKind kind) {
  return is_covariance_statistic(kind) ? SchemeKind::CovarianceNull : SchemeKind::MeanNull;
}

NullResampler::NullResampler(const FunctionalDataset& data, BootstrapScheme scheme)
    : grid_(data.grid()), labels_(data.labels()), sizes_(data.group_sizes()), scheme_(scheme) {
  const std::size_t k = data.group_count();
  const bool pooled_center =
      scheme.kind == SchemeKind::MeanNull || scheme.kind == SchemeKind::JointNull ||
      scheme.kind == SchemeKind::GaussianMeanNull;
  const Curve pooled = pooled_mean(data);
  means_.reserve(k);
  for (std::size_t i = 0; i < k; ++i) means_.push_back(pooled_center ? pooled : group_mean(data, i));

  switch (scheme.kind) {
    case SchemeKind::CovarianceNull:
    case SchemeKind::MeanNull:
    case SchemeKind::JointNull: {
      pool_ = residuals(data).stacked();
      Eigen::Index offset = 0;
      for (std::size_t i = 0; i < k; ++i) {
        offsets_.push_back(offset);
        offset += sizes_[i];
      }
      break;
    }
    case SchemeKind::GaussianCovNull: {
      const Eigen::MatrixXd factor = kl_factor(pooled_covariance_factor(data), scheme.gaussian_rank);
      factors_.assign(k, factor);
      break;
    }
    case SchemeKind::GaussianMeanNull:
      for (std::size_t i = 0; i < k; ++i) {
        factors_.push_back(kl_factor(group_covariance_factor(data, i), scheme.gaussian_rank));
      }
      break;
  }
}

int NullResampler::gaussian_rank(std::size_t i) const {
  if (!is_gaussian(scheme_.kind)) throw ValidationError("gaussian_rank: scheme is not Gaussian");
  return static_cast<int>(factors_.at(i).cols());
}

Eigen::MatrixXd NullResampler::candidates(std::size_t i) const {
  if (is_gaussian(scheme_.kind)) throw ValidationError("candidates: scheme draws Gaussian curves");
  if (scheme_.kind == SchemeKind::MeanNull) return pool_.middleRows(offsets_.at(i), sizes_.at(i));
  return pool_;
}

FunctionalDataset NullResampler::draw(Rng& rng) const {
  const std::size_t k = sizes_.size();
  const Eigen::Index m = grid_.size();
  std::vector<Eigen::MatrixXd> groups;
  groups.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Eigen::MatrixXd g(sizes_[i], m);
    if (is_gaussian(scheme_.kind)) {
      const Eigen::MatrixXd& factor = factors_[i];
      Eigen::VectorXd z(factor.cols());
      for (Eigen::Index j = 0; j < sizes_[i]; ++j) {
        for (Eigen::Index c = 0; c < z.size(); ++c) z[c] = rng.normal();
        g.row(j) = (means_[i] + factor * z).transpose();
      }
    } else {
      const bool within = scheme_.kind == SchemeKind::MeanNull;
      const auto range = static_cast<std::uint64_t>(within ? sizes_[i] : pool_.rows());
      const Eigen::Index base = within ? offsets_[i] : 0;
      for (Eigen::Index j = 0; j < sizes_[i]; ++j) {
        const auto idx = base + static_cast<Eigen::Index>(rng.uniform_index(range));
        g.row(j) = means_[i].transpose() + pool_.row(idx);
      }
    }
    groups.push_back(std::move(g));
  }
  return FunctionalDataset(grid_, std::move(groups), labels_);
}

FunctionalDataset resample_covariance_null(const FunctionalDataset& data, Rng& rng) {
  return NullResampler(data, {SchemeKind::CovarianceNull, std::nullopt}).draw(rng);
}

FunctionalDataset resample_mean_null(const FunctionalDataset& data, Rng& rng) {
  return NullResampler(data, {SchemeKind::MeanNull, std::nullopt}).draw(rng);
}

FunctionalDataset resample_joint_null(const FunctionalDataset& data, Rng& rng) {
  return NullResampler(data, {SchemeKind::JointNull, std::nullopt}).draw(rng);
}

FunctionalDataset resample_gaussian(const FunctionalDataset& data, Rng& rng,
                                    const BootstrapScheme& scheme) {
  if (!is_gaussian(scheme.kind)) throw ValidationError("resample_gaussian needs a Gaussian scheme");
  return NullResampler(data, scheme).draw(rng);
}

double bootstrap_p_value(double observed, std::span<const double> replicates) {
  const auto exceed = std::count_if(replicates.begin(), replicates.end(),
                                    [observed](double t) { return t >= observed; });
  return (1.0 + static_cast<double>(exceed)) / (static_cast<double>(replicates.size()) + 1.0);
}

std::vector<BootstrapOutcome> bootstrap_pvalues(const FunctionalDataset& data,
                                                const std::vector<StatisticSpec>& statistics,
                                                const BootstrapScheme& scheme, int B,
                                                SeedSpec seed, unsigned jobs) {
  if (B < 1) throw InvalidParameter("B must be positive, got " + std::to_string(B));
  const std::size_t s_count = statistics.size();
  std::vector<BootstrapOutcome> out(s_count);

  const auto observed = compute_statistics(data, statistics);
  std::vector<std::size_t> active;
  for (std::size_t s = 0; s < s_count; ++s) {
    if (observed[s].statistic) {
      active.push_back(s);
    } else {
      out[s].error = describe(observed[s].error);
    }
  }
  if (active.empty()) return out;
  std::vector<StatisticSpec> specs;
  for (std::size_t s : active) specs.push_back(statistics[s]);

  const NullResampler resampler(data, scheme);
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  // values[b * a_count + a]; NaN marks a failed replicate.
  const std::size_t a_count = active.size();
  std::vector<double> values(static_cast<std::size_t>(B) * a_count, nan);
  std::vector<std::string> first_error(a_count);
  std::vector<std::exception_ptr> fatal(static_cast<std::size_t>(B));

  parallel_for(static_cast<std::size_t>(B), jobs, [&](std::size_t b) {
    Rng rng(seed.child(b));
    const FunctionalDataset star = resampler.draw(rng);
    const auto results = compute_statistics(star, specs);
    for (std::size_t a = 0; a < a_count; ++a) {
      if (results[a].statistic) {
        values[b * a_count + a] = results[a].statistic->value;
      } else if (!is_numerical(results[a].error)) {
        fatal[b] = results[a].error;
      }
    }
  });
  for (const auto& e : fatal) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t a = 0; a < a_count; ++a) {
    const std::size_t s = active[a];
    BootstrapResult r;
    r.observed = *observed[s].statistic;
    r.requested_B = B;
    r.scheme = scheme;
    r.seed = seed;
    r.warnings = r.observed.warnings;
    r.replicates.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      const double v = values[static_cast<std::size_t>(b) * a_count + a];
      if (std::isnan(v)) {
        ++r.failed;
      } else {
        r.replicates.push_back(v);
      }
    }
    r.B = static_cast<int>(r.replicates.size());
    if (r.failed > kMaxFailedReplicateFraction * B) {
      out[s].error = std::to_string(r.failed) + " of " + std::to_string(B) +
                     " bootstrap replicates failed for " +
                     std::string(statistic_name(statistics[s].kind)) +
                     " (more than 1%); the statistic is unstable on resampled data, try a smaller p";
      continue;
    }
    if (r.failed > 0) {
      r.warnings.push_back(std::to_string(r.failed) + " of " + std::to_string(B) +
                           " bootstrap replicates failed numerically and were excluded");
    }
    r.p_value = bootstrap_p_value(r.observed.value, r.replicates);
    out[s].result = std::move(r);
  }
  return out;
}

BootstrapResult bootstrap_pvalue(const FunctionalDataset& data, const StatisticSpec& statistic,
                                 const BootstrapScheme& scheme, int B, SeedSpec seed,
                                 unsigned jobs) {
  if (B < 1) throw InvalidParameter("B must be positive, got " + std::to_string(B));
  const TestStatistic observed = compute_statistic(data, statistic);  // propagates typed errors
  (void)observed;
  auto outcome = bootstrap_pvalues(data, {statistic}, scheme, B, seed, jobs);
  if (!outcome[0].result) throw BootstrapFailure(outcome[0].error);
  return std::move(*outcome[0].result);
}

}  // namespace fdboot
