#include "fdboot/statistics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace fdboot {

namespace {

constexpr double kRankTolerance = 1e-12;
constexpr double kMaxCondition = 1e12;

struct TwoSampleSizes {
  double n1, n2, total;
  double factor() const { return n1 * n2 / total; }
};

TwoSampleSizes two_sample_sizes(const FunctionalDataset& data, bool need_covariance) {
  if (data.group_count() != 2) {
    throw UnsupportedK("two-sample statistics need K = 2 groups, got K = " +
                       std::to_string(data.group_count()));
  }
  if (need_covariance) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (data.group_size(i) < 2) {
        throw DegenerateGroup("group " + data.labels()[i] + " has fewer than 2 curves");
      }
    }
  }
  const double n1 = static_cast<double>(data.group_size(0));
  const double n2 = static_cast<double>(data.group_size(1));
  return {n1, n2, n1 + n2};
}

void check_p(int p, const FunctionalDataset& data) {
  if (p < 1 || p > data.grid_size()) {
    throw InvalidParameter("p must be in [1, " + std::to_string(data.grid_size()) + "], got " +
                           std::to_string(p));
  }
}

void check_system(const EigenSystem& sys, int p, const FunctionalDataset& data) {
  if (sys.eigenfunctions.rows() != data.grid_size()) {
    throw DimensionError("eigenfunctions do not match the dataset grid");
  }
  if (sys.count() < p) {
    throw InvalidParameter("eigensystem holds " + std::to_string(sys.count()) +
                           " pairs, statistic needs p = " + std::to_string(p));
  }
}

void require_positive_spectrum(const EigenSystem& sys, int p, const char* what) {
  const double top = sys.eigenvalues[0];
  for (int k = 0; k < p; ++k) {
    if (!(sys.eigenvalues[k] > kRankTolerance * top) || !(top > 0.0)) {
      throw RankDeficiency(std::string(what) + ": eigenvalue " + std::to_string(k + 1) + " (" +
                               std::to_string(sys.eigenvalues[k]) +
                               ") is not positive relative to the leading one; reduce p below " +
                               std::to_string(k + 1),
                           k + 1);
    }
  }
}

void attach_spectrum(TestStatistic& stat, const EigenSystem& sys, int p) {
  stat.p = p;
  stat.eigenvalues = sys.eigenvalues.head(p);
  stat.extras["f_p"] = sys.explained_fraction[p - 1];
  const double top = std::abs(sys.eigenvalues[0]);
  double gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k < p; ++k) {
    const double next = k + 1 < sys.count() ? sys.eigenvalues[k + 1] : sys.next_eigenvalue;
    if (!std::isnan(next) && top > 0.0) gap = std::min(gap, (sys.eigenvalues[k] - next) / top);
  }
  if (std::isfinite(gap)) stat.extras["min_relative_gap"] = gap;
  for (int k : near_degenerate_pairs(sys, p)) {
    stat.warnings.push_back("eigenvalues " + std::to_string(k) + " and " + std::to_string(k + 1) +
                            " are nearly degenerate; FPC " + std::to_string(k) +
                            " is not well identified");
  }
}

Eigen::MatrixXd group_scores(const FunctionalDataset& data, std::size_t i,
                             const EigenSystem& sys, int p) {
  return project_scores(data, i, group_mean(data, i), sys.eigenfunctions.leftCols(p));
}

Eigen::MatrixXd score_second_moment(const Eigen::MatrixXd& scores) {
  return scores.transpose() * scores / static_cast<double>(scores.rows());
}

Eigen::MatrixXd covariance_difference(const FunctionalDataset& data, const EigenSystem& sys, int p) {
  return score_second_moment(group_scores(data, 0, sys, p)) -
         score_second_moment(group_scores(data, 1, sys, p));
}

// Y^T Y / n - ybar ybar^T with Y(j, a) = s_j(r_a) s_j(c_a).
Eigen::MatrixXd vech_moment_covariance(const Eigen::MatrixXd& scores,
                                       const std::vector<std::pair<int, int>>& index) {
  const Eigen::Index n = scores.rows();
  const auto q = static_cast<Eigen::Index>(index.size());
  Eigen::MatrixXd y(n, q);
  for (Eigen::Index a = 0; a < q; ++a) {
    y.col(a) = scores.col(index[a].first).cwiseProduct(scores.col(index[a].second));
  }
  const Eigen::RowVectorXd ybar = y.colwise().mean();
  return y.transpose() * y / static_cast<double>(n) - ybar.transpose() * ybar;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view statistic_name(StatisticKind kind) {
  switch (kind) {
    case StatisticKind::TN: return "tn";
    case StatisticKind::TPN_G: return "tpn-g";
    case StatisticKind::TPN: return "tpn";
    case StatisticKind::SN: return "sn";
    case StatisticKind::SP1: return "sp1";
    case StatisticKind::SP2: return "sp2";
  }
  return "?";
}

StatisticKind parse_statistic(std::string_view name) {
  const std::string s = lower(name);
  if (s == "tn") return StatisticKind::TN;
  if (s == "tpn-g" || s == "tpng" || s == "tpn_g") return StatisticKind::TPN_G;
  if (s == "tpn") return StatisticKind::TPN;
  if (s == "sn") return StatisticKind::SN;
  if (s == "sp1") return StatisticKind::SP1;
  if (s == "sp2") return StatisticKind::SP2;
  throw InvalidParameter("unknown statistic '" + std::string(name) +
                         "' (expected tn, tpn-g, tpn, sn, sp1, sp2)");
}

bool is_projection(StatisticKind kind) {
  return kind != StatisticKind::TN && kind != StatisticKind::SN;
}

bool is_covariance_statistic(StatisticKind kind) {
  return kind == StatisticKind::TN || kind == StatisticKind::TPN_G || kind == StatisticKind::TPN;
}

bool has_asymptotic_reference(StatisticKind kind) { return is_projection(kind); }

std::vector<std::pair<int, int>> vech_indices(int p) {
  std::vector<std::pair<int, int>> index;
  index.reserve(static_cast<std::size_t>(p * (p + 1) / 2));
  for (int col = 0; col < p; ++col) {
    for (int row = col; row < p; ++row) index.emplace_back(row, col);
  }
  return index;
}

Eigen::VectorXd vech(const Eigen::MatrixXd& symmetric) {
  const auto index = vech_indices(static_cast<int>(symmetric.rows()));
  Eigen::VectorXd out(static_cast<Eigen::Index>(index.size()));
  for (std::size_t a = 0; a < index.size(); ++a) {
    out[static_cast<Eigen::Index>(a)] = symmetric(index[a].first, index[a].second);
  }
  return out;
}

TestStatistic stat_TN(const FunctionalDataset& data) {
  const auto sizes = two_sample_sizes(data, true);
  const auto& sw = data.grid().sqrt_weights();
  const Eigen::MatrixXd e1 = (data.group(0).rowwise() - data.group(0).colwise().mean()) * sw.asDiagonal();
  const Eigen::MatrixXd e2 = (data.group(1).rowwise() - data.group(1).colwise().mean()) * sw.asDiagonal();

  // ||A_1 - A_2||_F^2 with A_k = E_k^T E_k / n_k, on whichever side is smaller.
  double hs2 = 0.0;
  if (data.total_size() < data.grid_size()) {
    const double g11 = (e1 * e1.transpose()).squaredNorm();
    const double g22 = (e2 * e2.transpose()).squaredNorm();
    const double g12 = (e1 * e2.transpose()).squaredNorm();
    hs2 = g11 / (sizes.n1 * sizes.n1) + g22 / (sizes.n2 * sizes.n2) -
          2.0 * g12 / (sizes.n1 * sizes.n2);
  } else {
    const Eigen::MatrixXd diff = e1.transpose() * e1 / sizes.n1 - e2.transpose() * e2 / sizes.n2;
    hs2 = diff.squaredNorm();
  }
  TestStatistic stat;
  stat.kind = StatisticKind::TN;
  stat.value = sizes.total * std::max(hs2, 0.0);
  return stat;
}

TestStatistic stat_TPN_G(const FunctionalDataset& data, int p) {
  check_p(p, data);
  two_sample_sizes(data, true);
  return stat_TPN_G(data, p, eigen_decompose(pooled_covariance_factor(data), p));
}

TestStatistic stat_TPN_G(const FunctionalDataset& data, int p, const EigenSystem& pooled) {
  const auto sizes = two_sample_sizes(data, true);
  check_p(p, data);
  check_system(pooled, p, data);
  require_positive_spectrum(pooled, p, "T_pN^(G)");

  const Eigen::MatrixXd delta = covariance_difference(data, pooled, p);
  const Eigen::VectorXd& lambda = pooled.eigenvalues;
  double sum = 0.0;
  for (int r = 0; r < p; ++r) {
    for (int m = 0; m < p; ++m) {
      sum += delta(r, m) * delta(r, m) / (2.0 * lambda[r] * lambda[m]);
    }
  }
  TestStatistic stat;
  stat.kind = StatisticKind::TPN_G;
  stat.value = sizes.factor() * sum;
  attach_spectrum(stat, pooled, p);
  return stat;
}

VechCovariance covariance_of_vech(const FunctionalDataset& data, int p, const EigenSystem& pooled) {
  const auto sizes = two_sample_sizes(data, true);
  check_p(p, data);
  check_system(pooled, p, data);
  const auto index = vech_indices(p);
  const Eigen::MatrixXd m1 = vech_moment_covariance(group_scores(data, 0, pooled, p), index);
  const Eigen::MatrixXd m2 = vech_moment_covariance(group_scores(data, 1, pooled, p), index);

  VechCovariance out;
  out.matrix = (sizes.n2 / sizes.total) * m1 + (sizes.n1 / sizes.total) * m2;
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(out.matrix, Eigen::EigenvaluesOnly);
  const double hi = solver.eigenvalues().cwiseAbs().maxCoeff();
  const double lo = solver.eigenvalues().minCoeff();
  out.condition_number = (lo > 0.0 && hi > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  return out;
}

TestStatistic stat_TPN(const FunctionalDataset& data, int p) {
  check_p(p, data);
  two_sample_sizes(data, true);
  return stat_TPN(data, p, eigen_decompose(pooled_covariance_factor(data), p));
}

TestStatistic stat_TPN(const FunctionalDataset& data, int p, const EigenSystem& pooled) {
  const auto sizes = two_sample_sizes(data, true);
  check_p(p, data);
  check_system(pooled, p, data);

  const VechCovariance cov = covariance_of_vech(data, p, pooled);
  if (!(cov.condition_number <= kMaxCondition)) {
    throw SingularCovariance("estimated covariance of vech(Delta) is singular (condition number " +
                             std::to_string(cov.condition_number) + " > 1e12); use a smaller p");
  }
  const Eigen::VectorXd xi = vech(covariance_difference(data, pooled, p));
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov.matrix);
  if (ldlt.info() != Eigen::Success) {
    throw SingularCovariance("factorization of the vech covariance failed; use a smaller p");
  }
  const double quad = xi.dot(ldlt.solve(xi));

  TestStatistic stat;
  stat.kind = StatisticKind::TPN;
  stat.value = sizes.factor() * std::max(quad, 0.0);
  attach_spectrum(stat, pooled, p);
  stat.extras["condition_number"] = cov.condition_number;
  return stat;
}

TestStatistic stat_SN(const FunctionalDataset& data) {
  const auto sizes = two_sample_sizes(data, false);
  const Curve diff = group_mean(data, 0) - group_mean(data, 1);
  TestStatistic stat;
  stat.kind = StatisticKind::SN;
  stat.value = sizes.factor() * squared_norm(diff, data.grid());
  return stat;
}

TestStatistic stat_SP(const FunctionalDataset& data, int p, int variant) {
  check_p(p, data);
  return stat_SP(data, p, variant, eigen_decompose(mean_test_kernel_factor(data), p));
}

TestStatistic stat_SP(const FunctionalDataset& data, int p, int variant,
                      const EigenSystem& mean_kernel) {
  if (variant != 1 && variant != 2) {
    throw InvalidParameter("S_pN variant must be 1 or 2, got " + std::to_string(variant));
  }
  const auto sizes = two_sample_sizes(data, true);
  check_p(p, data);
  check_system(mean_kernel, p, data);
  if (variant == 1) require_positive_spectrum(mean_kernel, p, "S_pN^(1)");

  const Curve diff = group_mean(data, 0) - group_mean(data, 1);
  const Eigen::VectorXd a =
      mean_kernel.eigenfunctions.leftCols(p).transpose() * data.grid().weights().cwiseProduct(diff);
  double sum = 0.0;
  for (int k = 0; k < p; ++k) {
    sum += variant == 1 ? a[k] * a[k] / mean_kernel.eigenvalues[k] : a[k] * a[k];
  }
  TestStatistic stat;
  stat.kind = variant == 1 ? StatisticKind::SP1 : StatisticKind::SP2;
  stat.value = sizes.factor() * sum;
  attach_spectrum(stat, mean_kernel, p);
  return stat;
}

TestStatistic compute_statistic(const FunctionalDataset& data, const StatisticSpec& spec) {
  switch (spec.kind) {
    case StatisticKind::TN: return stat_TN(data);
    case StatisticKind::TPN_G: return stat_TPN_G(data, spec.p);
    case StatisticKind::TPN: return stat_TPN(data, spec.p);
    case StatisticKind::SN: return stat_SN(data);
    case StatisticKind::SP1: return stat_SP(data, spec.p, 1);
    case StatisticKind::SP2: return stat_SP(data, spec.p, 2);
  }
  throw InvalidParameter("unknown statistic kind");
}

std::vector<StatisticOutcome> compute_statistics(const FunctionalDataset& data,
                                                 const std::vector<StatisticSpec>& specs) {
  std::map<std::pair<bool, int>, EigenSystem> systems;
  std::vector<StatisticOutcome> out(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const StatisticSpec& spec = specs[s];
    try {
      if (!is_projection(spec.kind)) {
        out[s].statistic = compute_statistic(data, spec);
        continue;
      }
      const bool mean_kernel = !is_covariance_statistic(spec.kind);
      check_p(spec.p, data);
      two_sample_sizes(data, true);
      const auto key = std::make_pair(mean_kernel, spec.p);
      auto it = systems.find(key);
      if (it == systems.end()) {
        EigenSystem sys = eigen_decompose(
            mean_kernel ? mean_test_kernel_factor(data) : pooled_covariance_factor(data), spec.p);
        it = systems.emplace(key, std::move(sys)).first;
      }
      switch (spec.kind) {
        case StatisticKind::TPN_G: out[s].statistic = stat_TPN_G(data, spec.p, it->second); break;
        case StatisticKind::TPN: out[s].statistic = stat_TPN(data, spec.p, it->second); break;
        case StatisticKind::SP1: out[s].statistic = stat_SP(data, spec.p, 1, it->second); break;
        default: out[s].statistic = stat_SP(data, spec.p, 2, it->second); break;
      }
    } catch (...) {
      out[s].error = std::current_exception();
    }
  }
  return out;
}

}  // namespace fdboot
