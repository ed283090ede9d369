#include <cmath>
#include <limits>

#include "fdboot/random.hpp"
#include "fdboot/statistics.hpp"

namespace fdboot {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;

// P(a, x) by its power series; converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by the Legendre continued fraction (modified Lentz); x >= a + 1.
double gamma_q_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0)) throw InvalidParameter("regularized_gamma_q: a must be positive");
  if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chisq_sf(double x, double df) {
  if (!(df > 0.0)) throw InvalidParameter("chisq_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

double weighted_chisq_sf(double x, const Eigen::VectorXd& weights, int draws, std::uint64_t seed) {
  if (draws < 10000) {
    throw InvalidParameter("weighted_chisq_sf needs at least 10^4 draws, got " +
                           std::to_string(draws));
  }
  if (weights.size() == 0 || (weights.array() < 0.0).any() || !weights.allFinite()) {
    throw InvalidParameter("weighted_chisq_sf: weights must be finite and nonnegative");
  }
  if (weights.maxCoeff() <= 0.0) {
    throw DegenerateDistribution("weighted chi-square with all-zero weights is a point mass at 0");
  }
  if (x <= 0.0) return 1.0;
  Rng rng(seed);
  long exceed = 0;
  for (int d = 0; d < draws; ++d) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
      const double z = rng.normal();
      s += weights[k] * z * z;
    }
    if (s > x) ++exceed;
  }
  return static_cast<double>(exceed) / draws;
}

double asymptotic_pvalue(const TestStatistic& statistic, std::uint64_t seed) {
  const int p = statistic.p;
  switch (statistic.kind) {
    case StatisticKind::TN:
      throw ValidationError(
          "T_N has no usable asymptotic reference: its limit depends on the unknown eigenvalues "
          "of the fourth-moment operator; use --method boot");
    case StatisticKind::SN:
      throw ValidationError(
          "S_N has no usable asymptotic reference: its limit depends on the unknown covariance "
          "kernels; use --method boot");
    case StatisticKind::TPN_G:
    case StatisticKind::TPN:
      return chisq_sf(statistic.value, p * (p + 1) / 2.0);
    case StatisticKind::SP1:
      return chisq_sf(statistic.value, p);
    case StatisticKind::SP2:
      return weighted_chisq_sf(statistic.value, statistic.eigenvalues.cwiseMax(0.0),
                               kWeightedChisqDraws, seed);
  }
  throw InvalidParameter("unknown statistic kind");
}

}  // namespace fdboot
