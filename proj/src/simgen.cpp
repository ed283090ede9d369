#include "fdboot/simgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "fdboot/errors.hpp"
#include "fdboot/parallel.hpp"

namespace fdboot {

namespace {

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

BootstrapScheme scheme_for(const ExperimentTest& test) {
  if (test.scheme) return *test.scheme;
  return {default_scheme(test.statistic.kind), std::nullopt};
}

bool same_scheme(const BootstrapScheme& a, const BootstrapScheme& b) {
  return a.kind == b.kind && a.gaussian_rank == b.gaussian_rank;
}

}  // namespace

std::string_view generator_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::BrownianMotion: return "bm";
    case GeneratorKind::BrownianBridge: return "bb";
    case GeneratorKind::NGSine: return "ng";
  }
  return "unknown";
}

GeneratorKind parse_generator(std::string_view name) {
  const std::string s = lower(name);
  if (s == "bm" || s == "brownian-motion") return GeneratorKind::BrownianMotion;
  if (s == "bb" || s == "brownian-bridge") return GeneratorKind::BrownianBridge;
  if (s == "ng" || s == "ng-sine") return GeneratorKind::NGSine;
  throw ValidationError("unknown generator '" + std::string(name) + "' (expected bm, bb or ng)");
}

Curve gen_brownian_motion(Rng& rng, const Grid& grid) {
  const Eigen::VectorXd& t = grid.points();
  Curve x(t.size());
  x[0] = t[0] > 0.0 ? std::sqrt(t[0]) * rng.normal() : 0.0;
  for (Eigen::Index i = 1; i < t.size(); ++i) {
    x[i] = x[i - 1] + std::sqrt(t[i] - t[i - 1]) * rng.normal();
  }
  return x;
}

Curve gen_brownian_bridge(Rng& rng, const Grid& grid) {
  const Eigen::VectorXd& t = grid.points();
  const Curve w = gen_brownian_motion(rng, grid);
  const Eigen::Index last = t.size() - 1;
  Curve b = w - (t / t[last]) * w[last];
  b[last] = 0.0;
  return b;
}

Curve gen_ng_sine(Rng& rng, const Grid& grid) {
  constexpr double pi = std::numbers::pi;
  const double a = 7.0 * rng.student_t(5);
  const double b = 3.0 * rng.student_t(5);
  const double c = rng.student_t(5);
  const Eigen::ArrayXd t = grid.points().array();
  return (a * (pi * t).sin() + b * (2.0 * pi * t).sin() + c * (4.0 * pi * t).sin()).matrix();
}

Curve generate_curve(GeneratorKind kind, Rng& rng, const Grid& grid) {
  switch (kind) {
    case GeneratorKind::BrownianMotion: return gen_brownian_motion(rng, grid);
    case GeneratorKind::BrownianBridge: return gen_brownian_bridge(rng, grid);
    case GeneratorKind::NGSine: return gen_ng_sine(rng, grid);
  }
  throw InvalidParameter("unknown generator kind");
}

FunctionalDataset generate_dataset(const std::vector<GeneratorSpec>& groups,
                                   const std::vector<int>& n, Rng& rng) {
  if (groups.size() != n.size()) {
    throw ValidationError("generate_dataset: " + std::to_string(groups.size()) +
                          " generators for " + std::to_string(n.size()) + " group sizes");
  }
  if (groups.empty()) throw ValidationError("generate_dataset: no groups");
  const Eigen::Index m = groups[0].m;
  for (const auto& g : groups) {
    if (g.m != m) throw ValidationError("generate_dataset: all groups must share the grid size");
    if (!(g.scale >= 0.0) || !std::isfinite(g.scale)) {
      throw ValidationError("generate_dataset: scale must be finite and >= 0");
    }
    if (const auto* curve = std::get_if<Curve>(&g.shift); curve && curve->size() != m) {
      throw DimensionError("generate_dataset: shift curve length does not match m");
    }
  }
  const Grid grid = Grid::uniform(m);
  std::map<int, FourierSmoother> smoothers;

  std::vector<Eigen::MatrixXd> data;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const GeneratorSpec& g = groups[i];
    if (n[i] < 1) throw ValidationError("generate_dataset: group sizes must be positive");
    Eigen::MatrixXd x(n[i], m);
    for (int j = 0; j < n[i]; ++j) x.row(j) = generate_curve(g.kind, rng, grid).transpose();
    if (g.smoothing) {
      auto it = smoothers.find(*g.smoothing);
      if (it == smoothers.end()) it = smoothers.emplace(*g.smoothing, FourierSmoother(grid, *g.smoothing)).first;
      x = it->second.smooth_rows(x);
    }
    x *= g.scale;
    if (const auto* c = std::get_if<double>(&g.shift)) {
      x.array() += *c;
    } else {
      x.rowwise() += std::get<Curve>(g.shift).transpose();
    }
    data.push_back(std::move(x));
  }
  return FunctionalDataset(grid, std::move(data));
}

std::string_view calibration_name(Calibration method) {
  return method == Calibration::Bootstrap ? "boot" : "asym";
}

Calibration parse_calibration(std::string_view name) {
  const std::string s = lower(name);
  if (s == "boot" || s == "bootstrap") return Calibration::Bootstrap;
  if (s == "asym" || s == "asymptotic") return Calibration::Asymptotic;
  throw ValidationError("unknown method '" + std::string(name) + "' (expected boot or asym)");
}

std::string ExperimentTest::label() const {
  std::string out(statistic_name(statistic.kind));
  if (is_projection(statistic.kind)) out += "[p=" + std::to_string(statistic.p) + "]";
  out += "-";
  out += calibration_name(method);
  if (method == Calibration::Bootstrap && scheme) {
    out += "(";
    out += scheme_name(scheme->kind);
    out += ")";
  }
  return out;
}

void ExperimentSpec::validate() const {
  if (generators.size() != 2) {
    throw ValidationError("generators: exactly 2 groups are supported, got " +
                          std::to_string(generators.size()));
  }
  if (n.size() != generators.size()) throw ValidationError("n: one size per generator required");
  for (int size : n) {
    if (size < 2) throw ValidationError("n: every group needs at least 2 curves");
  }
  for (const auto& g : generators) {
    if (g.m < 2) throw ValidationError("m: grid size must be at least 2");
    if (!(g.scale >= 0.0) || !std::isfinite(g.scale)) throw ValidationError("scale: must be >= 0");
    if (g.smoothing && (*g.smoothing < 1 || *g.smoothing % 2 == 0 || *g.smoothing > g.m)) {
      throw ValidationError("smoothing: basis size must be odd and in [1, m]");
    }
  }
  if (tests.empty()) throw ValidationError("tests: at least one test required");
  for (const auto& t : tests) {
    if (is_projection(t.statistic.kind) && (t.statistic.p < 1 || t.statistic.p > generators[0].m)) {
      throw ValidationError("tests: p must be in [1, m] for " + t.label());
    }
    if (t.method == Calibration::Asymptotic && !has_asymptotic_reference(t.statistic.kind)) {
      throw ValidationError("tests: " + std::string(statistic_name(t.statistic.kind)) +
                            " is bootstrap-only and has no asymptotic calibration");
    }
    if (t.scheme && t.scheme->gaussian_rank && *t.scheme->gaussian_rank < 1) {
      throw ValidationError("tests: gaussian_rank must be at least 1");
    }
  }
  if (B < 1) throw ValidationError("B: must be at least 1");
  if (R < 1) throw ValidationError("R: must be at least 1");
  if (alphas.empty()) throw ValidationError("alphas: at least one level required");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ValidationError("alphas: every level must lie in (0, 1)");
  }
}

bool rejects(Calibration method, double p_value, double alpha) {
  return method == Calibration::Bootstrap ? p_value <= alpha : p_value < alpha;
}

ExperimentResult run_size_power(const ExperimentSpec& spec) {
  spec.validate();
  const std::size_t t_count = spec.tests.size();
  const auto R = static_cast<std::size_t>(spec.R);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  // Bootstrap tests sharing a scheme share their pseudo-datasets.
  std::vector<std::pair<BootstrapScheme, std::vector<std::size_t>>> boot_groups;
  std::vector<std::size_t> asym_tests;
  for (std::size_t t = 0; t < t_count; ++t) {
    const ExperimentTest& test = spec.tests[t];
    if (test.method == Calibration::Asymptotic) {
      asym_tests.push_back(t);
      continue;
    }
    const BootstrapScheme scheme = scheme_for(test);
    auto it = std::find_if(boot_groups.begin(), boot_groups.end(),
                           [&](const auto& g) { return same_scheme(g.first, scheme); });
    if (it == boot_groups.end()) {
      boot_groups.push_back({scheme, {t}});
    } else {
      it->second.push_back(t);
    }
  }

  std::vector<double> stats(R * t_count, nan);
  std::vector<double> pvals(R * t_count, nan);
  std::vector<std::string> errors(R * t_count);
  std::vector<std::exception_ptr> fatal(R);

  const SeedSpec master{spec.master_seed};
  parallel_for(R, spec.jobs, [&](std::size_t r) {
    const SeedSpec ds_seed = master.derive(r);
    Rng rng(ds_seed.child(0));
    FunctionalDataset data = generate_dataset(spec.generators, spec.n, rng);

    for (const auto& [scheme, members] : boot_groups) {
      std::vector<StatisticSpec> specs;
      for (std::size_t t : members) specs.push_back(spec.tests[t].statistic);
      std::vector<BootstrapOutcome> outcomes;
      try {
        outcomes = bootstrap_pvalues(data, specs, scheme, spec.B, ds_seed.derive(1), 1);
      } catch (const NumericalError& e) {
        for (std::size_t t : members) errors[r * t_count + t] = e.what();
        continue;
      } catch (...) {
        fatal[r] = std::current_exception();
        return;
      }
      for (std::size_t k = 0; k < members.size(); ++k) {
        const std::size_t slot = r * t_count + members[k];
        if (outcomes[k].result) {
          stats[slot] = outcomes[k].result->observed.value;
          pvals[slot] = outcomes[k].result->p_value;
        } else {
          errors[slot] = outcomes[k].error;
        }
      }
    }

    if (!asym_tests.empty()) {
      std::vector<StatisticSpec> specs;
      for (std::size_t t : asym_tests) specs.push_back(spec.tests[t].statistic);
      const auto outcomes = compute_statistics(data, specs);
      for (std::size_t k = 0; k < asym_tests.size(); ++k) {
        const std::size_t slot = r * t_count + asym_tests[k];
        if (!outcomes[k].statistic) {
          errors[slot] = describe(outcomes[k].error);
          continue;
        }
        stats[slot] = outcomes[k].statistic->value;
        try {
          pvals[slot] = asymptotic_pvalue(*outcomes[k].statistic, ds_seed.child(2));
        } catch (const NumericalError& e) {
          errors[slot] = e.what();
        }
      }
    }
  });
  for (const auto& e : fatal) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentResult result;
  result.dataset_seeds.reserve(R);
  for (std::size_t r = 0; r < R; ++r) result.dataset_seeds.push_back(master.child(r));
  for (std::size_t t = 0; t < t_count; ++t) {
    TestRates rates;
    rates.test = spec.tests[t];
    if (rates.test.method == Calibration::Bootstrap) rates.test.scheme = scheme_for(rates.test);
    rates.statistics.resize(R);
    rates.p_values.resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t slot = r * t_count + t;
      rates.statistics[r] = stats[slot];
      rates.p_values[r] = pvals[slot];
      if (std::isnan(pvals[slot])) {
        ++rates.failed;
        if (rates.error.empty()) {
          rates.error = "dataset " + std::to_string(r) + ": " + errors[slot];
        }
      }
    }
    rates.evaluated = spec.R - rates.failed;
    if (rates.failed > kMaxFailedReplicateFraction * spec.R) {
      rates.aborted = true;
      rates.error = std::to_string(rates.failed) + " of " + std::to_string(spec.R) +
                    " datasets failed (more than 1%); first failure: " + rates.error;
    } else {
      for (double alpha : spec.alphas) {
        RejectionRate rr;
        rr.alpha = alpha;
        for (double p : rates.p_values) {
          if (!std::isnan(p) && rejects(rates.test.method, p, alpha)) ++rr.rejections;
        }
        if (rates.evaluated > 0) {
          rr.rate = static_cast<double>(rr.rejections) / rates.evaluated;
          rr.standard_error = std::sqrt(rr.rate * (1.0 - rr.rate) / rates.evaluated);
        }
        rates.rates.push_back(rr);
      }
    }
    result.tests.push_back(std::move(rates));
  }
  return result;
}

}  // namespace fdboot
