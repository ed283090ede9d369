#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fdboot/bootstrap.hpp"
#include "fdboot/curves.hpp"
#include "fdboot/random.hpp"
#include "fdboot/statistics.hpp"

namespace fdboot {

// BrownianMotion: W(t) with Cov = min(s, t).
// BrownianBridge: W(t) - t W(1), Cov = min(s, t) - st.
// NGSine: 7 Y1 sin(pi t) + 3 Y2 sin(2 pi t) + Y3 sin(4 pi t), Y_k iid t_5.
enum class GeneratorKind { BrownianMotion, BrownianBridge, NGSine };

std::string_view generator_name(GeneratorKind kind);
// bm, bb, ng (also brownian-motion, brownian-bridge, ng-sine).
GeneratorKind parse_generator(std::string_view name);

inline constexpr int kDefaultSimulationBasis = 49;

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::BrownianMotion;
  double scale = 1.0;                   // multiplies every curve
  std::variant<double, Curve> shift = 0.0;  // added to every curve
  Eigen::Index m = 500;
  std::optional<int> smoothing = kDefaultSimulationBasis;  // Fourier basis size
};

Curve gen_brownian_motion(Rng& rng, const Grid& grid);
Curve gen_brownian_bridge(Rng& rng, const Grid& grid);
Curve gen_ng_sine(Rng& rng, const Grid& grid);
Curve generate_curve(GeneratorKind kind, Rng& rng, const Grid& grid);

// Group i holds n[i] curves from groups[i]: raw draws, then smoothing, then
// scale, then shift. Groups are drawn in order from the one stream.
FunctionalDataset generate_dataset(const std::vector<GeneratorSpec>& groups,
                                   const std::vector<int>& n, Rng& rng);

enum class Calibration { Bootstrap, Asymptotic };

std::string_view calibration_name(Calibration method);
Calibration parse_calibration(std::string_view name);

struct ExperimentTest {
  StatisticSpec statistic;
  Calibration method = Calibration::Bootstrap;
  std::optional<BootstrapScheme> scheme;  // defaults by statistic

  std::string label() const;
};

struct ExperimentSpec {
  std::vector<GeneratorSpec> generators;
  std::vector<int> n;
  std::vector<ExperimentTest> tests;
  int B = 1000;
  int R = 500;
  std::vector<double> alphas{0.01, 0.05, 0.10};
  std::uint64_t master_seed = 0;
  unsigned jobs = 1;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

struct RejectionRate {
  double alpha = 0.0;
  double rate = 0.0;
  double standard_error = 0.0;
  int rejections = 0;
};

struct TestRates {
  ExperimentTest test;
  std::vector<RejectionRate> rates;
  int evaluated = 0;
  int failed = 0;
  bool aborted = false;
  std::string error;  // first failure, or the abort diagnostic
  // Per dataset, NaN where the test failed.
  std::vector<double> statistics;
  std::vector<double> p_values;
};

struct ExperimentResult {
  std::vector<TestRates> tests;
  std::vector<std::uint64_t> dataset_seeds;
};

// Rejects when p <= alpha (bootstrap) or p < alpha (asymptotic, i.e. the
// statistic exceeds the reference quantile).
bool rejects(Calibration method, double p_value, double alpha);

// Dataset r is generated from Rng(child(child(master, r), 0)); its bootstrap
// runs on SeedSpec{child(child(master, r), 1)}, and the Monte Carlo reference
// for S_pN^(2) on child(child(master, r), 2). A test failing on more than 1%
// of the datasets is marked aborted.
ExperimentResult run_size_power(const ExperimentSpec& spec);

}  // namespace fdboot
