#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "fdboot/bootstrap.hpp"
#include "fdboot/errors.hpp"
#include "fdboot/format.hpp"
#include "fdboot/moments.hpp"

#ifndef FDBOOT_VERSION
#define FDBOOT_VERSION "0.0.0"
#endif

namespace fdboot::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitInternal = 1;

struct TestOptions {
  std::string input;
  std::string hypothesis;
  std::string statistic;
  int p = 0;
  int B = 1000;
  std::string method = "boot";
  std::string scheme;
  int gaussian_rank = 0;
  std::uint64_t seed = 1;
  int smooth_basis = 0;
  std::string output;
  unsigned jobs = 1;
};

struct FpcOptions {
  std::string input;
  int max_p = 10;
  std::string kernel = "pooled";
  double threshold = 0.85;
  int smooth_basis = 0;
  std::string output;
};

struct SimulateOptions {
  std::string config;
  std::string output_prefix;
  unsigned jobs = 0;
};

struct GenerateOptions {
  std::vector<std::string> generators{"bm"};
  std::vector<int> n{25, 25};
  int m = 500;
  std::vector<double> scale{1.0};
  std::vector<double> shift{0.0};
  int smooth_basis = kDefaultSimulationBasis;
  std::uint64_t seed = 1;
  std::string output;
};

Json header(const char* command) {
  Json j;
  j["tool"] = "fdboot";
  j["version"] = FDBOOT_VERSION;
  j["command"] = command;
  return j;
}

std::uint64_t resolve_seed(std::uint64_t flag) {
  const char* env = std::getenv("FDBOOT_SEED");
  if (env == nullptr || *env == '\0') return flag;
  std::uint64_t value = 0;
  const char* end = env + std::char_traits<char>::length(env);
  const auto [ptr, ec] = std::from_chars(env, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("FDBOOT_SEED must be an unsigned 64-bit integer, got '" + std::string(env) + "'");
  }
  return value;
}

void emit(const Json& report, const std::string& path, std::ostream& out) {
  const std::string text = dump_json(report) + "\n";
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw ValidationError("cannot write output file '" + path + "'");
  file << text;
}

FunctionalDataset load_input(const std::string& path, int smooth_basis) {
  FunctionalDataset data = load_dataset_file(path);
  if (smooth_basis > 0) data = FourierSmoother(data.grid(), smooth_basis).smooth(data);
  return data;
}

Json groups_json(const FunctionalDataset& data) {
  Json groups = Json::array();
  for (std::size_t i = 0; i < data.group_count(); ++i) {
    groups.push_back(Json{{"label", data.labels()[i]}, {"n", data.group_size(i)}});
  }
  return groups;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json vector_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

std::string hypothesis_of(StatisticKind kind) {
  return is_covariance_statistic(kind) ? "covariance" : "mean";
}

int cmd_test(const TestOptions& o, bool p_given, bool scheme_given, bool rank_given, std::ostream& out) {
  if (o.hypothesis.empty() && o.statistic.empty()) {
    throw ValidationError("give --statistic, --hypothesis, or both");
  }
  if (!o.hypothesis.empty() && o.hypothesis != "mean" && o.hypothesis != "covariance" &&
      o.hypothesis != "joint") {
    throw ValidationError("--hypothesis must be mean, covariance or joint");
  }
  StatisticKind kind;
  if (!o.statistic.empty()) {
    kind = parse_statistic(o.statistic);
  } else if (o.hypothesis == "covariance") {
    kind = StatisticKind::TN;
  } else if (o.hypothesis == "mean") {
    kind = StatisticKind::SN;
  } else {
    throw ValidationError("--hypothesis joint needs an explicit --statistic");
  }
  const std::string hypothesis = o.hypothesis.empty() ? hypothesis_of(kind) : o.hypothesis;
  if (hypothesis != "joint" && hypothesis != hypothesis_of(kind)) {
    throw ValidationError("statistic " + std::string(statistic_name(kind)) + " tests the " +
                          hypothesis_of(kind) + " hypothesis, not " + hypothesis);
  }

  const Calibration method = parse_calibration(o.method);
  if (method == Calibration::Asymptotic && kind == StatisticKind::TN) {
    throw ValidationError(
        "--statistic tn --method asym: T_N is bootstrap-only; its limit law is a weighted "
        "chi-square sum with unknown weights, so only --method boot is available");
  }
  if (method == Calibration::Asymptotic && kind == StatisticKind::SN) {
    throw ValidationError(
        "--statistic sn --method asym: S_N is bootstrap-only; its limit law depends on the "
        "unknown covariance kernels, so only --method boot is available");
  }
  if (is_projection(kind) && !p_given) {
    throw ValidationError("--p is required for " + std::string(statistic_name(kind)) +
                          "; run the fpc command to choose it");
  }
  if (!is_projection(kind) && p_given) {
    throw ValidationError("--p does not apply to " + std::string(statistic_name(kind)));
  }
  if (o.B < 1) throw ValidationError("--B must be at least 1");
  if (o.smooth_basis < 0) throw ValidationError("--smooth-basis must be nonnegative");
  if (o.jobs < 1) throw ValidationError("--jobs must be at least 1");

  BootstrapScheme scheme;
  if (scheme_given) {
    if (method != Calibration::Bootstrap) throw ValidationError("--scheme only applies to --method boot");
    scheme.kind = parse_scheme(o.scheme);
  } else {
    scheme.kind = hypothesis == "joint" ? SchemeKind::JointNull : default_scheme(kind);
  }
  if (rank_given) {
    if (scheme.kind != SchemeKind::GaussianCovNull && scheme.kind != SchemeKind::GaussianMeanNull) {
      throw ValidationError("--gaussian-rank needs a Gaussian --scheme");
    }
    if (o.gaussian_rank < 1) throw ValidationError("--gaussian-rank must be at least 1");
    scheme.gaussian_rank = o.gaussian_rank;
  }
  const std::uint64_t seed = resolve_seed(o.seed);

  const FunctionalDataset data = load_input(o.input, o.smooth_basis);
  const StatisticSpec spec{kind, is_projection(kind) ? o.p : 0};

  TestStatistic stat;
  double p_value = 1.0;
  std::optional<BootstrapResult> boot;
  if (method == Calibration::Bootstrap) {
    boot = bootstrap_pvalue(data, spec, scheme, o.B, SeedSpec{seed}, o.jobs);
    stat = boot->observed;
    p_value = boot->p_value;
  } else {
    stat = compute_statistic(data, spec);
    p_value = asymptotic_pvalue(stat, SeedSpec{seed}.child(0));
  }

  Json r = header("test");
  r["test"] = std::string(statistic_name(kind)) + "-" + std::string(calibration_name(method));
  r["hypothesis"] = hypothesis;
  r["statistic"] = std::string(statistic_name(kind));
  r["method"] = std::string(calibration_name(method));
  r["value"] = stat.value;
  r["p_value"] = p_value;
  if (boot) {
    r["scheme"] = std::string(scheme_name(scheme.kind));
    if (scheme.gaussian_rank) r["gaussian_rank"] = *scheme.gaussian_rank;
    r["B"] = boot->B;
    r["requested_B"] = boot->requested_B;
    r["failed_replicates"] = boot->failed;
  } else if (kind == StatisticKind::SP2) {
    r["reference_draws"] = kWeightedChisqDraws;
  }
  if (is_projection(kind)) {
    r["p"] = stat.p;
    for (const auto& [key, value] : stat.extras) r[key] = value;
    r["eigenvalues"] = vector_json(stat.eigenvalues);
  }
  r["groups"] = groups_json(data);
  r["grid_size"] = data.grid_size();
  r["smooth_basis"] = o.smooth_basis > 0 ? Json(o.smooth_basis) : Json(nullptr);
  r["input"] = o.input;
  r["seed"] = seed;
  r["warnings"] = boot ? boot->warnings : stat.warnings;
  emit(r, o.output, out);
  return kExitOk;
}

int cmd_fpc(const FpcOptions& o, std::ostream& out) {
  if (o.max_p < 1) throw ValidationError("--max-p must be at least 1");
  if (!(o.threshold > 0.0 && o.threshold <= 1.0)) throw ValidationError("--threshold must lie in (0, 1]");
  if (o.kernel != "pooled" && o.kernel != "mean") throw ValidationError("--kernel must be pooled or mean");
  if (o.smooth_basis < 0) throw ValidationError("--smooth-basis must be nonnegative");
  const FunctionalDataset data = load_input(o.input, o.smooth_basis);
  const OuterProductKernel kernel =
      o.kernel == "pooled" ? pooled_covariance_factor(data) : mean_test_kernel_factor(data);
  const int count = static_cast<int>(std::min<Eigen::Index>(o.max_p, data.grid_size()));
  const EigenSystem sys = eigen_decompose(kernel, count);

  Json r = header("fpc");
  r["kernel"] = o.kernel == "pooled" ? "pooled-covariance" : "mean-test";
  r["groups"] = groups_json(data);
  r["grid_size"] = data.grid_size();
  r["smooth_basis"] = o.smooth_basis > 0 ? Json(o.smooth_basis) : Json(nullptr);
  r["input"] = o.input;
  r["total_variance"] = sys.total_variance;
  r["threshold"] = o.threshold;
  Json suggested = nullptr;
  Json rows = Json::array();
  for (int k = 0; k < sys.count(); ++k) {
    const double f = sys.explained_fraction[k];
    rows.push_back(Json{{"p", k + 1}, {"eigenvalue", sys.eigenvalues[k]}, {"f_p", f}});
    if (suggested.is_null() && f >= o.threshold) suggested = k + 1;
  }
  r["suggested_p"] = suggested;
  r["components"] = rows;
  Json warnings = Json::array();
  for (int k : near_degenerate_pairs(sys, sys.count())) {
    if (!(sys.eigenvalues[k - 1] > 1e-12 * sys.eigenvalues[0])) break;
    warnings.push_back("eigenvalues " + std::to_string(k) + " and " + std::to_string(k + 1) +
                       " are nearly degenerate");
  }
  r["warnings"] = warnings;
  emit(r, o.output, out);
  return kExitOk;
}

Json rates_json(const TestRates& t) {
  Json j;
  j["test"] = t.test.label();
  j["statistic"] = std::string(statistic_name(t.test.statistic.kind));
  j["p"] = is_projection(t.test.statistic.kind) ? Json(t.test.statistic.p) : Json(nullptr);
  j["method"] = std::string(calibration_name(t.test.method));
  j["scheme"] = t.test.scheme ? Json(std::string(scheme_name(t.test.scheme->kind))) : Json(nullptr);
  j["evaluated"] = t.evaluated;
  j["failed"] = t.failed;
  j["aborted"] = t.aborted;
  j["error"] = t.error.empty() ? Json(nullptr) : Json(t.error);
  Json rates = Json::array();
  for (const auto& rr : t.rates) {
    rates.push_back(Json{{"alpha", rr.alpha},
                         {"rate", rr.rate},
                         {"standard_error", rr.standard_error},
                         {"rejections", rr.rejections}});
  }
  j["rates"] = rates;
  j["statistics"] = vector_json(t.statistics);
  j["p_values"] = vector_json(t.p_values);
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  std::ifstream in(o.config);
  if (!in) throw ValidationError("cannot open config file '" + o.config + "'");
  Json config;
  try {
    config = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config is not valid JSON: " + std::string(e.what()));
  }
  const ExperimentConfig parsed = parse_experiment_config(config);
  const std::string prefix =
      o.output_prefix.empty() ? std::filesystem::path(o.config).stem().string() : o.output_prefix;

  std::vector<Json> sweep_values;
  if (parsed.sweep) {
    sweep_values = parsed.sweep->values;
  } else {
    sweep_values.push_back(nullptr);
  }

  std::ostringstream csv;
  csv << "sweep_value,test,statistic,p,method,scheme,alpha,rate,standard_error,rejections,evaluated,"
         "failed,B,R\n";
  Json report = header("simulate");
  report["name"] = parsed.name;
  report["config"] = config;
  report["seed"] = parsed.spec.master_seed;
  Json points = Json::array();
  bool aborted = false;
  std::vector<std::uint64_t> dataset_seeds;
  for (const Json& value : sweep_values) {
    Json point_config = parsed.source;
    if (parsed.sweep) point_config[Json::json_pointer(parsed.sweep->pointer)] = value;
    ExperimentSpec spec = experiment_from_json(point_config);
    if (o.jobs > 0) spec.jobs = o.jobs;
    const ExperimentResult result = run_size_power(spec);
    dataset_seeds = result.dataset_seeds;

    Json point;
    if (parsed.sweep) {
      point["sweep_pointer"] = parsed.sweep->pointer;
      point["sweep_value"] = value;
    }
    Json tests = Json::array();
    const std::string sweep_text = parsed.sweep ? dump_json(value, -1) : "";
    for (const auto& t : result.tests) {
      tests.push_back(rates_json(t));
      aborted = aborted || t.aborted;
      const std::string p = is_projection(t.test.statistic.kind) ? std::to_string(t.test.statistic.p) : "";
      const std::string scheme = t.test.scheme ? std::string(scheme_name(t.test.scheme->kind)) : "";
      if (t.aborted) {
        csv << csv_field(sweep_text) << ',' << csv_field(t.test.label()) << ','
            << statistic_name(t.test.statistic.kind) << ',' << p << ','
            << calibration_name(t.test.method) << ',' << scheme << ",,,,," << t.evaluated << ','
            << t.failed << ',' << spec.B << ',' << spec.R << '\n';
        continue;
      }
      for (const auto& rr : t.rates) {
        csv << csv_field(sweep_text) << ',' << csv_field(t.test.label()) << ','
            << statistic_name(t.test.statistic.kind) << ',' << p << ','
            << calibration_name(t.test.method) << ',' << scheme << ',' << format_double(rr.alpha) << ','
            << format_double(rr.rate) << ',' << format_double(rr.standard_error) << ','
            << rr.rejections << ',' << t.evaluated << ',' << t.failed << ',' << spec.B << ','
            << spec.R << '\n';
      }
    }
    point["tests"] = tests;
    points.push_back(point);
  }
  report["dataset_seeds"] = dataset_seeds;
  report["points"] = points;

  {
    std::ofstream file(prefix + ".csv", std::ios::binary);
    if (!file) throw ValidationError("cannot write '" + prefix + ".csv'");
    file << csv.str();
  }
  emit(report, prefix + ".json", out);
  out << csv.str();
  return aborted ? kExitNumerical : kExitOk;
}

int cmd_generate(const GenerateOptions& o, std::ostream& out) {
  const std::size_t k = o.n.size();
  if (k < 2) throw ValidationError("--n needs at least two group sizes");
  const auto expand = [k](const auto& values, const char* flag) {
    using T = typename std::decay_t<decltype(values)>::value_type;
    if (values.size() == 1) return std::vector<T>(k, values[0]);
    if (values.size() != k) {
      throw ValidationError(std::string(flag) + " needs 1 or " + std::to_string(k) + " values");
    }
    return std::vector<T>(values.begin(), values.end());
  };
  const auto kinds = expand(o.generators, "--generator");
  const auto scales = expand(o.scale, "--scale");
  const auto shifts = expand(o.shift, "--shift");
  if (o.m < 2) throw ValidationError("--m must be at least 2");
  if (o.smooth_basis < 0) throw ValidationError("--smooth-basis must be nonnegative");
  if (o.smooth_basis > 0 && (o.smooth_basis % 2 == 0 || o.smooth_basis > o.m)) {
    throw ValidationError("--smooth-basis must be odd and at most --m");
  }

  std::vector<GeneratorSpec> specs;
  for (std::size_t i = 0; i < k; ++i) {
    GeneratorSpec g;
    g.kind = parse_generator(kinds[i]);
    g.scale = scales[i];
    if (!(g.scale >= 0.0)) throw ValidationError("--scale values must be >= 0");
    g.shift = shifts[i];
    g.m = o.m;
    g.smoothing = o.smooth_basis > 0 ? std::optional<int>(o.smooth_basis) : std::nullopt;
    specs.push_back(g);
  }
  for (int size : o.n) {
    if (size < 1) throw ValidationError("--n values must be positive");
  }
  const std::uint64_t seed = resolve_seed(o.seed);
  Rng rng(SeedSpec{seed}.child(0));
  const FunctionalDataset data = generate_dataset(specs, o.n, rng);

  const auto join = [](const auto& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) s += ',';
      if constexpr (std::is_same_v<std::decay_t<decltype(values[i])>, double>) {
        s += format_double(values[i]);
      } else if constexpr (std::is_same_v<std::decay_t<decltype(values[i])>, std::string>) {
        s += values[i];
      } else {
        s += std::to_string(values[i]);
      }
    }
    return s;
  };
  std::vector<std::string> names;
  for (const auto& g : specs) names.emplace_back(generator_name(g.kind));
  const std::string comment = "fdboot generate seed=" + std::to_string(seed) +
                              " generator=" + join(names) + " m=" + std::to_string(o.m) +
                              " n=" + join(o.n) + " scale=" + join(scales) + " shift=" +
                              join(shifts) + " smooth_basis=" + std::to_string(o.smooth_basis);
  if (o.output.empty() || o.output == "-") {
    save_dataset(data, out, {comment});
  } else {
    save_dataset_file(data, o.output, {comment});
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bootstrap two-sample tests for mean and covariance functions of functional data",
               "fdboot"};
  app.set_version_flag("--version", FDBOOT_VERSION);
  app.require_subcommand(1);

  TestOptions test;
  auto* t = app.add_subcommand("test", "Test equality of mean or covariance functions");
  t->add_option("--input", test.input, "Dataset CSV")->required();
  t->add_option("--hypothesis", test.hypothesis, "mean, covariance or joint");
  t->add_option("--statistic", test.statistic, "tn, tpn-g, tpn, sn, sp1 or sp2");
  auto* p_opt = t->add_option("--p", test.p, "Number of FPCs for projection statistics");
  t->add_option("--B", test.B, "Bootstrap replicates")->capture_default_str();
  t->add_option("--method", test.method, "boot or asym")->capture_default_str();
  auto* scheme_opt = t->add_option("--scheme", test.scheme, "Bootstrap scheme (default per hypothesis)");
  auto* rank_opt = t->add_option("--gaussian-rank", test.gaussian_rank, "KL truncation for Gaussian schemes");
  t->add_option("--seed", test.seed, "Master seed (FDBOOT_SEED overrides)")->capture_default_str();
  t->add_option("--smooth-basis", test.smooth_basis, "Fourier basis size for pre-smoothing (0 = off)");
  t->add_option("--output", test.output, "Report path (default stdout)");
  t->add_option("--jobs", test.jobs, "Worker threads for replicates")->capture_default_str();

  FpcOptions fpc;
  auto* f = app.add_subcommand("fpc", "Eigenvalues and explained variance of the pooled covariance");
  f->add_option("--input", fpc.input, "Dataset CSV")->required();
  f->add_option("--max-p", fpc.max_p, "Number of components to report")->capture_default_str();
  f->add_option("--kernel", fpc.kernel, "pooled or mean")->capture_default_str();
  f->add_option("--threshold", fpc.threshold, "Explained-variance level for suggested_p")->capture_default_str();
  f->add_option("--smooth-basis", fpc.smooth_basis, "Fourier basis size for pre-smoothing (0 = off)");
  f->add_option("--output", fpc.output, "Report path (default stdout)");

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Run a size/power experiment from a JSON config");
  s->add_option("config", sim.config, "Experiment config")->required();
  s->add_option("--output-prefix", sim.output_prefix, "Writes PREFIX.csv and PREFIX.json");
  s->add_option("--jobs", sim.jobs, "Worker threads (overrides the config)");

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a simulated dataset as CSV");
  g->add_option("--generator", gen.generators, "bm, bb or ng; one value or one per group")->delimiter(',');
  g->add_option("--n", gen.n, "Group sizes")->delimiter(',')->capture_default_str();
  g->add_option("--m", gen.m, "Grid size")->capture_default_str();
  g->add_option("--scale", gen.scale, "Per-group scale")->delimiter(',');
  g->add_option("--shift", gen.shift, "Per-group constant shift")->delimiter(',');
  g->add_option("--smooth-basis", gen.smooth_basis, "Fourier basis size (0 = off)")->capture_default_str();
  g->add_option("--seed", gen.seed, "Seed (FDBOOT_SEED overrides)")->capture_default_str();
  g->add_option("--output", gen.output, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }

  try {
    if (*t) return cmd_test(test, p_opt->count() > 0, scheme_opt->count() > 0, rank_opt->count() > 0, out);
    if (*f) return cmd_fpc(fpc, out);
    if (*s) return cmd_simulate(sim, out);
    if (*g) return cmd_generate(gen, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInput;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("fdboot");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace fdboot::cli
