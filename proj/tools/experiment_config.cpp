#include <set>
#include <string>

#include "cli.hpp"
#include "fdboot/errors.hpp"

namespace fdboot::cli {

namespace {

[[noreturn]] void fail(const std::string& pointer, const std::string& message) {
  throw ValidationError((pointer.empty() ? std::string("/") : pointer) + ": " + message);
}

std::string child(const std::string& pointer, const std::string& key) {
  std::string escaped;
  for (char c : key) {
    if (c == '~') {
      escaped += "~0";
    } else if (c == '/') {
      escaped += "~1";
    } else {
      escaped += c;
    }
  }
  return pointer + "/" + escaped;
}

std::string child(const std::string& pointer, std::size_t index) {
  return pointer + "/" + std::to_string(index);
}

void check_keys(const Json& object, const std::string& pointer, const std::set<std::string>& allowed) {
  if (!object.is_object()) fail(pointer, "expected an object");
  for (const auto& [key, value] : object.items()) {
    if (!allowed.count(key)) fail(child(pointer, key), "unknown field");
  }
}

long long get_integer(const Json& v, const std::string& pointer, long long min) {
  if (!v.is_number_integer()) fail(pointer, "expected an integer");
  const long long x = v.get<long long>();
  if (x < min) fail(pointer, "must be at least " + std::to_string(min));
  return x;
}

double get_number(const Json& v, const std::string& pointer) {
  if (!v.is_number()) fail(pointer, "expected a number");
  return v.get<double>();
}

std::string get_string(const Json& v, const std::string& pointer) {
  if (!v.is_string()) fail(pointer, "expected a string");
  return v.get<std::string>();
}

template <typename Parse>
auto parse_name(const Json& v, const std::string& pointer, Parse parse) {
  const std::string s = get_string(v, pointer);
  try {
    return parse(s);
  } catch (const InputError& e) {
    fail(pointer, e.what());
  }
}

std::optional<int> get_smoothing(const Json& v, const std::string& pointer, Eigen::Index m) {
  if (v.is_null()) return std::nullopt;
  const long long k = get_integer(v, pointer, 0);
  if (k == 0) return std::nullopt;
  if (k % 2 == 0) fail(pointer, "Fourier basis size must be odd");
  if (k > m) fail(pointer, "Fourier basis size exceeds grid_size");
  return static_cast<int>(k);
}

GeneratorSpec parse_group(const Json& g, const std::string& pointer, Eigen::Index m,
                          std::optional<int> smoothing) {
  check_keys(g, pointer, {"generator", "scale", "shift", "smoothing"});
  if (!g.contains("generator")) fail(child(pointer, "generator"), "required field missing");
  GeneratorSpec spec;
  spec.kind = parse_name(g["generator"], child(pointer, "generator"), parse_generator);
  spec.m = m;
  spec.smoothing = smoothing;
  if (g.contains("scale")) {
    spec.scale = get_number(g["scale"], child(pointer, "scale"));
    if (!(spec.scale >= 0.0)) fail(child(pointer, "scale"), "must be >= 0");
  }
  if (g.contains("shift")) {
    const Json& s = g["shift"];
    const std::string sp = child(pointer, "shift");
    if (s.is_number()) {
      spec.shift = s.get<double>();
    } else if (s.is_array()) {
      if (static_cast<Eigen::Index>(s.size()) != m) {
        fail(sp, "shift curve needs grid_size = " + std::to_string(m) + " values");
      }
      Curve c(m);
      for (std::size_t i = 0; i < s.size(); ++i) c[static_cast<Eigen::Index>(i)] = get_number(s[i], child(sp, i));
      spec.shift = c;
    } else {
      fail(sp, "expected a number or an array of numbers");
    }
  }
  if (g.contains("smoothing")) spec.smoothing = get_smoothing(g["smoothing"], child(pointer, "smoothing"), m);
  return spec;
}

ExperimentTest parse_test(const Json& t, const std::string& pointer, Eigen::Index m) {
  check_keys(t, pointer, {"statistic", "p", "method", "scheme", "gaussian_rank"});
  if (!t.contains("statistic")) fail(child(pointer, "statistic"), "required field missing");
  ExperimentTest test;
  test.statistic.kind = parse_name(t["statistic"], child(pointer, "statistic"), parse_statistic);
  if (is_projection(test.statistic.kind)) {
    if (!t.contains("p")) fail(child(pointer, "p"), "required for projection statistics");
    const long long p = get_integer(t["p"], child(pointer, "p"), 1);
    if (p > m) fail(child(pointer, "p"), "must not exceed grid_size");
    test.statistic.p = static_cast<int>(p);
  } else if (t.contains("p")) {
    fail(child(pointer, "p"), "does not apply to " + std::string(statistic_name(test.statistic.kind)));
  }
  if (t.contains("method")) {
    test.method = parse_name(t["method"], child(pointer, "method"), parse_calibration);
  }
  if (test.method == Calibration::Asymptotic && !has_asymptotic_reference(test.statistic.kind)) {
    fail(child(pointer, "method"), std::string(statistic_name(test.statistic.kind)) +
                                       " is bootstrap-only and has no asymptotic calibration");
  }
  if (t.contains("scheme")) {
    if (test.method != Calibration::Bootstrap) fail(child(pointer, "scheme"), "only valid with method boot");
    test.scheme = BootstrapScheme{parse_name(t["scheme"], child(pointer, "scheme"), parse_scheme), std::nullopt};
  }
  if (t.contains("gaussian_rank")) {
    const auto kind = test.scheme ? test.scheme->kind : default_scheme(test.statistic.kind);
    if (kind != SchemeKind::GaussianCovNull && kind != SchemeKind::GaussianMeanNull) {
      fail(child(pointer, "gaussian_rank"), "only valid with a Gaussian scheme");
    }
    if (!test.scheme) test.scheme = BootstrapScheme{kind, std::nullopt};
    test.scheme->gaussian_rank = static_cast<int>(get_integer(t["gaussian_rank"], child(pointer, "gaussian_rank"), 1));
  }
  return test;
}

}  // namespace

ExperimentSpec experiment_from_json(const Json& config) {
  check_keys(config, "", {"name", "grid_size", "smoothing", "n", "groups", "tests", "B", "R",
                          "alphas", "seed", "jobs"});
  ExperimentSpec spec;
  Eigen::Index m = 500;
  if (config.contains("grid_size")) m = get_integer(config["grid_size"], "/grid_size", 2);
  std::optional<int> smoothing = kDefaultSimulationBasis;
  if (config.contains("smoothing")) smoothing = get_smoothing(config["smoothing"], "/smoothing", m);
  else if (kDefaultSimulationBasis > m) smoothing = std::nullopt;

  if (!config.contains("groups")) fail("/groups", "required field missing");
  const Json& groups = config["groups"];
  if (!groups.is_array() || groups.size() != 2) fail("/groups", "expected an array of 2 group objects");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    spec.generators.push_back(parse_group(groups[i], child("/groups", i), m, smoothing));
  }

  if (!config.contains("n")) fail("/n", "required field missing");
  const Json& n = config["n"];
  if (!n.is_array() || n.size() != groups.size()) fail("/n", "expected one size per group");
  for (std::size_t i = 0; i < n.size(); ++i) {
    spec.n.push_back(static_cast<int>(get_integer(n[i], child("/n", i), 2)));
  }

  if (!config.contains("tests")) fail("/tests", "required field missing");
  const Json& tests = config["tests"];
  if (!tests.is_array() || tests.empty()) fail("/tests", "expected a non-empty array");
  for (std::size_t i = 0; i < tests.size(); ++i) spec.tests.push_back(parse_test(tests[i], child("/tests", i), m));

  if (config.contains("B")) spec.B = static_cast<int>(get_integer(config["B"], "/B", 1));
  if (config.contains("R")) spec.R = static_cast<int>(get_integer(config["R"], "/R", 1));
  if (config.contains("alphas")) {
    const Json& a = config["alphas"];
    if (!a.is_array() || a.empty()) fail("/alphas", "expected a non-empty array");
    spec.alphas.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = get_number(a[i], child("/alphas", i));
      if (!(x > 0.0 && x < 1.0)) fail(child("/alphas", i), "must lie in (0, 1)");
      spec.alphas.push_back(x);
    }
  }
  if (config.contains("seed")) {
    const Json& s = config["seed"];
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0)) {
      fail("/seed", "expected a nonnegative 64-bit integer");
    }
    spec.master_seed = s.get<std::uint64_t>();
  }
  if (config.contains("jobs")) spec.jobs = static_cast<unsigned>(get_integer(config["jobs"], "/jobs", 1));
  spec.validate();
  return spec;
}

ExperimentConfig parse_experiment_config(const Json& config) {
  if (!config.is_object()) fail("", "expected a JSON object");
  ExperimentConfig out;
  out.source = config;
  if (config.contains("sweep")) {
    const Json& s = config["sweep"];
    check_keys(s, "/sweep", {"pointer", "values"});
    if (!s.contains("pointer")) fail("/sweep/pointer", "required field missing");
    if (!s.contains("values")) fail("/sweep/values", "required field missing");
    SweepSpec sweep;
    sweep.pointer = get_string(s["pointer"], "/sweep/pointer");
    if (!s["values"].is_array() || s["values"].empty()) fail("/sweep/values", "expected a non-empty array");
    for (const auto& v : s["values"]) sweep.values.push_back(v);
    out.source.erase("sweep");
    Json::json_pointer target;
    try {
      target = Json::json_pointer(sweep.pointer);
    } catch (const nlohmann::json::exception&) {
      fail("/sweep/pointer", "not a valid JSON pointer");
    }
    if (target.empty() || target.to_string().rfind("/sweep", 0) == 0) {
      fail("/sweep/pointer", "must point into the experiment fields");
    }
    for (std::size_t i = 0; i < sweep.values.size(); ++i) {
      Json point = out.source;
      try {
        point[target] = sweep.values[i];
      } catch (const nlohmann::json::exception&) {
        fail("/sweep/pointer", "cannot be set in this config");
      }
      try {
        experiment_from_json(point);
      } catch (const ValidationError& e) {
        fail(child("/sweep/values", i), std::string("invalid value: ") + e.what());
      }
    }
    out.sweep = std::move(sweep);
  }
  out.spec = experiment_from_json(out.source);
  if (out.source.contains("name")) out.name = get_string(out.source["name"], "/name");
  return out;
}

}  // namespace fdboot::cli
