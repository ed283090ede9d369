#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "fdboot/simgen.hpp"

namespace fdboot::cli {

using Json = nlohmann::ordered_json;

// Serializes with fixed key order and doubles at 17 significant digits;
// non-finite doubles become null.
std::string dump_json(const Json& value, int indent = 2);

struct SweepSpec {
  std::string pointer;  // JSON pointer into the config, e.g. /groups/1/scale
  std::vector<Json> values;
};

struct ExperimentConfig {
  std::string name;
  ExperimentSpec spec;
  std::optional<SweepSpec> sweep;
  Json source;  // the config as read, sweep removed
};

// Validates a simulate config. Errors are ValidationError messages that start
// with the JSON pointer of the offending value.
ExperimentConfig parse_experiment_config(const Json& config);
ExperimentSpec experiment_from_json(const Json& config);

// Runs one command line (argv[0] is the program name). Returns the exit
// code: 0 success, 2 invalid input, 3 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// Same, with the arguments after the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fdboot::cli
