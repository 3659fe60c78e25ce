#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "escobar/config.hpp"
#include "escobar/errors.hpp"
#include "escobar/run.hpp"

namespace {

using nlohmann::json;
using escobar::ConfigError;

enum class Kind { number, integer, unsigned_integer, boolean, string, list };

struct Mirror {
  const char* flag;
  const char* path;
  Kind kind;
  const char* help;
};

// Flags that mirror config keys; a given flag overrides the file.
constexpr Mirror mirrors[] = {
    {"--seed", "seed", Kind::unsigned_integer, "random seed"},
    {"--deterministic", "deterministic", Kind::boolean, "serial bit-reproducible execution (true/false)"},
    {"--output-dir", "output_dir", Kind::string, "directory for reports"},
    {"--input-dir", "input_dir", Kind::string, "directory merged by `report`"},
    {"--n", "space.n", Kind::unsigned_integer, "dimension"},
    {"--m", "space.m", Kind::number, "dimensional parameter m"},
    {"--lateral-nodes", "space.lateral_nodes", Kind::unsigned_integer, "nodes per periodic axis"},
    {"--normal-nodes", "space.normal_nodes", Kind::unsigned_integer, "nodes along t"},
    {"--lateral-length", "space.lateral_length", Kind::number, "period of the lateral axes"},
    {"--normal-length", "space.normal_length", Kind::number, "extent along t"},
    {"--phi", "space.phi", Kind::string, "weight phi as an expression in x1.., t"},
    {"--sigma", "space.sigma", Kind::string, "conformal factor sigma as an expression"},
    {"--radius", "quadrature.radius", Kind::number, "half-space truncation radius"},
    {"--radial-cells", "quadrature.radial_cells", Kind::unsigned_integer, "half-space radial cells"},
    {"--polar-cells", "quadrature.polar_cells", Kind::unsigned_integer, "half-space polar cells"},
    {"--azimuth-nodes", "quadrature.azimuth_nodes", Kind::unsigned_integer, "half-space azimuth nodes (n = 3)"},
    {"--levels", "quadrature.levels", Kind::integer, "half-space refinement levels"},
    {"--lift-tau", "lift.tau", Kind::number, "tau of the lifted function"},
    {"--lift-levels", "lift.levels", Kind::integer, "lift-check refinement levels"},
    {"--step-rule", "minimizer.step_rule", Kind::string, "armijo or fixed"},
    {"--max-iterations", "minimizer.max_iterations", Kind::integer, "descent iterations per start"},
    {"--gradient-tolerance", "minimizer.gradient_tolerance", Kind::number, "stopping tolerance"},
    {"--restarts", "minimizer.restarts", Kind::integer, "number of starts"},
    {"--trace-stride", "minimizer.trace_stride", Kind::integer, "keep every k-th trace row"},
    {"--eigen-tolerance", "eigen.tolerance", Kind::number, "inverse-iteration tolerance"},
    {"--t", "blowup.t", Kind::list, "comma-separated blow-up parameters"},
    {"--floor", "blowup.floor", Kind::number, "energy floor of the lower-bound check"},
    {"--taus", "aubin.taus", Kind::list, "comma-separated bubble scales"},
    {"--eps", "aubin.eps", Kind::number, "cutoff radius"},
    {"--point", "aubin.point", Kind::list, "comma-separated boundary point"},
};

double to_number(const std::string& flag, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError(std::string(flag) + ": expected a number, got \"" + s + "\"");
  return v;
}

json convert(const Mirror& m, const std::string& s) {
  switch (m.kind) {
    case Kind::number: return to_number(m.flag, s);
    case Kind::integer:
    case Kind::unsigned_integer: {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size()) throw ConfigError(std::string(m.flag) + ": expected an integer, got \"" + s + "\"");
      if (m.kind == Kind::unsigned_integer) {
        if (v < 0) throw ConfigError(std::string(m.flag) + ": must be nonnegative");
        return static_cast<std::uint64_t>(v);
      }
      return static_cast<std::int64_t>(v);
    }
    case Kind::boolean:
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      throw ConfigError(std::string(m.flag) + ": expected true or false, got \"" + s + "\"");
    case Kind::string: return s;
    case Kind::list: {
      json arr = json::array();
      std::stringstream ss(s);
      for (std::string item; std::getline(ss, item, ',');) arr.push_back(to_number(m.flag, item));
      return arr;
    }
  }
  return nullptr;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted Escobar quotient toolkit: sharp trace constants, conformal laws, minimization and scans."};
  std::string command, config_path;
  std::vector<std::string> sets;
  app.add_option("command", command,
                 "constant | verify-trace | lift-check | minimize | eigen | blowup | aubin | report");
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("--set", sets, "override any key: --set space.m=0.5 (value parsed as JSON, else a string)");
  std::map<std::string, std::string> given;
  for (const auto& m : mirrors) app.add_option(m.flag, given[m.path], m.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << escobar::config_error_record(e.what()).dump() << "\n";
    return escobar::exit_code::config;
  }

  escobar::RunConfig cfg;
  try {
    json doc = config_path.empty() ? json::object() : escobar::parse_document(read_file(config_path));
    if (!doc.is_object()) throw ConfigError("config: the document must be an object");
    if (!command.empty()) doc["command"] = command;
    for (const auto& m : mirrors) {
      if (app.get_option(m.flag)->count() > 0) escobar::set_path(doc, m.path, convert(m, given[m.path]));
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set: expected key.path=value, got \"" + s + "\"");
      const std::string value = s.substr(eq + 1);
      json v = json::parse(value, nullptr, false);
      if (v.is_discarded()) v = value;
      escobar::set_path(doc, s.substr(0, eq), v);
    }
    cfg = escobar::config_from_json(doc);
  } catch (const escobar::Error& e) {
    std::cerr << escobar::config_error_record(e.what()).dump() << "\n";
    return escobar::exit_code::config;
  }
  return escobar::run(cfg, std::cout, std::cerr);
}
