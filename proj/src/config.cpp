#include "escobar/config.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "escobar/errors.hpp"
#include "escobar/expression.hpp"

namespace escobar {

using nlohmann::json;

namespace {

struct CommandName {
  const char* name;
  Command command;
};
constexpr CommandName command_names[] = {
    {"constant", Command::constant}, {"verify-trace", Command::verify_trace}, {"lift-check", Command::lift_check},
    {"minimize", Command::minimize}, {"eigen", Command::eigen},               {"blowup", Command::blowup},
    {"aubin", Command::aubin},       {"report", Command::report}};

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

// Reads the keys of one JSON object and rejects any key that was not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key_path(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) fail(key_path(key), "must be finite");
    }
  }
  template <class Int>
    requires std::is_integral_v<Int>
  void get(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key_path(key), "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (!v->is_number_unsigned() && v->get<std::int64_t>() < 0) {
          fail(key_path(key), "expected a nonnegative integer");
        }
        const auto u = v->get<std::uint64_t>();
        if (u > std::numeric_limits<Int>::max()) fail(key_path(key), "out of range");
        out = static_cast<Int>(u);
      } else {
        const auto s = v->get<std::int64_t>();
        if (s > std::numeric_limits<Int>::max() || s < std::numeric_limits<Int>::min()) {
          fail(key_path(key), "out of range");
        }
        out = static_cast<Int>(s);
      }
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key_path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key_path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key_path(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_number()) fail(key_path(key) + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(e.get<double>());
      }
    }
  }

  Section sub(const std::string& key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Section(v ? *v : empty, key_path(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) fail(key_path(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) fail(path, what);
}

std::vector<double> geometric(double first, double last, double ratio) {
  std::vector<double> out;
  for (double v = first; v <= last * (1.0 + 1e-12); v *= ratio) out.push_back(v);
  return out;
}

std::string describe_position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

void read_space(Section s, SpaceSpec& sp) {
  s.get("n", sp.n);
  s.get("m", sp.m);
  s.get("lateral_nodes", sp.lateral_nodes);
  s.get("normal_nodes", sp.normal_nodes);
  s.get("lateral_length", sp.lateral_length);
  s.get("normal_length", sp.normal_length);
  s.get("phi", sp.phi);
  s.get("sigma", sp.sigma);
  s.finish();
  require(sp.n >= 3 && sp.n <= 6, "space.n", "must lie in 3..6");
  require(sp.m >= 0.0, "space.m", "must be nonnegative");
  require(sp.lateral_nodes >= 3, "space.lateral_nodes", "must be at least 3");
  require(sp.normal_nodes >= 4, "space.normal_nodes", "must be at least 4");
  require(sp.lateral_length > 0.0, "space.lateral_length", "must be positive");
  require(sp.normal_length > 0.0, "space.normal_length", "must be positive");
  Expression phi;
  try {
    phi = Expression::parse(sp.phi, sp.n);
  } catch (const ConfigError& e) {
    fail("space.phi", e.what());
  }
  try {
    if (!sp.sigma.empty()) Expression::parse(sp.sigma, sp.n);
  } catch (const ConfigError& e) {
    fail("space.sigma", e.what());
  }
  if (sp.m == 0.0) {
    const std::vector<double> origin(sp.n, 0.0);
    require(phi.is_constant() && phi(origin) == 0.0, "space.phi", "must be 0 when space.m = 0");
  }
}

void read_quadrature(Section s, QuadratureSpec& q) {
  s.get("radius", q.quad.radius);
  s.get("radial_cells", q.quad.radial_cells);
  s.get("polar_cells", q.quad.polar_cells);
  s.get("azimuth_nodes", q.quad.azimuth_nodes);
  s.get("stretch", q.quad.stretch);
  s.get("tail_tolerance", q.quad.tail_tolerance);
  s.get("levels", q.levels);
  s.finish();
  require(q.levels >= 1 && q.levels <= 5, "quadrature.levels", "must lie in 1..5");
  try {
    q.quad.validate();
  } catch (const InvalidArgument& e) {
    fail("quadrature", e.what());
  }
}

void read_lift(Section s, LiftSpec& l) {
  s.get("radius", l.quad.radius);
  s.get("radial_cells", l.quad.radial_cells);
  s.get("polar_cells", l.quad.polar_cells);
  s.get("lift_cells", l.quad.lift_cells);
  s.get("stretch", l.quad.stretch);
  s.get("lift_scale", l.quad.lift_scale);
  s.get("tau", l.tau);
  s.get("levels", l.levels);
  s.finish();
  require(l.quad.radius > 0.0, "lift.radius", "must be positive");
  require(l.quad.radial_cells >= 8, "lift.radial_cells", "must be at least 8");
  require(l.quad.polar_cells >= 8, "lift.polar_cells", "must be at least 8");
  require(l.quad.lift_cells >= 8, "lift.lift_cells", "must be at least 8");
  require(l.quad.stretch > 0.0, "lift.stretch", "must be positive");
  require(l.quad.lift_scale > 0.0, "lift.lift_scale", "must be positive");
  require(l.tau > 0.0, "lift.tau", "must be positive");
  require(l.levels >= 1 && l.levels <= 4, "lift.levels", "must lie in 1..4");
}

void read_minimizer(Section s, MinimizerConfig& c) {
  std::string rule = c.step_rule == StepRule::armijo ? "armijo" : "fixed";
  s.get("step_rule", rule);
  s.get("fixed_step", c.fixed_step);
  s.get("armijo", c.armijo);
  s.get("max_iterations", c.max_iterations);
  s.get("gradient_tolerance", c.gradient_tolerance);
  s.get("normalize_each_step", c.normalize_each_step);
  s.get("clamp_nonnegative", c.clamp_nonnegative);
  s.get("restarts", c.restarts);
  s.get("divergence_bound", c.divergence_bound);
  s.get("trace_stride", c.trace_stride);
  s.finish();
  if (rule == "armijo") {
    c.step_rule = StepRule::armijo;
  } else if (rule == "fixed") {
    c.step_rule = StepRule::fixed;
  } else {
    fail("minimizer.step_rule", "expected \"armijo\" or \"fixed\", got \"" + rule + "\"");
  }
  require(c.fixed_step > 0.0, "minimizer.fixed_step", "must be positive");
  require(c.armijo > 0.0 && c.armijo < 1.0, "minimizer.armijo", "must lie in (0, 1)");
  require(c.max_iterations >= 1, "minimizer.max_iterations", "must be at least 1");
  require(c.gradient_tolerance > 0.0, "minimizer.gradient_tolerance", "must be positive");
  require(c.restarts >= 1, "minimizer.restarts", "must be at least 1");
  require(c.divergence_bound > 0.0, "minimizer.divergence_bound", "must be positive");
  require(c.trace_stride >= 1, "minimizer.trace_stride", "must be at least 1");
}

void read_eigen(Section s, EigenSpec& e) {
  s.get("tolerance", e.tolerance);
  s.get("max_iterations", e.max_iterations);
  s.finish();
  require(e.tolerance > 0.0, "eigen.tolerance", "must be positive");
  require(e.max_iterations >= 1, "eigen.max_iterations", "must be at least 1");
}

void read_blowup(Section s, BlowupSpec& b) {
  s.get("t", b.t);
  s.get("bound", b.bound);
  s.get("floor", b.floor);
  s.get("random_fields", b.random_fields);
  s.finish();
  if (b.t.empty()) b.t = geometric(1.0, 1e4, 1.5);
  require(b.t.size() >= 3, "blowup.t", "needs at least 3 values");
  for (std::size_t i = 0; i < b.t.size(); ++i) {
    require(b.t[i] > 0.0, "blowup.t[" + std::to_string(i) + "]", "must be positive");
    if (i > 0) require(b.t[i] > b.t[i - 1], "blowup.t[" + std::to_string(i) + "]", "must be increasing");
  }
  require(b.bound > 0.0, "blowup.bound", "must be positive");
  require(b.random_fields >= 0, "blowup.random_fields", "must be nonnegative");
}

void read_aubin(Section s, AubinSpec& a, const SpaceSpec& sp) {
  s.get("taus", a.taus);
  s.get("eps", a.eps);
  s.get("point", a.point);
  s.finish();
  if (a.taus.empty()) a.taus = {1e-2, 6e-3, 4e-3, 3e-3, 2e-3, 1.5e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6};
  if (a.point.empty()) a.point.assign(sp.n - 1, 0.5 * sp.lateral_length);
  require(a.eps > 0.0, "aubin.eps", "must be positive");
  require(a.point.size() == sp.n - 1, "aubin.point", "needs n-1 = " + std::to_string(sp.n - 1) + " coordinates");
  for (std::size_t i = 0; i < a.taus.size(); ++i) {
    require(a.taus[i] > 0.0, "aubin.taus[" + std::to_string(i) + "]", "must be positive");
  }
}

}  // namespace

std::string to_string(Command c) {
  for (const auto& cn : command_names) {
    if (cn.command == c) return cn.name;
  }
  return "unknown";
}

json parse_document(const std::string& text) {
  // Duplicate keys would otherwise be resolved silently (last wins).
  std::vector<std::set<std::string>> keys;
  const json::parser_callback_t cb = [&keys](int, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start: keys.emplace_back(); break;
      case json::parse_event_t::object_end: keys.pop_back(); break;
      case json::parse_event_t::key:
        if (!keys.back().insert(parsed.get<std::string>()).second) {
          throw ConfigError("duplicate key \"" + parsed.get<std::string>() + "\"");
        }
        break;
      default: break;
    }
    return true;
  };
  try {
    return json::parse(text, cb);
  } catch (const json::parse_error& e) {
    // Keep only the reason; the position is recomputed from the byte offset.
    std::string reason = e.what();
    const auto column = reason.find("column ");
    const auto colon = reason.find(": ", column == std::string::npos ? 0 : column);
    if (colon != std::string::npos) reason = reason.substr(colon + 2);
    throw ConfigError("parse error at " + describe_position(text, e.byte) + ": " + reason);
  }
}

RunConfig config_from_json(const json& doc) {
  RunConfig cfg;
  Section root(doc, "");
  std::string command;
  if (!root.find("command")) fail("command", "missing");
  root.get("command", command);
  bool known = false;
  for (const auto& cn : command_names) {
    if (command == cn.name) {
      cfg.command = cn.command;
      known = true;
    }
  }
  if (!known) fail("command", "unknown command \"" + command + "\"");
  root.get("seed", cfg.seed);
  root.get("deterministic", cfg.deterministic);
  root.get("output_dir", cfg.output_dir);
  root.get("input_dir", cfg.input_dir);
  require(!cfg.output_dir.empty(), "output_dir", "must not be empty");
  read_space(root.sub("space"), cfg.space);
  read_quadrature(root.sub("quadrature"), cfg.quadrature);
  read_lift(root.sub("lift"), cfg.lift);
  read_minimizer(root.sub("minimizer"), cfg.minimizer);
  read_eigen(root.sub("eigen"), cfg.eigen);
  read_blowup(root.sub("blowup"), cfg.blowup);
  read_aubin(root.sub("aubin"), cfg.aubin, cfg.space);
  root.finish();
  cfg.minimizer.seed = cfg.seed;
  if (cfg.input_dir.empty()) cfg.input_dir = cfg.output_dir;

  // Command-specific constraints, checked before any numerics.
  const double m = cfg.space.m;
  switch (cfg.command) {
    case Command::lift_check:
      require(m == 1.0 || m == 2.0, "space.m", "lift-check supports m = 1 and m = 2");
      break;
    case Command::aubin: {
      require(m > 0.0, "space.m", "aubin requires m > 0");
      require(cfg.space.sigma.empty(), "space.sigma", "aubin runs on the flat base");
      const double c = bubble_c(m, cfg.space.n);
      for (std::size_t i = 0; i < cfg.aubin.taus.size(); ++i) {
        require(std::sqrt(cfg.aubin.taus[i]) <= std::sqrt(c) * 2.0 * cfg.aubin.eps,
                "aubin.taus[" + std::to_string(i) + "]", "violates sqrt(tau) <= sqrt(c) 2 eps");
      }
      break;
    }
    case Command::eigen:
    case Command::blowup:
      require(cfg.space.sigma.empty(), "space.sigma", "the eigenvalue is computed on the flat base");
      break;
    default: break;
  }
  return cfg;
}

RunConfig parse_config(const std::string& text) { return config_from_json(parse_document(text)); }

json to_json(const RunConfig& cfg) {
  const auto& sp = cfg.space;
  const auto& q = cfg.quadrature.quad;
  const auto& l = cfg.lift;
  const auto& mc = cfg.minimizer;
  return json{
      {"command", to_string(cfg.command)},
      {"seed", cfg.seed},
      {"deterministic", cfg.deterministic},
      {"output_dir", cfg.output_dir},
      {"input_dir", cfg.input_dir},
      {"space",
       {{"n", sp.n},
        {"m", sp.m},
        {"lateral_nodes", sp.lateral_nodes},
        {"normal_nodes", sp.normal_nodes},
        {"lateral_length", sp.lateral_length},
        {"normal_length", sp.normal_length},
        {"phi", sp.phi},
        {"sigma", sp.sigma}}},
      {"quadrature",
       {{"radius", q.radius},
        {"radial_cells", q.radial_cells},
        {"polar_cells", q.polar_cells},
        {"azimuth_nodes", q.azimuth_nodes},
        {"stretch", q.stretch},
        {"tail_tolerance", q.tail_tolerance},
        {"levels", cfg.quadrature.levels}}},
      {"lift",
       {{"radius", l.quad.radius},
        {"radial_cells", l.quad.radial_cells},
        {"polar_cells", l.quad.polar_cells},
        {"lift_cells", l.quad.lift_cells},
        {"stretch", l.quad.stretch},
        {"lift_scale", l.quad.lift_scale},
        {"tau", l.tau},
        {"levels", l.levels}}},
      {"minimizer",
       {{"step_rule", mc.step_rule == StepRule::armijo ? "armijo" : "fixed"},
        {"fixed_step", mc.fixed_step},
        {"armijo", mc.armijo},
        {"max_iterations", mc.max_iterations},
        {"gradient_tolerance", mc.gradient_tolerance},
        {"normalize_each_step", mc.normalize_each_step},
        {"clamp_nonnegative", mc.clamp_nonnegative},
        {"restarts", mc.restarts},
        {"divergence_bound", mc.divergence_bound},
        {"trace_stride", mc.trace_stride}}},
      {"eigen", {{"tolerance", cfg.eigen.tolerance}, {"max_iterations", cfg.eigen.max_iterations}}},
      {"blowup",
       {{"t", cfg.blowup.t},
        {"bound", cfg.blowup.bound},
        {"floor", cfg.blowup.floor},
        {"random_fields", cfg.blowup.random_fields}}},
      {"aubin", {{"taus", cfg.aubin.taus}, {"eps", cfg.aubin.eps}, {"point", cfg.aubin.point}}},
  };
}

void set_path(json& doc, const std::string& path, json value) {
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object()) throw ConfigError(path + ": parent is not an object");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string config_hash(const RunConfig& cfg) {
  // Output locations do not affect any computed number.
  json doc = to_json(cfg);
  doc.erase("output_dir");
  doc.erase("input_dir");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace escobar
