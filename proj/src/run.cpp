#include "escobar/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include <omp.h>

#include "escobar/errors.hpp"
#include "escobar/expression.hpp"
#include "escobar/kernels.hpp"

#ifndef ESCOBAR_VERSION
#define ESCOBAR_VERSION "unknown"
#endif

namespace escobar {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* exact = "exact closed form";

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

HalfspaceQuad refined(HalfspaceQuad q, int level) {
  q.radial_cells <<= level;
  q.polar_cells <<= level;
  return q;
}

LiftQuad refined(LiftQuad q, int level) {
  q.radial_cells <<= level;
  q.polar_cells <<= level;
  q.lift_cells <<= level;
  return q;
}

double order(double coarse, double fine) { return std::log2(coarse / fine); }

PointFunction point_function(const std::string& text, std::size_t n) {
  if (text.empty()) return {};
  return [e = Expression::parse(text, n)](std::span<const double> z) { return e(z); };
}

std::shared_ptr<const Grid> make_grid(const SpaceSpec& sp) {
  return std::make_shared<const Grid>(
      Grid::half_torus(sp.n, sp.lateral_nodes, sp.normal_nodes, sp.lateral_length, sp.normal_length));
}

MeasureSpace make_space(const SpaceSpec& sp, bool with_sigma) {
  const auto grid = make_grid(sp);
  return build_space(*grid, point_function(sp.phi, sp.n), sp.m,
                     with_sigma ? point_function(sp.sigma, sp.n) : PointFunction{});
}

json summary(double m, std::size_t n) {
  return json{{"m", m}, {"n", n}, {"lambda_mn", nullptr}, {"lambda_M", nullptr}, {"rho1", nullptr}};
}

struct Outcome {
  json body = json::object();
  int code = exit_code::ok;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

// ---------------------------------------------------------------------------

Outcome cmd_constant(const RunConfig& cfg, std::ostream& out) {
  const double m = cfg.space.m;
  const std::size_t n = cfg.space.n;
  Outcome o;
  std::vector<ConstantRow> rows;
  json levels = json::array();
  for (int level = 0; level < cfg.quadrature.levels; ++level) {
    const HalfspaceQuad q = refined(cfg.quadrature.quad, level);
    rows.push_back(constant_row(m, n, q));
    json row = rows.back();
    row["radial_cells"] = q.radial_cells;
    row["polar_cells"] = q.polar_cells;
    levels.push_back(row);
  }
  bool monotone = true;
  for (std::size_t k = 1; k < rows.size(); ++k) monotone = monotone && rows[k].rel_error < rows[k - 1].rel_error;
  const auto& last = rows.back();
  out << std::setprecision(10) << "Lambda_{" << m << "," << n << "} = " << last.lambda << " (exact closed form)\n"
      << "quadrature estimate = " << last.estimate << " +- " << std::setprecision(3) << last.error_budget
      << ", relative gap = " << last.rel_error << "\n";
  o.body = {{"lambda_mn", last.lambda},
            {"levels", levels},
            {"gap_shrinks_monotonically", monotone},
            {"error_budgets", {{"lambda_mn", exact}, {"estimate", last.error_budget}}}};
  o.body["summary"] = summary(m, n);
  o.body["summary"]["lambda_mn"] = last.lambda;
  std::ostringstream csv;
  write_constants_csv(csv, rows);
  o.files.emplace_back("constant.csv", csv.str());
  return o;
}

Outcome cmd_verify_trace(const RunConfig& cfg, std::ostream& out) {
  const double m = cfg.space.m;
  const std::size_t n = cfg.space.n;
  const HalfspaceQuad& q = cfg.quadrature.quad;
  const Bubble bubble(BubbleParams{m, n, BubbleFamily::epsilon, 1.0, {}});
  const double amplitude = 0.1;
  Outcome o;

  json perturbations = json::array();
  bool separated = true;
  auto compare = [&](const std::string& name, const HalfspaceResult& base, const HalfspaceResult& pert) {
    const double gap = pert.Q - base.Q;
    const double budget = pert.error + base.error;
    const bool ok = gap > 3.0 * budget;
    separated = separated && ok;
    perturbations.push_back({{"perturbation", name},
                             {"Q", pert.Q},
                             {"Q_error", pert.error},
                             {"gap", gap},
                             {"gap_error", budget},
                             {"ratio", gap / budget},
                             {"above_three_budgets", ok}});
    out << std::setprecision(4) << "  w*(1+" << amplitude << "*" << name << "): gap " << gap << " vs budget " << budget
        << (ok ? " (separated)\n" : " (NOT separated)\n");
  };

  const auto radial = [&](double r, double t) { return bubble.radial(r, t); };
  const HalfspaceResult base = halfspace_quotient(sample_radial(q, n, radial), m);
  out << std::setprecision(10) << "bubble quotient " << base.Q << " +- " << std::setprecision(3) << base.error
      << ", Lambda_{m,n} = " << std::setprecision(10) << lambda_mn(m, n) << "\n";
  const std::vector<std::pair<std::string, std::function<double(double, double)>>> radial_perts = {
      {"t/sqrt(1+|z|^2)", [](double r, double t) { return t / std::sqrt(1.0 + r * r + t * t); }},
      {"exp(-|z|^2)", [](double r, double t) { return std::exp(-(r * r + t * t)); }}};
  for (const auto& [name, g] : radial_perts) {
    compare(name, base, halfspace_quotient(sample_radial(q, n, [&](double r, double t) {
                                             return radial(r, t) * (1.0 + amplitude * g(r, t));
                                           }), m));
  }
  json spherical_base = nullptr;
  if (n == 3) {
    const auto field = [&](double x, double y, double t) { return bubble.radial(std::hypot(x, y), t); };
    const HalfspaceResult sbase = halfspace_quotient(sample_spherical(q, field), m);
    spherical_base = sbase;
    const std::vector<std::pair<std::string, std::function<double(double, double, double)>>> perts = {
        {"x1/sqrt(1+|z|^2)", [](double x, double y, double t) { return x / std::sqrt(1.0 + x * x + y * y + t * t); }},
        {"x1*x2/(1+|z|^2)", [](double x, double y, double t) { return x * y / (1.0 + x * x + y * y + t * t); }},
        {"sin(x1)", [](double x, double, double) { return std::sin(x); }}};
    for (const auto& [name, g] : perts) {
      compare(name, sbase, halfspace_quotient(sample_spherical(q, [&](double x, double y, double t) {
                                                return field(x, y, t) * (1.0 + amplitude * g(x, y, t));
                                              }), m));
    }
  }

  o.body = {{"lambda_mn", lambda_mn(m, n)},
            {"bubble", base},
            {"bubble_spherical", spherical_base},
            {"perturbation_amplitude", amplitude},
            {"perturbations", perturbations},
            {"extremality_separated", separated}};
  json budgets = {{"lambda_mn", exact}, {"bubble_Q", base.error}};
  if (m > 0.0) {
    const BubbleElResidual el = bubble_el_residual(BubbleParams{m, n, BubbleFamily::tau, 1.0, {}}, q);
    const double V = bubble_boundary_volume(m, n);
    const double Vq = bubble_boundary_volume_quadrature(m, n, q);
    out << std::setprecision(3) << "tau-bubble EL residuals: interior " << el.interior << ", boundary " << el.boundary
        << "\nboundary volume " << std::setprecision(10) << V << " (closed form) vs " << Vq << " (quadrature)\n";
    o.body["tau_bubble_el_residual"] = {{"interior", el.interior}, {"boundary", el.boundary}};
    o.body["boundary_volume"] = V;
    o.body["boundary_volume_quadrature"] = Vq;
    budgets["tau_bubble_el_residual"] = "finite-difference residual of an exact identity";
    budgets["boundary_volume"] = exact;
    budgets["boundary_volume_quadrature"] = std::abs(Vq - V);
  }
  o.body["error_budgets"] = budgets;
  o.body["summary"] = summary(m, n);
  o.body["summary"]["lambda_mn"] = lambda_mn(m, n);
  return o;
}

Outcome cmd_lift_check(const RunConfig& cfg, std::ostream& out) {
  const double m = cfg.space.m;
  const std::size_t n = cfg.space.n;
  const Bubble bubble(BubbleParams{m, n, BubbleFamily::epsilon, 1.0, {}});
  const auto w = [&](double r, double t) { return bubble.radial(r, t); };
  Outcome o;
  json levels = json::array();
  std::vector<LiftResidual> res;
  for (int level = 0; level < cfg.lift.levels; ++level) {
    const LiftQuad q = refined(cfg.lift.quad, level);
    res.push_back(lift_check(w, m, n, cfg.lift.tau, q));
    json row = res.back();
    row["radial_cells"] = q.radial_cells;
    row["polar_cells"] = q.polar_cells;
    row["lift_cells"] = q.lift_cells;
    if (level > 0) {
      row["boundary_order"] = order(res[level - 1].boundary, res[level].boundary);
      row["gradient_order"] = order(res[level - 1].gradient, res[level].gradient);
    }
    out << std::setprecision(3) << "level " << level << ": boundary residual " << res.back().boundary
        << ", gradient residual " << res.back().gradient << "\n";
    levels.push_back(row);
  }
  o.body = {{"tau", cfg.lift.tau},
            {"levels", levels},
            {"error_budgets",
             {{"boundary_residual", "the residual is the quadrature error of an exact identity"},
              {"gradient_residual", "the residual is the quadrature error of an exact identity"}}}};
  o.body["summary"] = summary(m, n);
  return o;
}

json rho1_or_null(const MeasureSpace& space, const EigenSpec& spec, std::ostream& out) {
  try {
    return dirichlet_rho1(space, spec.tolerance, spec.max_iterations).rho1;
  } catch (const Error& e) {
    out << "rho_1 unavailable: " << e.what() << "\n";
    return nullptr;
  }
}

Outcome cmd_minimize(const RunConfig& cfg, std::ostream& out) {
  const MeasureSpace space = make_space(cfg.space, true);
  Outcome o;
  const MinimizerResult r = minimize_quotient(space, cfg.minimizer);
  out << std::setprecision(10) << "Lambda[M] estimate " << r.lambda << " (" << to_string(r.status) << ", start "
      << r.start << ")\nQ(constant) " << r.constant_Q << std::setprecision(3) << "\ngradient norm " << r.grad_norm
      << ", EL residuals interior " << r.el.interior << " boundary " << r.el.boundary << "\n";
  o.body = r;
  json rho1 = nullptr;
  if (space.conformally_flat_base()) rho1 = rho1_or_null(space, cfg.eigen, out);
  o.body["rho1"] = rho1;
  o.body["error_budgets"] = {{"lambda", {{"optimization", r.grad_norm},
                                         {"el_residual", std::max(r.el.interior, r.el.boundary)},
                                         {"discretization", "O(h^2); compare two resolutions"}}},
                             {"constant_Q", "quadrature of the discrete space, exact on the grid"},
                             {"rho1", cfg.eigen.tolerance}};
  o.body["summary"] = summary(cfg.space.m, cfg.space.n);
  o.body["summary"]["lambda_M"] = r.lambda;
  o.body["summary"]["rho1"] = rho1;
  std::ostringstream trace, field;
  write_trace_csv(trace, r.trace);
  write_fields_csv(field, space.grid(), {"w"}, {std::span<const double>(r.w)});
  o.files.emplace_back("minimize_trace.csv", trace.str());
  o.files.emplace_back("minimize_field.csv", field.str());
  if (r.status == Status::max_iterations) o.code = exit_code::non_convergence;
  return o;
}

Outcome cmd_eigen(const RunConfig& cfg, std::ostream& out) {
  const MeasureSpace space = make_space(cfg.space, false);
  Outcome o;
  const EigenResult e = dirichlet_rho1(space, cfg.eigen.tolerance, cfg.eigen.max_iterations);
  const double band = rho1_band(space.grid());
  const std::string sign = e.rho1 >= band ? "positive" : (e.rho1 <= -band ? "nonpositive" : "indeterminate");
  out << std::setprecision(10) << "rho_1 = " << e.rho1 << std::setprecision(3) << " (residual " << e.residual
      << ", indeterminate band " << band << ", sign " << sign << ")\n";
  o.body = e;
  o.body["band"] = band;
  o.body["sign"] = sign;
  o.body["error_budgets"] = {{"rho1", e.residual}, {"band", "5 h_max^2 by definition"}};
  o.body["summary"] = summary(cfg.space.m, cfg.space.n);
  o.body["summary"]["rho1"] = e.rho1;
  std::ostringstream field;
  write_fields_csv(field, space.grid(), {"phi1"}, {std::span<const double>(e.field)});
  o.files.emplace_back("eigen_field.csv", field.str());
  return o;
}

Outcome cmd_blowup(const RunConfig& cfg, std::ostream& out) {
  const MeasureSpace space = make_space(cfg.space, false);
  Outcome o;
  const EigenResult e = dirichlet_rho1(space, cfg.eigen.tolerance, cfg.eigen.max_iterations);
  const double band = rho1_band(space.grid());
  const BlowupScan values = blowup_values(space, e, cfg.blowup.t);
  o.body = {{"rho1", e.rho1}, {"band", band}, {"values", values}};
  o.body["error_budgets"] = {{"rho1", e.residual}, {"Q", "quadrature of the discrete space, exact on the grid"}};
  o.body["summary"] = summary(cfg.space.m, cfg.space.n);
  o.body["summary"]["rho1"] = e.rho1;
  std::ostringstream csv;
  csv.precision(17);
  csv << "t,Q,energy\n";
  for (std::size_t i = 0; i < values.t.size(); ++i) csv << values.t[i] << ',' << values.Q[i] << ',' << values.energy[i] << '\n';
  o.files.emplace_back("blowup.csv", csv.str());

  out << std::setprecision(6) << "rho_1 = " << e.rho1 << " (band " << band << ")\n";
  if (e.rho1 <= -band) {
    const BlowupScan scan = blowup_scan(space, e, cfg.blowup.t, cfg.blowup.bound);
    o.body["verdict"] = scan.certified_unbounded ? "unbounded below" : "not certified";
    o.body["scan"] = scan;
    out << "blow-up family: " << o.body["verdict"].get<std::string>() << ", last Q " << scan.Q.back() << "\n";
    if (!scan.certified_unbounded) o.code = exit_code::non_convergence;
  } else if (e.rho1 >= band) {
    const auto fields = lower_bound_fields(space, e, cfg.blowup.t, cfg.blowup.random_fields, cfg.seed);
    const LowerBoundCheck lb = lower_bound_check(space, fields, cfg.blowup.floor);
    o.body["verdict"] = lb.holds ? "bounded below" : "floor violated";
    o.body["lower_bound"] = lb;
    out << "lower bound: " << o.body["verdict"].get<std::string>() << ", min energy " << lb.min_energy << "\n";
    if (!lb.holds) o.code = exit_code::non_convergence;
  } else {
    throw NumericRefusal("rho_1 = " + std::to_string(e.rho1) + " lies in the indeterminate band |rho_1| < " +
                         std::to_string(band) + "; refine the grid");
  }
  return o;
}

Outcome cmd_aubin(const RunConfig& cfg, std::ostream& out) {
  const MeasureSpace space = make_space(cfg.space, false);
  Outcome o;
  const AubinScan scan = aubin_scan(space, cfg.aubin.point, cfg.aubin.taus, cfg.aubin.eps);
  out << std::setprecision(6) << "min Q / Lambda_{m,n} - 1 = " << scan.delta << ", annulus slope " << scan.slope
      << " (expected " << scan.expected_slope << ", " << scan.slope_points << " points)\n";
  o.body = scan;
  o.body["error_budgets"] = {{"lambda_mn", exact},
                             {"Q", "O(h^2) discretization; compare two resolutions"},
                             {"slope", "least-squares fit; see slope_points"}};
  o.body["summary"] = summary(cfg.space.m, cfg.space.n);
  o.body["summary"]["lambda_mn"] = scan.lambda_mn;
  std::ostringstream csv;
  csv.precision(17);
  csv << "tau,Q,W,tau_tilde,V_tau,V_minus_V_tau,annulus_gradient,excess\n";
  for (const auto& r : scan.rows) {
    csv << r.tau << ',' << r.Q << ',' << r.W << ',' << r.tau_tilde << ',' << r.V_tau << ',' << r.V_minus_V_tau << ','
        << r.annulus_gradient << ',' << r.excess << '\n';
  }
  o.files.emplace_back("aubin.csv", csv.str());
  return o;
}

Outcome cmd_report(const RunConfig& cfg, std::ostream& out) {
  Outcome o;
  const fs::path dir(cfg.input_dir);
  if (!fs::is_directory(dir)) throw ConfigError("input_dir: " + cfg.input_dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    if (name == "report.json" || name.ends_with(".error.json")) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  json rows = json::array();
  std::ostringstream csv;
  csv << "source,command,m,n,lambda_mn,lambda_M,rho1\n";
  const auto cell = [](const json& v) { return v.is_number() ? csv_number(v.get<double>()) : std::string(); };
  for (const auto& path : files) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    json doc;
    try {
      doc = parse_document(ss.str());
    } catch (const ConfigError& e) {
      out << "skipping " << path.filename().string() << ": " << e.what() << "\n";
      continue;
    }
    if (!doc.is_object() || !doc.contains("summary")) continue;
    json s = doc["summary"];
    if (s["lambda_mn"].is_null() && s["n"].is_number_unsigned()) {
      s["lambda_mn"] = lambda_mn(s["m"].get<double>(), s["n"].get<std::size_t>());
    }
    s["source"] = path.filename().string();
    s["command"] = doc.value("command", "");
    csv << s["source"].get<std::string>() << ',' << s["command"].get<std::string>() << ',' << cell(s["m"]) << ','
        << s["n"].get<std::size_t>() << ',' << cell(s["lambda_mn"]) << ',' << cell(s["lambda_M"]) << ','
        << cell(s["rho1"]) << '\n';
    rows.push_back(s);
  }
  out << "merged " << rows.size() << " reports from " << dir.string() << "\n";
  o.body = {{"rows", rows},
            {"error_budgets", {{"rows", "carried by the source reports"}, {"lambda_mn", exact}}}};
  o.files.emplace_back("report.csv", csv.str());
  return o;
}

Outcome dispatch(const RunConfig& cfg, std::ostream& out) {
  switch (cfg.command) {
    case Command::constant: return cmd_constant(cfg, out);
    case Command::verify_trace: return cmd_verify_trace(cfg, out);
    case Command::lift_check: return cmd_lift_check(cfg, out);
    case Command::minimize: return cmd_minimize(cfg, out);
    case Command::eigen: return cmd_eigen(cfg, out);
    case Command::blowup: return cmd_blowup(cfg, out);
    case Command::aubin: return cmd_aubin(cfg, out);
    case Command::report: return cmd_report(cfg, out);
  }
  throw ConfigError("command: unhandled");
}

json header(const RunConfig& cfg) {
  return json{{"command", to_string(cfg.command)},
              {"seed", cfg.seed},
              {"config_hash", config_hash(cfg)},
              {"config", to_json(cfg)},
              {"versions", versions()},
              {"execution", cfg.deterministic ? "serial" : "parallel"}};
}

json error_record(const std::string& kind, const std::string& message, int code) {
  return json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
}

}  // namespace

json versions() {
  return json{{"escobar", ESCOBAR_VERSION},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
              {"compiler", __VERSION__},
              {"openmp", _OPENMP}};
}

json config_error_record(const std::string& message) { return error_record("config", message, exit_code::config); }

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const ScopedExecution mode(cfg.deterministic ? Execution::serial : Execution::parallel);
  const std::string name = to_string(cfg.command);
  const fs::path dir(cfg.output_dir);
  const auto start = std::chrono::steady_clock::now();

  std::string kind, message;
  int code = exit_code::ok;
  try {
    fs::create_directories(dir);
    Outcome o = dispatch(cfg, out);
    json report = header(cfg);
    report["status"] = o.code == exit_code::ok ? "ok" : "non-convergence";
    report["exit_code"] = o.code;
    report["result"] = std::move(o.body);
    // Lift the summary so that `report` finds it at the top level.
    if (report["result"].contains("summary")) {
      report["summary"] = report["result"]["summary"];
      report["result"].erase("summary");
    }
    write_json(dir / (name + ".json"), report);
    for (const auto& [file, contents] : o.files) write_file(dir / file, contents);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << "wrote " << (dir / (name + ".json")).string() << std::setprecision(3) << " (" << seconds << " s)\n";
    return o.code;
  } catch (const ConfigError& e) {
    kind = "config", message = e.what(), code = exit_code::config;
  } catch (const InvalidArgument& e) {
    kind = "invalid-argument", message = e.what(), code = exit_code::config;
  } catch (const UndefinedQuotient& e) {
    kind = "undefined-quotient", message = e.what(), code = exit_code::refusal;
  } catch (const NumericRefusal& e) {
    kind = "numeric-refusal", message = e.what(), code = exit_code::refusal;
  } catch (const NonConvergence& e) {
    kind = "non-convergence", message = e.what(), code = exit_code::non_convergence;
  } catch (const std::exception& e) {
    kind = "internal", message = e.what(), code = 1;
  }
  json record = header(cfg);
  record.update(error_record(kind, message, code));
  err << record["error"].dump() << "\n";
  try {
    write_json(dir / (name + ".error.json"), record);
  } catch (const std::exception&) {
    // The record already went to `err`.
  }
  return code;
}

}  // namespace escobar
