#include "escobar/minimizer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include <omp.h>

#include "escobar/errors.hpp"
#include "escobar/kernels.hpp"
#include "escobar/sharp_constants.hpp"

namespace escobar {

namespace {

constexpr double pi = std::numbers::pi;

// Relative size of objective differences treated as round-off in the line search.
constexpr double value_noise = 1e-12;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// d/dw_i sum_j weights_j |(e^{sigma/2} w)_j|^p.
ScalarField power_gradient(const MeasureSpace& space, std::span<const double> w, std::span<const double> weights) {
  const ScalarField wb = space.to_base(w);
  const double p = space.critical_exponent();
  const auto& sigma = space.sigma();
  ScalarField out(wb.size());
  for (std::size_t i = 0; i < wb.size(); ++i) {
    double d = weights[i] == 0.0 ? 0.0 : p * weights[i] * std::pow(std::abs(wb[i]), p - 1.0) * sign(wb[i]);
    if (!sigma.empty()) d *= std::exp(0.5 * sigma[i]);
    out[i] = d;
  }
  return out;
}

// Diagonal preconditioner of the descent direction and scale of the nodal residuals:
// interior measure off the boundary, boundary measure on it.
ScalarField residual_mass(const MeasureSpace& space) {
  const Grid& g = space.grid();
  const auto interior = space.measure_weights();
  const auto boundary = space.boundary_norm_weights();
  const auto& sigma = space.sigma();
  ScalarField mass(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    mass[i] = g.on_boundary(i) ? boundary[i] : interior[i];
    if (!sigma.empty()) mass[i] *= std::exp(0.5 * sigma[i]);
  }
  return mass;
}

ElResidual sup_residuals(const Grid& grid, std::span<const double> w, std::span<const double> r,
                         std::span<const double> mass) {
  ElResidual out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(w[i] > 0.0)) continue;
    const double v = std::abs(r[i]) / mass[i];
    if (grid.on_boundary(i)) {
      out.boundary = std::max(out.boundary, v);
    } else {
      out.interior = std::max(out.interior, v);
    }
  }
  return out;
}

// Uniform double in [0, 1) from the top 53 bits; portable across standard libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Value and gradient of an objective that is invariant under positive scaling of w.
// `scale` converts the mass-normalized gradient into the residual reported to the user.
using Objective = std::function<double(std::span<const double> w, std::span<double> grad, double& scale)>;

struct Run {
  ScalarField w;
  double value = 0.0;
  double grad_norm = 0.0;
  std::vector<TraceRow> trace;
  Status status = Status::max_iterations;
};

ScalarField project(const MeasureSpace& space, std::span<const double> w, const MinimizerConfig& cfg) {
  ScalarField out(w.begin(), w.end());
  if (cfg.clamp_nonnegative) {
    for (double& v : out) v = std::max(v, 0.0);
  }
  return cfg.normalize_each_step ? boundary_normalize(space, out) : out;
}

double projected_norm(std::span<const double> w, std::span<const double> d, double scale, bool clamp) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (clamp && w[i] <= 0.0 && d[i] > 0.0) continue;  // blocked by the constraint
    s = std::max(s, std::abs(d[i]));
  }
  return s * scale;
}

Run descend(const MeasureSpace& space, const Objective& f, std::span<const double> start, const MinimizerConfig& cfg,
            std::span<const double> mass) {
  const std::size_t N = space.grid().size();
  Run run;
  run.w = project(space, start, cfg);
  ScalarField G(N), d(N), prev_w, prev_d, trial_G(N);
  double scale = 1.0;
  run.value = f(run.w, G, scale);
  double last_step = 0.0;

  for (int it = 0;; ++it) {
    for (std::size_t i = 0; i < N; ++i) {
      d[i] = G[i] / mass[i];
      if (cfg.clamp_nonnegative && run.w[i] <= 0.0 && d[i] > 0.0) d[i] = 0.0;
    }
    run.grad_norm = projected_norm(run.w, d, scale, false);
    const bool converged = run.grad_norm <= cfg.gradient_tolerance;
    const bool diverged = run.value < -cfg.divergence_bound;
    const bool last = converged || diverged || it >= cfg.max_iterations;
    if (last || it % cfg.trace_stride == 0) run.trace.push_back({it, run.value, run.grad_norm, last_step});
    if (converged) {
      run.status = Status::converged;
      return run;
    }
    if (diverged) {
      run.status = Status::unbounded_suspected;
      return run;
    }
    if (last) return run;

    double dmax = 0.0, wmax = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      dmax = std::max(dmax, std::abs(d[i]));
      wmax = std::max(wmax, std::abs(run.w[i]));
    }
    double step = cfg.fixed_step;
    if (cfg.step_rule == StepRule::armijo) {
      step = 0.1 * wmax / dmax;
      if (!prev_w.empty()) {
        double ss = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
          const double s = run.w[i] - prev_w[i];
          ss += s * s;
          sy += s * (d[i] - prev_d[i]);
        }
        if (sy > 0.0 && std::isfinite(ss / sy)) step = ss / sy;
      }
    }

    ScalarField trial(N);
    double trial_value = 0.0, trial_scale = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      for (std::size_t i = 0; i < N; ++i) trial[i] = run.w[i] - step * d[i];
      try {
        trial = project(space, trial, cfg);
        trial_value = f(trial, trial_G, trial_scale);
      } catch (const UndefinedQuotient&) {
        step *= 0.5;
        continue;
      }
      if (cfg.step_rule == StepRule::fixed) {
        accepted = true;
        break;
      }
      double decrease = 0.0, slope = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        decrease += G[i] * (trial[i] - run.w[i]);
        slope += trial_G[i] * (trial[i] - run.w[i]);
      }
      if (decrease < 0.0 && trial_value <= run.value + cfg.armijo * decrease) {
        accepted = true;
        break;
      }
      // Once value differences reach round-off, fall back to the approximate Wolfe
      // test on directional derivatives, which still certifies descent of the quadratic model.
      if (decrease < 0.0 && trial_value <= run.value + value_noise * std::abs(run.value) &&
          slope <= -0.8 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      run.trace.push_back({it + 1, run.value, run.grad_norm, 0.0});
      return run;  // line search stalled; status stays max_iterations
    }
    prev_w = run.w;
    prev_d = d;
    run.w = std::move(trial);
    run.value = trial_value;
    G.swap(trial_G);
    scale = trial_scale;
    last_step = step;
  }
}

struct Start {
  std::string name;
  ScalarField field;
};

std::vector<Start> initial_fields(const MeasureSpace& space, const MinimizerConfig& cfg) {
  const Grid& g = space.grid();
  std::vector<Start> starts;
  starts.push_back({"constant", ScalarField(g.size(), 1.0)});
  if (cfg.restarts >= 2 && space.conformally_flat_base()) {
    try {
      const auto eig = dirichlet_rho1(space);
      const double peak = *std::max_element(eig.field.begin(), eig.field.end());
      ScalarField f(g.size());
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = eig.field[i] / peak + 1.0;
      starts.push_back({"eigenfield+1", std::move(f)});
    } catch (const Error&) {
      // No eigenfield start when the eigen solve breaks down; random starts fill the slot.
    }
  }
  for (std::uint64_t k = 0; static_cast<int>(starts.size()) < cfg.restarts; ++k) {
    starts.push_back({"random:" + std::to_string(cfg.seed + k), smooth_random_field(g, cfg.seed + k)});
  }
  return starts;
}

void validate(const MinimizerConfig& cfg) {
  if (cfg.max_iterations < 1) throw InvalidArgument("max_iterations must be at least 1");
  if (!(cfg.gradient_tolerance > 0.0)) throw InvalidArgument("gradient tolerance must be positive");
  if (!(cfg.armijo > 0.0 && cfg.armijo < 1.0)) throw InvalidArgument("Armijo constant must lie in (0, 1)");
  if (!(cfg.fixed_step > 0.0)) throw InvalidArgument("fixed step must be positive");
  if (cfg.restarts < 1) throw InvalidArgument("restarts must be at least 1");
  if (!(cfg.divergence_bound > 0.0)) throw InvalidArgument("divergence bound must be positive");
  if (cfg.trace_stride < 1) throw InvalidArgument("trace stride must be at least 1");
}

// Runs every start (concurrently in parallel mode) and returns them in start order.
std::vector<Run> run_all(const MeasureSpace& space, const Objective& f, const std::vector<Start>& starts,
                         const MinimizerConfig& cfg, std::span<const double> mass) {
  std::vector<Run> runs(starts.size());
  std::vector<std::exception_ptr> errors(starts.size());
  const auto count = static_cast<std::ptrdiff_t>(starts.size());
#pragma omp parallel for schedule(dynamic) if (execution() == Execution::parallel)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    try {
      runs[static_cast<std::size_t>(k)] = descend(space, f, starts[static_cast<std::size_t>(k)].field, cfg, mass);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return runs;
}

// Best run: a suspected divergence wins, then converged runs by value, then any run by value.
std::size_t pick_best(const std::vector<Run>& runs) {
  std::size_t best = 0;
  auto rank = [](const Run& r) { return r.status == Status::unbounded_suspected ? 0 : (r.status == Status::converged ? 1 : 2); };
  for (std::size_t k = 1; k < runs.size(); ++k) {
    const int a = rank(runs[k]), b = rank(runs[best]);
    if (a < b || (a == b && runs[k].value < runs[best].value)) best = k;
  }
  return best;
}

// CG on (A - shift M) restricted to nodes off the boundary, Jacobi preconditioned.
struct ShiftedSystem {
  const EnergyOperator& op;
  const Grid& grid;
  std::span<const double> mass;
  double shift;
  std::vector<double> diag;

  void apply(std::span<const double> x, std::span<double> y) const {
    kernels::energy_gradient(op, x, y);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = grid.on_boundary(i) ? 0.0 : 0.5 * y[i] - shift * mass[i] * x[i];
    }
  }
};

std::vector<double> operator_diagonal(const EnergyOperator& op) {
  std::vector<double> diag(op.size, 0.0);
  for (std::size_t i = 0; i < op.size; ++i) {
    diag[i] += op.curvature[i] + op.boundary[i];
    for (std::size_t a = 0; a < op.dim; ++a) {
      const std::size_t j = op.forward[i * op.dim + a];
      if (j == Grid::npos) continue;
      diag[i] += op.coupling[i * op.dim + a];
      diag[j] += op.coupling[i * op.dim + a];
    }
  }
  return diag;
}

int conjugate_gradient(const ShiftedSystem& sys, std::span<const double> b, std::span<double> x, double rel_tol) {
  const std::size_t N = b.size();
  std::vector<double> r(b.begin(), b.end()), z(N), p(N), q(N);
  std::fill(x.begin(), x.end(), 0.0);
  const double bnorm = std::sqrt(kernels::dot(b, b));
  if (bnorm == 0.0) return 0;
  for (std::size_t i = 0; i < N; ++i) z[i] = sys.diag[i] > 0.0 ? r[i] / sys.diag[i] : 0.0;
  p = z;
  double rz = kernels::dot(r, z);
  const int max_it = static_cast<int>(std::max<std::size_t>(100, 10 * N));
  for (int it = 1; it <= max_it; ++it) {
    sys.apply(p, q);
    const double pq = kernels::dot(p, q);
    if (!(pq > 0.0)) {
      throw NonConvergence("CG breakdown in the shifted eigen solve: p^T (A - s M) p = " + std::to_string(pq) +
                           " at shift s = " + std::to_string(sys.shift) + ", iteration " + std::to_string(it));
    }
    const double alpha = rz / pq;
    for (std::size_t i = 0; i < N; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    if (std::sqrt(kernels::dot(r, r)) <= rel_tol * bnorm) return it;
    for (std::size_t i = 0; i < N; ++i) z[i] = sys.diag[i] > 0.0 ? r[i] / sys.diag[i] : 0.0;
    const double rz_new = kernels::dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < N; ++i) p[i] = z[i] + beta * p[i];
  }
  throw NonConvergence("CG did not converge in the shifted eigen solve at shift s = " + std::to_string(sys.shift));
}

double rayleigh(const EnergyOperator& op, std::span<const double> x, std::span<const double> mass) {
  const double num = kernels::energy(op, x).total();
  const double den = kernels::weighted_dot(x, x, mass);
  return num / den;
}

double periodic_aware_offset(const Grid& g, std::size_t a, double x, double center) {
  double d = x - center;
  if (g.axis(a).topology == Topology::periodic) {
    const double L = g.axis(a).length;
    d -= L * std::round(d / L);
  }
  return d;
}

// Simpson's rule on [a, b] with an even number of cells.
template <class F>
double simpson(F f, double a, double b, std::size_t cells) {
  const double h = (b - a) / static_cast<double>(cells);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < cells; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + static_cast<double>(i) * h);
  return s * h / 3.0;
}

}  // namespace

std::string to_string(Status s) {
  switch (s) {
    case Status::converged:
      return "converged";
    case Status::max_iterations:
      return "max_iterations";
    case Status::unbounded_suspected:
      return "Lambda = -inf suspected";
  }
  return "unknown";
}

ElResidual el_residual(const MeasureSpace& space, std::span<const double> w, double lambda) {
  const std::size_t N = space.grid().size();
  if (w.size() != N) throw InvalidArgument("field has the wrong length");
  const QuotientBreakdown b = evaluate_parts(space, w);
  const double m = b.m;
  const double nd = static_cast<double>(b.n);
  const double p = space.critical_exponent();
  ElResidual out;
  if (m > 0.0) {
    if (!(b.interior_norm > 0.0)) throw UndefinedQuotient("interior norm is zero");
    out.c1 = m / (m + nd - 2.0) * lambda * std::pow(b.interior_norm, -(2.0 * m + nd - 1.0) / (m + nd - 1.0));
    out.c2 = (2.0 * m + nd - 2.0) / (m + nd - 2.0) * lambda * std::pow(b.interior_norm, -m / (m + nd - 1.0));
  } else {
    out.c2 = lambda;
  }
  ScalarField gE(N);
  conformal_energy_gradient(space, w, gE);
  const ScalarField dI = power_gradient(space, w, space.interior_norm_weights());
  const ScalarField dB = power_gradient(space, w, space.boundary_norm_weights());
  ScalarField r(N);
  for (std::size_t i = 0; i < N; ++i) r[i] = 0.5 * gE[i] + out.c1 * dI[i] / p - out.c2 * dB[i] / p;
  const ScalarField mass = residual_mass(space);
  const ElResidual sup = sup_residuals(space.grid(), w, r, mass);
  out.interior = sup.interior;
  out.boundary = sup.boundary;
  return out;
}

MinimizerResult minimize_quotient(const MeasureSpace& space, const MinimizerConfig& cfg) {
  validate(cfg);
  const ScalarField mass = residual_mass(space);
  const auto ex = exponents(space.m(), space.n());
  const Objective f = [&](std::span<const double> w, std::span<double> grad, double& scale) {
    const auto b = escobar_quotient_gradient(space, w, grad);
    // dQ/dw = 2 I^alpha R at unit boundary norm; report R.
    const double ia = b.m > 0.0 ? std::pow(b.interior_norm, ex.alpha) : 1.0;
    scale = 1.0 / (2.0 * ia) * std::pow(b.boundary_norm, ex.beta);
    return b.Q;
  };
  const auto starts = initial_fields(space, cfg);
  const auto runs = run_all(space, f, starts, cfg, mass);
  const std::size_t best = pick_best(runs);
  const Run& r = runs[best];

  MinimizerResult out;
  out.w = r.w;
  out.breakdown = escobar_quotient(space, r.w);
  out.lambda = out.breakdown.Q;
  out.el = el_residual(space, r.w, out.lambda);
  out.grad_norm = r.grad_norm;
  out.trace = r.trace;
  out.status = r.status;
  out.converged = r.status == Status::converged;
  out.start = starts[best].name;
  out.constant_Q = escobar_quotient(space, boundary_normalize(space, ScalarField(space.grid().size(), 1.0))).Q;
  out.starts = static_cast<int>(starts.size());
  return out;
}

double rho1_band(const Grid& grid) {
  const double h = grid.max_spacing();
  return 5.0 * h * h;
}

EigenResult dirichlet_rho1(const MeasureSpace& space, double tol, int max_iterations) {
  if (!space.conformally_flat_base()) {
    throw InvalidArgument("rho_1 is computed on the base space; pass the space before the conformal change");
  }
  if (!(tol > 0.0)) throw InvalidArgument("eigen tolerance must be positive");
  if (max_iterations < 1) throw InvalidArgument("eigen iterations must be at least 1");
  const Grid& g = space.grid();
  const EnergyOperator& op = space.base_operator();
  const auto mass = space.measure_weights();
  const std::size_t N = g.size();

  double min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < N; ++i) {
    if (!g.on_boundary(i)) min_ratio = std::min(min_ratio, op.curvature[i] / mass[i]);
  }
  ShiftedSystem sys{op, g, mass, min_ratio - 1.0, operator_diagonal(op)};
  for (std::size_t i = 0; i < N; ++i) {
    sys.diag[i] = g.on_boundary(i) ? 0.0 : sys.diag[i] - sys.shift * mass[i];
  }

  EigenResult out;
  out.shift = sys.shift;
  std::vector<double> x(N), y(N), b(N), Ax(N);
  for (std::size_t i = 0; i < N; ++i) x[i] = g.on_boundary(i) ? 0.0 : 1.0;
  double rho = rayleigh(op, x, mass);
  for (int it = 1; it <= max_iterations; ++it) {
    for (std::size_t i = 0; i < N; ++i) b[i] = mass[i] * x[i];
    out.linear_iterations += conjugate_gradient(sys, b, y, 1e-13);
    const double norm = std::sqrt(kernels::weighted_dot(y, y, mass));
    for (std::size_t i = 0; i < N; ++i) x[i] = y[i] / norm;
    const double next = rayleigh(op, x, mass);
    out.iterations = it;
    const bool settled = std::abs(next - rho) <= tol * std::max(1.0, std::abs(next));
    rho = next;
    if (settled) break;
    if (it == max_iterations) {
      throw NonConvergence("inverse iteration did not settle within " + std::to_string(max_iterations) +
                           " iterations at shift s = " + std::to_string(sys.shift));
    }
  }

  double total = 0.0;
  for (double v : x) total += v;
  const double flip = total < 0.0 ? -1.0 : 1.0;
  for (double& v : x) v = std::max(0.0, flip * v);
  const double norm = std::sqrt(kernels::weighted_dot(x, x, mass));
  for (double& v : x) v /= norm;

  kernels::energy_gradient(op, x, Ax);
  out.rayleigh = rayleigh(op, x, mass);
  double res = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    if (g.on_boundary(i)) continue;
    const double r = 0.5 * Ax[i] - out.rayleigh * mass[i] * x[i];
    res += r * r / mass[i];
  }
  out.rho1 = rho;
  out.residual = std::sqrt(res);
  out.field = std::move(x);
  return out;
}

BlowupScan blowup_values(const MeasureSpace& space, const EigenResult& eig, std::span<const double> t) {
  const std::size_t N = space.grid().size();
  if (eig.field.size() != N) throw InvalidArgument("eigenfield does not match the grid");
  BlowupScan out;
  out.rho1 = eig.rho1;
  out.band = rho1_band(space.grid());
  double bd = 0.0;
  for (double b : space.boundary_norm_weights()) bd += b;
  const double nd = static_cast<double>(space.n());
  const double D = std::pow(bd, (space.m() + nd - 2.0) / (space.m() + nd - 1.0));
  ScalarField psi(N);
  for (double tv : t) {
    for (std::size_t i = 0; i < N; ++i) psi[i] = (tv * eig.field[i] + 1.0) / std::sqrt(D);
    const auto b = escobar_quotient(space, psi);
    out.t.push_back(tv);
    out.Q.push_back(b.Q);
    out.energy.push_back(b.energy());
  }
  return out;
}

BlowupScan blowup_scan(const MeasureSpace& space, const EigenResult& eig, std::span<const double> t, double bound) {
  const double band = rho1_band(space.grid());
  if (eig.rho1 > -band) {
    throw NumericRefusal("blow-up scan needs rho_1 <= -" + std::to_string(band) + " (indeterminate band), got rho_1 = " +
                         std::to_string(eig.rho1));
  }
  if (t.size() < 3) throw InvalidArgument("blow-up scan needs at least 3 t values");
  if (!std::is_sorted(t.begin(), t.end())) throw InvalidArgument("blow-up t values must be increasing");
  BlowupScan out = blowup_values(space, eig, t);
  out.bound = bound;
  const std::size_t from = out.Q.size() - std::max<std::size_t>(2, out.Q.size() / 3);
  out.eventually_decreasing = true;
  for (std::size_t k = from; k + 1 < out.Q.size(); ++k) {
    if (!(out.Q[k + 1] < out.Q[k])) out.eventually_decreasing = false;
  }
  out.certified_unbounded = out.eventually_decreasing && out.Q.back() < -bound;
  return out;
}

LowerBoundCheck lower_bound_check(const MeasureSpace& space, const std::vector<ScalarField>& fields, double floor) {
  if (fields.empty()) throw InvalidArgument("lower bound check needs at least one field");
  LowerBoundCheck out;
  out.floor = floor;
  out.min_energy = std::numeric_limits<double>::infinity();
  for (const auto& f : fields) {
    const double e = evaluate_parts(space, boundary_normalize(space, f)).energy();
    out.energies.push_back(e);
    out.min_energy = std::min(out.min_energy, e);
  }
  out.holds = out.min_energy >= floor;
  if (!out.holds) {
    out.diagnostic = "Lambda possibly -inf: normalized energy " + std::to_string(out.min_energy) + " below floor " +
                     std::to_string(floor);
  }
  return out;
}

ScalarField smooth_random_field(const Grid& grid, std::uint64_t seed, double amplitude) {
  if (!(amplitude >= 0.0 && amplitude < 1.0)) throw InvalidArgument("amplitude must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  constexpr int modes = 6;
  struct Mode {
    double coefficient;
    std::vector<double> frequency, phase;
  };
  std::vector<Mode> spec(modes);
  for (auto& md : spec) {
    md.coefficient = 2.0 * uniform01(rng) - 1.0;
    for (std::size_t a = 0; a < grid.dim(); ++a) {
      md.frequency.push_back(std::floor(3.0 * uniform01(rng)));
      md.phase.push_back(2.0 * pi * uniform01(rng));
    }
  }
  ScalarField out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double s = 0.0;
    for (const auto& md : spec) {
      double term = md.coefficient;
      for (std::size_t a = 0; a < grid.dim(); ++a) {
        // Periodic axes need integer frequencies over the period; interval axes use the same form.
        term *= std::cos(2.0 * pi * md.frequency[a] * grid.coordinate(i, a) / grid.axis(a).length + md.phase[a]);
      }
      s += term;
    }
    out[i] = 1.0 + amplitude * s / modes;
  }
  return out;
}

std::vector<ScalarField> lower_bound_fields(const MeasureSpace& space, const EigenResult& eig,
                                            std::span<const double> t, int random_fields, std::uint64_t seed) {
  const std::size_t N = space.grid().size();
  std::vector<ScalarField> fields;
  fields.emplace_back(N, 1.0);
  for (double tv : t) {
    ScalarField f(N);
    for (std::size_t i = 0; i < N; ++i) f[i] = tv * eig.field[i] + 1.0;
    fields.push_back(std::move(f));
  }
  for (int k = 0; k < random_fields; ++k) {
    fields.push_back(smooth_random_field(space.grid(), seed + static_cast<std::uint64_t>(k)));
  }
  return fields;
}

double cutoff(double r, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("cutoff radius must be positive");
  auto g = [](double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; };
  const double s = std::clamp((r - eps) / eps, 0.0, 1.0);
  return g(1.0 - s) / (g(1.0 - s) + g(s));
}

AubinScan aubin_scan(const MeasureSpace& space, std::span<const double> point, std::span<const double> taus,
                     double eps) {
  const Grid& g = space.grid();
  const std::size_t n = g.dim();
  const double m = space.m();
  if (!(m > 0.0)) throw InvalidArgument("the concentration scan requires m > 0");
  if (point.size() != n - 1) throw InvalidArgument("boundary point needs n-1 coordinates");
  if (!(eps > 0.0)) throw InvalidArgument("cutoff radius must be positive");
  if (taus.empty()) throw InvalidArgument("the scan needs at least one tau");
  for (std::size_t a = 0; a + 1 < n; ++a) {
    const auto& ax = g.axis(a);
    const bool fits = ax.topology == Topology::periodic ? 4.0 * eps <= ax.length
                                                        : point[a] - 2.0 * eps >= 0.0 && point[a] + 2.0 * eps <= ax.length;
    if (!fits) throw InvalidArgument("cutoff support B_{2 eps} does not fit along axis " + std::to_string(a));
  }
  if (2.0 * eps > g.axis(n - 1).length) throw InvalidArgument("cutoff support B_{2 eps} exceeds the normal extent");
  const double c = bubble_c(m, n);
  for (double tau : taus) {
    if (!(tau > 0.0) || std::sqrt(tau) > std::sqrt(c) * 2.0 * eps) {
      throw InvalidArgument("tau = " + std::to_string(tau) + " violates sqrt(tau) <= sqrt(c) 2 eps");
    }
  }

  AubinScan out;
  out.V = bubble_boundary_volume(m, n);
  out.lambda_mn = lambda_mn(m, n);
  const double nd = static_cast<double>(n);
  out.expected_slope = (nd - 1.0) / (2.0 * (m + nd - 1.0)) + m + (nd - 3.0) / 2.0;
  const double p = space.critical_exponent();
  const double sphere = sphere_volume(nd - 2.0);
  const auto weights = space.measure_weights();

  std::vector<double> lateral(g.size()), radius(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double r2 = 0.0;
    for (std::size_t a = 0; a + 1 < n; ++a) {
      const double d = periodic_aware_offset(g, a, g.coordinate(i, a), point[a]);
      r2 += d * d;
    }
    lateral[i] = std::sqrt(r2);
    const double t = g.coordinate(i, n - 1);
    radius[i] = std::sqrt(r2 + t * t);
  }

  out.min_Q = std::numeric_limits<double>::infinity();
  for (double tau : taus) {
    const Bubble bubble(BubbleParams{m, n, BubbleFamily::tau, tau, {}});
    ScalarField f(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      f[i] = cutoff(radius[i], eps) * bubble.radial(lateral[i], g.coordinate(i, n - 1));
    }
    AubinRow row;
    row.tau = tau;
    const auto parts = escobar_quotient(space, f);
    row.Q = parts.Q;
    row.V_tau = parts.boundary_norm;
    row.tau_tilde = tau * std::pow(out.V, -2.0 / (2.0 * m + nd - 1.0));
    row.W = w_functional(space, boundary_normalize(space, f), row.tau_tilde);

    auto trace_p = [&](double r) { return std::pow(bubble.radial(r, 0.0), p) * std::pow(r, nd - 2.0); };
    const double annulus_part =
        simpson([&](double r) { return (1.0 - std::pow(cutoff(r, eps), p)) * trace_p(r); }, eps, 2.0 * eps, 4096);
    const double outer = simpson(
        [&](double s) {
          if (s == 0.0) return 0.0;
          const double r = 2.0 * eps / s;
          return trace_p(r) * 2.0 * eps / (s * s);
        },
        0.0, 1.0, 4096);
    row.V_minus_V_tau = sphere * (annulus_part + outer);

    const ScalarField g2 = gradient_squared(g, f);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (radius[i] >= eps && radius[i] <= 2.0 * eps) row.annulus_gradient += g2[i] * weights[i];
    }
    row.excess = row.Q / out.lambda_mn - 1.0;
    out.min_Q = std::min(out.min_Q, row.Q);
    out.rows.push_back(row);
  }
  out.delta = out.min_Q / out.lambda_mn - 1.0;

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int k = 0;
  for (const auto& row : out.rows) {
    if (std::sqrt(row.tau / c) > eps / 10.0 || !(row.annulus_gradient > 0.0)) continue;
    const double x = std::log(row.tau), y = std::log(row.annulus_gradient);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++k;
  }
  out.slope_points = k;
  out.slope = k >= 2 ? (k * sxy - sx * sy) / (k * sxx - sx * sx) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

ElResidual w_el_residual(const MeasureSpace& space, std::span<const double> w, double tau, double c3) {
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  const std::size_t N = space.grid().size();
  if (w.size() != N) throw InvalidArgument("field has the wrong length");
  const auto ex = exponents(space.m(), space.n());
  ScalarField gE(N);
  conformal_energy_gradient(space, w, gE);
  const ScalarField dI = power_gradient(space, w, space.interior_norm_weights());
  const ScalarField dB = power_gradient(space, w, space.boundary_norm_weights());
  const double ta = std::pow(tau, ex.a);
  const double ki = 0.5 / std::sqrt(tau);  // ((m+n-1)/(m+n-2)) tau^{-1/2} / p
  ScalarField r(N);
  for (std::size_t i = 0; i < N; ++i) r[i] = 0.5 * ta * gE[i] + ki * dI[i] - c3 * dB[i] / ex.p;
  const ElResidual sup = sup_residuals(space.grid(), w, r, residual_mass(space));
  return ElResidual{sup.interior, sup.boundary, ki * ex.p, c3};
}

EnergyPoint tau_energy(const MeasureSpace& space, double tau, const MinimizerConfig& cfg) {
  validate(cfg);
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  const ScalarField mass = residual_mass(space);
  const Objective f = [&](std::span<const double> w, std::span<double> grad, double& scale) {
    scale = 0.5;
    return w_functional_homogeneous(space, w, tau, grad);
  };
  const auto starts = initial_fields(space, cfg);
  const auto runs = run_all(space, f, starts, cfg, mass);
  const Run& r = runs[pick_best(runs)];
  EnergyPoint out;
  out.tau = tau;
  out.w = boundary_normalize(space, r.w);
  const auto parts = evaluate_parts(space, out.w);
  out.W = w_functional(parts, tau);
  out.nu = out.W;
  out.converged = r.status == Status::converged;
  out.grad_norm = r.grad_norm;
  out.c3 = w_boundary_constant(parts, tau);
  const auto el = w_el_residual(space, out.w, tau, out.c3);
  out.el_interior = el.interior;
  out.el_boundary = el.boundary;
  out.trace = r.trace;
  return out;
}

void to_json(nlohmann::json& j, const ElResidual& r) {
  j = nlohmann::json{{"interior", r.interior}, {"boundary", r.boundary}, {"c1", r.c1}, {"c2", r.c2}};
}

void to_json(nlohmann::json& j, const MinimizerResult& r) {
  j = nlohmann::json{{"lambda", r.lambda},
                     {"lambda_error", r.grad_norm},
                     {"breakdown", r.breakdown},
                     {"el_residual", r.el},
                     {"grad_norm", r.grad_norm},
                     {"status", to_string(r.status)},
                     {"converged", r.converged},
                     {"start", r.start},
                     {"constant_Q", r.constant_Q},
                     {"starts", r.starts},
                     {"iterations", r.trace.empty() ? 0 : r.trace.back().iteration}};
}

void to_json(nlohmann::json& j, const EigenResult& r) {
  j = nlohmann::json{{"rho1", r.rho1},
                     {"rho1_error", r.residual},
                     {"rayleigh", r.rayleigh},
                     {"residual", r.residual},
                     {"shift", r.shift},
                     {"iterations", r.iterations},
                     {"linear_iterations", r.linear_iterations}};
}

void to_json(nlohmann::json& j, const BlowupScan& r) {
  j = nlohmann::json{{"rho1", r.rho1},
                     {"band", r.band},
                     {"bound", r.bound},
                     {"t", r.t},
                     {"Q", r.Q},
                     {"energy", r.energy},
                     {"eventually_decreasing", r.eventually_decreasing},
                     {"certified_unbounded", r.certified_unbounded}};
}

void to_json(nlohmann::json& j, const LowerBoundCheck& r) {
  j = nlohmann::json{{"energies", r.energies},
                     {"min_energy", r.min_energy},
                     {"floor", r.floor},
                     {"holds", r.holds},
                     {"diagnostic", r.diagnostic}};
}

void to_json(nlohmann::json& j, const AubinScan& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"tau", row.tau},
                    {"Q", row.Q},
                    {"W", row.W},
                    {"tau_tilde", row.tau_tilde},
                    {"V_tau", row.V_tau},
                    {"V_minus_V_tau", row.V_minus_V_tau},
                    {"annulus_gradient", row.annulus_gradient},
                    {"excess", row.excess}});
  }
  j = nlohmann::json{{"rows", rows},
                     {"V", r.V},
                     {"V_error", "exact closed form"},
                     {"lambda_mn", r.lambda_mn},
                     {"lambda_mn_error", "exact closed form"},
                     {"min_Q", r.min_Q},
                     {"delta", r.delta},
                     {"slope", r.slope},
                     {"expected_slope", r.expected_slope},
                     {"slope_points", r.slope_points}};
}

void to_json(nlohmann::json& j, const EnergyPoint& r) {
  j = nlohmann::json{{"tau", r.tau},
                     {"W", r.W},
                     {"nu_upper_bound", r.nu},
                     {"converged", r.converged},
                     {"grad_norm", r.grad_norm},
                     {"c3", r.c3},
                     {"el_interior", r.el_interior},
                     {"el_boundary", r.el_boundary}};
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  const auto old = out.precision(17);
  out << "iteration,Q,grad_norm,step\n";
  for (const auto& r : trace) out << r.iteration << ',' << r.value << ',' << r.grad_norm << ',' << r.step << '\n';
  out.precision(old);
}

}  // namespace escobar
