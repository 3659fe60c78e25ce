#pragma once

// Direct minimization of the quotient over nonnegative boundary-normalized
// fields, Euler-Lagrange certification, the first Dirichlet eigenvalue and the
// two scans built on it (blow-up for rho_1 <= 0, concentrated cutoff bubbles).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "escobar/functionals.hpp"
#include "escobar/geometry.hpp"

namespace escobar {

enum class StepRule { fixed, armijo };

enum class Status { converged, max_iterations, unbounded_suspected };
std::string to_string(Status s);

struct MinimizerConfig {
  StepRule step_rule = StepRule::armijo;
  double fixed_step = 1e-3;
  double armijo = 1e-4;
  int max_iterations = 20000;
  /// On the sup of the mass-normalized projected gradient (same scale as el_residual).
  double gradient_tolerance = 1e-6;
  bool normalize_each_step = true;
  bool clamp_nonnegative = true;
  std::uint64_t seed = 1;
  /// Total starts: constant, eigenfield + 1, then seeded smooth random fields.
  int restarts = 5;
  /// Objective values below minus this bound are treated as divergence to -infinity.
  double divergence_bound = 1e8;
  /// Keep every k-th iteration in the trace (the last one is always kept).
  int trace_stride = 1;
};

struct TraceRow {
  int iteration = 0;
  double value = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
};

struct ElResidual {
  double interior = 0.0;
  double boundary = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

struct MinimizerResult {
  ScalarField w;
  double lambda = 0.0;
  QuotientBreakdown breakdown;
  ElResidual el;
  double grad_norm = 0.0;
  std::vector<TraceRow> trace;
  Status status = Status::max_iterations;
  bool converged = false;
  std::string start;         // which initial guess produced the result
  double constant_Q = 0.0;   // Q of the normalized constant field
  int starts = 0;
};

/// Projected gradient descent on Q; best result over all starts.
MinimizerResult minimize_quotient(const MeasureSpace& space, const MinimizerConfig& cfg);

/// Nodal weak residuals of the Euler-Lagrange system at a normalized w, divided
/// by the interior mass (interior nodes) or the boundary mass (boundary nodes).
ElResidual el_residual(const MeasureSpace& space, std::span<const double> w, double lambda);

struct EigenResult {
  double rho1 = 0.0;
  ScalarField field;       // zero on every boundary face, nonnegative, unit mass norm
  double rayleigh = 0.0;   // recomputed from the field
  double residual = 0.0;   // |A x - rho M x|_{M^{-1}}
  double shift = 0.0;
  int iterations = 0;
  int linear_iterations = 0;
};

/// Smallest eigenvalue of L with zero boundary values, w.r.t. the e^{-phi} mass.
EigenResult dirichlet_rho1(const MeasureSpace& space, double tol = 1e-10, int max_iterations = 500);

/// Width of the band |rho_1| < 5 h_max^2 in which the sign of rho_1 is not trusted.
double rho1_band(const Grid& grid);

struct BlowupScan {
  double rho1 = 0.0;
  double band = 0.0;
  double bound = 0.0;
  std::vector<double> t;
  std::vector<double> Q;
  std::vector<double> energy;
  bool eventually_decreasing = false;
  bool certified_unbounded = false;
};

/// Q(psi_t) along psi_t = (t phi_1 + 1)/sqrt(D) without any sign gate.
BlowupScan blowup_values(const MeasureSpace& space, const EigenResult& eig, std::span<const double> t);

/// Gated scan: refuses (NumericRefusal) unless rho_1 <= -band. Certifies when the
/// last third of the scan strictly decreases and ends below -bound.
BlowupScan blowup_scan(const MeasureSpace& space, const EigenResult& eig, std::span<const double> t,
                       double bound = 1e3);

struct LowerBoundCheck {
  std::vector<double> energies;
  double min_energy = 0.0;
  double floor = 0.0;
  bool holds = true;
  std::string diagnostic;
};

/// Energies of the boundary-normalized fields against a floor.
LowerBoundCheck lower_bound_check(const MeasureSpace& space, const std::vector<ScalarField>& fields,
                                  double floor);

/// Standard competitor list: constant, psi_t for the given t, seeded smooth random fields.
std::vector<ScalarField> lower_bound_fields(const MeasureSpace& space, const EigenResult& eig,
                                            std::span<const double> t, int random_fields,
                                            std::uint64_t seed);

/// Smooth positive random field 1 + low-frequency modes; deterministic in seed.
ScalarField smooth_random_field(const Grid& grid, std::uint64_t seed, double amplitude = 0.5);

struct AubinRow {
  double tau = 0.0;
  double Q = 0.0;
  double W = 0.0;
  double tau_tilde = 0.0;
  double V_tau = 0.0;          // boundary norm of f_tau on the grid
  double V_minus_V_tau = 0.0;  // from fine radial quadrature of (1 - eta^p) w^p
  double annulus_gradient = 0.0;
  double excess = 0.0;         // Q / Lambda_{m,n} - 1
};

struct AubinScan {
  std::vector<AubinRow> rows;
  double V = 0.0;
  double lambda_mn = 0.0;
  double min_Q = 0.0;
  double delta = 0.0;            // min_Q / lambda_mn - 1
  double slope = 0.0;            // log-log slope of the annulus gradient
  double expected_slope = 0.0;   // (n-1)/(2(m+n-1)) + m + (n-3)/2
  int slope_points = 0;
};

/// Smooth cutoff: 1 on [0, eps], 0 beyond 2 eps.
double cutoff(double r, double eps);

/// Concentrated cutoff bubbles at the boundary point `point` (n-1 coordinates on t = 0).
/// Requires m > 0, the support B_{2 eps} inside the box, and sqrt(tau) <= sqrt(c) 2 eps.
/// The annulus slope is fitted over rows with sqrt(tau/c) <= eps/10.
AubinScan aubin_scan(const MeasureSpace& space, std::span<const double> point, std::span<const double> taus,
                     double eps);

struct EnergyPoint {
  double tau = 0.0;
  double W = 0.0;    // achieved value: a certified upper bound for nu(tau)
  double nu = 0.0;   // same value, kept under the name of the quantity it bounds
  bool converged = false;
  double grad_norm = 0.0;
  double c3 = 0.0;
  double el_interior = 0.0;
  double el_boundary = 0.0;
  ScalarField w;
  std::vector<TraceRow> trace;
};

/// Constrained minimization of W(., tau) over nonnegative normalized fields.
EnergyPoint tau_energy(const MeasureSpace& space, double tau, const MinimizerConfig& cfg);

/// Euler-Lagrange residuals of the W system at a normalized w with constant c3.
ElResidual w_el_residual(const MeasureSpace& space, std::span<const double> w, double tau, double c3);

void to_json(nlohmann::json& j, const ElResidual& r);
void to_json(nlohmann::json& j, const MinimizerResult& r);
void to_json(nlohmann::json& j, const EigenResult& r);
void to_json(nlohmann::json& j, const BlowupScan& r);
void to_json(nlohmann::json& j, const LowerBoundCheck& r);
void to_json(nlohmann::json& j, const AubinScan& r);
void to_json(nlohmann::json& j, const EnergyPoint& r);

/// CSV columns: iteration, Q, grad_norm, step.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace escobar
