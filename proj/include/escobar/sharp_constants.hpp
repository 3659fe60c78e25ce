#pragma once

// Sharp trace constant Lambda_{m,n}, the two extremal bubble families, the
// radial integral lemma, and half-space quadrature of the trace quotient with
// analytic tail corrections.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

namespace escobar {

/// Vol(S^k) = 2 pi^{(k+1)/2} / Gamma((k+1)/2); k may be any real >= 0.
double sphere_volume(double k);

/// Closed-form sharp constant; the m = 0 branch is (n-2)/2 Vol(S^{n-1})^{1/(n-1)}.
double lambda_mn(double m, std::size_t n);

/// c(m,n) = (m+n-1)/(m (m+n-2)^2) of the tau-family; requires m > 0.
double bubble_c(double m, std::size_t n);

enum class BubbleFamily { epsilon, tau };

struct BubbleParams {
  double m = 1.0;
  std::size_t n = 3;
  BubbleFamily family = BubbleFamily::epsilon;
  double scale = 1.0;            // epsilon or tau
  std::vector<double> center;    // x_0, n-1 coordinates (empty = origin)
};

/// Extremal field on the closed half-space. Validates parameters on construction.
class Bubble {
 public:
  explicit Bubble(BubbleParams params);
  const BubbleParams& params() const { return params_; }

  /// Value at (x_1, ..., x_{n-1}, t).
  double operator()(std::span<const double> z) const;
  /// Value as a function of r = |x - x_0| and t.
  double radial(double r, double t) const;
  /// Partial derivatives (d/dr, d/dt) of `radial`.
  void radial_gradient(double r, double t, double& dr, double& dt) const;
  /// Laplacian in R^n of the field, expressed through (r, t).
  double laplacian(double r, double t) const;

 private:
  BubbleParams params_;
  double k_ = 0.0;  // exponent (m+n-2)/2
};

/// Integral over R^{2m} of |y|^{2l} (a + |y|^2/tau)^{-(2m+k)}; requires k > l.
double case_integral(double k, double l, double m, double a, double tau);

/// Boundary volume of the tau-family (independent of tau and x_0), closed form
/// pi^{(n-1)/2} Gamma(m+(n-1)/2) c^{-(n-1)/2} / Gamma(m+n-1).
double bubble_boundary_volume(double m, std::size_t n);

struct HalfspaceQuad {
  double radius = 40.0;
  std::size_t radial_cells = 128;   // even, so every other node forms the coarse grid
  std::size_t polar_cells = 64;     // alpha in [0, pi/2], alpha = pi/2 is the boundary; even
  std::size_t azimuth_nodes = 32;   // periodic theta, only for non-radial fields (n = 3); even
  double stretch = 5.0;             // rho(xi) = R (e^{b xi} - 1)/(e^b - 1)
  double tail_tolerance = 1e-3;     // relative, per integral
  void validate() const;
};

/// Field sampled on the polar (rho, alpha) grid (radial fields, any n) or on the
/// spherical (rho, alpha, theta) grid (n = 3).
struct HalfspaceSample {
  HalfspaceQuad quad;
  std::size_t n = 3;
  bool spherical = false;
  std::vector<double> rho, drho, alpha, theta;
  std::vector<double> values;   // index (i_rho * n_alpha + i_alpha) * n_theta + i_theta
};

/// Sample a function of (r, t) about the origin on the polar grid.
HalfspaceSample sample_radial(const HalfspaceQuad& quad, std::size_t n,
                              const std::function<double(double r, double t)>& f);
/// Sample a function of (x_1, x_2, t) on the spherical grid (n = 3 only).
HalfspaceSample sample_spherical(const HalfspaceQuad& quad, const std::function<double(double, double, double)>& f);

struct HalfspaceIntegrals {
  double dirichlet = 0.0;
  double interior_norm = 0.0;
  double boundary_norm = 0.0;
};

struct HalfspaceResult {
  double Q = 0.0;
  HalfspaceIntegrals integrals;   // tail-corrected
  HalfspaceIntegrals tails;       // analytic tail contributions beyond R
  double grid_error = 0.0;        // |Q_h - Q_2h| / 2: bounds the error for any order >= log2(3)
  double tail_error = 0.0;        // propagated tail-fit uncertainty in Q
  double error = 0.0;             // grid_error + tail_error
  double m = 0.0;
  std::size_t n = 0;
};

/// Trace quotient (int |grad w|^2)(int |w|^p)^{m/(m+n-1)} / (int_boundary |w|^p)^{(2m+n-2)/(m+n-1)}.
/// Throws NumericRefusal when a tail uncertainty exceeds quad.tail_tolerance.
HalfspaceResult halfspace_quotient(const HalfspaceSample& sample, double m);

/// Integrals on the sampled grid alone (no tails); `stride` 2 uses every other node.
HalfspaceIntegrals halfspace_integrals(const HalfspaceSample& sample, double m, std::size_t stride = 1);

struct LiftResidual {
  double boundary = 0.0;   // relative mismatch of the boundary identity
  double gradient = 0.0;   // relative mismatch of the gradient identity
  double lifted_boundary = 0.0, reduced_boundary = 0.0;
  double lifted_gradient = 0.0, reduced_gradient = 0.0;
};

struct LiftQuad {
  double radius = 8.0;
  std::size_t radial_cells = 64;
  std::size_t polar_cells = 64;
  std::size_t lift_cells = 64;      // |y| on a tangent-mapped grid to infinity
  double stretch = 3.0;
  double lift_scale = 1.0;          // |y| = scale * tan(pi zeta / 2)
};

/// Compares both lifted integrals of f = (w^{-2/(m+n-2)} + |y|^2/tau)^{-(2m+n-2)/2}
/// over R^{2m+n}_+ with their reduced forms. f is sampled and differentiated on an
/// (|y|, rho, alpha) grid; the reduced side differentiates w on the (rho, alpha) grid.
/// w is a function of (r, t) about the origin. m must be 1 or 2.
LiftResidual lift_check(const std::function<double(double r, double t)>& w, double m, std::size_t n, double tau,
                        const LiftQuad& quad);

struct BubbleElResidual {
  double interior = 0.0;
  double boundary = 0.0;
};

/// Sup-norm residuals of the tau-family's Euler-Lagrange system, with the Laplacian
/// and normal derivative taken by finite differences on a tensor (r, t) grid around
/// x_0: quad.radial_cells cells per axis, s = R sinh(b xi)/sinh(b) with R = quad.radius
/// and b = quad.stretch. Nodes within two cells of the truncation edge are excluded.
BubbleElResidual bubble_el_residual(const BubbleParams& params, const HalfspaceQuad& quad);

/// Boundary volume by radial quadrature of the tau-family's trace plus a two-term
/// asymptotic tail beyond quad.radius. Evaluated at tau = 1 and tau = 1/4; throws
/// NumericRefusal if the two disagree by more than 1e-6 relative.
double bubble_boundary_volume_quadrature(double m, std::size_t n, const HalfspaceQuad& quad);

struct ConstantRow {
  double m = 0.0;
  std::size_t n = 0;
  double lambda = 0.0;
  double estimate = 0.0;
  double error_budget = 0.0;
  double rel_error = 0.0;
};

/// Closed form against the quotient of the epsilon-bubble on the half-space grid.
ConstantRow constant_row(double m, std::size_t n, const HalfspaceQuad& quad);

void write_constants_csv(std::ostream& out, const std::vector<ConstantRow>& rows);
void to_json(nlohmann::json& j, const HalfspaceResult& r);
void to_json(nlohmann::json& j, const ConstantRow& r);
void to_json(nlohmann::json& j, const LiftResidual& r);

}  // namespace escobar
