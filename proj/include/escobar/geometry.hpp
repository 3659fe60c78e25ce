#pragma once

// Discretized smooth metric measure spaces with boundary on flat boxes, their
// weighted curvatures, the weighted Laplacian and the conformal Laplacian
// energy in divergence form.
//
// A conformally changed space is stored as (base phi, m, sigma). Its energy and
// norms are evaluated on the base space at e^{sigma/2} w, which is exact for
// the norms and consistent to O(h^2) for the energy. The changed metric's own
// curvature is only assembled by `conformal_law_residual`, as an independent
// check of that rule.

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "escobar/grid.hpp"
#include "escobar/kernels.hpp"

namespace escobar {

/// Nodal values, one per grid node.
using ScalarField = std::vector<double>;

/// Nodal values on boundary faces, laid out face after face (see Face::offset).
struct BoundaryField {
  std::vector<double> values;
};

/// Pointwise function of node coordinates (x_1, ..., x_{n-1}, t).
using PointFunction = std::function<double(std::span<const double>)>;

ScalarField sample(const Grid& grid, const PointFunction& f);

/// Largest admissible phi/m; keeps v^{-1} = e^{phi/m} representable.
inline constexpr double max_phi_over_m = 30.0;

class MeasureSpace {
 public:
  /// Validates and precomputes the base energy operator and norm weights.
  MeasureSpace(std::shared_ptr<const Grid> grid, ScalarField phi, double m, ScalarField sigma = {});

  const Grid& grid() const { return *grid_; }
  std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
  std::size_t n() const { return grid_->dim(); }
  double m() const { return m_; }
  /// Base weight function (before any conformal change).
  const ScalarField& phi() const { return phi_; }
  /// Accumulated conformal factor; empty when none was applied.
  const ScalarField& sigma() const { return sigma_; }
  bool conformally_flat_base() const { return sigma_.empty(); }

  /// phi of the changed space: phi - m sigma / (m + n - 2).
  ScalarField phi_hat() const;

  /// Energy operator of the base space (sigma ignored).
  const EnergyOperator& base_operator() const { return op_; }
  /// Quadrature weights of the interior norm, omega_i e^{-phi (m-1)/m}; omega_i when m = 0.
  std::span<const double> interior_norm_weights() const { return interior_weights_; }
  /// Quadrature weights of the boundary norm, sum over faces of omega^f_i e^{-phi}.
  std::span<const double> boundary_norm_weights() const { return boundary_weights_; }
  /// Interior measure weights omega_i e^{-phi}.
  std::span<const double> measure_weights() const { return measure_weights_; }

  /// e^{sigma/2} w, or w itself when no conformal factor is present.
  ScalarField to_base(std::span<const double> w) const;

  /// Exponent p = 2(m+n-1)/(m+n-2) of both norms.
  double critical_exponent() const;

 private:
  std::shared_ptr<const Grid> grid_;
  ScalarField phi_;
  double m_;
  ScalarField sigma_;
  EnergyOperator op_;
  std::vector<double> interior_weights_;
  std::vector<double> boundary_weights_;
  std::vector<double> measure_weights_;
};

MeasureSpace build_space(const Grid& grid, const PointFunction& phi, double m,
                         const PointFunction& sigma = {});

/// Coefficient (m+n-2)/(4(m+n-1)) of the scalar curvature in the conformal Laplacian.
double curvature_coefficient(double m, std::size_t n);
/// Coefficient (m+n-2)/(2(m+n-1)) of the mean curvature in the boundary operator.
double mean_curvature_coefficient(double m, std::size_t n);

// Finite differences: central in the interior, second-order one-sided at interval ends.
double derivative(const Grid& grid, std::span<const double> f, std::size_t node, std::size_t axis);
double second_derivative(const Grid& grid, std::span<const double> f, std::size_t node, std::size_t axis);
ScalarField gradient_squared(const Grid& grid, std::span<const double> f);
ScalarField laplacian(const Grid& grid, std::span<const double> f);
/// Outer normal derivative on every boundary face node.
BoundaryField normal_derivative(const Grid& grid, std::span<const double> f);

/// R^m_phi = 2 Delta phi - ((m+1)/m) |grad phi|^2 on the flat base (0 when m = 0).
ScalarField weighted_scalar_curvature(const MeasureSpace& space);
/// H^m_phi = H_g - d phi / d eta with the outer normal eta (H_g = 0 on flat faces).
/// This sign is the one for which the boundary operator transforms covariantly
/// under conformal changes when m > 0.
BoundaryField gromov_mean_curvature(const MeasureSpace& space);
/// Delta_phi w = Delta w - grad w . grad phi.
ScalarField weighted_laplacian(const MeasureSpace& space, std::span<const double> w);

/// Dirichlet, interior-curvature and boundary parts of (L w, w) + (B w, w).
EnergyParts conformal_energy(const MeasureSpace& space, std::span<const double> w);
/// dE/dw for the space's energy (transformation law applied when sigma is present).
void conformal_energy_gradient(const MeasureSpace& space, std::span<const double> w, std::span<double> out);

MeasureSpace conformal_change(const MeasureSpace& space, std::span<const double> sigma);

/// Energy operator of the space with metric e^{2u} g and weight phi_hat, assembled
/// directly from the conformally-flat curvature formulas.
EnergyOperator assemble_energy(const Grid& grid, std::span<const double> phi_hat, double m,
                               std::span<const double> u);

/// Relative mismatch between the directly assembled energy of the space changed
/// by sigma and the transformation-law value at e^{sigma/2} w.
double conformal_law_residual(const MeasureSpace& space, std::span<const double> sigma,
                              std::span<const double> w);

/// Grid scaled by sqrt(c) in every length (metric c g) with the same fields.
MeasureSpace scale_metric(const MeasureSpace& space, double c);

/// CSV with one column per coordinate followed by one column per field.
void write_fields_csv(std::ostream& out, const Grid& grid, const std::vector<std::string>& names,
                      const std::vector<std::span<const double>>& fields);

}  // namespace escobar
