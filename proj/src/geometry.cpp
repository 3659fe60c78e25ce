#include "escobar/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

#include "escobar/errors.hpp"

namespace escobar {

namespace {

void require_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw InvalidArgument(std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                          std::to_string(got));
  }
}

void require_finite(std::span<const double> f, const char* what) {
  for (double v : f) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " has a non-finite entry");
  }
}

bool all_zero(std::span<const double> f) {
  return std::all_of(f.begin(), f.end(), [](double v) { return v == 0.0; });
}

// Position of node `i` along interval axis `a`, and the node `k` steps inward.
struct Stencil {
  std::size_t index;
  std::size_t count;
  std::size_t stride;
  std::size_t node;
  std::size_t at(long k) const { return static_cast<std::size_t>(static_cast<long>(node) + k * static_cast<long>(stride)); }
};

}  // namespace

ScalarField sample(const Grid& grid, const PointFunction& f) {
  ScalarField out(grid.size());
  std::vector<double> x(grid.dim());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t a = 0; a < grid.dim(); ++a) x[a] = grid.coordinate(i, a);
    out[i] = f(x);
  }
  return out;
}

double curvature_coefficient(double m, std::size_t n) {
  const double d = m + static_cast<double>(n);
  return (d - 2.0) / (4.0 * (d - 1.0));
}

double mean_curvature_coefficient(double m, std::size_t n) {
  const double d = m + static_cast<double>(n);
  return (d - 2.0) / (2.0 * (d - 1.0));
}

// ---------------------------------------------------------------------------
// Finite differences

double derivative(const Grid& grid, std::span<const double> f, std::size_t node, std::size_t a) {
  const double h = grid.spacing(a);
  const auto& ax = grid.axis(a);
  const Stencil s{grid.index_along(node, a), ax.nodes, grid.stride(a), node};
  if (ax.topology == Topology::periodic) {
    return (f[grid.neighbor(node, a, +1)] - f[grid.neighbor(node, a, -1)]) / (2.0 * h);
  }
  if (s.index == 0) return (-3.0 * f[s.at(0)] + 4.0 * f[s.at(1)] - f[s.at(2)]) / (2.0 * h);
  if (s.index + 1 == s.count) return (3.0 * f[s.at(0)] - 4.0 * f[s.at(-1)] + f[s.at(-2)]) / (2.0 * h);
  return (f[s.at(1)] - f[s.at(-1)]) / (2.0 * h);
}

double second_derivative(const Grid& grid, std::span<const double> f, std::size_t node, std::size_t a) {
  const double h = grid.spacing(a);
  const auto& ax = grid.axis(a);
  const Stencil s{grid.index_along(node, a), ax.nodes, grid.stride(a), node};
  if (ax.topology == Topology::periodic) {
    return (f[grid.neighbor(node, a, +1)] - 2.0 * f[node] + f[grid.neighbor(node, a, -1)]) / (h * h);
  }
  if (s.index == 0) {
    return (2.0 * f[s.at(0)] - 5.0 * f[s.at(1)] + 4.0 * f[s.at(2)] - f[s.at(3)]) / (h * h);
  }
  if (s.index + 1 == s.count) {
    return (2.0 * f[s.at(0)] - 5.0 * f[s.at(-1)] + 4.0 * f[s.at(-2)] - f[s.at(-3)]) / (h * h);
  }
  return (f[s.at(1)] - 2.0 * f[node] + f[s.at(-1)]) / (h * h);
}

ScalarField gradient_squared(const Grid& grid, std::span<const double> f) {
  require_length(f.size(), grid.size(), "gradient_squared");
  ScalarField out(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double s = 0.0;
    for (std::size_t a = 0; a < grid.dim(); ++a) {
      const double d = derivative(grid, f, i, a);
      s += d * d;
    }
    out[i] = s;
  }
  return out;
}

ScalarField laplacian(const Grid& grid, std::span<const double> f) {
  require_length(f.size(), grid.size(), "laplacian");
  ScalarField out(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double s = 0.0;
    for (std::size_t a = 0; a < grid.dim(); ++a) s += second_derivative(grid, f, i, a);
    out[i] = s;
  }
  return out;
}

BoundaryField normal_derivative(const Grid& grid, std::span<const double> f) {
  require_length(f.size(), grid.size(), "normal_derivative");
  BoundaryField out;
  out.values.resize(grid.boundary_size());
  for (const auto& face : grid.faces()) {
    const double sign = face.high ? 1.0 : -1.0;
    for (std::size_t k = 0; k < face.nodes.size(); ++k) {
      out.values[face.offset + k] = sign * derivative(grid, f, face.nodes[k], face.axis);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy assembly

EnergyOperator assemble_energy(const Grid& grid, std::span<const double> phi_hat, double m,
                               std::span<const double> u) {
  const std::size_t N = grid.size();
  const std::size_t d = grid.dim();
  require_length(phi_hat.size(), N, "assemble_energy phi");
  require_length(u.size(), N, "assemble_energy u");
  const double nd = static_cast<double>(d);
  const double cR = curvature_coefficient(m, d);
  const double cH = mean_curvature_coefficient(m, d);
  const bool flat = all_zero(u);

  // Dirichlet density e^{-phi_hat + (n-2) u}; every other density is this times e^{k u}.
  std::vector<double> rho(N);
  for (std::size_t i = 0; i < N; ++i) rho[i] = std::exp(-phi_hat[i] + (nd - 2.0) * u[i]);

  EnergyOperator op;
  op.dim = d;
  op.size = N;
  op.forward = grid.forward_table();
  op.backward = grid.backward_table();
  op.coupling.assign(N * d, 0.0);
  op.curvature.assign(N, 0.0);
  op.boundary.assign(N, 0.0);

  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t j = op.forward[i * d + a];
      if (j == Grid::npos) continue;
      double cross = 1.0;
      for (std::size_t b = 0; b < d; ++b) {
        if (b != a) cross *= grid.axis_weight(b, grid.index_along(i, b));
      }
      op.coupling[i * d + a] = 0.5 * (rho[i] + rho[j]) * cross / grid.spacing(a);
    }
  }

  const auto weights = grid.weights();
  const ScalarField lap_phi = laplacian(grid, phi_hat);
  const ScalarField grad_phi2 = gradient_squared(grid, phi_hat);
  ScalarField lap_u, grad_u2;
  if (!flat) {
    lap_u = laplacian(grid, u);
    grad_u2 = gradient_squared(grid, u);
  }
  for (std::size_t i = 0; i < N; ++i) {
    // e^{2u} R_hat with the flat base curvature R = 0.
    double r = 2.0 * lap_phi[i];
    if (m > 0.0) r -= (m + 1.0) / m * grad_phi2[i];
    if (!flat) {
      double du_dphi = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        du_dphi += derivative(grid, u, i, a) * derivative(grid, phi_hat, i, a);
      }
      r += -2.0 * (nd - 1.0) * lap_u[i] - (nd - 2.0) * (nd - 1.0) * grad_u2[i] +
           2.0 * (nd - 2.0) * du_dphi;
    }
    op.curvature[i] = cR * r * rho[i] * weights[i];
  }

  const BoundaryField dphi = normal_derivative(grid, phi_hat);
  BoundaryField du;
  if (!flat) du = normal_derivative(grid, u);
  for (const auto& face : grid.faces()) {
    for (std::size_t k = 0; k < face.nodes.size(); ++k) {
      const std::size_t i = face.nodes[k];
      // e^{u} H_hat with H_g = 0 on flat faces; the weight enters as -d phi_hat / d eta.
      double h = -dphi.values[face.offset + k];
      if (!flat) h += (nd - 1.0) * du.values[face.offset + k];
      op.boundary[i] += cH * h * rho[i] * face.weights[k];
    }
  }
  return op;
}

// ---------------------------------------------------------------------------
// MeasureSpace

MeasureSpace::MeasureSpace(std::shared_ptr<const Grid> grid, ScalarField phi, double m, ScalarField sigma)
    : grid_(std::move(grid)), phi_(std::move(phi)), m_(m), sigma_(std::move(sigma)) {
  if (!grid_) throw InvalidArgument("measure space needs a grid");
  const std::size_t N = grid_->size();
  if (!(m_ >= 0.0) || !std::isfinite(m_)) throw InvalidArgument("m must be a finite nonnegative number");
  if (phi_.empty()) phi_.assign(N, 0.0);
  require_length(phi_.size(), N, "phi");
  require_finite(phi_, "phi");
  if (!sigma_.empty()) {
    require_length(sigma_.size(), N, "sigma");
    require_finite(sigma_, "sigma");
    if (all_zero(sigma_)) sigma_.clear();
  }
  if (m_ == 0.0 && !all_zero(phi_)) throw InvalidArgument("m = 0 requires phi = 0");
  if (m_ > 0.0) {
    const double top = *std::max_element(phi_.begin(), phi_.end());
    if (top / m_ > max_phi_over_m) {
      throw InvalidArgument("max phi / m = " + std::to_string(top / m_) + " exceeds " +
                            std::to_string(max_phi_over_m));
    }
  }

  const ScalarField zero(N, 0.0);
  op_ = assemble_energy(*grid_, phi_, m_, zero);

  const auto w = grid_->weights();
  interior_weights_.resize(N);
  measure_weights_.resize(N);
  boundary_weights_.resize(N);
  const auto bw = grid_->boundary_weights();
  for (std::size_t i = 0; i < N; ++i) {
    const double e = std::exp(-phi_[i]);
    measure_weights_[i] = w[i] * e;
    interior_weights_[i] = m_ > 0.0 ? w[i] * std::exp(-phi_[i] * (m_ - 1.0) / m_) : w[i];
    boundary_weights_[i] = bw[i] * e;
  }
  double boundary_measure = 0.0;
  for (double b : boundary_weights_) boundary_measure += b;
  if (!(boundary_measure > 0.0)) throw InvalidArgument("weighted boundary measure must be positive");
}

ScalarField MeasureSpace::phi_hat() const {
  if (sigma_.empty()) return phi_;
  const double k = m_ / (m_ + static_cast<double>(n()) - 2.0);
  ScalarField out(phi_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi_[i] - k * sigma_[i];
  return out;
}

ScalarField MeasureSpace::to_base(std::span<const double> w) const {
  require_length(w.size(), grid_->size(), "field");
  ScalarField out(w.begin(), w.end());
  if (!sigma_.empty()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= std::exp(0.5 * sigma_[i]);
  }
  return out;
}

double MeasureSpace::critical_exponent() const {
  const double d = m_ + static_cast<double>(n());
  return 2.0 * (d - 1.0) / (d - 2.0);
}

MeasureSpace build_space(const Grid& grid, const PointFunction& phi, double m, const PointFunction& sigma) {
  auto g = std::make_shared<const Grid>(grid);
  ScalarField ph = phi ? sample(grid, phi) : ScalarField(grid.size(), 0.0);
  ScalarField sg = sigma ? sample(grid, sigma) : ScalarField{};
  return MeasureSpace(std::move(g), std::move(ph), m, std::move(sg));
}

// ---------------------------------------------------------------------------
// Curvatures and operators

ScalarField weighted_scalar_curvature(const MeasureSpace& space) {
  if (!space.conformally_flat_base()) {
    throw InvalidArgument("curvature of a conformally changed space is not materialized");
  }
  const auto& grid = space.grid();
  ScalarField r(grid.size(), 0.0);
  if (space.m() == 0.0) return r;
  const ScalarField lap = laplacian(grid, space.phi());
  const ScalarField g2 = gradient_squared(grid, space.phi());
  const double k = (space.m() + 1.0) / space.m();
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 2.0 * lap[i] - k * g2[i];
  return r;
}

BoundaryField gromov_mean_curvature(const MeasureSpace& space) {
  if (!space.conformally_flat_base()) {
    throw InvalidArgument("mean curvature of a conformally changed space is not materialized");
  }
  BoundaryField h = normal_derivative(space.grid(), space.phi());
  for (double& v : h.values) v = -v;
  return h;
}

ScalarField weighted_laplacian(const MeasureSpace& space, std::span<const double> w) {
  if (!space.conformally_flat_base()) {
    throw InvalidArgument("weighted Laplacian requires the flat base (sigma = 0)");
  }
  const auto& grid = space.grid();
  require_length(w.size(), grid.size(), "weighted_laplacian");
  ScalarField out = laplacian(grid, w);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double dot = 0.0;
    for (std::size_t a = 0; a < grid.dim(); ++a) {
      dot += derivative(grid, w, i, a) * derivative(grid, space.phi(), i, a);
    }
    out[i] -= dot;
  }
  return out;
}

EnergyParts conformal_energy(const MeasureSpace& space, std::span<const double> w) {
  require_length(w.size(), space.grid().size(), "conformal_energy");
  if (space.conformally_flat_base()) return kernels::energy(space.base_operator(), w);
  const ScalarField wb = space.to_base(w);
  return kernels::energy(space.base_operator(), wb);
}

void conformal_energy_gradient(const MeasureSpace& space, std::span<const double> w, std::span<double> out) {
  require_length(w.size(), space.grid().size(), "conformal_energy_gradient");
  if (space.conformally_flat_base()) {
    kernels::energy_gradient(space.base_operator(), w, out);
    return;
  }
  const ScalarField wb = space.to_base(w);
  kernels::energy_gradient(space.base_operator(), wb, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= std::exp(0.5 * space.sigma()[i]);
}

MeasureSpace conformal_change(const MeasureSpace& space, std::span<const double> sigma) {
  const std::size_t N = space.grid().size();
  require_length(sigma.size(), N, "sigma");
  ScalarField total(sigma.begin(), sigma.end());
  if (!space.sigma().empty()) {
    for (std::size_t i = 0; i < N; ++i) total[i] += space.sigma()[i];
  }
  return MeasureSpace(space.grid_ptr(), space.phi(), space.m(), std::move(total));
}

double conformal_law_residual(const MeasureSpace& space, std::span<const double> sigma,
                              std::span<const double> w) {
  const MeasureSpace changed = conformal_change(space, sigma);
  const std::size_t N = space.grid().size();
  const double dm = space.m() + static_cast<double>(space.n()) - 2.0;

  ScalarField u(N, 0.0);
  if (!changed.sigma().empty()) {
    for (std::size_t i = 0; i < N; ++i) u[i] = changed.sigma()[i] / dm;
  }
  const EnergyOperator direct = assemble_energy(space.grid(), changed.phi_hat(), space.m(), u);
  const double e_direct = kernels::energy(direct, w).total();
  const double e_law = conformal_energy(changed, w).total();
  return std::abs(e_direct - e_law) / std::max(1.0, std::abs(e_law));
}

MeasureSpace scale_metric(const MeasureSpace& space, double c) {
  if (!(c > 0.0)) throw InvalidArgument("metric scale factor must be positive");
  auto g = std::make_shared<const Grid>(space.grid().scaled(std::sqrt(c)));
  return MeasureSpace(std::move(g), space.phi(), space.m(), space.sigma());
}

void write_fields_csv(std::ostream& out, const Grid& grid, const std::vector<std::string>& names,
                      const std::vector<std::span<const double>>& fields) {
  if (names.size() != fields.size()) throw InvalidArgument("one name per field is required");
  for (const auto& f : fields) require_length(f.size(), grid.size(), "csv field");
  const auto old_precision = out.precision(17);
  for (std::size_t a = 0; a + 1 < grid.dim(); ++a) out << 'x' << (a + 1) << ',';
  out << 't';
  for (const auto& name : names) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t a = 0; a < grid.dim(); ++a) out << (a ? "," : "") << grid.coordinate(i, a);
    for (const auto& f : fields) out << ',' << f[i];
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace escobar
