#include "escobar/sharp_constants.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "escobar/errors.hpp"

namespace escobar {

namespace {

constexpr double pi = std::numbers::pi;

void require_dimension(std::size_t n) {
  if (n < 3) throw InvalidArgument("n must be at least 3, got " + std::to_string(n));
}

void require_m(double m) {
  if (!(m >= 0.0) || !std::isfinite(m)) throw InvalidArgument("m must be finite and nonnegative");
}

// Second-order first derivative of a line of values sampled with spacing h.
template <class Get>
double line_derivative(Get v, std::size_t i, std::size_t count, double h) {
  if (i == 0) return (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h);
  if (i + 1 == count) return (3.0 * v(i) - 4.0 * v(i - 1) + v(i - 2)) / (2.0 * h);
  return (v(i + 1) - v(i - 1)) / (2.0 * h);
}

template <class Get>
double line_second_derivative(Get v, std::size_t i, std::size_t count, double h) {
  if (i == 0) return (2.0 * v(0) - 5.0 * v(1) + 4.0 * v(2) - v(3)) / (h * h);
  if (i + 1 == count) return (2.0 * v(i) - 5.0 * v(i - 1) + 4.0 * v(i - 2) - v(i - 3)) / (h * h);
  return (v(i + 1) - 2.0 * v(i) + v(i - 1)) / (h * h);
}

double trapezoid_weight(std::size_t i, std::size_t count, double h) {
  return (i == 0 || i + 1 == count) ? 0.5 * h : h;
}

struct RadialMap {
  double R, b;
  double rho(double xi) const { return R * std::expm1(b * xi) / std::expm1(b); }
  double drho(double xi) const { return R * b * std::exp(b * xi) / std::expm1(b); }
};

// Per-radius densities of the three integrals (already integrated over angles).
struct Shells {
  std::vector<double> rho, drho, dirichlet, interior, boundary;
  double h = 0.0;  // spacing in xi
};

Shells compute_shells(const HalfspaceSample& s, double p, std::size_t stride) {
  const std::size_t nr_all = s.rho.size();
  const std::size_t na_all = s.alpha.size();
  const std::size_t nt_all = s.spherical ? s.theta.size() : 1;
  if ((nr_all - 1) % stride != 0 || (na_all - 1) % stride != 0 || (s.spherical && nt_all % stride != 0)) {
    throw InvalidArgument("half-space grid does not admit the requested coarsening");
  }
  const std::size_t nr = (nr_all - 1) / stride + 1;
  const std::size_t na = (na_all - 1) / stride + 1;
  const std::size_t nt = s.spherical ? nt_all / stride : 1;
  const double hx = stride * 1.0 / static_cast<double>(nr_all - 1);
  const double ha = stride * (pi / 2.0) / static_cast<double>(na_all - 1);
  const double ht = s.spherical ? 2.0 * pi / static_cast<double>(nt) : 0.0;
  const double nd = static_cast<double>(s.n);
  const double sphere = s.spherical ? 1.0 : sphere_volume(nd - 2.0);
  const double angle_measure = s.spherical ? ht : 1.0;

  auto value = [&](std::size_t i, std::size_t j, std::size_t k) {
    return s.values[((i * stride) * na_all + j * stride) * nt_all + k * stride];
  };

  Shells out;
  out.h = hx;
  out.rho.resize(nr);
  out.drho.resize(nr);
  out.dirichlet.assign(nr, 0.0);
  out.interior.assign(nr, 0.0);
  out.boundary.assign(nr, 0.0);
  for (std::size_t i = 0; i < nr; ++i) {
    const double rho = s.rho[i * stride];
    const double dr = s.drho[i * stride];
    out.rho[i] = rho;
    out.drho[i] = dr;
    if (rho == 0.0) continue;
    double d = 0.0, in = 0.0, bd = 0.0;
    for (std::size_t j = 0; j < na; ++j) {
      const double a = s.alpha[j * stride];
      const double sa = std::sin(a);
      const double jac = s.spherical ? rho * rho * sa : std::pow(rho, nd - 1.0) * std::pow(sa, nd - 2.0);
      const double wa = trapezoid_weight(j, na, ha);
      for (std::size_t k = 0; k < nt; ++k) {
        const double v = value(i, j, k);
        const double vr = line_derivative([&](std::size_t q) { return value(q, j, k); }, i, nr, hx) / dr;
        const double va = line_derivative([&](std::size_t q) { return value(i, q, k); }, j, na, ha);
        double g2 = vr * vr + va * va / (rho * rho);
        if (s.spherical && j > 0) {
          const double vt = (value(i, j, (k + 1) % nt) - value(i, j, (k + nt - 1) % nt)) / (2.0 * ht);
          g2 += vt * vt / (rho * rho * sa * sa);
        }
        d += g2 * jac * wa * angle_measure;
        in += std::pow(std::abs(v), p) * jac * wa * angle_measure;
        if (j + 1 == na) {
          const double bj = s.spherical ? rho : std::pow(rho, nd - 2.0);
          bd += std::pow(std::abs(v), p) * bj * angle_measure;
        }
      }
    }
    out.dirichlet[i] = sphere * d;
    out.interior[i] = sphere * in;
    out.boundary[i] = sphere * bd;
  }
  return out;
}

double integrate_shell(const Shells& s, const std::vector<double>& shell) {
  double total = 0.0;
  for (std::size_t i = 0; i < shell.size(); ++i) {
    total += shell[i] * s.drho[i] * trapezoid_weight(i, shell.size(), s.h);
  }
  return total;
}

struct Tail {
  double value;
  double uncertainty;
};

// Shell density ~ A rho^{-q} (1 + B/rho) fitted on the last two nodes, integrated to infinity.
Tail shell_tail(const Shells& s, const std::vector<double>& shell, double q) {
  // shell(rho) rho^q = A + B/rho + C/rho^2, fitted at R, ~R/sqrt(2) and ~R/2. The fit
  // points do not move with the grid spacing, so the tail carries no O(h) bias. The
  // two-term fit through R and ~R/2 serves as the error estimate.
  const std::size_t last = shell.size() - 1;
  const auto index_below = [&](double r) {
    std::size_t k = last - 1;
    while (k > 1 && s.rho[k] > r) --k;
    return k;
  };
  const std::size_t ia = index_below(0.5 * s.rho[last]);
  std::size_t ib = index_below(std::sqrt(0.5) * s.rho[last]);
  if (ib == ia) ib = std::min(ia + 1, last - 1);
  const double x1 = 1.0 / s.rho[last], xa = 1.0 / s.rho[ia], xb = 1.0 / s.rho[ib];
  const double y1 = shell[last] / std::pow(x1, q), ya = shell[ia] / std::pow(xa, q), yb = shell[ib] / std::pow(xb, q);
  const double R = s.rho[last];
  const auto integral = [&](double A, double B, double C) {
    return A * std::pow(R, 1.0 - q) / (q - 1.0) + B * std::pow(R, -q) / q + C * std::pow(R, -q - 1.0) / (q + 1.0);
  };
  const double B2 = (y1 - ya) / (x1 - xa);
  const double two_term = integral(y1 - B2 * x1, B2, 0.0);
  if (ib == ia || ib == last) return Tail{two_term, std::abs(two_term - integral(y1, 0.0, 0.0))};
  // Newton divided differences through (x1, y1), (xb, yb), (xa, ya).
  const double d1b = (yb - y1) / (xb - x1), dba = (ya - yb) / (xa - xb);
  const double C = (dba - d1b) / (xa - x1);
  const double B = d1b - C * (x1 + xb);
  const double A = y1 - B * x1 - C * x1 * x1;
  const double three_term = integral(A, B, C);
  return Tail{three_term, std::abs(three_term - two_term)};
}

double quotient_of(const HalfspaceIntegrals& v, double m, std::size_t n) {
  const double d = m + static_cast<double>(n);
  const double alpha = m / (d - 1.0);
  const double beta = (2.0 * m + static_cast<double>(n) - 2.0) / (d - 1.0);
  const double interior = m > 0.0 ? std::pow(v.interior_norm, alpha) : 1.0;
  return v.dirichlet * interior / std::pow(v.boundary_norm, beta);
}

HalfspaceSample make_grid(const HalfspaceQuad& quad, std::size_t n, bool spherical) {
  quad.validate();
  require_dimension(n);
  HalfspaceSample s;
  s.quad = quad;
  s.n = n;
  s.spherical = spherical;
  const RadialMap map{quad.radius, quad.stretch};
  const std::size_t nr = quad.radial_cells + 1;
  for (std::size_t i = 0; i < nr; ++i) {
    const double xi = static_cast<double>(i) / static_cast<double>(quad.radial_cells);
    s.rho.push_back(i == 0 ? 0.0 : map.rho(xi));
    s.drho.push_back(map.drho(xi));
  }
  s.rho.back() = quad.radius;
  for (std::size_t j = 0; j <= quad.polar_cells; ++j) {
    s.alpha.push_back(j == quad.polar_cells ? pi / 2.0
                                            : (pi / 2.0) * static_cast<double>(j) / static_cast<double>(quad.polar_cells));
  }
  if (spherical) {
    for (std::size_t k = 0; k < quad.azimuth_nodes; ++k) {
      s.theta.push_back(2.0 * pi * static_cast<double>(k) / static_cast<double>(quad.azimuth_nodes));
    }
  }
  return s;
}

}  // namespace

double sphere_volume(double k) {
  if (!(k >= 0.0)) throw InvalidArgument("sphere dimension must be nonnegative");
  return 2.0 * std::pow(pi, (k + 1.0) / 2.0) / std::tgamma((k + 1.0) / 2.0);
}

double lambda_mn(double m, std::size_t n) {
  require_m(m);
  require_dimension(n);
  const double nd = static_cast<double>(n);
  if (m == 0.0) return (nd - 2.0) / 2.0 * std::pow(sphere_volume(nd - 1.0), 1.0 / (nd - 1.0));
  const double k = 2.0 * m + nd - 1.0;  // 2m+n-1
  const double d = m + nd - 1.0;        // m+n-1
  const double base = std::pow(sphere_volume(k), 1.0 / k) / (2.0 * (2.0 * m + nd - 2.0));
  const double log_gamma_ratio = std::lgamma(k) - m * std::log(pi) - std::lgamma(d);
  return (m + nd - 2.0) * (m + nd - 2.0) * std::pow(base, k / d) * std::exp(log_gamma_ratio / d);
}

double bubble_c(double m, std::size_t n) {
  if (!(m > 0.0)) throw InvalidArgument("c(m,n) requires m > 0");
  require_dimension(n);
  const double nd = static_cast<double>(n);
  return (m + nd - 1.0) / (m * (m + nd - 2.0) * (m + nd - 2.0));
}

Bubble::Bubble(BubbleParams params) : params_(std::move(params)) {
  require_m(params_.m);
  require_dimension(params_.n);
  if (!(params_.scale > 0.0)) throw InvalidArgument("bubble scale must be positive");
  if (params_.family == BubbleFamily::tau && !(params_.m > 0.0)) {
    throw InvalidArgument("the tau-family requires m > 0");
  }
  if (params_.center.empty()) params_.center.assign(params_.n - 1, 0.0);
  if (params_.center.size() != params_.n - 1) throw InvalidArgument("bubble center needs n-1 coordinates");
  k_ = (params_.m + static_cast<double>(params_.n) - 2.0) / 2.0;
}

double Bubble::operator()(std::span<const double> z) const {
  if (z.size() != params_.n) throw InvalidArgument("bubble point needs n coordinates");
  double r2 = 0.0;
  for (std::size_t a = 0; a + 1 < params_.n; ++a) {
    const double d = z[a] - params_.center[a];
    r2 += d * d;
  }
  return radial(std::sqrt(r2), z[params_.n - 1]);
}

double Bubble::radial(double r, double t) const {
  const double s = params_.scale;
  if (params_.family == BubbleFamily::epsilon) {
    return std::pow(2.0 * s / ((s + t) * (s + t) + r * r), k_);
  }
  const double nd = static_cast<double>(params_.n);
  const double m = params_.m;
  const double c = bubble_c(m, params_.n);
  const double amp = std::pow(s, -(nd - 1.0) * (m + nd - 2.0) / (4.0 * (m + nd - 1.0)));
  const double b = std::sqrt(c / s);
  return amp * std::pow((1.0 + b * t) * (1.0 + b * t) + c * r * r / s, -k_);
}

void Bubble::radial_gradient(double r, double t, double& dr, double& dt) const {
  const double s = params_.scale;
  const double w = radial(r, t);
  if (params_.family == BubbleFamily::epsilon) {
    const double u = (s + t) * (s + t) + r * r;
    dr = -k_ * w * 2.0 * r / u;
    dt = -k_ * w * 2.0 * (s + t) / u;
    return;
  }
  const double c = bubble_c(params_.m, params_.n);
  const double b = std::sqrt(c / s);
  const double u = (1.0 + b * t) * (1.0 + b * t) + c * r * r / s;
  dr = -k_ * w * 2.0 * c * r / (s * u);
  dt = -k_ * w * 2.0 * b * (1.0 + b * t) / u;
}

double Bubble::laplacian(double r, double t) const {
  // w = A u^{-k}, u = (P + Q t)^2 + C r^2.
  const double s = params_.scale;
  double P, Qt, C;
  if (params_.family == BubbleFamily::epsilon) {
    P = s;
    Qt = 1.0;
    C = 1.0;
  } else {
    const double c = bubble_c(params_.m, params_.n);
    P = 1.0;
    Qt = std::sqrt(c / s);
    C = c / s;
  }
  const double nd = static_cast<double>(params_.n);
  const double w = radial(r, t);
  const double l = P + Qt * t;
  const double u = l * l + C * r * r;
  const double k = k_;
  // grad u = (2 C x, 2 Qt l); Delta u = 2 C (n-1) + 2 Qt^2; |grad u|^2 = 4 C^2 r^2 + 4 Qt^2 l^2.
  const double lap_u = 2.0 * C * (nd - 1.0) + 2.0 * Qt * Qt;
  const double grad_u2 = 4.0 * C * C * r * r + 4.0 * Qt * Qt * l * l;
  return w * (-k * lap_u / u + k * (k + 1.0) * grad_u2 / (u * u));
}

double case_integral(double k, double l, double m, double a, double tau) {
  if (!(k >= 0.0) || !(l >= 0.0)) throw InvalidArgument("k and l must be nonnegative");
  if (!(k > l)) throw InvalidArgument("the integral converges only for k > l");
  const double twice_m = 2.0 * m;
  if (!(m > 0.0) || std::abs(twice_m - std::round(twice_m)) > 1e-12) {
    throw InvalidArgument("2m must be a positive integer");
  }
  if (!(a > 0.0) || !(tau > 0.0)) throw InvalidArgument("a and tau must be positive");
  const double log_value = m * std::log(pi) + std::lgamma(m + l) + std::lgamma(m + k - l) + (m + l) * std::log(tau) -
                           std::lgamma(m) - std::lgamma(2.0 * m + k) - (m + k - l) * std::log(a);
  return std::exp(log_value);
}

double bubble_boundary_volume(double m, std::size_t n) {
  const double c = bubble_c(m, n);
  const double h = (static_cast<double>(n) - 1.0) / 2.0;
  return std::pow(pi, h) * std::exp(std::lgamma(m + h) - std::lgamma(m + 2.0 * h)) * std::pow(c, -h);
}

void HalfspaceQuad::validate() const {
  if (!(radius > 0.0)) throw InvalidArgument("truncation radius must be positive");
  if (radial_cells < 16 || polar_cells < 16) throw InvalidArgument("half-space grids need at least 16 cells per axis");
  if (radial_cells % 2 != 0 || polar_cells % 2 != 0) throw InvalidArgument("half-space cell counts must be even");
  if (azimuth_nodes < 16 || azimuth_nodes % 2 != 0) throw InvalidArgument("azimuth nodes must be even and >= 16");
  if (!(stretch > 0.0)) throw InvalidArgument("radial stretch must be positive");
  if (!(tail_tolerance > 0.0)) throw InvalidArgument("tail tolerance must be positive");
}

HalfspaceSample sample_radial(const HalfspaceQuad& quad, std::size_t n,
                              const std::function<double(double, double)>& f) {
  HalfspaceSample s = make_grid(quad, n, false);
  s.values.reserve(s.rho.size() * s.alpha.size());
  for (double rho : s.rho) {
    for (double a : s.alpha) {
      const double t = a == pi / 2.0 ? 0.0 : rho * std::cos(a);
      s.values.push_back(f(rho * std::sin(a), t));
    }
  }
  return s;
}

HalfspaceSample sample_spherical(const HalfspaceQuad& quad, const std::function<double(double, double, double)>& f) {
  HalfspaceSample s = make_grid(quad, 3, true);
  s.values.reserve(s.rho.size() * s.alpha.size() * s.theta.size());
  for (double rho : s.rho) {
    for (double a : s.alpha) {
      const double r = rho * std::sin(a);
      const double t = a == pi / 2.0 ? 0.0 : rho * std::cos(a);
      for (double th : s.theta) s.values.push_back(f(r * std::cos(th), r * std::sin(th), t));
    }
  }
  return s;
}

HalfspaceIntegrals halfspace_integrals(const HalfspaceSample& sample, double m, std::size_t stride) {
  require_m(m);
  const double nd = static_cast<double>(sample.n);
  const double p = 2.0 * (m + nd - 1.0) / (m + nd - 2.0);
  const Shells sh = compute_shells(sample, p, stride);
  return HalfspaceIntegrals{integrate_shell(sh, sh.dirichlet), integrate_shell(sh, sh.interior),
                            integrate_shell(sh, sh.boundary)};
}

HalfspaceResult halfspace_quotient(const HalfspaceSample& sample, double m) {
  require_m(m);
  const double nd = static_cast<double>(sample.n);
  const double p = 2.0 * (m + nd - 1.0) / (m + nd - 2.0);
  const Shells fine = compute_shells(sample, p, 1);
  const Shells half = compute_shells(sample, p, 2);

  const double q_volume = 2.0 * m + nd - 1.0;
  const double q_boundary = 2.0 * m + nd;
  const Tail tD = shell_tail(fine, fine.dirichlet, q_volume);
  const Tail tI = shell_tail(fine, fine.interior, q_volume);
  const Tail tB = shell_tail(fine, fine.boundary, q_boundary);

  HalfspaceResult r;
  r.m = m;
  r.n = sample.n;
  r.tails = HalfspaceIntegrals{tD.value, tI.value, tB.value};
  r.integrals = HalfspaceIntegrals{integrate_shell(fine, fine.dirichlet) + tD.value,
                                   integrate_shell(fine, fine.interior) + tI.value,
                                   integrate_shell(fine, fine.boundary) + tB.value};
  // The tail fit reads the outermost shells, so it is redone on the coarse grid
  // and its resolution dependence enters the Richardson estimate.
  const HalfspaceIntegrals coarse{
      integrate_shell(half, half.dirichlet) + shell_tail(half, half.dirichlet, q_volume).value,
      integrate_shell(half, half.interior) + shell_tail(half, half.interior, q_volume).value,
      integrate_shell(half, half.boundary) + shell_tail(half, half.boundary, q_boundary).value};
  if (!(r.integrals.boundary_norm > 0.0)) throw UndefinedQuotient("boundary norm is zero");
  if (m > 0.0 && !(r.integrals.interior_norm > 0.0)) throw UndefinedQuotient("interior norm is zero");

  const double relD = tD.uncertainty / std::abs(r.integrals.dirichlet);
  const double relI = tI.uncertainty / r.integrals.interior_norm;
  const double relB = tB.uncertainty / r.integrals.boundary_norm;
  const double worst = std::max({relD, m > 0.0 ? relI : 0.0, relB});
  if (worst > sample.quad.tail_tolerance) {
    const double suggestion = sample.quad.radius * std::sqrt(worst / sample.quad.tail_tolerance) * 1.5;
    throw NumericRefusal("tail uncertainty " + std::to_string(worst) + " exceeds tolerance " +
                         std::to_string(sample.quad.tail_tolerance) + "; try a truncation radius >= " +
                         std::to_string(suggestion));
  }

  const double alpha = m / (m + nd - 1.0);
  const double beta = (2.0 * m + nd - 2.0) / (m + nd - 1.0);
  r.Q = quotient_of(r.integrals, m, sample.n);
  const double Q2 = quotient_of(coarse, m, sample.n);
  r.grid_error = std::abs(r.Q - Q2) / 2.0;
  r.tail_error = std::abs(r.Q) * (relD + alpha * relI + beta * relB);
  r.error = r.grid_error + r.tail_error;
  return r;
}

LiftResidual lift_check(const std::function<double(double, double)>& w, double m, std::size_t n, double tau,
                        const LiftQuad& quad) {
  if (m != 1.0 && m != 2.0) throw InvalidArgument("lift_check supports m = 1 and m = 2");
  require_dimension(n);
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  if (quad.radial_cells < 8 || quad.polar_cells < 8 || quad.lift_cells < 8) {
    throw InvalidArgument("lift grids need at least 8 cells per axis");
  }
  const double nd = static_cast<double>(n);
  const double p = 2.0 * (m + nd - 1.0) / (m + nd - 2.0);
  const double lifted_p = 2.0 * (2.0 * m + nd - 1.0) / (2.0 * m + nd - 2.0);
  const double sphere_x = sphere_volume(nd - 2.0);
  const double sphere_y = sphere_volume(2.0 * m - 1.0);

  const std::size_t nr = quad.radial_cells + 1, na = quad.polar_cells + 1, ns = quad.lift_cells + 1;
  const double hx = 1.0 / static_cast<double>(quad.radial_cells);
  const double ha = (pi / 2.0) / static_cast<double>(quad.polar_cells);
  const double hz = 1.0 / static_cast<double>(quad.lift_cells);
  const RadialMap map{quad.radius, quad.stretch};

  std::vector<double> rho(nr), drho(nr), alpha(na), s(ns), ds(ns);
  for (std::size_t i = 0; i < nr; ++i) {
    rho[i] = i == 0 ? 0.0 : map.rho(static_cast<double>(i) * hx);
    drho[i] = map.drho(static_cast<double>(i) * hx);
  }
  for (std::size_t j = 0; j < na; ++j) alpha[j] = j + 1 == na ? pi / 2.0 : static_cast<double>(j) * ha;
  for (std::size_t k = 0; k + 1 < ns; ++k) {
    const double z = static_cast<double>(k) * hz * pi / 2.0;
    s[k] = quad.lift_scale * std::tan(z);
    ds[k] = quad.lift_scale * (pi / 2.0) / (std::cos(z) * std::cos(z));
  }

  std::vector<double> wv(nr * na), av(nr * na);
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < na; ++j) {
      const double t = j + 1 == na ? 0.0 : rho[i] * std::cos(alpha[j]);
      const double v = w(rho[i] * std::sin(alpha[j]), t);
      if (!(v > 0.0)) throw InvalidArgument("lift_check requires a strictly positive field");
      wv[i * na + j] = v;
      av[i * na + j] = std::pow(v, -2.0 / (m + nd - 2.0));
    }
  }
  // f at the last |y| node (infinity) is zero.
  const double f_exp = -(2.0 * m + nd - 2.0) / 2.0;
  std::vector<double> f(nr * na * ns, 0.0);
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < na; ++j) {
      for (std::size_t k = 0; k + 1 < ns; ++k) {
        f[(i * na + j) * ns + k] = std::pow(av[i * na + j] + s[k] * s[k] / tau, f_exp);
      }
    }
  }
  auto F = [&](std::size_t i, std::size_t j, std::size_t k) { return f[(i * na + j) * ns + k]; };

  double reduced_dirichlet = 0.0, reduced_interior = 0.0, reduced_boundary = 0.0;
  double lifted_gradient = 0.0, lifted_boundary = 0.0;
  for (std::size_t i = 1; i < nr; ++i) {
    const double wr = trapezoid_weight(i, nr, hx) * drho[i];
    for (std::size_t j = 0; j < na; ++j) {
      const double sa = std::sin(alpha[j]);
      const double vol = sphere_x * std::pow(rho[i], nd - 1.0) * std::pow(sa, nd - 2.0) * wr *
                         trapezoid_weight(j, na, ha);
      const double w_r = line_derivative([&](std::size_t q) { return wv[q * na + j]; }, i, nr, hx) / drho[i];
      const double w_a = line_derivative([&](std::size_t q) { return wv[i * na + q]; }, j, na, ha);
      reduced_dirichlet += (w_r * w_r + w_a * w_a / (rho[i] * rho[i])) * vol;
      reduced_interior += std::pow(wv[i * na + j], p) * vol;
      const bool boundary = j + 1 == na;
      const double bvol = sphere_x * std::pow(rho[i], nd - 2.0) * wr;
      if (boundary) reduced_boundary += case_integral(nd - 1.0, 0.0, m, av[i * na + j], tau) * bvol;

      for (std::size_t k = 0; k + 1 < ns; ++k) {
        const double ymeas = sphere_y * std::pow(s[k], 2.0 * m - 1.0) * ds[k] * trapezoid_weight(k, ns, hz);
        if (ymeas == 0.0) continue;
        const double f_r = line_derivative([&](std::size_t q) { return F(q, j, k); }, i, nr, hx) / drho[i];
        const double f_a = line_derivative([&](std::size_t q) { return F(i, q, k); }, j, na, ha);
        const double f_s = line_derivative([&](std::size_t q) { return F(i, j, q); }, k, ns, hz) / ds[k];
        lifted_gradient += (f_r * f_r + f_a * f_a / (rho[i] * rho[i]) + f_s * f_s) * vol * ymeas;
        if (boundary) lifted_boundary += std::pow(F(i, j, k), lifted_p) * bvol * ymeas;
      }
    }
  }

  const double g_mn = std::tgamma(m + nd), g_2mn = std::tgamma(2.0 * m + nd);
  const double pm = std::pow(pi, m);
  const double k1 = (2.0 * m + nd - 2.0) / (m + nd - 2.0);
  const double reduced_gradient =
      k1 * k1 * (pm * std::pow(tau, m) * g_mn / g_2mn) * reduced_dirichlet +
      (m * (2.0 * m + nd - 2.0) * (2.0 * m + nd - 2.0) * pm * std::pow(tau, m - 1.0) * g_mn /
       ((m + nd - 1.0) * g_2mn)) *
          reduced_interior;

  LiftResidual out;
  out.lifted_boundary = lifted_boundary;
  out.reduced_boundary = reduced_boundary;
  out.lifted_gradient = lifted_gradient;
  out.reduced_gradient = reduced_gradient;
  out.boundary = std::abs(lifted_boundary - reduced_boundary) / std::abs(reduced_boundary);
  out.gradient = std::abs(lifted_gradient - reduced_gradient) / std::abs(reduced_gradient);
  return out;
}

BubbleElResidual bubble_el_residual(const BubbleParams& params, const HalfspaceQuad& quad) {
  if (params.family != BubbleFamily::tau) throw InvalidArgument("the residual is defined for the tau-family");
  quad.validate();
  const Bubble bubble(params);
  const double m = params.m, tau = params.scale;
  const double nd = static_cast<double>(params.n);
  const double ta = std::pow(tau, m / (2.0 * (m + nd - 1.0)));
  const double power = (m + nd) / (m + nd - 2.0);
  const double k_int = (m + nd - 1.0) / (m + nd - 2.0) / std::sqrt(tau);
  const double k_bd = std::sqrt((m + nd - 1.0) / m);

  // Tensor (r, t) grid about x_0 with the odd map s(xi) = R sinh(b xi)/sinh(b) on both
  // axes, so w is even in xi_r and the axis r = 0 is handled by reflection.
  const std::size_t N = quad.radial_cells + 1;
  const double h = 1.0 / static_cast<double>(quad.radial_cells);
  const double b = quad.stretch;
  std::vector<double> x(N), dx(N), ddx(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double xi = static_cast<double>(i) * h;
    x[i] = quad.radius * std::sinh(b * xi) / std::sinh(b);
    dx[i] = quad.radius * b * std::cosh(b * xi) / std::sinh(b);
    ddx[i] = b * b * x[i];
  }
  std::vector<double> v(N * N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) v[i * N + j] = bubble.radial(x[i], x[j]);
  }
  auto V = [&](std::size_t i, std::size_t j) { return v[i * N + j]; };
  // Second derivative in the mapped coordinate: f_ss = (f_xixi - s'' f_s) / s'^2.
  auto mapped_second = [&](double f_xixi, double f_s, std::size_t k) { return (f_xixi - ddx[k] * f_s) / (dx[k] * dx[k]); };

  double int_res = 0.0, int_scale = 0.0, bd_res = 0.0, bd_scale = 0.0;
  for (std::size_t i = 0; i + 2 < N; ++i) {
    for (std::size_t j = 0; j + 2 < N; ++j) {
      const double w = V(i, j);
      const double nonlinear = std::pow(w, power);
      const double up = V(i + 1, j), down = i == 0 ? V(1, j) : V(i - 1, j);
      const double r_xixi = (up - 2.0 * w + down) / (h * h);
      double radial;
      if (i == 0) {
        // (n-2)/r w_r -> (n-2) w_rr on the axis.
        radial = (nd - 1.0) * r_xixi / (dx[0] * dx[0]);
      } else {
        const double w_r = (up - down) / (2.0 * h) / dx[i];
        radial = mapped_second(r_xixi, w_r, i) + (nd - 2.0) / x[i] * w_r;
      }
      if (j == 0) {
        const double w_t = (-3.0 * w + 4.0 * V(i, 1) - V(i, 2)) / (2.0 * h) / dx[0];
        bd_res = std::max(bd_res, std::abs(-ta * w_t - k_bd * nonlinear));
        bd_scale = std::max(bd_scale, k_bd * nonlinear);
        continue;
      }
      const double w_t = (V(i, j + 1) - V(i, j - 1)) / (2.0 * h) / dx[j];
      const double t_xixi = (V(i, j + 1) - 2.0 * w + V(i, j - 1)) / (h * h);
      const double lap = radial + mapped_second(t_xixi, w_t, j);
      int_res = std::max(int_res, std::abs(-ta * lap + k_int * nonlinear));
      int_scale = std::max(int_scale, k_int * nonlinear);
    }
  }
  return BubbleElResidual{int_res / int_scale, bd_res / bd_scale};
}

double bubble_boundary_volume_quadrature(double m, std::size_t n, const HalfspaceQuad& quad) {
  quad.validate();
  const double c = bubble_c(m, n);
  const double nd = static_cast<double>(n);
  const double q = m + nd - 1.0;
  const double sphere = sphere_volume(nd - 2.0);
  const RadialMap map{quad.radius, quad.stretch};
  const std::size_t cells = 32 * quad.radial_cells;
  const double h = 1.0 / static_cast<double>(cells);

  auto volume = [&](double tau) {
    // Trace of the family: tau^{-(n-1)/2} (1 + c r^2/tau)^{-(m+n-1)}; Simpson in xi.
    double inner = 0.0;
    for (std::size_t i = 0; i <= cells; ++i) {
      const double xi = static_cast<double>(i) * h;
      const double r = map.rho(xi);
      const double g = std::pow(tau, -(nd - 1.0) / 2.0) * std::pow(1.0 + c * r * r / tau, -q) *
                       std::pow(r, nd - 2.0) * map.drho(xi);
      const double wgt = (i == 0 || i == cells) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      inner += wgt * g;
    }
    inner *= sphere * h / 3.0;
    const double R = quad.radius;
    const double e = tau / c;
    const double tail = std::pow(tau, -(nd - 1.0) / 2.0) * sphere * std::pow(e, q) *
                        (std::pow(R, nd - 1.0 - 2.0 * q) / (2.0 * q - nd + 1.0) -
                         q * e * std::pow(R, nd - 3.0 - 2.0 * q) / (2.0 * q - nd + 3.0) +
                         0.5 * q * (q + 1.0) * e * e * std::pow(R, nd - 5.0 - 2.0 * q) / (2.0 * q - nd + 5.0));
    return inner + tail;
  };
  const double v1 = volume(1.0);
  const double v2 = volume(0.25);
  if (std::abs(v1 - v2) > 1e-6 * std::abs(v1)) {
    throw NumericRefusal("boundary volume differs between tau = 1 and tau = 1/4 by " +
                         std::to_string(std::abs(v1 - v2) / std::abs(v1)) + " relative");
  }
  return v1;
}

ConstantRow constant_row(double m, std::size_t n, const HalfspaceQuad& quad) {
  const Bubble bubble(BubbleParams{m, n, BubbleFamily::epsilon, 1.0, {}});
  const auto sample = sample_radial(quad, n, [&](double r, double t) { return bubble.radial(r, t); });
  const auto res = halfspace_quotient(sample, m);
  ConstantRow row;
  row.m = m;
  row.n = n;
  row.lambda = lambda_mn(m, n);
  row.estimate = res.Q;
  row.error_budget = res.error;
  row.rel_error = std::abs(res.Q - row.lambda) / row.lambda;
  return row;
}

void write_constants_csv(std::ostream& out, const std::vector<ConstantRow>& rows) {
  const auto old = out.precision(17);
  out << "m,n,lambda,estimate,error_budget,rel_error\n";
  for (const auto& r : rows) {
    out << r.m << ',' << r.n << ',' << r.lambda << ',' << r.estimate << ',' << r.error_budget << ',' << r.rel_error
        << '\n';
  }
  out.precision(old);
}

void to_json(nlohmann::json& j, const HalfspaceResult& r) {
  j = nlohmann::json{{"Q", r.Q},
                     {"dirichlet", r.integrals.dirichlet},
                     {"interior_norm", r.integrals.interior_norm},
                     {"boundary_norm", r.integrals.boundary_norm},
                     {"tail_dirichlet", r.tails.dirichlet},
                     {"tail_interior_norm", r.tails.interior_norm},
                     {"tail_boundary_norm", r.tails.boundary_norm},
                     {"grid_error", r.grid_error},
                     {"tail_error", r.tail_error},
                     {"error", r.error},
                     {"m", r.m},
                     {"n", r.n}};
}

void to_json(nlohmann::json& j, const ConstantRow& r) {
  j = nlohmann::json{{"m", r.m},
                     {"n", r.n},
                     {"lambda", r.lambda},
                     {"lambda_error", "exact closed form"},
                     {"estimate", r.estimate},
                     {"error_budget", r.error_budget},
                     {"rel_error", r.rel_error}};
}

void to_json(nlohmann::json& j, const LiftResidual& r) {
  j = nlohmann::json{{"boundary_residual", r.boundary},   {"gradient_residual", r.gradient},
                     {"lifted_boundary", r.lifted_boundary}, {"reduced_boundary", r.reduced_boundary},
                     {"lifted_gradient", r.lifted_gradient}, {"reduced_gradient", r.reduced_gradient}};
}

}  // namespace escobar
