#include "escobar/functionals.hpp"

#include <cmath>
#include <sstream>

#include "escobar/errors.hpp"

namespace escobar {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(what) + " must be positive and finite");
}

void require_bridge_m(double m) {
  if (m == 0.0) throw InvalidArgument("the nu-Lambda bridge is unsupported for m = 0");
  require_positive(m, "m");
}

void check_defined(const QuotientBreakdown& b) {
  if (!(b.boundary_norm > 0.0)) throw UndefinedQuotient("boundary norm is zero");
  if (b.m > 0.0 && !(b.interior_norm > 0.0)) throw UndefinedQuotient("interior norm is zero");
}

void set_quotient(QuotientBreakdown& b) {
  const auto ex = exponents(b.m, b.n);
  const double interior = b.m > 0.0 ? std::pow(b.interior_norm, ex.alpha) : 1.0;
  b.Q = b.energy() * interior / std::pow(b.boundary_norm, ex.beta);
}

// out_i = d/dw_i sum_j weights_j |w_j|^p, chained through w = chain * wb.
void power_gradient(std::span<const double> wb, std::span<const double> weights, double p,
                    const ScalarField& sigma, std::span<double> out) {
  for (std::size_t i = 0; i < wb.size(); ++i) {
    double d = weights[i] == 0.0 ? 0.0 : p * weights[i] * std::pow(std::abs(wb[i]), p - 1.0) * sign(wb[i]);
    if (!sigma.empty()) d *= std::exp(0.5 * sigma[i]);
    out[i] = d;
  }
}

}  // namespace

Exponents exponents(double m, std::size_t n) {
  const double d = m + static_cast<double>(n);
  return Exponents{2.0 * (d - 1.0) / (d - 2.0), m / (d - 1.0), (2.0 * m + static_cast<double>(n) - 2.0) / (d - 1.0),
                   m / (2.0 * (d - 1.0))};
}

void to_json(nlohmann::json& j, const QuotientBreakdown& b) {
  j = nlohmann::json{{"dirichlet", b.dirichlet},         {"curv_interior", b.curv_interior},
                     {"curv_boundary", b.curv_boundary}, {"interior_norm", b.interior_norm},
                     {"boundary_norm", b.boundary_norm}, {"Q", b.Q},
                     {"m", b.m},                         {"n", b.n}};
}

QuotientBreakdown evaluate_parts(const MeasureSpace& space, std::span<const double> w) {
  const ScalarField wb = space.to_base(w);
  const auto e = kernels::energy(space.base_operator(), wb);
  const double p = space.critical_exponent();
  QuotientBreakdown b;
  b.dirichlet = e.dirichlet;
  b.curv_interior = e.curvature;
  b.curv_boundary = e.boundary;
  b.interior_norm = kernels::power_sum(wb, space.interior_norm_weights(), p);
  b.boundary_norm = kernels::power_sum(wb, space.boundary_norm_weights(), p);
  b.m = space.m();
  b.n = space.n();
  return b;
}

QuotientBreakdown escobar_quotient(const MeasureSpace& space, std::span<const double> w) {
  QuotientBreakdown b = evaluate_parts(space, w);
  check_defined(b);
  set_quotient(b);
  return b;
}

QuotientBreakdown escobar_quotient_gradient(const MeasureSpace& space, std::span<const double> w,
                                            std::span<double> grad) {
  const std::size_t N = space.grid().size();
  if (grad.size() != N) throw InvalidArgument("gradient buffer has the wrong length");
  QuotientBreakdown b = escobar_quotient(space, w);
  const auto ex = exponents(b.m, b.n);
  const ScalarField wb = space.to_base(w);

  conformal_energy_gradient(space, w, grad);
  const double interior = b.m > 0.0 ? std::pow(b.interior_norm, ex.alpha) : 1.0;
  const double scale = interior / std::pow(b.boundary_norm, ex.beta);
  for (double& g : grad) g *= scale;

  ScalarField d(N);
  if (b.m > 0.0) {
    power_gradient(wb, space.interior_norm_weights(), ex.p, space.sigma(), d);
    const double k = b.Q * ex.alpha / b.interior_norm;
    for (std::size_t i = 0; i < N; ++i) grad[i] += k * d[i];
  }
  power_gradient(wb, space.boundary_norm_weights(), ex.p, space.sigma(), d);
  const double k = -b.Q * ex.beta / b.boundary_norm;
  for (std::size_t i = 0; i < N; ++i) grad[i] += k * d[i];
  return b;
}

double w_functional(const QuotientBreakdown& parts, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  const auto ex = exponents(parts.m, parts.n);
  return std::pow(tau, ex.a) * parts.energy() + parts.interior_norm / std::sqrt(tau) - parts.boundary_norm;
}

double w_functional(const MeasureSpace& space, std::span<const double> w, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  return w_functional(evaluate_parts(space, w), tau);
}

double w_functional_homogeneous(const MeasureSpace& space, std::span<const double> w, double tau,
                                std::span<double> grad) {
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  const std::size_t N = space.grid().size();
  if (grad.size() != N) throw InvalidArgument("gradient buffer has the wrong length");
  const QuotientBreakdown b = evaluate_parts(space, w);
  if (!(b.boundary_norm > 0.0)) throw UndefinedQuotient("boundary norm is zero");
  const auto ex = exponents(b.m, b.n);
  const double s = std::pow(b.boundary_norm, -1.0 / ex.p);
  const double ta = std::pow(tau, ex.a);
  const double ti = 1.0 / std::sqrt(tau);
  // Parts at the normalized field: E scales by s^2, I by s^p, Bd becomes 1.
  const double value = ta * s * s * b.energy() + ti * std::pow(s, ex.p) * b.interior_norm - 1.0;

  // Gradient of E, I at w, then chain through the normalization. On the
  // normalized field dF = dW - beta_i w^{p-1} <dW, w>; written at w directly.
  const ScalarField wb = space.to_base(w);
  ScalarField gE(N), dI(N), dB(N);
  conformal_energy_gradient(space, w, gE);
  power_gradient(wb, space.interior_norm_weights(), ex.p, space.sigma(), dI);
  power_gradient(wb, space.boundary_norm_weights(), ex.p, space.sigma(), dB);
  // G(w) = ta s^2 E + ti s^p I with s = Bd^{-1/p}: d(s^k)/dw = -(k/p) s^k dB / Bd.
  const double cE = ta * s * s;
  const double cI = ti * std::pow(s, ex.p);
  const double shift = (2.0 / ex.p) * cE * b.energy() + cI * b.interior_norm;
  for (std::size_t i = 0; i < N; ++i) {
    grad[i] = cE * gE[i] + cI * dI[i] - shift * dB[i] / b.boundary_norm;
  }
  return value;
}

double h_value(double p, double q, double B, double C, double tau) {
  return B * std::pow(tau, p) + C * std::pow(tau, -q);
}

HMin h_min(double p, double q, double B, double C) {
  require_positive(p, "p");
  require_positive(q, "q");
  require_positive(B, "B");
  require_positive(C, "C");
  const double s = p + q;
  const double tau0 = std::pow(q * C / (p * B), 1.0 / s);
  const double value = std::pow(B, q / s) * std::pow(C, p / s) * std::pow(q / p, p / s) * (s / q);
  return HMin{tau0, value};
}

double ExtendedReal::value() const {
  if (neg_inf_) throw InvalidArgument("value of negative infinity requested");
  return value_;
}

std::string ExtendedReal::to_string() const {
  if (neg_inf_) return "-inf";
  std::ostringstream os;
  os.precision(17);
  os << value_;
  return os.str();
}

ExtendedReal nu_from_lambda(double lambda, double m, std::size_t n) {
  require_bridge_m(m);
  if (std::isnan(lambda)) throw InvalidArgument("Lambda is NaN");
  if (lambda < 0.0) return ExtendedReal::negative_infinity();
  if (lambda == 0.0) return ExtendedReal::finite(-1.0);
  const double d = m + static_cast<double>(n) - 1.0;  // m+n-1
  const double e = m + d;                             // 2m+n-1
  return ExtendedReal::finite(e / m * std::pow(m * lambda / d, d / e) - 1.0);
}

std::optional<double> lambda_from_nu(ExtendedReal nu, double m, std::size_t n) {
  require_bridge_m(m);
  if (nu.is_negative_infinity()) return std::nullopt;
  const double v = nu.value();
  if (v < -1.0) throw InvalidArgument("finite nu below -1 is outside the bridge's range");
  if (v == -1.0) return 0.0;
  const double d = m + static_cast<double>(n) - 1.0;
  const double e = m + d;
  return d / m * std::pow(m * (v + 1.0) / e, e / d);
}

double tau_of_minimizer(double energy, double interior_norm, double m, std::size_t n) {
  require_bridge_m(m);
  require_positive(energy, "energy");
  require_positive(interior_norm, "interior norm");
  const double d = m + static_cast<double>(n) - 1.0;
  const double e = m + d;
  return std::pow(d * interior_norm / (m * energy), 2.0 * d / e);
}

double w_boundary_constant(const QuotientBreakdown& parts, double tau) {
  const auto ex = exponents(parts.m, parts.n);
  const double d = parts.m + static_cast<double>(parts.n);
  return std::pow(tau, ex.a) * parts.energy() + (d - 1.0) / (d - 2.0) * parts.interior_norm / std::sqrt(tau);
}

double w_boundary_constant_at_minimum(double nu, double m, std::size_t n) {
  const double nd = static_cast<double>(n);
  return (m + nd - 1.0) * (2.0 * m + nd - 2.0) / ((m + nd - 2.0) * (2.0 * m + nd - 1.0)) * (nu + 1.0);
}

ScalarField boundary_normalize(const MeasureSpace& space, std::span<const double> w) {
  const ScalarField wb = space.to_base(w);
  const double p = space.critical_exponent();
  const double bd = kernels::power_sum(wb, space.boundary_norm_weights(), p);
  if (!(bd > 0.0)) throw UndefinedQuotient("cannot normalize a field with zero boundary trace");
  const double s = std::pow(bd, -1.0 / p);
  ScalarField out(w.begin(), w.end());
  for (double& v : out) v *= s;
  return out;
}

}  // namespace escobar
