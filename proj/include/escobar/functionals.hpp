#pragma once

// The weighted Escobar quotient, the W-functional, boundary normalization and
// the closed-form bridges between the tau-energy and the Escobar constant.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "escobar/geometry.hpp"

namespace escobar {

/// Exponents attached to (m, n).
struct Exponents {
  double p;      // 2(m+n-1)/(m+n-2), both norms
  double alpha;  // m/(m+n-1), interior norm in Q
  double beta;   // (2m+n-2)/(m+n-1), boundary norm in Q
  double a;      // m/(2(m+n-1)), power of tau on the energy in W
};
Exponents exponents(double m, std::size_t n);

struct QuotientBreakdown {
  double dirichlet = 0.0;
  double curv_interior = 0.0;
  double curv_boundary = 0.0;
  double interior_norm = 0.0;
  double boundary_norm = 0.0;
  double Q = 0.0;
  double m = 0.0;
  std::size_t n = 0;

  double energy() const { return dirichlet + curv_interior + curv_boundary; }
};

void to_json(nlohmann::json& j, const QuotientBreakdown& b);

/// Energy parts and both norms, without forming Q (never throws on zero norms).
QuotientBreakdown evaluate_parts(const MeasureSpace& space, std::span<const double> w);

/// Q(w) = E I^alpha / Bd^beta; the I factor is 1 when m = 0.
/// Throws UndefinedQuotient when Bd = 0, or I = 0 with m > 0.
QuotientBreakdown escobar_quotient(const MeasureSpace& space, std::span<const double> w);

/// Q(w) and dQ/dw.
QuotientBreakdown escobar_quotient_gradient(const MeasureSpace& space, std::span<const double> w,
                                            std::span<double> grad);

/// tau^{m/(2(m+n-1))} E + tau^{-1/2} I - Bd.
double w_functional(const MeasureSpace& space, std::span<const double> w, double tau);
double w_functional(const QuotientBreakdown& parts, double tau);

/// Value and gradient of the 0-homogeneous extension F(w) = W(w Bd(w)^{-1/p}, tau).
double w_functional_homogeneous(const MeasureSpace& space, std::span<const double> w, double tau,
                                std::span<double> grad);

struct HMin {
  double tau0;
  double value;
};
/// h(tau) = B tau^p + C tau^{-q}.
double h_value(double p, double q, double B, double C, double tau);
/// Minimizer and minimum of h over tau > 0.
HMin h_min(double p, double q, double B, double C);

/// Real number or negative infinity, kept apart from floating-point infinities.
class ExtendedReal {
 public:
  static ExtendedReal finite(double v) { return ExtendedReal(false, v); }
  static ExtendedReal negative_infinity() { return ExtendedReal(true, 0.0); }
  bool is_negative_infinity() const { return neg_inf_; }
  /// Throws when the value is negative infinity.
  double value() const;
  std::string to_string() const;
  bool operator==(const ExtendedReal& other) const {
    return neg_inf_ == other.neg_inf_ && (neg_inf_ || value_ == other.value_);
  }

 private:
  ExtendedReal(bool neg_inf, double v) : neg_inf_(neg_inf), value_(v) {}
  bool neg_inf_;
  double value_;
};

/// nu as a function of Lambda: -infinity for Lambda < 0, -1 at Lambda = 0,
/// (2m+n-1)/m [m Lambda/(m+n-1)]^{(m+n-1)/(2m+n-1)} - 1 for Lambda > 0. Requires m > 0.
ExtendedReal nu_from_lambda(double lambda, double m, std::size_t n);

/// Inverse bridge. Returns nullopt for nu = -infinity: only Lambda < 0 is known.
/// Throws for finite nu < -1 (outside the bridge's range) and for m = 0.
std::optional<double> lambda_from_nu(ExtendedReal nu, double m, std::size_t n);

/// tau at which a volume-normalized minimizer of Lambda realizes nu:
/// [(m+n-1) I / (m E)]^{2(m+n-1)/(2m+n-1)}. Requires E > 0, I > 0, m > 0.
double tau_of_minimizer(double energy, double interior_norm, double m, std::size_t n);

/// c_3 of the W Euler-Lagrange boundary equation, tau^a E + ((m+n-1)/(m+n-2)) tau^{-1/2} I.
double w_boundary_constant(const QuotientBreakdown& parts, double tau);
/// c_3 at a joint minimizer (w, tau) of the energy: (m+n-1)(2m+n-2)/((m+n-2)(2m+n-1)) (nu + 1).
double w_boundary_constant_at_minimum(double nu, double m, std::size_t n);

/// w / Bd(w)^{1/p}. Throws UndefinedQuotient for a zero boundary trace.
ScalarField boundary_normalize(const MeasureSpace& space, std::span<const double> w);

}  // namespace escobar
