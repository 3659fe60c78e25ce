#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "escobar/errors.hpp"
#include "escobar/functionals.hpp"
#include "escobar/minimizer.hpp"
#include "helpers.hpp"

using namespace escobar;
using testing::pi;

namespace {

// Independent oracle for h_min: coarse bracketing scan in log tau, then golden-section search.
std::pair<double, double> golden_min(double p, double q, double B, double C) {
  const auto h = [&](double s) { return h_value(p, q, B, C, std::exp(s)); };
  double best = -60.0;
  for (double s = -60.0; s <= 60.0; s += 0.01) {
    if (h(s) < h(best)) best = s;
  }
  double lo = best - 0.01, hi = best + 0.01;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = h(x1), f2 = h(x2);
  for (int k = 0; k < 200 && hi - lo > 1e-15; ++k) {
    if (f1 < f2) {
      hi = x2, x2 = x1, f2 = f1;
      x1 = hi - g * (hi - lo), f1 = h(x1);
    } else {
      lo = x1, x1 = x2, f1 = f2;
      x2 = lo + g * (hi - lo), f2 = h(x2);
    }
  }
  const double s = 0.5 * (lo + hi);
  return {std::exp(s), h(s)};
}

ScalarField bumpy(const Grid& g) {
  return sample(g, [](std::span<const double> z) {
    return 1.0 + 0.3 * std::cos(2 * pi * z[0]) * std::sin(2 * pi * z[1]) + 0.4 * z[2] * z[2];
  });
}

}  // namespace

TEST_SUITE("functionals") {
  TEST_CASE("exponents") {
    const auto e = exponents(1.0, 3);
    CHECK(e.p == doctest::Approx(3.0));
    CHECK(e.alpha == doctest::Approx(1.0 / 3.0));
    CHECK(e.beta == doctest::Approx(1.0));
    CHECK(e.a == doctest::Approx(1.0 / 6.0));
    // Degree-0 homogeneity of Q: 2 alpha' + 2 - 2 beta' = 0 with alpha' = p alpha / 2, beta' = p beta / 2.
    for (double m : {0.0, 0.5, 1.0, 3.0}) {
      for (std::size_t n : {3ul, 4ul, 6ul}) {
        const auto x = exponents(m, n);
        CHECK(x.p * x.alpha + 2.0 - x.p * x.beta == doctest::Approx(0.0));
      }
    }
  }

  TEST_CASE("quotient of constants") {
    SUBCASE("flat space: zero") {
      for (double m : {0.0, 1.0, 2.5}) {
        const auto s = testing::space(6, 7, m);
        CHECK(escobar_quotient(s, ScalarField(s.grid().size(), 1.0)).Q == 0.0);
      }
    }
    SUBCASE("linear weight with m < 1: negative") {
      const auto s = testing::space(6, 13, 0.5, [](std::span<const double> z) { return 2.0 * z[2]; });
      CHECK(escobar_quotient(s, ScalarField(s.grid().size(), 1.0)).Q < -0.1);
    }
    SUBCASE("linear weight with m = 1: zero up to discretization") {
      // E(1) = c_R ((m-1)/m) int |grad phi|^2 e^{-phi} vanishes when m = 1.
      std::vector<double> q;
      for (std::size_t N : {9, 17, 33}) {
        const auto s = testing::space(4, N, 1.0, [](std::span<const double> z) { return 2.0 * z[2]; });
        q.push_back(std::abs(escobar_quotient(s, ScalarField(s.grid().size(), 1.0)).Q));
      }
      CHECK(q[2] < 1e-2);
      CHECK(q[1] / q[2] == doctest::Approx(4.0).epsilon(0.1));
    }
  }

  TEST_CASE("quotient is scale invariant and sign blind") {
    const auto s = testing::space(6, 7, 1.0, [](std::span<const double> z) { return 0.5 * z[2]; });
    const auto w = bumpy(s.grid());
    ScalarField w2 = w, wn = w;
    for (double& v : w2) v *= 2.0;
    for (double& v : wn) v = -v;
    const double q = escobar_quotient(s, w).Q;
    CHECK(escobar_quotient(s, w2).Q == doctest::Approx(q).epsilon(1e-13));
    CHECK(escobar_quotient(s, wn).Q == doctest::Approx(q).epsilon(1e-13));
  }

  TEST_CASE("undefined quotients are reported") {
    const auto s = testing::space(4, 5, 1.0);
    CHECK_THROWS_AS(escobar_quotient(s, ScalarField(s.grid().size(), 0.0)), UndefinedQuotient);
    ScalarField interior_only(s.grid().size(), 0.0);
    for (std::size_t i = 0; i < interior_only.size(); ++i) {
      if (!s.grid().on_boundary(i)) interior_only[i] = 1.0;
    }
    CHECK_THROWS_AS(escobar_quotient(s, interior_only), UndefinedQuotient);
  }

  TEST_CASE("quotient gradient matches finite differences") {
    const auto s = testing::space(5, 6, 1.5, [](std::span<const double> z) { return 0.4 * z[2] + 0.1 * std::sin(2 * pi * z[0]); });
    const auto w = bumpy(s.grid());
    ScalarField g(w.size());
    escobar_quotient_gradient(s, w, g);
    for (std::size_t i : {0ul, 7ul, 40ul, w.size() - 2}) {
      auto wp = w, wm = w;
      wp[i] += 1e-6;
      wm[i] -= 1e-6;
      const double fd = (escobar_quotient(s, wp).Q - escobar_quotient(s, wm).Q) / 2e-6;
      CHECK(fd == doctest::Approx(g[i]).epsilon(1e-6).scale(1e-3));
    }
  }

  TEST_CASE("continuity in m") {
    const auto phi = [](std::span<const double> z) { return 0.3 * z[2] + 0.1 * std::cos(2 * pi * z[1]); };
    const auto s0 = testing::space(6, 7, 1.0, phi);
    const auto w = bumpy(s0.grid());
    const double q = escobar_quotient(s0, w).Q;
    for (double dm : {-1e-6, 1e-6}) {
      const auto s = testing::space(6, 7, 1.0 + dm, phi);
      CHECK(std::abs(escobar_quotient(s, w).Q - q) < 1e-5);
    }
  }

  TEST_CASE("W-functional") {
    SUBCASE("normalized constant on the flat space") {
      const auto s = testing::space(6, 7, 1.0);
      const auto w = boundary_normalize(s, ScalarField(s.grid().size(), 1.0));
      const auto parts = evaluate_parts(s, w);
      for (double tau : {0.1, 1.0, 7.0}) {
        CHECK(w_functional(s, w, tau) == doctest::Approx(parts.interior_norm / std::sqrt(tau) - 1.0).epsilon(1e-13));
      }
      CHECK_THROWS_AS(w_functional(s, w, 0.0), InvalidArgument);
    }
    SUBCASE("scale law") {
      for (double m : {0.5, 1.0, 2.0}) {
        const std::size_t n = 3;
        const auto s = testing::space(6, 7, m, [](std::span<const double> z) { return 0.4 * z[2] + 0.1 * std::sin(2 * pi * z[0]); });
        const auto w = bumpy(s.grid());
        for (double c : {0.25, 3.0}) {
          const double k = (n - 1.0) * (m + n - 2.0) / (4.0 * (m + n - 1.0));
          ScalarField wc = w;
          for (double& v : wc) v *= std::pow(c, k);
          for (double tau : {0.3, 2.0}) {
            const double lhs = w_functional(scale_metric(s, c), w, tau);
            const double rhs = w_functional(s, wc, tau / c);
            CHECK(testing::rel(lhs, rhs) < 1e-10);
          }
        }
      }
    }
    SUBCASE("conformal law") {
      const double m = 1.0;
      const auto s = testing::space(6, 7, m, [](std::span<const double> z) { return 0.2 * z[2]; });
      const auto w = bumpy(s.grid());
      const auto sigma = sample(s.grid(), [](std::span<const double> z) { return 0.3 * std::sin(2 * pi * z[0]) + 0.2 * z[2]; });
      // Metric e^{2 sigma} g corresponds to the stored factor (m+n-2) sigma.
      ScalarField stored(sigma.size()), ws(sigma.size());
      for (std::size_t i = 0; i < sigma.size(); ++i) {
        stored[i] = (m + 1.0) * sigma[i];
        ws[i] = std::exp((m + 1.0) * sigma[i] / 2.0) * w[i];
      }
      const auto changed = conformal_change(s, stored);
      for (double tau : {0.5, 4.0}) CHECK(testing::rel(w_functional(changed, w, tau), w_functional(s, ws, tau)) < 1e-10);
    }
  }

  TEST_CASE("h_min against golden-section search") {
    CHECK(h_min(1, 1, 1, 1).tau0 == doctest::Approx(1.0));
    CHECK(h_min(1, 1, 1, 1).value == doctest::Approx(2.0));
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    for (int k = 0; k < 10; ++k) {
      const double p = u(rng), q = u(rng), B = u(rng), C = u(rng);
      const auto hm = h_min(p, q, B, C);
      const auto [tau, value] = golden_min(p, q, B, C);
      CAPTURE(p);
      CAPTURE(q);
      CAPTURE(B);
      CAPTURE(C);
      CHECK(testing::rel(hm.value, value) < 1e-10);
      CHECK(testing::rel(hm.tau0, tau) < 1e-4);
      CHECK(h_value(p, q, B, C, hm.tau0) == doctest::Approx(hm.value).epsilon(1e-13));
      CHECK(hm.value <= h_value(p, q, B, C, 1.01 * hm.tau0));
      CHECK(hm.value <= h_value(p, q, B, C, 0.99 * hm.tau0));
    }
    CHECK_THROWS_AS(h_min(0, 1, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(h_min(1, 1, -1, 1), InvalidArgument);
  }

  TEST_CASE("nu-Lambda bridge") {
    for (double m : {0.5, 1.0, 2.0}) {
      for (std::size_t n : {3ul, 4ul}) {
        for (double lambda : {0.1, 1.0, 10.0}) {
          const auto nu = nu_from_lambda(lambda, m, n);
          REQUIRE_FALSE(nu.is_negative_infinity());
          CHECK(nu.value() > -1.0);
          CHECK(testing::rel(*lambda_from_nu(nu, m, n), lambda) < 1e-12);
        }
        CHECK(nu_from_lambda(0.0, m, n) == ExtendedReal::finite(-1.0));
        CHECK(*lambda_from_nu(ExtendedReal::finite(-1.0), m, n) == 0.0);
        CHECK(nu_from_lambda(-1.0, m, n).is_negative_infinity());
        CHECK_FALSE(lambda_from_nu(ExtendedReal::negative_infinity(), m, n).has_value());
      }
    }
    CHECK_THROWS_AS(nu_from_lambda(1.0, 0.0, 3), InvalidArgument);
    CHECK_THROWS_AS(lambda_from_nu(ExtendedReal::finite(-2.0), 1.0, 3), InvalidArgument);
    CHECK_THROWS_AS(ExtendedReal::negative_infinity().value(), InvalidArgument);
    CHECK(ExtendedReal::negative_infinity().to_string() == "-inf");
  }

  TEST_CASE("bridge through h_min on synthetic energy triples") {
    // For a normalized field with E > 0: inf_tau W = h_min(a, 1/2, E, I) - 1, and at the
    // Q-minimizing field this equals nu(Lambda) with Lambda = E I^alpha.
    for (double m : {0.5, 1.0, 2.0}) {
      const std::size_t n = 3;
      const auto ex = exponents(m, n);
      QuotientBreakdown parts;
      parts.dirichlet = 1.7, parts.interior_norm = 0.6, parts.boundary_norm = 1.0, parts.m = m, parts.n = n;
      const auto hm = h_min(ex.a, 0.5, parts.energy(), parts.interior_norm);
      const double lambda = parts.energy() * std::pow(parts.interior_norm, ex.alpha);
      CHECK(testing::rel(hm.value - 1.0, nu_from_lambda(lambda, m, n).value()) < 1e-12);
      CHECK(testing::rel(w_functional(parts, hm.tau0), hm.value - 1.0) < 1e-12);
      CHECK(testing::rel(tau_of_minimizer(parts.energy(), parts.interior_norm, m, n), hm.tau0) < 1e-12);
      const double nu = hm.value - 1.0;
      CHECK(testing::rel(w_boundary_constant(parts, hm.tau0), w_boundary_constant_at_minimum(nu, m, n)) < 1e-12);
    }
  }

  TEST_CASE("boundary normalization") {
    const auto s = testing::space(6, 7, 1.0);
    const auto w = bumpy(s.grid());
    const auto nw = boundary_normalize(s, w);
    CHECK(evaluate_parts(s, nw).boundary_norm == doctest::Approx(1.0).epsilon(1e-14));
    const auto again = boundary_normalize(s, nw);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(again[i] == doctest::Approx(nw[i]).epsilon(1e-14));
    ScalarField w2 = w;
    for (double& v : w2) v *= 2.0;
    const auto n2 = boundary_normalize(s, w2);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(n2[i] == doctest::Approx(nw[i]).epsilon(1e-14));
    // Constant: (area)^{-(m+n-2)/(2(m+n-1))} with area 2 for m = 1, n = 3.
    const auto nc = boundary_normalize(s, ScalarField(w.size(), 5.0));
    CHECK(nc[0] == doctest::Approx(std::pow(2.0, -1.0 / 3.0)).epsilon(1e-14));
    CHECK_THROWS_AS(boundary_normalize(s, ScalarField(w.size(), 0.0)), UndefinedQuotient);
  }

  TEST_CASE("tau-energy is bounded by the normalized constant") {
    const auto s = testing::space(6, 7, 1.0);
    MinimizerConfig cfg;
    cfg.restarts = 2;
    cfg.gradient_tolerance = 1e-7;
    for (double tau : {0.5, 2.0}) {
      const auto e = tau_energy(s, tau, cfg);
      const auto c = boundary_normalize(s, ScalarField(s.grid().size(), 1.0));
      CHECK(e.W <= w_functional(s, c, tau) + 1e-12);
      CHECK(e.nu == e.W);
      // With E >= 0 on the flat space the infimum stays at or above -1.
      CHECK(e.W >= -1.0);
      if (e.converged) {
        CHECK(e.el_interior < 1e-5);
        CHECK(e.el_boundary < 1e-5);
      }
    }
  }

  TEST_CASE("quotient breakdown serializes to a flat record") {
    QuotientBreakdown b;
    b.dirichlet = 1, b.curv_interior = 2, b.curv_boundary = 3, b.interior_norm = 4, b.boundary_norm = 5, b.Q = 6, b.m = 1, b.n = 3;
    const nlohmann::json j = b;
    for (const char* key : {"dirichlet", "curv_interior", "curv_boundary", "interior_norm", "boundary_norm", "Q", "m", "n"}) {
      CHECK(j.contains(key));
    }
    CHECK(j.size() == 8);
  }
}
