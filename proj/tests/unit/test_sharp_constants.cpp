#include <doctest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <random>
#include <sstream>

#include "escobar/errors.hpp"
#include "escobar/sharp_constants.hpp"
#include "helpers.hpp"

using namespace escobar;
using testing::pi;

namespace {

// Area of the unit sphere S^{d-1} in R^d from the recursion |S^{d-1}| = 2 pi / (d - 2) |S^{d-3}|.
double sphere_area(int d) {
  if (d == 1) return 2.0;
  if (d == 2) return 2.0 * pi;
  return 2.0 * pi / (d - 2.0) * sphere_area(d - 2);
}

// Radial reduction of the integral over R^{2m}, by double-exponential quadrature.
double case_oracle(double k, double l, double m, double a, double tau) {
  const int d = static_cast<int>(std::lround(2.0 * m));
  boost::math::quadrature::exp_sinh<double> integrator;
  const auto f = [&](double r) {
    if (!(r > 0.0)) return 0.0;
    return std::exp((d - 1 + 2.0 * l) * std::log(r) - (2.0 * m + k) * std::log(a + r * r / tau));
  };
  return sphere_area(d) * integrator.integrate(f, 1e-15);
}

HalfspaceResult bubble_quotient(double m, std::size_t n, const HalfspaceQuad& q) {
  const Bubble b(BubbleParams{m, n, BubbleFamily::epsilon, 1.0, {}});
  return halfspace_quotient(sample_radial(q, n, [&](double r, double t) { return b.radial(r, t); }), m);
}

}  // namespace

TEST_SUITE("sharp_constants") {
  TEST_CASE("sphere volumes and the closed-form constant") {
    CHECK(sphere_volume(1) == doctest::Approx(2 * pi));
    CHECK(sphere_volume(2) == doctest::Approx(4 * pi));
    CHECK(sphere_volume(4) == doctest::Approx(8 * pi * pi / 3));
    CHECK(lambda_mn(0, 3) == doctest::Approx(std::sqrt(pi)).epsilon(1e-13));
    CHECK(lambda_mn(1, 3) == doctest::Approx(8 * std::cbrt(pi) / std::pow(6.0, 4.0 / 3.0)).epsilon(1e-13));
    for (std::size_t n : {3ul, 4ul, 5ul}) {
      CHECK(testing::rel(lambda_mn(1e-9, n), lambda_mn(0, n)) < 1e-6);
      CHECK(lambda_mn(0.5, n) > 0.0);
    }
    CHECK_THROWS_AS(lambda_mn(1, 2), InvalidArgument);
    CHECK_THROWS_AS(lambda_mn(-1, 3), InvalidArgument);
  }

  TEST_CASE("bubble families") {
    CHECK(bubble_c(1, 3) == doctest::Approx(0.75));
    CHECK_THROWS_AS(bubble_c(0, 3), InvalidArgument);
    CHECK_THROWS_AS(Bubble(BubbleParams{0, 3, BubbleFamily::tau, 1.0, {}}), InvalidArgument);
    CHECK_THROWS_AS(Bubble(BubbleParams{1, 3, BubbleFamily::epsilon, -1.0, {}}), InvalidArgument);
    CHECK_THROWS_AS(Bubble(BubbleParams{1, 3, BubbleFamily::epsilon, 1.0, {0.0}}), InvalidArgument);

    SUBCASE("epsilon family matches its formula") {
      const Bubble b(BubbleParams{2, 4, BubbleFamily::epsilon, 0.7, {0.1, -0.2, 0.3}});
      const std::vector<double> z{0.5, 0.4, -1.0, 0.25};
      const double r2 = 0.16 + 0.36 + 1.69;
      CHECK(b(z) == doctest::Approx(std::pow(1.4 / ((0.95) * (0.95) + r2), 2.0)).epsilon(1e-14));
    }
    SUBCASE("tau family, tau = 1: supremum 1 at the centre") {
      const Bubble b(BubbleParams{1, 3, BubbleFamily::tau, 1.0, {0.3, 0.4}});
      CHECK(b(std::vector<double>{0.3, 0.4, 0.0}) == doctest::Approx(1.0).epsilon(1e-15));
      for (double x = -3; x <= 3; x += 0.25) {
        for (double t = 0; t <= 3; t += 0.25) CHECK(b(std::vector<double>{x, 0.1, t}) <= 1.0);
      }
    }
    SUBCASE("tau family concentrates") {
      double previous = 1e300;
      for (double tau : {1e-1, 1e-2, 1e-3, 1e-4, 1e-6}) {
        const Bubble b(BubbleParams{1, 3, BubbleFamily::tau, tau, {}});
        const double v = b(std::vector<double>{0.5, 0.0, 0.0});
        CHECK(v < previous);
        previous = v;
      }
      CHECK(previous < 1e-3);
    }
    SUBCASE("analytic derivatives agree with differences") {
      for (auto family : {BubbleFamily::epsilon, BubbleFamily::tau}) {
        const Bubble b(BubbleParams{1.5, 3, family, 0.8, {}});
        const double r = 0.7, t = 0.4, h = 1e-4;
        double dr, dt;
        b.radial_gradient(r, t, dr, dt);
        CHECK(dr == doctest::Approx((b.radial(r + h, t) - b.radial(r - h, t)) / (2 * h)).epsilon(1e-7));
        CHECK(dt == doctest::Approx((b.radial(r, t + h) - b.radial(r, t - h)) / (2 * h)).epsilon(1e-7));
        // Laplacian in R^3 by Cartesian differences.
        const auto f = [&](double x, double y, double s) { return b(std::vector<double>{x, y, s}); };
        const double x = 0.5, y = 0.3, s = 0.6, g = 1e-3;
        const double fd = (f(x + g, y, s) + f(x - g, y, s) + f(x, y + g, s) + f(x, y - g, s) + f(x, y, s + g) +
                           f(x, y, s - g) - 6 * f(x, y, s)) / (g * g);
        CHECK(b.laplacian(std::hypot(x, y), s) == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("radial integral lemma") {
    CHECK(case_integral(1, 0, 1, 1, 1) == doctest::Approx(pi / 2).epsilon(1e-14));
    CHECK(case_integral(2, 1, 1, 1, 1) == doctest::Approx(pi / 6).epsilon(1e-14));
    const double base = case_integral(1.5, 0.5, 2, 1, 1);
    CHECK(case_integral(1.5, 0.5, 2, 3.0, 0.4) ==
          doctest::Approx(base * std::pow(0.4, 2.5) / std::pow(3.0, 3.0)).epsilon(1e-13));
    CHECK_THROWS_AS(case_integral(1, 1, 1, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(case_integral(1, 0, 0.3, 1, 1), InvalidArgument);

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10; ++i) {
      const double m = 0.5 * static_cast<double>(1 + i % 5);
      const double l = 2.0 * u(rng);
      const double k = l + 0.5 + 2.0 * u(rng);
      const double a = 0.5 + 1.5 * u(rng), tau = 0.5 + 1.5 * u(rng);
      CAPTURE(m);
      CAPTURE(k);
      CAPTURE(l);
      CAPTURE(a);
      CAPTURE(tau);
      CHECK(testing::rel(case_integral(k, l, m, a, tau), case_oracle(k, l, m, a, tau)) < 1e-8);
    }
  }

  TEST_CASE("boundary volume of the tau family") {
    CHECK(bubble_boundary_volume(1, 3) == doctest::Approx(2 * pi / 3).epsilon(1e-14));
    // Same integral by the radial lemma: int_{R^2} (1 + c r^2)^{-3} is k = 1, l = 0, m = 1, tau = 1/c.
    CHECK(bubble_boundary_volume(1, 3) == doctest::Approx(case_integral(1, 0, 1, 1, 1.0 / 0.75)).epsilon(1e-14));
    HalfspaceQuad q;
    for (auto [m, n] : {std::pair{1.0, 3ul}, {2.0, 3ul}, {0.5, 4ul}}) {
      const double v = bubble_boundary_volume(m, n);
      CHECK(v > 0.0);
      CHECK(testing::rel(bubble_boundary_volume_quadrature(m, n, q), v) < 1e-6);
    }
  }

  TEST_CASE("half-space quotient of the bubble") {
    HalfspaceQuad q;
    for (auto [m, n] : {std::pair{1.0, 3ul}, {0.0, 3ul}}) {
      const auto r = bubble_quotient(m, n, q);
      CHECK(testing::rel(r.Q, lambda_mn(m, n)) < 1e-2);
      CHECK(r.error > 0.0);
      CHECK(r.Q > lambda_mn(m, n) - r.error);
    }
  }

  TEST_CASE("spherical and polar grids agree on radial fields") {
    HalfspaceQuad q;
    q.radial_cells = 64, q.polar_cells = 32, q.azimuth_nodes = 16;
    const Bubble b(BubbleParams{1, 3, BubbleFamily::epsilon, 1.0, {}});
    const auto polar = halfspace_integrals(sample_radial(q, 3, [&](double r, double t) { return b.radial(r, t); }), 1);
    const auto sph = halfspace_integrals(
        sample_spherical(q, [&](double x, double y, double t) { return b.radial(std::hypot(x, y), t); }), 1);
    CHECK(testing::rel(sph.dirichlet, polar.dirichlet) < 1e-10);
    CHECK(testing::rel(sph.interior_norm, polar.interior_norm) < 1e-10);
    CHECK(testing::rel(sph.boundary_norm, polar.boundary_norm) < 1e-10);
  }

  TEST_CASE("perturbed bubble lies strictly above the constant") {
    HalfspaceQuad q;
    q.radial_cells = 64, q.polar_cells = 32;
    const Bubble b(BubbleParams{1, 3, BubbleFamily::epsilon, 1.0, {}});
    const auto r = halfspace_quotient(sample_spherical(q, [&](double x, double y, double t) {
      return b.radial(std::hypot(x, y), t) * (1 + 0.1 * std::sin(x));
    }), 1);
    CHECK(r.Q > lambda_mn(1, 3) + r.error);
  }

  TEST_CASE("short truncation is refused with a radius suggestion") {
    HalfspaceQuad q;
    q.radius = 2.0;
    CHECK_THROWS_WITH_AS(bubble_quotient(1, 3, q), doctest::Contains("radius"), NumericRefusal);
  }

  TEST_CASE("quadrature settings are validated") {
    HalfspaceQuad q;
    q.radial_cells = 8;
    CHECK_THROWS_AS(q.validate(), InvalidArgument);
    q = HalfspaceQuad{};
    q.polar_cells = 33;
    CHECK_THROWS_AS(q.validate(), InvalidArgument);
    q = HalfspaceQuad{};
    q.radius = -1;
    CHECK_THROWS_AS(q.validate(), InvalidArgument);
  }

  TEST_CASE("lifting identities") {
    const Bubble b(BubbleParams{1, 3, BubbleFamily::epsilon, 1.0, {}});
    const auto w = [&](double r, double t) { return b.radial(r, t); };
    LiftQuad lq;
    lq.radial_cells = lq.polar_cells = lq.lift_cells = 32;
    const auto coarse = lift_check(w, 1, 3, 1.0, lq);
    lq.radial_cells = lq.polar_cells = lq.lift_cells = 64;
    const auto fine = lift_check(w, 1, 3, 1.0, lq);
    CHECK(fine.boundary < 1e-3);
    CHECK(fine.gradient < 1e-3);
    CHECK(std::log2(coarse.boundary / fine.boundary) > 1.9);
    CHECK(std::log2(coarse.gradient / fine.gradient) > 1.9);
    const auto tau2 = lift_check(w, 1, 3, 2.0, lq);
    CHECK(tau2.reduced_boundary / fine.reduced_boundary == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(lift_check(w, 1.5, 3, 1.0, lq), InvalidArgument);
    CHECK_THROWS_AS(lift_check([](double, double) { return -1.0; }, 1, 3, 1.0, lq), InvalidArgument);
  }

  TEST_CASE("Euler-Lagrange residual of the tau family") {
    HalfspaceQuad q;
    q.radius = 20, q.stretch = 3;
    q.radial_cells = 128;
    const auto coarse = bubble_el_residual(BubbleParams{1, 3, BubbleFamily::tau, 1.0, {}}, q);
    q.radial_cells = 256;
    const auto fine = bubble_el_residual(BubbleParams{1, 3, BubbleFamily::tau, 1.0, {}}, q);
    CHECK(fine.interior < 5e-3);
    CHECK(std::log2(coarse.interior / fine.interior) > 1.8);
    CHECK(std::log2(coarse.boundary / fine.boundary) > 1.8);
    SUBCASE("translation invariant") {
      const auto moved = bubble_el_residual(BubbleParams{1, 3, BubbleFamily::tau, 1.0, {0.3, -2.0}}, q);
      CHECK(moved.interior == doctest::Approx(fine.interior).epsilon(1e-12));
      CHECK(moved.boundary == doctest::Approx(fine.boundary).epsilon(1e-12));
    }
    SUBCASE("rescales with the family") {
      // w_tau(z) = tau^{-gamma} w_1(z / sqrt(tau)): on a grid scaled by sqrt(tau) the relative residuals coincide.
      HalfspaceQuad q4 = q;
      q4.radius = 2.0 * q.radius;
      const auto r4 = bubble_el_residual(BubbleParams{1, 3, BubbleFamily::tau, 4.0, {}}, q4);
      CHECK(r4.interior == doctest::Approx(fine.interior).epsilon(1e-8));
      CHECK(r4.boundary == doctest::Approx(fine.boundary).epsilon(1e-8));
    }
    CHECK_THROWS_AS(bubble_el_residual(BubbleParams{1, 3, BubbleFamily::epsilon, 1.0, {}}, q), InvalidArgument);
  }

  TEST_CASE("constant table") {
    HalfspaceQuad q;
    q.radial_cells = 64, q.polar_cells = 32;
    const auto row = constant_row(1, 3, q);
    CHECK(row.lambda == lambda_mn(1, 3));
    CHECK(row.rel_error == doctest::Approx(std::abs(row.estimate / row.lambda - 1)).epsilon(1e-12));
    std::ostringstream os;
    write_constants_csv(os, {row});
    CHECK(os.str().find("m,n,") == 0);
    const nlohmann::json j = row;
    CHECK(j["lambda_error"] == "exact closed form");
  }
}
