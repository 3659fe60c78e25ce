#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "escobar/errors.hpp"
#include "escobar/functionals.hpp"
#include "escobar/geometry.hpp"
#include "escobar/minimizer.hpp"
#include "helpers.hpp"

using namespace escobar;
using testing::pi;

namespace {

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Values of a boundary field on the t = 0 face (k = 0) or the t = L face (k = 1).
std::vector<double> face_values(const Grid& g, const BoundaryField& f, std::size_t k) {
  const Face& face = g.faces()[k];
  return {f.values.begin() + static_cast<long>(face.offset),
          f.values.begin() + static_cast<long>(face.offset + face.nodes.size())};
}

std::size_t low_face(const Grid& g) { return g.faces()[0].high ? 1 : 0; }

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("build_space validates its inputs") {
    auto g = testing::half_torus(4, 5);
    CHECK_THROWS_AS(build_space(*g, [](std::span<const double>) { return 1.0; }, 0.0), InvalidArgument);
    CHECK_THROWS_AS(build_space(*g, {}, -1.0), InvalidArgument);
    CHECK_THROWS_AS(build_space(*g, [](std::span<const double>) { return NAN; }, 1.0), InvalidArgument);
    CHECK_THROWS_AS(build_space(*g, [](std::span<const double>) { return 31.0; }, 1.0), InvalidArgument);
    CHECK_NOTHROW(build_space(*g, {}, 0.0));
  }

  TEST_CASE("weighted scalar curvature") {
    const double a = 0.8;
    SUBCASE("flat and unweighted") {
      const auto s = testing::space(6, 6, 2.0);
      CHECK(max_abs(weighted_scalar_curvature(s)) == 0.0);
    }
    SUBCASE("linear weight") {
      const auto s = testing::space(6, 9, 1.0, [a](std::span<const double> z) { return a * z[2]; });
      for (double r : weighted_scalar_curvature(s)) CHECK(r == doctest::Approx(-2.0 * a * a).epsilon(1e-12));
    }
    SUBCASE("quadratic weight is exact under second-order differences") {
      const auto s = testing::space(6, 9, 1.0, [a](std::span<const double> z) { return a * z[2] * z[2]; });
      const auto r = weighted_scalar_curvature(s);
      const Grid& g = s.grid();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = g.coordinate(i, 2);
        CHECK(r[i] == doctest::Approx(4.0 * a - 8.0 * a * a * t * t).epsilon(1e-10));
      }
    }
    SUBCASE("doubling phi doubles the Laplacian part and quadruples the gradient part") {
      const auto f = [](std::span<const double> z) { return 0.3 * std::sin(2 * pi * z[0]) + 0.2 * z[2] * z[2]; };
      const auto s1 = testing::space(8, 9, 1.0, f);
      const auto s2 = testing::space(8, 9, 1.0, [&](std::span<const double> z) { return 2.0 * f(z); });
      const auto r1 = weighted_scalar_curvature(s1), r2 = weighted_scalar_curvature(s2);
      const auto lap = laplacian(s1.grid(), s1.phi());
      const auto grad2 = gradient_squared(s1.grid(), s1.phi());
      for (std::size_t i = 0; i < r1.size(); ++i) {
        CHECK(r1[i] == doctest::Approx(2.0 * lap[i] - 2.0 * grad2[i]).epsilon(1e-12));
        CHECK(r2[i] == doctest::Approx(4.0 * lap[i] - 8.0 * grad2[i]).epsilon(1e-12));
      }
    }
    SUBCASE("conformally changed spaces are refused") {
      const auto s = testing::space(4, 5, 1.0);
      const ScalarField sigma(s.grid().size(), 0.1);
      CHECK_THROWS_AS(weighted_scalar_curvature(conformal_change(s, sigma)), InvalidArgument);
    }
  }

  TEST_CASE("mean curvature uses the covariant sign convention") {
    const double a = 1.3;
    const auto s = testing::space(5, 7, 1.0, [a](std::span<const double> z) { return a * z[2]; });
    const auto h = gromov_mean_curvature(s);
    const std::size_t lo = low_face(s.grid());
    // Outer normal: -d/dt on t = 0, +d/dt on t = L; H = -d phi / d eta.
    for (double v : face_values(s.grid(), h, lo)) CHECK(v == doctest::Approx(a).epsilon(1e-12));
    for (double v : face_values(s.grid(), h, 1 - lo)) CHECK(v == doctest::Approx(-a).epsilon(1e-12));
    CHECK(max_abs(gromov_mean_curvature(testing::space(5, 7, 1.0)).values) == 0.0);
    // Additive in phi; zero for phi independent of t.
    const auto sx = testing::space(5, 7, 1.0, [](std::span<const double> z) { return std::cos(2 * pi * z[0]); });
    CHECK(max_abs(gromov_mean_curvature(sx).values) < 1e-12);
    const auto sum = testing::space(5, 7, 1.0, [a](std::span<const double> z) { return a * z[2] + std::cos(2 * pi * z[0]); });
    const auto hs = gromov_mean_curvature(sum);
    for (std::size_t i = 0; i < hs.values.size(); ++i) CHECK(hs.values[i] == doctest::Approx(h.values[i]).epsilon(1e-10));
  }

  TEST_CASE("normal derivative is second-order one-sided") {
    const auto g = testing::half_torus(4, 11);
    const auto f = sample(*g, [](std::span<const double> z) { return z[2] * z[2]; });
    const auto d = normal_derivative(*g, f);
    const std::size_t lo = low_face(*g);
    for (double v : face_values(*g, d, lo)) CHECK(std::abs(v) < 1e-12);
    for (double v : face_values(*g, d, 1 - lo)) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
  }

  TEST_CASE("weighted Laplacian") {
    SUBCASE("constants are harmonic") {
      const auto s = testing::space(6, 7, 1.0, [](std::span<const double> z) { return 0.4 * z[2] + 0.1 * std::sin(2 * pi * z[1]); });
      CHECK(max_abs(weighted_laplacian(s, ScalarField(s.grid().size(), 3.0))) < 1e-10);
    }
    SUBCASE("drift term") {
      const double a = 0.7;
      const auto s = testing::space(6, 7, 1.0, [a](std::span<const double> z) { return a * z[2]; });
      const auto w = sample(s.grid(), [](std::span<const double> z) { return z[2]; });
      for (double v : weighted_laplacian(s, w)) CHECK(v == doctest::Approx(-a).epsilon(1e-10));
    }
    SUBCASE("sine mode converges at second order") {
      double previous = 0.0;
      for (std::size_t N : {16, 32, 64}) {
        const auto s = testing::space(N, 5, 0.0);
        const auto w = sample(s.grid(), [](std::span<const double> z) { return std::sin(2 * pi * z[0]); });
        const auto lw = weighted_laplacian(s, w);
        double err = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) err = std::max(err, std::abs(lw[i] + 4 * pi * pi * w[i]));
        if (previous > 0.0) CHECK(previous / err == doctest::Approx(4.0).epsilon(0.02));
        previous = err;
      }
    }
  }

  TEST_CASE("conformal energy examples") {
    SUBCASE("constants on the flat space carry no energy") {
      const auto s = testing::space(5, 6, 1.0);
      const auto e = conformal_energy(s, ScalarField(s.grid().size(), 2.0));
      CHECK(e.total() == 0.0);
    }
    SUBCASE("linear field in t: Dirichlet energy equals the volume") {
      const auto s = testing::space(5, 9, 1.0);
      const auto w = sample(s.grid(), [](std::span<const double> z) { return 1.0 + z[2]; });
      const auto e = conformal_energy(s, w);
      CHECK(e.dirichlet == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(e.curvature == 0.0);
      CHECK(e.boundary == 0.0);
    }
    SUBCASE("linear weight, constant field: curvature and boundary terms by quadrature") {
      const double a = 0.9, m = 1.0;
      const auto s = testing::space(5, 33, m, [a](std::span<const double> z) { return a * z[2]; });
      const auto e = conformal_energy(s, ScalarField(s.grid().size(), 1.0));
      const auto mw = s.measure_weights();
      const double interior = std::accumulate(mw.begin(), mw.end(), 0.0);
      const double cR = curvature_coefficient(m, 3), cH = mean_curvature_coefficient(m, 3);
      CHECK(e.curvature == doctest::Approx(cR * (-2.0 * a * a) * interior).epsilon(1e-12));
      // H = +a on t = 0 (weight 1) and -a on t = 1 (weight e^{-a}), unit face areas.
      CHECK(e.boundary == doctest::Approx(cH * (a - a * std::exp(-a))).epsilon(1e-12));
    }
  }

  TEST_CASE("conformal change") {
    const auto base = testing::space(6, 7, 1.0, [](std::span<const double> z) { return 0.3 * z[2]; });
    const std::size_t N = base.grid().size();
    const ScalarField w = sample(base.grid(), [](std::span<const double> z) { return 1.0 + 0.2 * std::cos(2 * pi * z[1]) + z[2]; });
    SUBCASE("zero factor is the identity") {
      const auto same = conformal_change(base, ScalarField(N, 0.0));
      CHECK(conformal_energy(same, w).total() == doctest::Approx(conformal_energy(base, w).total()).epsilon(1e-14));
      CHECK(conformal_law_residual(base, ScalarField(N, 0.0), w) == 0.0);
    }
    SUBCASE("factors compose additively") {
      const auto s1 = sample(base.grid(), [](std::span<const double> z) { return 0.2 * z[2]; });
      const auto s2 = sample(base.grid(), [](std::span<const double> z) { return 0.1 * std::sin(2 * pi * z[0]); });
      ScalarField s12(N);
      for (std::size_t i = 0; i < N; ++i) s12[i] = s1[i] + s2[i];
      const auto twice = conformal_change(conformal_change(base, s1), s2);
      const auto once = conformal_change(base, s12);
      for (std::size_t i = 0; i < N; ++i) CHECK(twice.sigma()[i] == doctest::Approx(once.sigma()[i]).epsilon(1e-15));
      const auto ph1 = twice.phi_hat(), ph2 = once.phi_hat();
      for (std::size_t i = 0; i < N; ++i) CHECK(ph1[i] == doctest::Approx(ph2[i]).epsilon(1e-14));
    }
    SUBCASE("constant factor scales the boundary measure by e^{3c/2} for m = 1, n = 3") {
      const double c = 0.4;
      const auto flat = testing::space(6, 7, 1.0);
      const auto changed = conformal_change(flat, ScalarField(N, c));
      // Bd of the changed space at w is Bd of the base at e^{c/2} w, a factor e^{p c / 2} with p = 3.
      const auto one = ScalarField(N, 1.0);
      const double ratio = escobar_quotient(changed, one).boundary_norm / escobar_quotient(flat, one).boundary_norm;
      CHECK(ratio == doctest::Approx(std::exp(1.5 * c)).epsilon(1e-13));
    }
    SUBCASE("constant factor: the transformation law holds to rounding") {
      CHECK(conformal_law_residual(base, ScalarField(N, 0.35), w) < 1e-13);
    }
  }

  TEST_CASE("conformal law residual converges at second order") {
    for (double m : {0.0, 1.0, 2.0}) {
      CAPTURE(m);
      std::vector<double> res;
      for (std::size_t N : {16, 32}) {
        const auto phi = m == 0.0 ? PointFunction{}
                                  : PointFunction([](std::span<const double> z) { return 0.3 * z[2] + 0.1 * std::cos(2 * pi * z[0]); });
        const auto s = testing::space(N, N, m, phi);
        const auto sigma = sample(s.grid(), [](std::span<const double> z) {
          return 0.2 * std::sin(2 * pi * z[0]) * std::cos(pi * z[2]) + 0.15 * z[2] * z[2];
        });
        const auto w = sample(s.grid(), [](std::span<const double> z) { return 1.0 + 0.3 * std::cos(2 * pi * z[1]) + 0.5 * z[2]; });
        res.push_back(conformal_law_residual(s, sigma, w));
      }
      CHECK(res[1] < 5e-3);
      CHECK(std::log2(res[0] / res[1]) > 1.8);
    }
  }

  TEST_CASE("fields export as CSV") {
    const auto g = testing::half_torus(3, 4);
    const ScalarField f(g->size(), 1.5);
    std::ostringstream os;
    write_fields_csv(os, *g, {"w"}, {std::span<const double>(f)});
    const std::string text = os.str();
    CHECK(text.rfind("x1,x2,t,w\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(g->size() + 1));
  }
}
