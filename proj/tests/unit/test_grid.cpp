#include <doctest.h>

#include <numeric>
#include <omp.h>
#include <random>

#include "escobar/errors.hpp"
#include "escobar/grid.hpp"
#include "escobar/kernels.hpp"
#include "helpers.hpp"

using namespace escobar;

TEST_SUITE("grid") {
  TEST_CASE("quadrature weights sum to the box volume and the face areas") {
    const Grid g({Axis{6, 2.0, Topology::periodic}, Axis{5, 1.5, Topology::interval}, Axis{7, 0.5, Topology::interval}});
    const auto w = g.weights();
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(2.0 * 1.5 * 0.5).epsilon(1e-13));
    // Only interval axes contribute faces, two each.
    REQUIRE(g.faces().size() == 4);
    for (const auto& f : g.faces()) {
      CHECK(f.axis != 0);
      const double area = f.axis == 1 ? 2.0 * 0.5 : 2.0 * 1.5;
      CHECK(std::accumulate(f.weights.begin(), f.weights.end(), 0.0) == doctest::Approx(area).epsilon(1e-13));
      for (double x : f.weights) CHECK(x > 0.0);
    }
    for (double x : w) CHECK(x > 0.0);
  }

  TEST_CASE("half torus has exactly the two t faces") {
    const Grid g = Grid::half_torus(3, 4, 5);
    REQUIRE(g.faces().size() == 2);
    CHECK(g.faces()[0].axis == 2);
    CHECK(g.faces()[1].axis == 2);
    CHECK(g.boundary_area() == doctest::Approx(2.0));
    CHECK(g.volume() == doctest::Approx(1.0));
  }

  TEST_CASE("periodic neighbours wrap, interval neighbours stop") {
    const Grid g = Grid::half_torus(3, 4, 5);
    const std::size_t corner = 0;
    CHECK(g.index_along(g.neighbor(corner, 0, -1), 0) == 3);
    CHECK(g.neighbor(corner, 2, -1) == Grid::npos);
    CHECK(g.index_along(g.neighbor(corner, 2, +1), 2) == 1);
  }

  TEST_CASE("invalid grids are rejected") {
    CHECK_THROWS_AS(Grid({Axis{4, 1.0, Topology::periodic}, Axis{4, 1.0, Topology::interval}}), InvalidArgument);
    CHECK_THROWS_AS(Grid::half_torus(3, 4, 4, 0.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(Grid({Axis{4, 1.0, Topology::periodic}, Axis{4, 1.0, Topology::interval},
                          Axis{4, 1.0, Topology::periodic}}),
                    InvalidArgument);
  }
}

TEST_SUITE("kernels") {
  TEST_CASE("parallel kernels agree with the serial reference") {
    auto g = testing::half_torus(20, 30);
    MeasureSpace s = build_space(*g, [](std::span<const double> z) { return 0.7 * z[2]; }, 1.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> w(g->size());
    for (double& v : w) v = u(rng);
    const auto& op = s.base_operator();
    const auto a = kernels::serial::energy(op, w);
    const auto b = kernels::parallel::energy(op, w);
    CHECK(testing::rel(b.total(), a.total()) < 1e-13);
    std::vector<double> ga(w.size()), gb(w.size());
    kernels::serial::energy_gradient(op, w, ga);
    kernels::parallel::energy_gradient(op, w, gb);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(gb[i] == ga[i]);
    const auto wt = s.boundary_norm_weights();
    CHECK(testing::rel(kernels::parallel::power_sum(w, wt, 3.0), kernels::serial::power_sum(w, wt, 3.0)) < 1e-13);
    CHECK(testing::rel(kernels::parallel::dot(w, w), kernels::serial::dot(w, w)) < 1e-13);
  }

  TEST_CASE("energy gradient is twice the operator applied to w") {
    auto g = testing::half_torus(6, 7);
    MeasureSpace s = build_space(*g, [](std::span<const double> z) { return 0.3 * z[2] * z[2]; }, 2.0);
    std::vector<double> w(g->size()), e(g->size(), 0.0), grad(g->size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + 0.01 * static_cast<double>(i % 13);
    kernels::energy_gradient(s.base_operator(), w, grad);
    // Quadratic form: E(w + h e_i) - E(w - h e_i) = 2 h dE/dw_i exactly.
    for (std::size_t i : {0ul, 17ul, 100ul, w.size() - 1}) {
      auto wp = w, wm = w;
      wp[i] += 1e-3;
      wm[i] -= 1e-3;
      const double fd = (kernels::energy(s.base_operator(), wp).total() - kernels::energy(s.base_operator(), wm).total()) / 2e-3;
      CHECK(fd == doctest::Approx(grad[i]).epsilon(1e-7));
    }
  }

  TEST_CASE("parallel reductions do not depend on the thread count") {
    std::vector<double> a(50000), b(50000);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = std::sin(0.001 * static_cast<double>(i));
      b[i] = std::cos(0.003 * static_cast<double>(i));
    }
    omp_set_num_threads(1);
    const double one = kernels::parallel::dot(a, b);
    omp_set_num_threads(3);
    const double three = kernels::parallel::dot(a, b);
    omp_set_num_threads(omp_get_num_procs());
    CHECK(one == three);
  }
}
