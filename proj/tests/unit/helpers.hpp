#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <span>

#include "escobar/geometry.hpp"

namespace testing {

inline constexpr double pi = std::numbers::pi;

inline std::shared_ptr<const escobar::Grid> half_torus(std::size_t lateral, std::size_t normal, double lateral_length = 1.0,
                                                      double normal_length = 1.0, std::size_t n = 3) {
  return std::make_shared<const escobar::Grid>(
      escobar::Grid::half_torus(n, lateral, normal, lateral_length, normal_length));
}

inline escobar::MeasureSpace space(std::size_t lateral, std::size_t normal, double m,
                                   const escobar::PointFunction& phi = {}, double normal_length = 1.0) {
  return escobar::build_space(*half_torus(lateral, normal, 1.0, normal_length), phi, m);
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testing
