#pragma once

// Data-parallel inner loops. Every kernel exists twice: a plain serial loop in
// `kernels::serial`, kept as the reference, and an OpenMP version in
// `kernels::parallel`. The unqualified functions dispatch on the process-wide
// execution mode.
//
// Parallel reductions sum fixed-size chunks and then combine the chunk partials
// in index order, so their result does not depend on the thread count. Serial
// mode is the bit-stable sequential reduction used for reproducible runs.

#include <cstddef>
#include <span>
#include <vector>

namespace escobar {

class Grid;

/// Sparse symmetric quadratic form  E(w) = D(w) + C(w) + B(w)  on grid nodes:
///   D(w) = sum_i sum_a coupling[i*dim+a] * (w[fwd(i,a)] - w[i])^2
///   C(w) = sum_i curvature[i] * w[i]^2
///   B(w) = sum_i boundary[i]  * w[i]^2
struct EnergyOperator {
  std::size_t dim = 0;
  std::size_t size = 0;
  std::span<const std::size_t> forward;   // neighbor tables owned by the Grid
  std::span<const std::size_t> backward;
  std::vector<double> coupling;
  std::vector<double> curvature;
  std::vector<double> boundary;
};

struct EnergyParts {
  double dirichlet = 0.0;
  double curvature = 0.0;
  double boundary = 0.0;
  double total() const { return dirichlet + curvature + boundary; }
};

enum class Execution { serial, parallel };

void set_execution(Execution mode);
Execution execution();

/// RAII switch of the execution mode.
class ScopedExecution {
 public:
  explicit ScopedExecution(Execution mode) : previous_(execution()) { set_execution(mode); }
  ~ScopedExecution() { set_execution(previous_); }
  ScopedExecution(const ScopedExecution&) = delete;
  ScopedExecution& operator=(const ScopedExecution&) = delete;

 private:
  Execution previous_;
};

namespace kernels {

inline constexpr std::size_t reduction_chunk = 4096;

namespace serial {
EnergyParts energy(const EnergyOperator& op, std::span<const double> w);
/// out = dE/dw  (= 2 A w).
void energy_gradient(const EnergyOperator& op, std::span<const double> w, std::span<double> out);
double power_sum(std::span<const double> w, std::span<const double> weights, double p);
double dot(std::span<const double> a, std::span<const double> b);
double weighted_dot(std::span<const double> a, std::span<const double> b, std::span<const double> weights);
}  // namespace serial

namespace parallel {
EnergyParts energy(const EnergyOperator& op, std::span<const double> w);
void energy_gradient(const EnergyOperator& op, std::span<const double> w, std::span<double> out);
double power_sum(std::span<const double> w, std::span<const double> weights, double p);
double dot(std::span<const double> a, std::span<const double> b);
double weighted_dot(std::span<const double> a, std::span<const double> b, std::span<const double> weights);
}  // namespace parallel

EnergyParts energy(const EnergyOperator& op, std::span<const double> w);
void energy_gradient(const EnergyOperator& op, std::span<const double> w, std::span<double> out);
double power_sum(std::span<const double> w, std::span<const double> weights, double p);
double dot(std::span<const double> a, std::span<const double> b);
double weighted_dot(std::span<const double> a, std::span<const double> b, std::span<const double> weights);

}  // namespace kernels
}  // namespace escobar
