#include "escobar/kernels.hpp"

#include <atomic>
#include <cmath>

#include <omp.h>

#include "escobar/errors.hpp"
#include "escobar/grid.hpp"

namespace escobar {

namespace {
std::atomic<Execution> g_execution{Execution::parallel};

constexpr std::size_t npos = Grid::npos;

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw InvalidArgument("kernel operands have mismatched lengths");
}

inline double pow_abs(double x, double p) { return std::pow(std::abs(x), p); }

// Chunk-deterministic reduction: partials per fixed chunk, combined in order.
template <class Body>
double chunked_sum(std::size_t n, Body&& body) {
  const std::size_t chunks = (n + kernels::reduction_chunk - 1) / kernels::reduction_chunk;
  std::vector<double> partial(chunks, 0.0);
  const auto nchunks = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static) if (!omp_in_parallel())
  for (std::ptrdiff_t c = 0; c < nchunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kernels::reduction_chunk;
    const std::size_t end = std::min(n, begin + kernels::reduction_chunk);
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += body(i);
    partial[static_cast<std::size_t>(c)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

inline double dirichlet_at(const EnergyOperator& op, std::span<const double> w, std::size_t i) {
  double s = 0.0;
  for (std::size_t a = 0; a < op.dim; ++a) {
    const std::size_t j = op.forward[i * op.dim + a];
    if (j == npos) continue;
    const double k = op.coupling[i * op.dim + a];
    const double d = w[j] - w[i];
    s += k * d * d;
  }
  return s;
}

inline double gradient_at(const EnergyOperator& op, std::span<const double> w, std::size_t i) {
  double g = (op.curvature[i] + op.boundary[i]) * w[i];
  for (std::size_t a = 0; a < op.dim; ++a) {
    const std::size_t f = op.forward[i * op.dim + a];
    if (f != npos) g += op.coupling[i * op.dim + a] * (w[i] - w[f]);
    const std::size_t b = op.backward[i * op.dim + a];
    if (b != npos) g += op.coupling[b * op.dim + a] * (w[i] - w[b]);
  }
  return 2.0 * g;
}

}  // namespace

void set_execution(Execution mode) { g_execution.store(mode); }
Execution execution() { return g_execution.load(); }

namespace kernels {

namespace serial {

EnergyParts energy(const EnergyOperator& op, std::span<const double> w) {
  check_sizes(w.size(), op.size);
  EnergyParts e;
  for (std::size_t i = 0; i < op.size; ++i) {
    e.dirichlet += dirichlet_at(op, w, i);
    e.curvature += op.curvature[i] * w[i] * w[i];
    e.boundary += op.boundary[i] * w[i] * w[i];
  }
  return e;
}

void energy_gradient(const EnergyOperator& op, std::span<const double> w, std::span<double> out) {
  check_sizes(w.size(), op.size);
  check_sizes(out.size(), op.size);
  for (std::size_t i = 0; i < op.size; ++i) out[i] = gradient_at(op, w, i);
}

double power_sum(std::span<const double> w, std::span<const double> weights, double p) {
  check_sizes(w.size(), weights.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (weights[i] != 0.0) s += weights[i] * pow_abs(w[i], p);
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double weighted_dot(std::span<const double> a, std::span<const double> b, std::span<const double> weights) {
  check_sizes(a.size(), b.size());
  check_sizes(a.size(), weights.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += weights[i] * a[i] * b[i];
  return s;
}

}  // namespace serial

namespace parallel {

EnergyParts energy(const EnergyOperator& op, std::span<const double> w) {
  check_sizes(w.size(), op.size);
  EnergyParts e;
  e.dirichlet = chunked_sum(op.size, [&](std::size_t i) { return dirichlet_at(op, w, i); });
  e.curvature = chunked_sum(op.size, [&](std::size_t i) { return op.curvature[i] * w[i] * w[i]; });
  e.boundary = chunked_sum(op.size, [&](std::size_t i) { return op.boundary[i] * w[i] * w[i]; });
  return e;
}

void energy_gradient(const EnergyOperator& op, std::span<const double> w, std::span<double> out) {
  check_sizes(w.size(), op.size);
  check_sizes(out.size(), op.size);
  const auto n = static_cast<std::ptrdiff_t>(op.size);
#pragma omp parallel for schedule(static) if (!omp_in_parallel())
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = gradient_at(op, w, static_cast<std::size_t>(i));
  }
}

double power_sum(std::span<const double> w, std::span<const double> weights, double p) {
  check_sizes(w.size(), weights.size());
  return chunked_sum(w.size(), [&](std::size_t i) {
    return weights[i] != 0.0 ? weights[i] * pow_abs(w[i], p) : 0.0;
  });
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size());
  return chunked_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

double weighted_dot(std::span<const double> a, std::span<const double> b, std::span<const double> weights) {
  check_sizes(a.size(), b.size());
  check_sizes(a.size(), weights.size());
  return chunked_sum(a.size(), [&](std::size_t i) { return weights[i] * a[i] * b[i]; });
}

}  // namespace parallel

EnergyParts energy(const EnergyOperator& op, std::span<const double> w) {
  return execution() == Execution::serial ? serial::energy(op, w) : parallel::energy(op, w);
}

void energy_gradient(const EnergyOperator& op, std::span<const double> w, std::span<double> out) {
  if (execution() == Execution::serial) {
    serial::energy_gradient(op, w, out);
  } else {
    parallel::energy_gradient(op, w, out);
  }
}

double power_sum(std::span<const double> w, std::span<const double> weights, double p) {
  return execution() == Execution::serial ? serial::power_sum(w, weights, p)
                                          : parallel::power_sum(w, weights, p);
}

double dot(std::span<const double> a, std::span<const double> b) {
  return execution() == Execution::serial ? serial::dot(a, b) : parallel::dot(a, b);
}

double weighted_dot(std::span<const double> a, std::span<const double> b, std::span<const double> weights) {
  return execution() == Execution::serial ? serial::weighted_dot(a, b, weights)
                                          : parallel::weighted_dot(a, b, weights);
}

}  // namespace kernels
}  // namespace escobar
