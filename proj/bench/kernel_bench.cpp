// Serial reference kernels against their OpenMP counterparts on one operator.
// Argument: lateral nodes per axis; the normal axis has the same count.

#include <benchmark/benchmark.h>

#include <map>
#include <memory>
#include <vector>

#include "escobar/geometry.hpp"
#include "escobar/minimizer.hpp"

namespace {

using namespace escobar;

struct Fixture {
  std::shared_ptr<const MeasureSpace> space;
  ScalarField w;
  ScalarField out;
};

const Fixture& fixture(std::size_t nodes) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(nodes);
  if (it == cache.end()) {
    const Grid g = Grid::half_torus(3, nodes, nodes, 1.0, 1.0);
    auto space = std::make_shared<const MeasureSpace>(
        build_space(g, [](std::span<const double> z) { return 2.0 * z.back(); }, 0.5));
    Fixture f{space, smooth_random_field(g, 1), ScalarField(g.size())};
    it = cache.emplace(nodes, std::move(f)).first;
  }
  return it->second;
}

template <class Fn>
void run(benchmark::State& state, Fn fn) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) fn(f);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.w.size()));
}

void energy_serial(benchmark::State& s) {
  run(s, [](const Fixture& f) { benchmark::DoNotOptimize(kernels::serial::energy(f.space->base_operator(), f.w)); });
}
void energy_parallel(benchmark::State& s) {
  run(s, [](const Fixture& f) { benchmark::DoNotOptimize(kernels::parallel::energy(f.space->base_operator(), f.w)); });
}
void gradient_serial(benchmark::State& s) {
  run(s, [](const Fixture& f) {
    auto& out = const_cast<ScalarField&>(f.out);
    kernels::serial::energy_gradient(f.space->base_operator(), f.w, out);
    benchmark::ClobberMemory();
  });
}
void gradient_parallel(benchmark::State& s) {
  run(s, [](const Fixture& f) {
    auto& out = const_cast<ScalarField&>(f.out);
    kernels::parallel::energy_gradient(f.space->base_operator(), f.w, out);
    benchmark::ClobberMemory();
  });
}
void power_sum_serial(benchmark::State& s) {
  run(s, [](const Fixture& f) {
    benchmark::DoNotOptimize(kernels::serial::power_sum(f.w, f.space->interior_norm_weights(), 3.0));
  });
}
void power_sum_parallel(benchmark::State& s) {
  run(s, [](const Fixture& f) {
    benchmark::DoNotOptimize(kernels::parallel::power_sum(f.w, f.space->interior_norm_weights(), 3.0));
  });
}

}  // namespace

BENCHMARK(energy_serial)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(energy_parallel)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(gradient_serial)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(gradient_parallel)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(power_sum_serial)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(power_sum_parallel)->Arg(32)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
