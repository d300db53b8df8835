#include <benchmark/benchmark.h>

#include "spdheat/fem.hpp"

using namespace spdheat;
using namespace spdheat::fem;

namespace {

SpdTensor3 composite() { return SpdTensor3(SymTensor3{11.24, 3.49, 1.78, 5.18, 1.73, -0.356}); }

void BM_BuildMesh(benchmark::State& state) {
  CubeGeometry geom;
  geom.sample_grid = 11;
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_mesh(geom, n));
}
BENCHMARK(BM_BuildMesh)->Arg(11)->Arg(21);

void BM_Solve(benchmark::State& state) {
  CubeGeometry geom;
  const int n = static_cast<int>(state.range(0));
  geom.sample_grid = (n - 1) % 10 == 0 ? 11 : 3;
  const HexMesh mesh = build_mesh(geom, n);
  const SpdTensor3 cond = composite();
  for (auto _ : state) benchmark::DoNotOptimize(solve(geom, mesh, cond));
}
BENCHMARK(BM_Solve)->Arg(9)->Arg(13)->Arg(21)->Unit(benchmark::kMillisecond);

void BM_SolveWarmStart(benchmark::State& state) {
  CubeGeometry geom;
  const HexMesh mesh = build_mesh(geom, 21);
  const SpdTensor3 cond = composite();
  const TemperatureField ref = solve(geom, mesh, cond);
  SolveOptions opts;
  opts.initial_guess = &ref.values;
  // perturbed conductivity resolved from the reference solution
  const SpdTensor3 perturbed(SymTensor3{11.9, 3.6, 1.7, 5.2, 1.8, -0.30});
  for (auto _ : state) benchmark::DoNotOptimize(solve(geom, mesh, perturbed, opts));
}
BENCHMARK(BM_SolveWarmStart)->Unit(benchmark::kMillisecond);

}  // namespace
