#include <benchmark/benchmark.h>

#include "spdheat/pipeline.hpp"
#include "spdheat/rng.hpp"
#include "spdheat/spd.hpp"

using namespace spdheat;

namespace {

SpdTensor3 make_tensor(RandomStream& rng) {
  const Rotation3 q = rotation_exp({Vec3{rng.gaussian(), rng.gaussian(), rng.gaussian()}});
  const Mat3 m = q.mat() * Mat3::diag(0.1 + 10.0 * rng.uniform(), 0.1 + 10.0 * rng.uniform(),
                                      0.1 + 10.0 * rng.uniform()) *
                 transpose(q.mat());
  return SpdTensor3(SymTensor3::from_mat3(m));
}

void BM_Eigendecompose(benchmark::State& state) {
  RandomStream rng(1);
  const SpdTensor3 t = make_tensor(rng);
  for (auto _ : state) benchmark::DoNotOptimize(eigendecompose(t));
}
BENCHMARK(BM_Eigendecompose);

void BM_Align(benchmark::State& state) {
  RandomStream rng(2);
  const SpdTensor3 t = make_tensor(rng);
  const SpectralDecomp d = eigendecompose(t);
  const Rotation3 ref(pipeline::reference_rotation());
  for (auto _ : state) benchmark::DoNotOptimize(align(d, ref));
}
BENCHMARK(BM_Align);

void BM_LogSpd(benchmark::State& state) {
  RandomStream rng(3);
  const SpdTensor3 t = make_tensor(rng);
  for (auto _ : state) benchmark::DoNotOptimize(log_spd(t));
}
BENCHMARK(BM_LogSpd);

void BM_RotationExpLog(benchmark::State& state) {
  const AxisAngle3 w{Vec3{0.3, -0.2, 0.5}};
  for (auto _ : state) benchmark::DoNotOptimize(rotation_log(rotation_exp(w)));
}
BENCHMARK(BM_RotationExpLog);

}  // namespace
