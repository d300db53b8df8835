#include <benchmark/benchmark.h>

#include "spdheat/pipeline.hpp"
#include "spdheat/stochastic.hpp"

using namespace spdheat;

namespace {

TensorModel combined_model() {
  TensorModel model{SpectralDecomp{DiagPos3(pipeline::reference_eigenvalues()),
                                   Rotation3(pipeline::reference_rotation()), std::nullopt,
                                   false},
                    ScalingModel::from_moments({14.0, 0.11, 2.4}, {0.8, 0.02, 0.27}),
                    OrientationModel{pipeline::reference_rotation().col(0), 200.0}, 1};
  return model;
}

void BM_SampleVmf(benchmark::State& state) {
  OrientationModel m{pipeline::reference_rotation().col(0), 200.0};
  RandomStream rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(sample_vmf(m, rng));
}
BENCHMARK(BM_SampleVmf);

void BM_SampleTensor(benchmark::State& state) {
  const TensorModel model = combined_model();
  RandomStream master(5);
  std::uint64_t i = 0;
  for (auto _ : state) {
    RandomStream rng = master.split(i++);
    benchmark::DoNotOptimize(sample_tensor(model, rng));
  }
}
BENCHMARK(BM_SampleTensor);

}  // namespace
