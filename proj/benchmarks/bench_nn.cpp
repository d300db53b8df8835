#include <benchmark/benchmark.h>

#include "spdheat/nn.hpp"
#include "spdheat/pipeline.hpp"
#include "spdheat/rng.hpp"
#include "spdheat/stochastic.hpp"

using namespace spdheat;
using namespace spdheat::nn;

namespace {

Dataset make_dataset(int n, int out) {
  TensorModel model{SpectralDecomp{DiagPos3(pipeline::reference_eigenvalues()),
                                   Rotation3(pipeline::reference_rotation()), std::nullopt,
                                   false},
                    ScalingModel::from_moments({14.0, 0.11, 2.4}, {0.8, 0.02, 0.27}),
                    std::nullopt, 6},
      copy = model;
  Dataset d;
  d.tensors = Matrix(n, 6);
  d.targets = Matrix(n, out);
  RandomStream master(6);
  for (int i = 0; i < n; ++i) {
    RandomStream rng = master.split(i);
    const auto row = sample_tensor(copy, rng).sym().to_array();
    std::copy(row.begin(), row.end(), d.tensors.row(i).begin());
    for (int j = 0; j < out; ++j) d.targets(i, j) = 273.15 + rng.gaussian();
  }
  for (int i = 0; i < n; ++i) (i % 5 == 4 ? d.val_idx : d.train_idx).push_back(i);
  d.test_idx = d.val_idx;
  return d;
}

void BM_TrainEpochs(benchmark::State& state) {
  const Dataset d = make_dataset(256, 1331);
  NetworkConfig cfg;
  cfg.hidden = {16, 8};
  cfg.output_dim = 1331;
  cfg.epochs = static_cast<int>(state.range(0));
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  cfg.seed = 9;
  for (auto _ : state)
    benchmark::DoNotOptimize(train(cfg, {PreprocessKind::LogEig, std::nullopt}, d));
}
BENCHMARK(BM_TrainEpochs)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const Dataset d = make_dataset(64, 1331);
  NetworkConfig cfg;
  cfg.hidden = {16, 8};
  cfg.output_dim = 1331;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  cfg.seed = 10;
  const TrainResult res = train(cfg, {PreprocessKind::StrAng, Rotation3(pipeline::reference_rotation())}, d);
  const SpdTensor3 t = d.tensor_at(0);
  for (auto _ : state) benchmark::DoNotOptimize(res.net.predict(t));
}
BENCHMARK(BM_Predict);

}  // namespace
