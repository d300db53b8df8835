#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spdheat/dataset.hpp"
#include "spdheat/fem.hpp"
#include "spdheat/nn.hpp"
#include "spdheat/stats.hpp"
#include "spdheat/stochastic.hpp"

namespace spdheat::pipeline {

struct ExperimentCounts {
  int train = 4000;
  int val = 1000;
  int test = 5000;
  long reference_mc = 20000;
};

// User-facing slice of a network configuration; input/output sizes and the
// run seed are derived at training time.
struct NetworkSpec {
  std::vector<int> hidden;
  nn::Activation activation = nn::Activation::Tanh;
  int epochs = 0;
  int batch_size = 1;
  double learning_rate = 0.0;
};

// Serializable description of the stochastic tensor model.
struct ModelConfig {
  std::array<double, 3> reference_eigenvalues{};
  Mat3 reference_rotation = Mat3::identity();
  std::optional<std::array<double, 6>> scaling;  // mean[3] then stddev[3]
  std::optional<std::array<double, 4>> orientation;  // direction[3] then concentration

  TensorModel build(std::uint64_t seed) const;
};

struct ExperimentConfig {
  fem::CubeGeometry geometry;
  int mesh_n = 21;
  ModelConfig model;
  ExperimentCounts counts;
  std::map<std::string, NetworkSpec> networks;  // keyed by preprocess kind name
  std::array<Vec3, 2> probe_points{Vec3{-0.02, -0.02, 0.0}, Vec3{0.015, 0.015, 0.0}};
  int repeats = 3;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  void validate() const;
  std::string to_json_string(int indent = 2) const;
  static ExperimentConfig from_json_string(const std::string& text);

  // Built-in experiment presets: "scaling", "orientation", "combined".
  // paper_scale restores the full sample counts and repeat count.
  static ExperimentConfig preset(const std::string& name, bool paper_scale = false);
};

// Reference frame used by every preset: the published eigenvalues and the
// (orthonormalized) dense rotation of the composite conductivity tensor.
const std::array<double, 3>& reference_eigenvalues();
const Mat3& reference_rotation();

using LogFn = std::function<void(const std::string&)>;

// Progress hook invoked after every completed generation chunk; throwing from
// it abandons the run mid-way, which the resume path then picks up.
using ChunkFn = std::function<void(std::size_t completed, std::size_t total)>;

struct GenDataResult {
  std::filesystem::path dataset_dir;
  std::filesystem::path reference_dir;  // empty when reference_mc == 0
  bool dataset_reused = false;
  bool reference_reused = false;
};

// Samples tensors, solves each one, and writes the main and reference-MC
// datasets. Verifies the discrete energy balance (<= 1e-8) per sample and
// aborts with the failing sample index otherwise. Complete datasets are
// skipped; interrupted runs resume from the last finished chunk.
GenDataResult run_gen_data(const ExperimentConfig& cfg, const LogFn& log = {},
                           const ChunkFn& chunk_hook = {});

// Field statistics and probe-point density estimates over every record of a
// dataset directory; writes fieldstats.csv, kde_probe_<i>.csv, mcstats.json.
std::filesystem::path run_mc_stats(const ExperimentConfig& cfg,
                                   const std::filesystem::path& dataset_dir,
                                   const LogFn& log = {});

struct RepeatMetrics {
  double best_val_loss = 0.0;
  double test_loss = 0.0;
  double train_loss = 0.0;  // at the best-validation epoch
  int best_epoch = -1;
};

struct TrainSummary {
  std::string kind;
  std::vector<RepeatMetrics> repeats;
  int best_repeat = -1;
  double best_val_loss = 0.0;
  double test_loss = 0.0;   // of the best repeat
  double train_loss = 0.0;  // of the best repeat
  double mean_val_loss = 0.0, std_val_loss = 0.0;
  double mean_test_loss = 0.0, std_test_loss = 0.0;
  double mean_train_loss = 0.0, std_train_loss = 0.0;
};

// Trains `repeats` independent runs per requested preprocessing kind (all
// kinds with a network spec when `kinds` is empty); writes per-repeat
// checkpoints and history CSVs plus per-kind and combined summary JSONs.
std::vector<TrainSummary> run_train(const ExperimentConfig& cfg,
                                    const std::filesystem::path& dataset_dir,
                                    const std::vector<std::string>& kinds = {},
                                    const LogFn& log = {});

struct EvaluationArtifacts {
  stats::NormReport norms;
  stats::FieldStats ref_stats, pred_stats;
  stats::FieldErrors mean_errors, std_errors;
  std::vector<double> kl;  // per grid point, nats
};

// Pure evaluation core: reference and predicted test matrices in, the norm
// table and per-point error/divergence maps out.
EvaluationArtifacts evaluate_predictions(const Matrix& reference, const Matrix& predicted);

// Loads a checkpoint, predicts the dataset's test split, and writes
// norms.json + error_maps.csv under out/eval/<kind>/.
EvaluationArtifacts run_evaluate(const ExperimentConfig& cfg,
                                 const std::filesystem::path& checkpoint,
                                 const std::filesystem::path& dataset_dir,
                                 const LogFn& log = {});

// Path of the best-validation checkpoint for a kind, per the train summary.
std::filesystem::path best_checkpoint_path(const ExperimentConfig& cfg, const std::string& kind);

// Aggregates train summaries and evaluation norms into report/metrics.csv,
// report/norms.csv and report/report.json.
std::filesystem::path run_report(const ExperimentConfig& cfg, const LogFn& log = {});

}  // namespace spdheat::pipeline
