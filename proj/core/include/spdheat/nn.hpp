#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdheat/dataset.hpp"
#include "spdheat/spd.hpp"
#include "spdheat/stats.hpp"

namespace spdheat::nn {

enum class PreprocessKind { Flatten, LogEig, StrAng };
enum class Activation { Tanh, Sigmoid, Relu };

std::string to_string(PreprocessKind k);
PreprocessKind preprocess_kind_from_string(const std::string& s);
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Input map B from the SPD cone to R^6. Flatten takes the six unique tensor
// entries; LogEig the six entries of the matrix logarithm; StrAng aligns the
// eigendecomposition to a carried reference frame and concatenates
// log-eigenvalues with the axis-angle vector of the aligned frame.
struct Preprocess {
  PreprocessKind kind = PreprocessKind::Flatten;
  std::optional<Rotation3> strang_reference;  // required for StrAng

  void validate() const;
};

std::array<double, 6> preprocess(const Preprocess& p, const SpdTensor3& t);

struct NetworkConfig {
  int input_dim = 6;
  std::vector<int> hidden;
  Activation activation = Activation::Tanh;
  int output_dim = 0;
  int epochs = 0;
  int batch_size = 1;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<int> layer_dims() const;  // input, hidden..., output
};

// Per-component z-score statistics fitted on the training split. Components
// whose spread is indistinguishable from rounding noise get std 1 so constant
// features/targets pass through untouched instead of amplifying noise.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;

  static Normalizer fit(const Matrix& rows, std::span<const int> indices);
  void normalize(std::span<double> v) const;
  void denormalize(std::span<double> v) const;
};

// Feedforward surrogate: preprocessing layer, affine/activation chain with a
// linear final layer, z-score feature and target normalization on both ends.
struct SurrogateNet {
  NetworkConfig config;
  Preprocess pre;
  std::vector<Matrix> weights;              // weights[l] is (dims[l+1] x dims[l])
  std::vector<std::vector<double>> biases;  // biases[l] has dims[l+1] entries
  Normalizer feature_norm, target_norm;

  // Denormalized prediction in kelvin.
  std::vector<double> predict(const SpdTensor3& t) const;

  // Chain in normalized space: x is a normalized feature vector.
  void forward_normalized(std::span<const double> x, std::span<double> out) const;
};

struct Gradients {
  std::vector<Matrix> dw;
  std::vector<std::vector<double>> db;
};

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch, normalized units
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

struct TrainResult {
  SurrogateNet net;  // parameters from the best-validation epoch
  TrainHistory history;
};

// Raw feature rows for every sample of the dataset (no normalization).
Matrix preprocess_all(const Preprocess& p, const Dataset& data);

// Mean over the batch of squared Euclidean error in normalized target space.
double loss_mse(const SurrogateNet& net, const Dataset& data, std::span<const int> indices);

// Exact reverse-mode gradients of loss_mse with respect to every weight and
// bias. The preprocessing layer is a data transformation; no gradient flows
// through it.
Gradients backward(const SurrogateNet& net, const Dataset& data, std::span<const int> indices);

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) over shuffled mini-batches; keeps
// the parameters of the epoch with the lowest validation loss. Fully
// reproducible from config.seed.
TrainResult train(const NetworkConfig& config, const Preprocess& pre, const Dataset& data);

// Self-describing checkpoint: JSON header (config, preprocessing, shapes)
// followed by all statistics and layer parameters as little-endian doubles.
void save_checkpoint(const SurrogateNet& net, const std::filesystem::path& path);
SurrogateNet load_checkpoint(const std::filesystem::path& path);

}  // namespace spdheat::nn
