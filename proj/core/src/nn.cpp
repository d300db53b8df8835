#include "spdheat/nn.hpp"

#include "spdheat/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

namespace spdheat::nn {

using nlohmann::json;

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Tanh:
      return std::tanh(z);
    case Activation::Sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    default:
      return z > 0.0 ? z : 0.0;
  }
}

// Derivative expressed through the activation value.
double activate_grad(Activation a, double v) {
  switch (a) {
    case Activation::Tanh:
      return 1.0 - v * v;
    case Activation::Sigmoid:
      return v * (1.0 - v);
    default:
      return v > 0.0 ? 1.0 : 0.0;
  }
}

void affine(const Matrix& w, const std::vector<double>& b, std::span<const double> x,
            std::span<double> out) {
  for (std::size_t j = 0; j < w.rows; ++j) {
    double s = b[j];
    const double* wr = w.data.data() + j * w.cols;
    for (std::size_t i = 0; i < w.cols; ++i) s += wr[i] * x[i];
    out[j] = s;
  }
}

// Scratch space for one forward/backward pass.
struct Workspace {
  std::vector<std::vector<double>> act;    // act[l], l = 0..L (act[0] = input)
  std::vector<std::vector<double>> delta;  // delta[l], l = 1..L

  explicit Workspace(const std::vector<int>& dims) {
    act.resize(dims.size());
    delta.resize(dims.size());
    for (std::size_t l = 0; l < dims.size(); ++l) {
      act[l].resize(dims[l]);
      delta[l].resize(dims[l]);
    }
  }
};

void forward_pass(const SurrogateNet& net, std::span<const double> x, Workspace& ws) {
  const std::size_t layers = net.weights.size();
  std::copy(x.begin(), x.end(), ws.act[0].begin());
  for (std::size_t l = 0; l < layers; ++l) {
    affine(net.weights[l], net.biases[l], ws.act[l], ws.act[l + 1]);
    if (l + 1 < layers)  // final layer stays linear
      for (double& v : ws.act[l + 1]) v = activate(net.config.activation, v);
  }
}

// Accumulates gradients for one sample given delta at the output layer
// (already scaled by the batch factor).
void backward_pass(const SurrogateNet& net, Workspace& ws, Gradients& grads) {
  const std::size_t layers = net.weights.size();
  for (std::size_t l = layers; l-- > 0;) {
    const auto& delta = ws.delta[l + 1];
    const auto& a_in = ws.act[l];
    Matrix& dw = grads.dw[l];
    auto& db = grads.db[l];
    for (std::size_t j = 0; j < dw.rows; ++j) {
      const double d = delta[j];
      db[j] += d;
      double* dwr = dw.data.data() + j * dw.cols;
      for (std::size_t i = 0; i < dw.cols; ++i) dwr[i] += d * a_in[i];
    }
    if (l == 0) break;
    auto& prev = ws.delta[l];
    std::fill(prev.begin(), prev.end(), 0.0);
    const Matrix& w = net.weights[l];
    for (std::size_t j = 0; j < w.rows; ++j) {
      const double d = delta[j];
      const double* wr = w.data.data() + j * w.cols;
      for (std::size_t i = 0; i < w.cols; ++i) prev[i] += wr[i] * d;
    }
    for (std::size_t i = 0; i < prev.size(); ++i)
      prev[i] *= activate_grad(net.config.activation, ws.act[l][i]);
  }
}

Gradients zero_gradients(const SurrogateNet& net) {
  Gradients g;
  g.dw.reserve(net.weights.size());
  g.db.reserve(net.biases.size());
  for (const auto& w : net.weights) g.dw.emplace_back(w.rows, w.cols);
  for (const auto& b : net.biases) g.db.emplace_back(b.size(), 0.0);
  return g;
}

void check_indices(const Dataset& data, std::span<const int> indices, const char* where) {
  if (indices.empty()) throw EmptyBatchError(std::string(where) + ": empty batch");
  for (int i : indices)
    if (i < 0 || static_cast<std::size_t>(i) >= data.size())
      throw ValidationError(std::string(where) + ": index out of range");
}

}  // namespace

std::string to_string(PreprocessKind k) {
  switch (k) {
    case PreprocessKind::Flatten:
      return "flatten";
    case PreprocessKind::LogEig:
      return "logeig";
    default:
      return "strang";
  }
}

PreprocessKind preprocess_kind_from_string(const std::string& s) {
  if (s == "flatten") return PreprocessKind::Flatten;
  if (s == "logeig") return PreprocessKind::LogEig;
  if (s == "strang") return PreprocessKind::StrAng;
  throw ValidationError("unknown preprocess kind: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Sigmoid:
      return "sigmoid";
    default:
      return "relu";
  }
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  throw ValidationError("unknown activation: " + s);
}

void Preprocess::validate() const {
  if (kind == PreprocessKind::StrAng && !strang_reference)
    throw ValidationError("StrAng preprocessing requires a reference frame");
}

std::array<double, 6> preprocess(const Preprocess& p, const SpdTensor3& t) {
  p.validate();
  switch (p.kind) {
    case PreprocessKind::Flatten:
      return t.sym().to_array();
    case PreprocessKind::LogEig:
      return log_spd(t).to_array();
    default: {
      const SpectralDecomp aligned = align(eigendecompose(t), *p.strang_reference);
      const AxisAngle3 w = rotation_log(aligned.eigvecs);
      return {std::log(aligned.eigvals[0]), std::log(aligned.eigvals[1]),
              std::log(aligned.eigvals[2]), w.w.x, w.w.y, w.w.z};
    }
  }
}

void NetworkConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ValidationError("NetworkConfig: sizes must be >= 1");
  for (int h : hidden)
    if (h < 1) throw ValidationError("NetworkConfig: hidden sizes must be >= 1");
  if (epochs < 1 || batch_size < 1) throw ValidationError("NetworkConfig: epochs/batch >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("NetworkConfig: learning rate must be > 0");
}

std::vector<int> NetworkConfig::layer_dims() const {
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);
  return dims;
}

Normalizer Normalizer::fit(const Matrix& rows, std::span<const int> indices) {
  if (indices.size() < 1) throw ValidationError("Normalizer: no rows to fit");
  Normalizer n;
  n.mean.assign(rows.cols, 0.0);
  n.std.assign(rows.cols, 1.0);

  for (int i : indices) {
    const auto r = rows.row(i);
    for (std::size_t j = 0; j < rows.cols; ++j) n.mean[j] += r[j];
  }
  for (double& m : n.mean) m /= static_cast<double>(indices.size());

  if (indices.size() > 1) {
    std::vector<double> ss(rows.cols, 0.0);
    for (int i : indices) {
      const auto r = rows.row(i);
      for (std::size_t j = 0; j < rows.cols; ++j) {
        const double d = r[j] - n.mean[j];
        ss[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < rows.cols; ++j) {
      const double s = std::sqrt(ss[j] / static_cast<double>(indices.size() - 1));
      // spread below rounding noise counts as constant
      n.std[j] = s <= 1e-12 * std::max(1.0, std::abs(n.mean[j])) ? 1.0 : s;
    }
  }
  return n;
}

void Normalizer::normalize(std::span<double> v) const {
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = (v[j] - mean[j]) / std[j];
}

void Normalizer::denormalize(std::span<double> v) const {
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = v[j] * std[j] + mean[j];
}

void SurrogateNet::forward_normalized(std::span<const double> x, std::span<double> out) const {
  Workspace ws(config.layer_dims());
  forward_pass(*this, x, ws);
  std::copy(ws.act.back().begin(), ws.act.back().end(), out.begin());
}

std::vector<double> SurrogateNet::predict(const SpdTensor3& t) const {
  auto feat = preprocess(pre, t);
  feature_norm.normalize(feat);
  std::vector<double> out(config.output_dim);
  forward_normalized(feat, out);
  target_norm.denormalize(out);
  return out;
}

Matrix preprocess_all(const Preprocess& p, const Dataset& data) {
  Matrix features(data.size(), 6);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = preprocess(p, data.tensor_at(i));
    std::copy(f.begin(), f.end(), features.row(i).begin());
  }
  return features;
}

double loss_mse(const SurrogateNet& net, const Dataset& data, std::span<const int> indices) {
  check_indices(data, indices, "loss_mse");
  Workspace ws(net.config.layer_dims());
  double total = 0.0;
  for (int i : indices) {
    auto feat = preprocess(net.pre, data.tensor_at(i));
    net.feature_norm.normalize(feat);
    forward_pass(net, feat, ws);
    const auto y = data.targets.row(i);
    const auto& yhat = ws.act.back();
    for (std::size_t j = 0; j < yhat.size(); ++j) {
      const double r = yhat[j] - (y[j] - net.target_norm.mean[j]) / net.target_norm.std[j];
      total += r * r;
    }
  }
  return total / static_cast<double>(indices.size());
}

Gradients backward(const SurrogateNet& net, const Dataset& data, std::span<const int> indices) {
  check_indices(data, indices, "backward");
  Workspace ws(net.config.layer_dims());
  Gradients grads = zero_gradients(net);
  const double scale = 2.0 / static_cast<double>(indices.size());
  for (int i : indices) {
    auto feat = preprocess(net.pre, data.tensor_at(i));
    net.feature_norm.normalize(feat);
    forward_pass(net, feat, ws);
    const auto y = data.targets.row(i);
    auto& out_delta = ws.delta.back();
    const auto& yhat = ws.act.back();
    for (std::size_t j = 0; j < yhat.size(); ++j)
      out_delta[j] =
          scale * (yhat[j] - (y[j] - net.target_norm.mean[j]) / net.target_norm.std[j]);
    backward_pass(net, ws, grads);
  }
  return grads;
}

TrainResult train(const NetworkConfig& config, const Preprocess& pre, const Dataset& data) {
  config.validate();
  pre.validate();
  if (data.train_idx.empty() || data.val_idx.empty())
    throw ValidationError("train: train and validation splits must be nonempty");
  if (static_cast<std::size_t>(config.output_dim) != data.targets.cols)
    throw ShapeMismatchError("train: output_dim does not match target width");
  if (config.input_dim != 6)
    throw ShapeMismatchError("train: input_dim must be 6 for tensor features");

  SurrogateNet net;
  net.config = config;
  net.pre = pre;

  const Matrix features_raw = preprocess_all(pre, data);
  net.feature_norm = Normalizer::fit(features_raw, data.train_idx);
  net.target_norm = Normalizer::fit(data.targets, data.train_idx);

  // Normalized feature rows for every sample (6 columns; cheap to keep).
  Matrix xn = features_raw;
  for (std::size_t i = 0; i < xn.rows; ++i) net.feature_norm.normalize(xn.row(i));

  const std::vector<int> dims = config.layer_dims();
  const std::size_t layers = dims.size() - 1;

  // Glorot-uniform init, biases zero.
  RandomStream init_rng = RandomStream(config.seed).split(0);
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix w(dims[l + 1], dims[l]);
    const double limit = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
    for (double& v : w.data) v = (2.0 * init_rng.uniform() - 1.0) * limit;
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(dims[l + 1], 0.0);
  }

  Gradients m = zero_gradients(net);
  Gradients v = zero_gradients(net);
  Workspace ws(dims);

  const auto& tnorm = net.target_norm;
  auto out_residual = [&](int sample, std::span<const double> yhat, std::span<double> res) {
    const auto y = data.targets.row(sample);
    for (std::size_t j = 0; j < res.size(); ++j)
      res[j] = yhat[j] - (y[j] - tnorm.mean[j]) / tnorm.std[j];
  };

  auto split_loss = [&](std::span<const int> idx) {
    double total = 0.0;
    std::vector<double> res(config.output_dim);
    for (int i : idx) {
      forward_pass(net, xn.row(i), ws);
      out_residual(i, ws.act.back(), res);
      for (double r : res) total += r * r;
    }
    return total / static_cast<double>(idx.size());
  };

  RandomStream shuffle_rng = RandomStream(config.seed).split(1);
  std::vector<int> order = data.train_idx;

  TrainHistory history;
  std::vector<Matrix> best_w = net.weights;
  std::vector<std::vector<double>> best_b = net.biases;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  Gradients grads = zero_gradients(net);
  std::vector<double> res(config.output_dim);
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates from the run's shuffle stream, one shuffle per epoch.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.next_u64() % i;
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double bscale = 2.0 / static_cast<double>(stop - start);

      for (auto& g : grads.dw) std::fill(g.data.begin(), g.data.end(), 0.0);
      for (auto& g : grads.db) std::fill(g.begin(), g.end(), 0.0);

      for (std::size_t bi = start; bi < stop; ++bi) {
        const int i = order[bi];
        forward_pass(net, xn.row(i), ws);
        out_residual(i, ws.act.back(), res);
        double sample_sq = 0.0;
        for (std::size_t j = 0; j < res.size(); ++j) {
          sample_sq += res[j] * res[j];
          ws.delta.back()[j] = bscale * res[j];
        }
        epoch_loss += sample_sq;
        backward_pass(net, ws, grads);
      }

      // Adam step over all parameters.
      ++step;
      const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      for (std::size_t l = 0; l < layers; ++l) {
        auto update = [&](double& theta, double g, double& mi, double& vi) {
          mi = kAdamBeta1 * mi + (1.0 - kAdamBeta1) * g;
          vi = kAdamBeta2 * vi + (1.0 - kAdamBeta2) * g * g;
          theta -= config.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + kAdamEps);
        };
        for (std::size_t k = 0; k < net.weights[l].data.size(); ++k)
          update(net.weights[l].data[k], grads.dw[l].data[k], m.dw[l].data[k], v.dw[l].data[k]);
        for (std::size_t k = 0; k < net.biases[l].size(); ++k)
          update(net.biases[l][k], grads.db[l][k], m.db[l][k], v.db[l][k]);
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    const double val_loss = split_loss(data.val_idx);
    if (!std::isfinite(epoch_loss) || !std::isfinite(val_loss))
      throw NonFiniteLossError("train: loss became non-finite at epoch " + std::to_string(epoch));

    history.train_loss.push_back(epoch_loss);
    history.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best_w = net.weights;
      best_b = net.biases;
    }
  }

  net.weights = std::move(best_w);
  net.biases = std::move(best_b);
  history.best_epoch = best_epoch;
  history.best_val_loss = best_val;
  return {std::move(net), std::move(history)};
}

// --- checkpoint io ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'P', 'D', 'H', 'N', 'E', 'T', '1'};

void append_doubles(std::string& blob, const double* p, std::size_t count) {
  static_assert(std::endian::native == std::endian::little);
  blob.append(reinterpret_cast<const char*>(p), count * 8);
}

}  // namespace

void save_checkpoint(const SurrogateNet& net, const std::filesystem::path& path) {
  json header;
  header["config"] = {{"input_dim", net.config.input_dim},
                      {"hidden", net.config.hidden},
                      {"activation", to_string(net.config.activation)},
                      {"output_dim", net.config.output_dim},
                      {"epochs", net.config.epochs},
                      {"batch_size", net.config.batch_size},
                      {"learning_rate", net.config.learning_rate},
                      {"seed", net.config.seed}};
  header["preprocess"]["kind"] = to_string(net.pre.kind);
  if (net.pre.strang_reference) {
    auto rows = json::array();
    for (int i = 0; i < 3; ++i)
      rows.push_back({net.pre.strang_reference->mat()(i, 0), net.pre.strang_reference->mat()(i, 1),
                      net.pre.strang_reference->mat()(i, 2)});
    header["preprocess"]["reference"] = rows;
  } else {
    header["preprocess"]["reference"] = nullptr;
  }
  header["dims"] = net.config.layer_dims();

  const std::string hs = header.dump();
  std::string blob;
  blob.append(kMagic, 8);
  const std::uint64_t len = hs.size();
  blob.append(reinterpret_cast<const char*>(&len), 8);
  blob += hs;

  append_doubles(blob, net.feature_norm.mean.data(), net.feature_norm.mean.size());
  append_doubles(blob, net.feature_norm.std.data(), net.feature_norm.std.size());
  append_doubles(blob, net.target_norm.mean.data(), net.target_norm.mean.size());
  append_doubles(blob, net.target_norm.std.data(), net.target_norm.std.size());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    append_doubles(blob, net.weights[l].data.data(), net.weights[l].data.size());
    append_doubles(blob, net.biases[l].data(), net.biases[l].size());
  }
  io::write_text(path, blob);
}

SurrogateNet load_checkpoint(const std::filesystem::path& path) {
  const std::string blob = io::read_text(path);
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, 8) != 0)
    throw ValidationError("load_checkpoint: bad magic in " + path.string());
  std::uint64_t len = 0;
  std::memcpy(&len, blob.data() + 8, 8);
  if (blob.size() < 16 + len) throw ValidationError("load_checkpoint: truncated header");
  const json header = json::parse(blob.substr(16, len));

  SurrogateNet net;
  const json& c = header.at("config");
  net.config.input_dim = c.at("input_dim").get<int>();
  net.config.hidden = c.at("hidden").get<std::vector<int>>();
  net.config.activation = activation_from_string(c.at("activation").get<std::string>());
  net.config.output_dim = c.at("output_dim").get<int>();
  net.config.epochs = c.at("epochs").get<int>();
  net.config.batch_size = c.at("batch_size").get<int>();
  net.config.learning_rate = c.at("learning_rate").get<double>();
  net.config.seed = c.at("seed").get<std::uint64_t>();

  net.pre.kind = preprocess_kind_from_string(header.at("preprocess").at("kind").get<std::string>());
  if (!header.at("preprocess").at("reference").is_null()) {
    Mat3 r;
    const auto& rows = header.at("preprocess").at("reference");
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = rows.at(i).at(j).get<double>();
    net.pre.strang_reference = Rotation3(r);
  }

  const std::vector<int> dims = net.config.layer_dims();
  std::size_t offset = 16 + len;
  auto take = [&](double* dst, std::size_t count) {
    if (blob.size() < offset + count * 8)
      throw ValidationError("load_checkpoint: truncated payload");
    std::memcpy(dst, blob.data() + offset, count * 8);
    offset += count * 8;
  };

  net.feature_norm.mean.resize(net.config.input_dim);
  net.feature_norm.std.resize(net.config.input_dim);
  net.target_norm.mean.resize(net.config.output_dim);
  net.target_norm.std.resize(net.config.output_dim);
  take(net.feature_norm.mean.data(), net.feature_norm.mean.size());
  take(net.feature_norm.std.data(), net.feature_norm.std.size());
  take(net.target_norm.mean.data(), net.target_norm.mean.size());
  take(net.target_norm.std.data(), net.target_norm.std.size());

  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix w(dims[l + 1], dims[l]);
    std::vector<double> b(dims[l + 1]);
    take(w.data.data(), w.data.size());
    take(b.data(), b.size());
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  if (offset != blob.size()) throw ValidationError("load_checkpoint: trailing bytes");
  return net;
}

}  // namespace spdheat::nn
