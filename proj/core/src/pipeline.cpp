#include "spdheat/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>

namespace spdheat::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kGenChunk = 512;
constexpr double kEnergyBalanceLimit = 1e-8;

const std::vector<std::string>& canonical_kinds() {
  static const std::vector<std::string> kinds{"flatten", "logeig", "strang"};
  return kinds;
}

int kind_index(const std::string& kind) {
  const auto& kinds = canonical_kinds();
  const auto it = std::find(kinds.begin(), kinds.end(), kind);
  if (it == kinds.end()) throw ValidationError("unknown preprocess kind: " + kind);
  return static_cast<int>(it - kinds.begin());
}

std::string face_to_string(fem::Face f) {
  switch (f) {
    case fem::Face::XNeg:
      return "-x";
    case fem::Face::XPos:
      return "+x";
    case fem::Face::YNeg:
      return "-y";
    case fem::Face::YPos:
      return "+y";
    case fem::Face::ZNeg:
      return "-z";
    default:
      return "+z";
  }
}

fem::Face face_from_string(const std::string& s) {
  if (s == "-x") return fem::Face::XNeg;
  if (s == "+x") return fem::Face::XPos;
  if (s == "-y") return fem::Face::YNeg;
  if (s == "+y") return fem::Face::YPos;
  if (s == "-z") return fem::Face::ZNeg;
  if (s == "+z") return fem::Face::ZPos;
  throw ValidationError("unknown face: " + s);
}

json mat3_to_json(const Mat3& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return rows;
}

Mat3 mat3_from_json(const json& j) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

Mat3 orthonormalized(const Mat3& m) {
  const Vec3 c0 = normalized(m.col(0));
  Vec3 c1 = m.col(1) - dot(c0, m.col(1)) * c0;
  c1 = normalized(c1);
  const Vec3 c2 = cross(c0, c1);
  Mat3 out;
  out.set_col(0, c0);
  out.set_col(1, c1);
  out.set_col(2, c2);
  return out;
}

void write_json_file(const fs::path& path, const json& j) {
  io::write_text(path, j.dump(2) + "\n");
}

std::uint64_t run_seed(std::uint64_t master, const std::string& kind, int repeat) {
  return RandomStream(master)
      .split(0x5eed0000ULL + static_cast<std::uint64_t>(kind_index(kind)))
      .split(static_cast<std::uint64_t>(repeat))
      .key();
}

double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

const std::array<double, 3>& reference_eigenvalues() {
  static const std::array<double, 3> v{14.0, 0.11, 2.4};
  return v;
}

const Mat3& reference_rotation() {
  static const Mat3 q = [] {
    Mat3 raw;
    raw(0, 0) = 0.892;
    raw(0, 1) = -0.416;
    raw(0, 2) = 0.174;
    raw(1, 0) = 0.436;
    raw(1, 1) = 0.700;
    raw(1, 2) = 0.565;
    raw(2, 0) = 0.113;
    raw(2, 1) = 0.580;
    raw(2, 2) = 0.807;
    return orthonormalized(raw);
  }();
  return q;
}

TensorModel ModelConfig::build(std::uint64_t seed) const {
  TensorModel model{
      SpectralDecomp{DiagPos3(reference_eigenvalues), Rotation3(reference_rotation),
                     std::nullopt, false},
      std::nullopt, std::nullopt, seed};
  if (scaling) {
    model.scaling = ScalingModel::from_moments(
        {(*scaling)[0], (*scaling)[1], (*scaling)[2]},
        {(*scaling)[3], (*scaling)[4], (*scaling)[5]});
  }
  if (orientation) {
    OrientationModel om{Vec3{(*orientation)[0], (*orientation)[1], (*orientation)[2]},
                        (*orientation)[3]};
    om.validate();
    model.orientation = om;
  }
  model.validate();
  return model;
}

void ExperimentConfig::validate() const {
  geometry.validate();
  if (mesh_n < 3) throw ValidationError("config: mesh_n must be >= 3");
  if ((mesh_n - 1) % (geometry.sample_grid - 1) != 0)
    throw ValidationError("config: sample grid g-1 must divide mesh n-1");
  if (counts.train < 1 || counts.val < 1 || counts.test < 1 || counts.reference_mc < 0)
    throw ValidationError("config: sample counts must be >= 1 (reference_mc >= 0)");
  if (repeats < 1) throw ValidationError("config: repeats must be >= 1");
  if (networks.empty()) throw ValidationError("config: at least one network spec required");
  for (const auto& [kind, spec] : networks) {
    kind_index(kind);
    if (spec.epochs < 1 || spec.batch_size < 1 || !(spec.learning_rate > 0.0))
      throw ValidationError("config: invalid network spec for " + kind);
  }
  model.build(seed);  // validates the model blocks
}

std::string ExperimentConfig::to_json_string(int indent) const {
  json j;
  j["geometry"] = {{"side", geometry.side},
                   {"patch_side", geometry.patch_side},
                   {"neumann_face", face_to_string(geometry.neumann_face)},
                   {"neumann_flux", geometry.neumann_flux},
                   {"dirichlet_temp", geometry.dirichlet_temp},
                   {"source", geometry.source},
                   {"sample_grid", geometry.sample_grid}};
  j["mesh_n"] = mesh_n;
  j["model"]["reference"] = {{"eigenvalues", model.reference_eigenvalues},
                             {"rotation", mat3_to_json(model.reference_rotation)}};
  if (model.scaling) {
    j["model"]["scaling"] = {
        {"mean", {(*model.scaling)[0], (*model.scaling)[1], (*model.scaling)[2]}},
        {"stddev", {(*model.scaling)[3], (*model.scaling)[4], (*model.scaling)[5]}}};
  }
  if (model.orientation) {
    j["model"]["orientation"] = {
        {"mean_direction",
         {(*model.orientation)[0], (*model.orientation)[1], (*model.orientation)[2]}},
        {"concentration", (*model.orientation)[3]}};
  }
  j["counts"] = {{"train", counts.train},
                 {"val", counts.val},
                 {"test", counts.test},
                 {"reference_mc", counts.reference_mc}};
  for (const auto& [kind, spec] : networks) {
    j["networks"][kind] = {{"hidden", spec.hidden},
                           {"activation", nn::to_string(spec.activation)},
                           {"epochs", spec.epochs},
                           {"batch_size", spec.batch_size},
                           {"learning_rate", spec.learning_rate}};
  }
  j["probe_points"] = {{probe_points[0].x, probe_points[0].y, probe_points[0].z},
                       {probe_points[1].x, probe_points[1].y, probe_points[1].z}};
  j["repeats"] = repeats;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  return j.dump(indent) + "\n";
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  const json& g = j.at("geometry");
  cfg.geometry.side = g.at("side").get<double>();
  cfg.geometry.patch_side = g.at("patch_side").get<double>();
  cfg.geometry.neumann_face = face_from_string(g.at("neumann_face").get<std::string>());
  cfg.geometry.neumann_flux = g.at("neumann_flux").get<double>();
  cfg.geometry.dirichlet_temp = g.at("dirichlet_temp").get<double>();
  cfg.geometry.source = g.at("source").get<double>();
  cfg.geometry.sample_grid = g.at("sample_grid").get<int>();
  cfg.mesh_n = j.at("mesh_n").get<int>();

  const json& m = j.at("model");
  cfg.model.reference_eigenvalues = m.at("reference").at("eigenvalues");
  cfg.model.reference_rotation = mat3_from_json(m.at("reference").at("rotation"));
  if (m.contains("scaling")) {
    const auto mean = m.at("scaling").at("mean").get<std::array<double, 3>>();
    const auto sd = m.at("scaling").at("stddev").get<std::array<double, 3>>();
    cfg.model.scaling = {mean[0], mean[1], mean[2], sd[0], sd[1], sd[2]};
  }
  if (m.contains("orientation")) {
    const auto dir = m.at("orientation").at("mean_direction").get<std::array<double, 3>>();
    cfg.model.orientation = {dir[0], dir[1], dir[2],
                             m.at("orientation").at("concentration").get<double>()};
  }

  const json& c = j.at("counts");
  cfg.counts = {c.at("train").get<int>(), c.at("val").get<int>(), c.at("test").get<int>(),
                c.at("reference_mc").get<long>()};

  for (const auto& [kind, spec] : j.at("networks").items()) {
    NetworkSpec ns;
    ns.hidden = spec.at("hidden").get<std::vector<int>>();
    ns.activation = nn::activation_from_string(spec.at("activation").get<std::string>());
    ns.epochs = spec.at("epochs").get<int>();
    ns.batch_size = spec.at("batch_size").get<int>();
    ns.learning_rate = spec.at("learning_rate").get<double>();
    cfg.networks[kind] = ns;
  }

  const json& pp = j.at("probe_points");
  for (int i = 0; i < 2; ++i)
    cfg.probe_points[i] =
        Vec3{pp.at(i).at(0).get<double>(), pp.at(i).at(1).get<double>(), pp.at(i).at(2).get<double>()};
  cfg.repeats = j.at("repeats").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.out_dir = j.at("out_dir").get<std::string>();
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::preset(const std::string& name, bool paper_scale) {
  ExperimentConfig cfg;
  cfg.model.reference_eigenvalues = reference_eigenvalues();
  cfg.model.reference_rotation = reference_rotation();
  cfg.counts = paper_scale ? ExperimentCounts{16000, 4000, 30000, 500000}
                           : ExperimentCounts{4000, 1000, 5000, 20000};
  cfg.repeats = paper_scale ? 10 : 3;

  NetworkSpec spec;
  if (name == "scaling") {
    cfg.model.scaling = {14.0, 0.11, 2.4, 0.8, 0.02, 0.27};
    spec = NetworkSpec{{16, 8}, nn::Activation::Tanh, 300, 8, 3e-3};
  } else if (name == "orientation") {
    const Vec3 mu = reference_rotation().col(0);
    cfg.model.orientation = {mu.x, mu.y, mu.z, 200.0};
    spec = NetworkSpec{{32, 8}, nn::Activation::Sigmoid, 500, 32, 7.5e-3};
  } else if (name == "combined") {
    cfg.model.scaling = {14.0, 0.11, 2.4, 0.8, 0.02, 0.27};
    const Vec3 mu = reference_rotation().col(0);
    cfg.model.orientation = {mu.x, mu.y, mu.z, 200.0};
    spec = NetworkSpec{{48, 16, 8}, nn::Activation::Sigmoid, 300, 16, 2.5e-3};
  } else {
    throw ValidationError("unknown preset: " + name +
                          " (expected scaling, orientation or combined)");
  }
  for (const std::string& kind : canonical_kinds()) cfg.networks[kind] = spec;
  return cfg;
}

// --- gen-data ---------------------------------------------------------------

namespace {

struct GenTask {
  const ExperimentConfig& cfg;
  const fem::HexMesh& mesh;
  const TensorModel& model;
  const std::vector<double>& warm_start;
  std::uint64_t stream_offset;  // global stream index of sample 0
};

void generate_range(const GenTask& task, Matrix& tensors, Matrix& targets, std::size_t begin,
                    std::size_t end) {
  const RandomStream master(task.cfg.seed);
  std::atomic<long> first_fail{-1};
  std::mutex fail_mu;
  std::string fail_msg;

#pragma omp parallel for schedule(dynamic)
  for (long i = static_cast<long>(begin); i < static_cast<long>(end); ++i) {
    if (first_fail.load(std::memory_order_relaxed) >= 0) continue;
    try {
      RandomStream rng = master.split(task.stream_offset + static_cast<std::uint64_t>(i));
      const SpdTensor3 cond = sample_tensor(task.model, rng);

      fem::SolveOptions opts;
      opts.initial_guess = &task.warm_start;
      const fem::TemperatureField field = fem::solve(task.cfg.geometry, task.mesh, cond, opts);

      const double balance = fem::energy_balance(field, task.cfg.geometry, cond);
      if (!(balance <= kEnergyBalanceLimit))
        throw NumericalError("energy balance " + std::to_string(balance) + " exceeds 1e-8");

      const fem::SampleGrid grid = fem::extract_grid(field, task.cfg.geometry.sample_grid);
      const auto row6 = cond.sym().to_array();
      std::copy(row6.begin(), row6.end(), tensors.row(i).begin());
      std::copy(grid.values.begin(), grid.values.end(), targets.row(i).begin());
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(fail_mu);
      if (first_fail.load() < 0 || i < first_fail.load()) {
        first_fail.store(i);
        fail_msg = e.what();
      }
    }
  }

  if (first_fail.load() >= 0)
    throw NumericalError("gen-data: sample " + std::to_string(first_fail.load()) + " failed: " +
                         fail_msg);
}

void append_rows(const fs::path& path, const Matrix& m, std::size_t begin, std::size_t end) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw ValidationError("cannot append to " + path.string());
  out.write(reinterpret_cast<const char*>(m.data.data() + begin * m.cols),
            static_cast<std::streamsize>((end - begin) * m.cols * 8));
  if (!out) throw ValidationError("short write to " + path.string());
}

// Generates (or resumes, or skips) one dataset directory.
bool generate_dataset(const GenTask& task, const fs::path& dir, std::size_t total,
                      const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                      const std::vector<int>& test_idx, const LogFn& log,
                      const ChunkFn& chunk_hook) {
  const int g = task.cfg.geometry.sample_grid;
  const std::size_t out_cols = static_cast<std::size_t>(g) * g * g;

  if (fs::exists(dir / "manifest.json")) {
    load_dataset(dir, true);  // throws ManifestError when corrupted
    if (log) log("gen-data: " + dir.string() + " already complete, skipping");
    return true;
  }
  fs::create_directories(dir);

  Matrix tensors(total, 6);
  Matrix targets(total, out_cols);

  std::size_t completed = 0;
  const fs::path progress_path = dir / "progress.json";
  const fs::path tensors_partial = dir / "tensors.partial";
  const fs::path targets_partial = dir / "targets.partial";
  if (fs::exists(progress_path)) {
    const json progress = json::parse(io::read_text(progress_path));
    completed = progress.at("completed").get<std::size_t>();
    const auto t6 = io::read_doubles_le(tensors_partial, completed * 6);
    const auto tg = io::read_doubles_le(targets_partial, completed * out_cols);
    std::copy(t6.begin(), t6.end(), tensors.data.begin());
    std::copy(tg.begin(), tg.end(), targets.data.begin());
    if (log)
      log("gen-data: resuming " + dir.string() + " at " + std::to_string(completed) + "/" +
          std::to_string(total));
  } else {
    io::write_doubles_le(tensors_partial, nullptr, 0);
    io::write_doubles_le(targets_partial, nullptr, 0);
  }

  while (completed < total) {
    const std::size_t end = std::min(total, completed + kGenChunk);
    generate_range(task, tensors, targets, completed, end);
    append_rows(tensors_partial, tensors, completed, end);
    append_rows(targets_partial, targets, completed, end);

    json progress;
    progress["completed"] = end;
    const fs::path tmp = dir / "progress.json.tmp";
    write_json_file(tmp, progress);
    fs::rename(tmp, progress_path);

    completed = end;
    if (log && (completed % 2048 == 0 || completed == total))
      log("gen-data: " + dir.string() + " " + std::to_string(completed) + "/" +
          std::to_string(total));
    if (chunk_hook) chunk_hook(completed, total);
  }

  Dataset data;
  data.tensors = std::move(tensors);
  data.targets = std::move(targets);
  data.train_idx = train_idx;
  data.val_idx = val_idx;
  data.test_idx = test_idx;
  data.grid_g = g;
  data.provenance_json = task.cfg.to_json_string(0);
  save_dataset(dir, data);

  fs::remove(progress_path);
  fs::remove(tensors_partial);
  fs::remove(targets_partial);
  return false;
}

std::vector<int> iota_range(int begin, int end) {
  std::vector<int> v(end - begin);
  for (int i = begin; i < end; ++i) v[i - begin] = i;
  return v;
}

}  // namespace

GenDataResult run_gen_data(const ExperimentConfig& cfg, const LogFn& log,
                           const ChunkFn& chunk_hook) {
  cfg.validate();
  const fem::HexMesh mesh = fem::build_mesh(cfg.geometry, cfg.mesh_n);
  const TensorModel model = cfg.model.build(cfg.seed);

  // Shared warm start: the reference tensor's solution.
  const SpdTensor3 ref_tensor(SymTensor3::from_mat3(model.reference_tensor()));
  const fem::TemperatureField ref_field = fem::solve(cfg.geometry, mesh, ref_tensor);

  GenDataResult result;
  const std::size_t total =
      static_cast<std::size_t>(cfg.counts.train) + cfg.counts.val + cfg.counts.test;

  GenTask main_task{cfg, mesh, model, ref_field.values, 0};
  result.dataset_dir = fs::path(cfg.out_dir) / "dataset";
  result.dataset_reused = generate_dataset(
      main_task, result.dataset_dir, total, iota_range(0, cfg.counts.train),
      iota_range(cfg.counts.train, cfg.counts.train + cfg.counts.val),
      iota_range(cfg.counts.train + cfg.counts.val, static_cast<int>(total)), log, chunk_hook);

  if (cfg.counts.reference_mc > 0) {
    GenTask ref_task{cfg, mesh, model, ref_field.values, total};
    result.reference_dir = fs::path(cfg.out_dir) / "reference";
    const std::size_t ref_total = static_cast<std::size_t>(cfg.counts.reference_mc);
    result.reference_reused =
        generate_dataset(ref_task, result.reference_dir, ref_total, {}, {},
                         iota_range(0, static_cast<int>(ref_total)), log, chunk_hook);
  }
  return result;
}

// --- mc-stats ---------------------------------------------------------------

namespace {

double grid_coord(const ExperimentConfig& cfg, int i) {
  const int g = cfg.geometry.sample_grid;
  return -cfg.geometry.side / 2.0 + cfg.geometry.side * i / (g - 1);
}

int nearest_grid_flat_index(const ExperimentConfig& cfg, const Vec3& p, int* out_ijk) {
  const int g = cfg.geometry.sample_grid;
  const double h = cfg.geometry.side / (g - 1);
  int ijk[3];
  for (int a = 0; a < 3; ++a) {
    const double t = (p[a] + cfg.geometry.side / 2.0) / h;
    ijk[a] = std::clamp(static_cast<int>(std::lround(t)), 0, g - 1);
    if (out_ijk) out_ijk[a] = ijk[a];
  }
  return ijk[0] + g * (ijk[1] + g * ijk[2]);
}

double trapezoid_integral(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

}  // namespace

std::filesystem::path run_mc_stats(const ExperimentConfig& cfg, const fs::path& dataset_dir,
                                   const LogFn& log) {
  const Dataset data = load_dataset(dataset_dir);
  const stats::FieldStats fstats = stats::mc_stats(data.targets);

  const fs::path out = fs::path(cfg.out_dir) / "mcstats";
  fs::create_directories(out);

  const int g = data.grid_g;
  {
    std::string csv = "ix,iy,iz,x,y,z,mean,std\n";
    std::size_t flat = 0;
    for (int k = 0; k < g; ++k)
      for (int j = 0; j < g; ++j)
        for (int i = 0; i < g; ++i, ++flat) {
          csv += std::to_string(i) + ',' + std::to_string(j) + ',' + std::to_string(k) + ',';
          csv += io::format_double(grid_coord(cfg, i)) + ',';
          csv += io::format_double(grid_coord(cfg, j)) + ',';
          csv += io::format_double(grid_coord(cfg, k)) + ',';
          csv += io::format_double(fstats.mean[flat]) + ',';
          csv += io::format_double(fstats.std[flat]) + '\n';
        }
    io::write_text(out / "fieldstats.csv", csv);
  }

  json summary;
  summary["samples"] = data.targets.rows;
  summary["grid_g"] = g;
  for (int p = 0; p < 2; ++p) {
    int ijk[3];
    const int flat = nearest_grid_flat_index(cfg, cfg.probe_points[p], ijk);
    std::vector<double> column(data.targets.rows);
    for (std::size_t s = 0; s < data.targets.rows; ++s) column[s] = data.targets(s, flat);
    const stats::DensityEstimate est = stats::kde(column);

    std::string csv = "temperature,density\n";
    for (std::size_t i = 0; i < est.abscissae.size(); ++i)
      csv += io::format_double(est.abscissae[i]) + ',' + io::format_double(est.density[i]) + '\n';
    const std::string name = "kde_probe_" + std::to_string(p) + ".csv";
    io::write_text(out / name, csv);

    summary["probes"].push_back(
        {{"requested", {cfg.probe_points[p].x, cfg.probe_points[p].y, cfg.probe_points[p].z}},
         {"grid_index", {ijk[0], ijk[1], ijk[2]}},
         {"flat_index", flat},
         {"bandwidth", est.bandwidth},
         {"density_integral", trapezoid_integral(est.abscissae, est.density)},
         {"file", name}});
  }
  write_json_file(out / "mcstats.json", summary);
  if (log) log("mc-stats: wrote " + out.string());
  return out;
}

// --- train ------------------------------------------------------------------

namespace {

json summary_to_json(const TrainSummary& s) {
  json reps = json::array();
  for (const auto& r : s.repeats)
    reps.push_back({{"best_val_loss", r.best_val_loss},
                    {"test_loss", r.test_loss},
                    {"train_loss", r.train_loss},
                    {"best_epoch", r.best_epoch}});
  return {{"kind", s.kind},
          {"repeats", reps},
          {"best_repeat", s.best_repeat},
          {"best_val_loss", s.best_val_loss},
          {"test_loss", s.test_loss},
          {"train_loss", s.train_loss},
          {"mean_val_loss", s.mean_val_loss},
          {"std_val_loss", s.std_val_loss},
          {"mean_test_loss", s.mean_test_loss},
          {"std_test_loss", s.std_test_loss},
          {"mean_train_loss", s.mean_train_loss},
          {"std_train_loss", s.std_train_loss}};
}

TrainSummary summarize(const std::string& kind, std::vector<RepeatMetrics> reps) {
  TrainSummary s;
  s.kind = kind;
  s.repeats = std::move(reps);

  std::vector<double> vals, tests, trains;
  for (const auto& r : s.repeats) {
    vals.push_back(r.best_val_loss);
    tests.push_back(r.test_loss);
    trains.push_back(r.train_loss);
  }
  s.best_repeat = static_cast<int>(
      std::min_element(vals.begin(), vals.end()) - vals.begin());
  s.best_val_loss = vals[s.best_repeat];
  s.test_loss = tests[s.best_repeat];
  s.train_loss = trains[s.best_repeat];
  s.mean_val_loss = sample_mean(vals);
  s.std_val_loss = sample_stddev(vals);
  s.mean_test_loss = sample_mean(tests);
  s.std_test_loss = sample_stddev(tests);
  s.mean_train_loss = sample_mean(trains);
  s.std_train_loss = sample_stddev(trains);
  return s;
}

}  // namespace

std::vector<TrainSummary> run_train(const ExperimentConfig& cfg, const fs::path& dataset_dir,
                                    const std::vector<std::string>& kinds, const LogFn& log) {
  cfg.validate();
  const Dataset data = load_dataset(dataset_dir);

  std::vector<std::string> wanted = kinds;
  if (wanted.empty())
    for (const auto& [kind, spec] : cfg.networks) wanted.push_back(kind);
  for (const auto& kind : wanted)
    if (!cfg.networks.count(kind))
      throw ValidationError("train: no network spec for kind " + kind);

  struct Run {
    std::string kind;
    int repeat;
  };
  std::vector<Run> runs;
  for (const auto& kind : wanted)
    for (int r = 0; r < cfg.repeats; ++r) runs.push_back({kind, r});

  std::vector<RepeatMetrics> metrics(runs.size());
  std::atomic<long> first_fail{-1};
  std::mutex fail_mu;
  std::string fail_msg;

#pragma omp parallel for schedule(dynamic)
  for (long ri = 0; ri < static_cast<long>(runs.size()); ++ri) {
    if (first_fail.load(std::memory_order_relaxed) >= 0) continue;
    const Run& run = runs[ri];
    try {
      const NetworkSpec& spec = cfg.networks.at(run.kind);
      nn::NetworkConfig ncfg;
      ncfg.input_dim = 6;
      ncfg.hidden = spec.hidden;
      ncfg.activation = spec.activation;
      ncfg.output_dim = static_cast<int>(data.targets.cols);
      ncfg.epochs = spec.epochs;
      ncfg.batch_size = spec.batch_size;
      ncfg.learning_rate = spec.learning_rate;
      ncfg.seed = run_seed(cfg.seed, run.kind, run.repeat);

      nn::Preprocess pre;
      pre.kind = nn::preprocess_kind_from_string(run.kind);
      if (pre.kind == nn::PreprocessKind::StrAng)
        pre.strang_reference = Rotation3(cfg.model.reference_rotation);

      nn::TrainResult res = nn::train(ncfg, pre, data);

      RepeatMetrics rm;
      rm.best_val_loss = res.history.best_val_loss;
      rm.best_epoch = res.history.best_epoch;
      rm.train_loss = res.history.train_loss[res.history.best_epoch];
      rm.test_loss = nn::loss_mse(res.net, data, data.test_idx);
      metrics[ri] = rm;

      const fs::path dir =
          fs::path(cfg.out_dir) / "train" / run.kind / ("repeat_" + std::to_string(run.repeat));
      fs::create_directories(dir);
      nn::save_checkpoint(res.net, dir / "checkpoint.bin");

      std::string csv = "epoch,train_loss,val_loss\n";
      for (std::size_t e = 0; e < res.history.train_loss.size(); ++e)
        csv += std::to_string(e) + ',' + io::format_double(res.history.train_loss[e]) + ',' +
               io::format_double(res.history.val_loss[e]) + '\n';
      io::write_text(dir / "history.csv", csv);

      if (log)
        log("train: " + run.kind + " repeat " + std::to_string(run.repeat) + " best val " +
            io::format_double(rm.best_val_loss) + " (epoch " + std::to_string(rm.best_epoch) +
            ")");
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(fail_mu);
      if (first_fail.load() < 0 || ri < first_fail.load()) {
        first_fail.store(ri);
        fail_msg = std::string(e.what()) + " (kind " + run.kind + ", repeat " +
                   std::to_string(run.repeat) + ")";
      }
    }
  }
  if (first_fail.load() >= 0) throw NumericalError("train: " + fail_msg);

  std::vector<TrainSummary> summaries;
  json combined;
  for (std::size_t k = 0; k < wanted.size(); ++k) {
    std::vector<RepeatMetrics> reps(metrics.begin() + k * cfg.repeats,
                                    metrics.begin() + (k + 1) * cfg.repeats);
    TrainSummary s = summarize(wanted[k], std::move(reps));
    const fs::path dir = fs::path(cfg.out_dir) / "train" / wanted[k];
    fs::create_directories(dir);
    write_json_file(dir / "summary.json", summary_to_json(s));
    combined[wanted[k]] = summary_to_json(s);
    summaries.push_back(std::move(s));
  }
  write_json_file(fs::path(cfg.out_dir) / "train" / "summary.json", combined);
  return summaries;
}

// --- evaluate ---------------------------------------------------------------

EvaluationArtifacts evaluate_predictions(const Matrix& reference, const Matrix& predicted) {
  EvaluationArtifacts art;
  art.norms = stats::norms(reference, predicted);
  art.ref_stats = stats::mc_stats(reference);
  art.pred_stats = stats::mc_stats(predicted);
  art.mean_errors = stats::field_errors(art.ref_stats.mean, art.pred_stats.mean);
  art.std_errors = stats::field_errors(art.ref_stats.std, art.pred_stats.std);

  art.kl.resize(reference.cols);
  std::vector<double> rc(reference.rows), pc(predicted.rows);
  for (std::size_t j = 0; j < reference.cols; ++j) {
    for (std::size_t i = 0; i < reference.rows; ++i) rc[i] = reference(i, j);
    for (std::size_t i = 0; i < predicted.rows; ++i) pc[i] = predicted(i, j);
    try {
      art.kl[j] = stats::kl_divergence(rc, pc);
    } catch (const DegenerateSupportError&) {
      art.kl[j] = 0.0;  // both columns share a single constant value
    }
  }
  return art;
}

EvaluationArtifacts run_evaluate(const ExperimentConfig& cfg, const fs::path& checkpoint,
                                 const fs::path& dataset_dir, const LogFn& log) {
  const nn::SurrogateNet net = nn::load_checkpoint(checkpoint);
  const Dataset data = load_dataset(dataset_dir);
  if (static_cast<std::size_t>(net.config.output_dim) != data.targets.cols)
    throw ShapeMismatchError("evaluate: checkpoint grid size does not match dataset");
  if (data.test_idx.empty()) throw ValidationError("evaluate: dataset has no test split");

  Matrix reference(data.test_idx.size(), data.targets.cols);
  Matrix predicted(data.test_idx.size(), data.targets.cols);
  for (std::size_t r = 0; r < data.test_idx.size(); ++r) {
    const int i = data.test_idx[r];
    const auto row = data.targets.row(i);
    std::copy(row.begin(), row.end(), reference.row(r).begin());
    const std::vector<double> pred = net.predict(data.tensor_at(i));
    std::copy(pred.begin(), pred.end(), predicted.row(r).begin());
  }

  EvaluationArtifacts art = evaluate_predictions(reference, predicted);

  const std::string kind = nn::to_string(net.pre.kind);
  const fs::path out = fs::path(cfg.out_dir) / "eval" / kind;
  fs::create_directories(out);

  json norms = {{"l1_sample", art.norms.l1_sample},   {"l2_sample", art.norms.l2_sample},
                {"linf_sample", art.norms.linf_sample}, {"l1_mean", art.norms.l1_mean},
                {"l2_mean", art.norms.l2_mean},       {"linf_mean", art.norms.linf_mean},
                {"l1_std", art.norms.l1_std},         {"l2_std", art.norms.l2_std},
                {"linf_std", art.norms.linf_std}};
  write_json_file(out / "norms.json", norms);

  const int g = data.grid_g;
  std::string csv =
      "ix,iy,iz,x,y,z,ref_mean,pred_mean,mean_abs_err,mean_rel_err,ref_std,pred_std,"
      "std_abs_err,std_rel_err,kl\n";
  std::size_t flat = 0;
  for (int k = 0; k < g; ++k)
    for (int j = 0; j < g; ++j)
      for (int i = 0; i < g; ++i, ++flat) {
        csv += std::to_string(i) + ',' + std::to_string(j) + ',' + std::to_string(k) + ',';
        csv += io::format_double(grid_coord(cfg, i)) + ',';
        csv += io::format_double(grid_coord(cfg, j)) + ',';
        csv += io::format_double(grid_coord(cfg, k)) + ',';
        csv += io::format_double(art.ref_stats.mean[flat]) + ',';
        csv += io::format_double(art.pred_stats.mean[flat]) + ',';
        csv += io::format_double(art.mean_errors.abs[flat]) + ',';
        csv += io::format_double(art.mean_errors.rel[flat]) + ',';
        csv += io::format_double(art.ref_stats.std[flat]) + ',';
        csv += io::format_double(art.pred_stats.std[flat]) + ',';
        csv += io::format_double(art.std_errors.abs[flat]) + ',';
        csv += io::format_double(art.std_errors.rel[flat]) + ',';
        csv += io::format_double(art.kl[flat]) + '\n';
      }
  io::write_text(out / "error_maps.csv", csv);
  if (log) log("evaluate: wrote " + out.string());
  return art;
}

std::filesystem::path best_checkpoint_path(const ExperimentConfig& cfg, const std::string& kind) {
  const fs::path summary_path = fs::path(cfg.out_dir) / "train" / kind / "summary.json";
  const json summary = json::parse(io::read_text(summary_path));
  const int best = summary.at("best_repeat").get<int>();
  return fs::path(cfg.out_dir) / "train" / kind / ("repeat_" + std::to_string(best)) /
         "checkpoint.bin";
}

// --- report -----------------------------------------------------------------

std::filesystem::path run_report(const ExperimentConfig& cfg, const LogFn& log) {
  const fs::path out = fs::path(cfg.out_dir) / "report";
  json report;
  std::string metrics_csv =
      "kind,best_val_loss,test_loss,train_loss,mean_val_loss,std_val_loss,mean_test_loss,"
      "std_test_loss,mean_train_loss,std_train_loss\n";
  std::string norms_csv =
      "kind,l1_sample,l2_sample,linf_sample,l1_mean,l2_mean,linf_mean,l1_std,l2_std,linf_std\n";

  bool any = false;
  for (const std::string& kind : canonical_kinds()) {
    const fs::path summary_path = fs::path(cfg.out_dir) / "train" / kind / "summary.json";
    if (fs::exists(summary_path)) {
      any = true;
      const json s = json::parse(io::read_text(summary_path));
      report["training"][kind] = s;
      metrics_csv += kind + ',';
      for (const char* key : {"best_val_loss", "test_loss", "train_loss", "mean_val_loss",
                              "std_val_loss", "mean_test_loss", "std_test_loss",
                              "mean_train_loss", "std_train_loss"}) {
        metrics_csv += io::format_double(s.at(key).get<double>());
        metrics_csv += key == std::string("std_train_loss") ? '\n' : ',';
      }
    }
    const fs::path norms_path = fs::path(cfg.out_dir) / "eval" / kind / "norms.json";
    if (fs::exists(norms_path)) {
      any = true;
      const json n = json::parse(io::read_text(norms_path));
      report["norms"][kind] = n;
      norms_csv += kind + ',';
      for (const char* key : {"l1_sample", "l2_sample", "linf_sample", "l1_mean", "l2_mean",
                              "linf_mean", "l1_std", "l2_std", "linf_std"}) {
        norms_csv += io::format_double(n.at(key).get<double>());
        norms_csv += key == std::string("linf_std") ? '\n' : ',';
      }
    }
  }
  if (!any) throw ValidationError("report: no training summaries or evaluation norms under " +
                                  cfg.out_dir);

  fs::create_directories(out);
  io::write_text(out / "metrics.csv", metrics_csv);
  io::write_text(out / "norms.csv", norms_csv);
  write_json_file(out / "report.json", report);
  if (log) log("report: wrote " + out.string());
  return out;
}

}  // namespace spdheat::pipeline
