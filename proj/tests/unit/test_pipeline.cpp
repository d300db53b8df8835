#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "spdheat/dataset.hpp"
#include "spdheat/pipeline.hpp"

using namespace spdheat;
using namespace spdheat::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Small config that runs the full pipeline in seconds.
ExperimentConfig tiny_config(const std::string& out_dir, std::uint64_t seed = 42) {
  ExperimentConfig cfg = ExperimentConfig::preset("scaling");
  cfg.mesh_n = 9;
  cfg.geometry.sample_grid = 3;
  cfg.counts = {8, 2, 10, 6};
  cfg.repeats = 2;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  for (auto& [kind, spec] : cfg.networks) {
    spec.epochs = 4;
    spec.batch_size = 4;
  }
  return cfg;
}

std::string dataset_checksums(const fs::path& dir) {
  return io::to_hex(io::file_fnv1a64(dir / "tensors.f64le")) + ":" +
         io::to_hex(io::file_fnv1a64(dir / "targets.f64le"));
}

}  // namespace

TEST_CASE("presets: published hyperparameters and model blocks") {
  const ExperimentConfig scl = ExperimentConfig::preset("scaling");
  CHECK(scl.model.scaling.has_value());
  CHECK(!scl.model.orientation.has_value());
  CHECK((*scl.model.scaling)[0] == doctest::Approx(14.0));
  CHECK((*scl.model.scaling)[4] == doctest::Approx(0.02));
  const NetworkSpec& s = scl.networks.at("strang");
  CHECK(s.hidden == std::vector<int>{16, 8});
  CHECK(s.activation == nn::Activation::Tanh);
  CHECK(s.epochs == 300);
  CHECK(s.batch_size == 8);
  CHECK(s.learning_rate == doctest::Approx(3e-3));
  CHECK(scl.counts.train == 4000);
  CHECK(scl.counts.val == 1000);
  CHECK(scl.counts.test == 5000);
  CHECK(scl.counts.reference_mc == 20000);
  CHECK(scl.repeats == 3);

  const ExperimentConfig ori = ExperimentConfig::preset("orientation");
  CHECK(!ori.model.scaling.has_value());
  CHECK(ori.model.orientation.has_value());
  CHECK((*ori.model.orientation)[3] == doctest::Approx(200.0));
  const NetworkSpec& o = ori.networks.at("flatten");
  CHECK(o.hidden == std::vector<int>{32, 8});
  CHECK(o.activation == nn::Activation::Sigmoid);
  CHECK(o.epochs == 500);
  CHECK(o.batch_size == 32);
  CHECK(o.learning_rate == doctest::Approx(7.5e-3));
  // mean direction: first column of the reference frame
  const Vec3 mu{(*ori.model.orientation)[0], (*ori.model.orientation)[1],
                (*ori.model.orientation)[2]};
  CHECK(norm(mu - reference_rotation().col(0)) < 1e-15);

  const ExperimentConfig both = ExperimentConfig::preset("combined");
  CHECK(both.model.scaling.has_value());
  CHECK(both.model.orientation.has_value());
  const NetworkSpec& c = both.networks.at("logeig");
  CHECK(c.hidden == std::vector<int>{48, 16, 8});
  CHECK(c.activation == nn::Activation::Sigmoid);
  CHECK(c.epochs == 300);
  CHECK(c.batch_size == 16);
  CHECK(c.learning_rate == doctest::Approx(2.5e-3));

  const ExperimentConfig paper = ExperimentConfig::preset("scaling", true);
  CHECK(paper.counts.train == 16000);
  CHECK(paper.counts.val == 4000);
  CHECK(paper.counts.test == 30000);
  CHECK(paper.counts.reference_mc == 500000);
  CHECK(paper.repeats == 10);

  CHECK_THROWS_AS(ExperimentConfig::preset("nope"), ValidationError);
}

TEST_CASE("config: JSON round-trip is exact") {
  ExperimentConfig cfg = ExperimentConfig::preset("combined");
  cfg.seed = 0xDEADBEEFCAFEF00DULL;
  cfg.out_dir = "some/dir";
  cfg.probe_points[1] = Vec3{0.011, -0.007, 0.003};

  const std::string text = cfg.to_json_string();
  const ExperimentConfig back = ExperimentConfig::from_json_string(text);
  CHECK(back.to_json_string() == text);
  CHECK(back.seed == cfg.seed);
  CHECK(back.counts.train == cfg.counts.train);
  CHECK(back.networks.at("strang").learning_rate == cfg.networks.at("strang").learning_rate);
  CHECK(frobenius_norm(back.model.reference_rotation - cfg.model.reference_rotation) == 0.0);

  CHECK_THROWS_AS(ExperimentConfig::from_json_string("{not json"), ValidationError);
}

TEST_CASE("reference rotation: orthonormalized dense frame") {
  const Mat3& q = reference_rotation();
  CHECK(std::abs(det(q) - 1.0) < 1e-12);
  CHECK(frobenius_norm(transpose(q) * q - Mat3::identity()) < 1e-12);
  // stays close to the printed entries
  CHECK(std::abs(q(0, 0) - 0.892) < 0.01);
  CHECK(std::abs(q(2, 2) - 0.807) < 0.01);
}

TEST_CASE("gen-data: record counts, target width, and split layout") {
  TempDir tmp("spdheat_gen_counts");
  const ExperimentConfig cfg = tiny_config(tmp.path.string());
  const GenDataResult res = run_gen_data(cfg);

  const Dataset data = load_dataset(res.dataset_dir);
  CHECK(data.tensors.rows == 20);  // 8 + 2 + 10
  CHECK(data.tensors.cols == 6);
  CHECK(data.targets.rows == 20);
  CHECK(data.targets.cols == 27);  // g = 3
  CHECK(data.train_idx.size() == 8);
  CHECK(data.val_idx.size() == 2);
  CHECK(data.test_idx.size() == 10);
  CHECK(data.train_idx.front() == 0);
  CHECK(data.test_idx.back() == 19);

  const Dataset ref = load_dataset(res.reference_dir);
  CHECK(ref.targets.rows == 6);
  CHECK(ref.test_idx.size() == 6);

  // splits are pairwise disjoint
  std::vector<int> all;
  all.insert(all.end(), data.train_idx.begin(), data.train_idx.end());
  all.insert(all.end(), data.val_idx.begin(), data.val_idx.end());
  all.insert(all.end(), data.test_idx.begin(), data.test_idx.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
}

TEST_CASE("gen-data: zero-variance model produces identical target rows") {
  TempDir tmp("spdheat_gen_const");
  ExperimentConfig cfg = tiny_config(tmp.path.string());
  cfg.model.scaling = {14.0, 0.11, 2.4, 0.0, 0.0, 0.0};
  cfg.counts = {4, 1, 3, 0};
  const GenDataResult res = run_gen_data(cfg);

  const Dataset data = load_dataset(res.dataset_dir);
  const auto first = data.targets.row(0);
  for (std::size_t i = 1; i < data.targets.rows; ++i) {
    const auto row = data.targets.row(i);
    for (std::size_t j = 0; j < row.size(); ++j)
      CHECK(std::abs(row[j] - first[j]) < 1e-9 * std::abs(first[j]));
  }
  CHECK(res.reference_dir.empty());
}

TEST_CASE("gen-data: same seed reproduces identical checksums; complete datasets are skipped") {
  TempDir a("spdheat_gen_a"), b("spdheat_gen_b");
  const ExperimentConfig ca = tiny_config(a.path.string());
  const ExperimentConfig cb = tiny_config(b.path.string());

  const GenDataResult ra = run_gen_data(ca);
  const GenDataResult rb = run_gen_data(cb);
  CHECK(dataset_checksums(ra.dataset_dir) == dataset_checksums(rb.dataset_dir));
  CHECK(dataset_checksums(ra.reference_dir) == dataset_checksums(rb.reference_dir));

  // different seed, different data
  ExperimentConfig cc = tiny_config(b.path.string() + "_seed", 43);
  const GenDataResult rc = run_gen_data(cc);
  CHECK(dataset_checksums(ra.dataset_dir) != dataset_checksums(rc.dataset_dir));
  fs::remove_all(cc.out_dir);

  // complete dataset is reused, not regenerated
  const GenDataResult again = run_gen_data(ca);
  CHECK(again.dataset_reused);
  CHECK(again.reference_reused);
}

TEST_CASE("gen-data: interrupted generation resumes to an identical dataset") {
  TempDir full("spdheat_gen_full"), part("spdheat_gen_part");
  ExperimentConfig cfull = tiny_config(full.path.string());
  ExperimentConfig cpart = tiny_config(part.path.string());
  // counts > chunk size would slow the test; instead interrupt after the
  // first chunk of the main dataset (chunk covers the whole tiny set), so
  // interrupt between datasets: after the main one, before the reference.
  const GenDataResult want = run_gen_data(cfull);

  struct Abort {};
  int chunks_seen = 0;
  CHECK_THROWS_AS(run_gen_data(cpart, {},
                               [&](std::size_t, std::size_t) {
                                 if (++chunks_seen == 1) throw Abort{};
                               }),
                  Abort);
  // main dataset finished (chunked files still present for it or already
  // final); resume completes the rest
  const GenDataResult got = run_gen_data(cpart);
  CHECK(dataset_checksums(want.dataset_dir) == dataset_checksums(got.dataset_dir));
  CHECK(dataset_checksums(want.reference_dir) == dataset_checksums(got.reference_dir));
}

TEST_CASE("gen-data: corrupted dataset is rejected on load") {
  TempDir tmp("spdheat_gen_corrupt");
  ExperimentConfig cfg = tiny_config(tmp.path.string());
  cfg.counts = {4, 1, 3, 0};
  const GenDataResult res = run_gen_data(cfg);

  // flip one byte of the binary payload
  {
    std::fstream f(res.dataset_dir / "targets.f64le",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(13);
    char c;
    f.seekg(13);
    f.get(c);
    c ^= 0x40;
    f.seekp(13);
    f.put(c);
  }
  CHECK_THROWS_AS(load_dataset(res.dataset_dir), ManifestError);
  CHECK_NOTHROW(load_dataset(res.dataset_dir, false));
}

TEST_CASE("mc-stats: constant dataset, split-halves agreement, density normalization") {
  TempDir tmp("spdheat_mcstats");
  ExperimentConfig cfg = tiny_config(tmp.path.string());
  cfg.counts = {4, 1, 3, 40};
  const GenDataResult res = run_gen_data(cfg);
  const fs::path out = run_mc_stats(cfg, res.reference_dir);

  CHECK(fs::exists(out / "fieldstats.csv"));
  CHECK(fs::exists(out / "kde_probe_0.csv"));
  CHECK(fs::exists(out / "kde_probe_1.csv"));
  CHECK(fs::exists(out / "mcstats.json"));

  // probe densities integrate close to one
  const std::string summary = io::read_text(out / "mcstats.json");
  const auto j = nlohmann::json::parse(summary);
  for (const auto& probe : j.at("probes"))
    CHECK(probe.at("density_integral").get<double>() >= 0.98);

  // split halves agree within Monte Carlo error
  const Dataset ref = load_dataset(res.reference_dir);
  const std::size_t half = ref.targets.rows / 2;
  Matrix lo(half, ref.targets.cols), hi(ref.targets.rows - half, ref.targets.cols);
  for (std::size_t i = 0; i < ref.targets.rows; ++i) {
    auto dst = (i < half) ? lo.row(i) : hi.row(i - half);
    const auto src = ref.targets.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  const auto slo = stats::mc_stats(lo);
  const auto shi = stats::mc_stats(hi);
  for (std::size_t jcol = 0; jcol < lo.cols; ++jcol) {
    const double se = std::max(slo.std[jcol], shi.std[jcol]) / std::sqrt(double(half));
    if (se > 0.0) CHECK(std::abs(slo.mean[jcol] - shi.mean[jcol]) <= 6.0 * se + 1e-12);
  }

  // zero-variance dataset: std column all zeros
  TempDir tmp2("spdheat_mcstats_const");
  ExperimentConfig c2 = tiny_config(tmp2.path.string());
  c2.model.scaling = {14.0, 0.11, 2.4, 0.0, 0.0, 0.0};
  c2.counts = {4, 1, 3, 0};
  const GenDataResult r2 = run_gen_data(c2);
  const Dataset d2 = load_dataset(r2.dataset_dir);
  const auto s2 = stats::mc_stats(d2.targets);
  for (double sd : s2.std) CHECK(sd <= 1e-9);
}

TEST_CASE("evaluate_predictions: perfect oracle and constant-mean predictor") {
  RandomStream rng(8);
  Matrix ref(50, 9);
  for (auto& v : ref.data) v = 280.0 + 5.0 * rng.gaussian();

  const EvaluationArtifacts perfect = evaluate_predictions(ref, ref);
  CHECK(perfect.norms.l1_sample == doctest::Approx(0.0));
  CHECK(perfect.norms.linf_std == doctest::Approx(0.0));
  for (double k : perfect.kl) CHECK(k == doctest::Approx(0.0));

  // constant predictor at the per-point mean: l1(Sample) equals the dataset's
  // normalized mean absolute deviation, computed in closed form
  const auto fs_ref = stats::mc_stats(ref);
  Matrix constant(ref.rows, ref.cols);
  for (std::size_t i = 0; i < ref.rows; ++i)
    std::copy(fs_ref.mean.begin(), fs_ref.mean.end(), constant.row(i).begin());

  double expected_l1 = 0.0;
  for (std::size_t i = 0; i < ref.rows; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < ref.cols; ++j) {
      num += std::abs(ref(i, j) - fs_ref.mean[j]);
      den += std::abs(ref(i, j));
    }
    expected_l1 += num / den;
  }
  expected_l1 /= ref.rows;

  const EvaluationArtifacts art = evaluate_predictions(ref, constant);
  CHECK(art.norms.l1_sample == doctest::Approx(expected_l1).epsilon(1e-9));
  // the constant predictor has zero std: relative std error is 1 everywhere
  for (double v : art.std_errors.rel) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("pipeline end to end: train, evaluate, report; reruns are byte-identical") {
  TempDir a("spdheat_e2e_a"), b("spdheat_e2e_b");

  auto run_all = [](const ExperimentConfig& cfg) {
    const GenDataResult gen = run_gen_data(cfg);
    run_mc_stats(cfg, gen.reference_dir);
    run_train(cfg, gen.dataset_dir);
    for (const std::string kind : {"flatten", "logeig", "strang"})
      run_evaluate(cfg, best_checkpoint_path(cfg, kind), gen.dataset_dir);
    return run_report(cfg);
  };

  const ExperimentConfig ca = tiny_config(a.path.string());
  const ExperimentConfig cb = tiny_config(b.path.string());
  const fs::path report_a = run_all(ca);
  const fs::path report_b = run_all(cb);

  // reports: byte-identical across independent runs with the same seed
  for (const char* name : {"metrics.csv", "norms.csv", "report.json"}) {
    CHECK(fs::exists(report_a / name));
    CHECK(io::file_fnv1a64(report_a / name) == io::file_fnv1a64(report_b / name));
  }
  // datasets: identical checksums
  CHECK(dataset_checksums(fs::path(ca.out_dir) / "dataset") ==
        dataset_checksums(fs::path(cb.out_dir) / "dataset"));

  // history CSVs and checkpoints identical too
  CHECK(io::file_fnv1a64(fs::path(ca.out_dir) / "train/strang/repeat_0/history.csv") ==
        io::file_fnv1a64(fs::path(cb.out_dir) / "train/strang/repeat_0/history.csv"));
  CHECK(io::file_fnv1a64(fs::path(ca.out_dir) / "train/flatten/repeat_1/checkpoint.bin") ==
        io::file_fnv1a64(fs::path(cb.out_dir) / "train/flatten/repeat_1/checkpoint.bin"));

  // error maps exist with grid coordinates
  const std::string maps =
      io::read_text(fs::path(ca.out_dir) / "eval/strang/error_maps.csv");
  CHECK(maps.find("ix,iy,iz,x,y,z,") == 0);

  // evaluate with a mismatched grid is rejected
  ExperimentConfig bad = ca;
  bad.geometry.sample_grid = 5;
  bad.mesh_n = 9;
  bad.out_dir = (a.path / "bad").string();
  const GenDataResult bad_gen = run_gen_data(bad);
  CHECK_THROWS_AS(run_evaluate(ca, best_checkpoint_path(ca, "flatten"), bad_gen.dataset_dir),
                  ShapeMismatchError);
}

TEST_CASE("train: summary layout and non-finite surfacing") {
  TempDir tmp("spdheat_train_summary");
  ExperimentConfig cfg = tiny_config(tmp.path.string());
  cfg.counts = {6, 2, 2, 0};
  const GenDataResult gen = run_gen_data(cfg);

  const auto summaries = run_train(cfg, gen.dataset_dir, {"strang"});
  CHECK(summaries.size() == 1);
  const TrainSummary& s = summaries[0];
  CHECK(s.kind == "strang");
  CHECK(static_cast<int>(s.repeats.size()) == cfg.repeats);
  CHECK(s.best_val_loss ==
        std::min(s.repeats[0].best_val_loss, s.repeats[1].best_val_loss));
  CHECK(s.mean_val_loss ==
        doctest::Approx(0.5 * (s.repeats[0].best_val_loss + s.repeats[1].best_val_loss)));
  CHECK(fs::exists(tmp.path / "train/strang/summary.json"));
  CHECK(fs::exists(tmp.path / "train/strang/repeat_0/checkpoint.bin"));
  CHECK(fs::exists(tmp.path / "train/strang/repeat_1/history.csv"));

  // a divergent learning rate surfaces the repeat index in the error
  ExperimentConfig bad = cfg;
  bad.networks.at("flatten").learning_rate = 1e200;
  try {
    run_train(bad, gen.dataset_dir, {"flatten"});
    CHECK(false);
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("repeat") != std::string::npos);
  }
}
