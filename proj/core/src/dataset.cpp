#include "spdheat/dataset.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian; big-endian hosts are unsupported");

namespace spdheat {

using nlohmann::json;

namespace io {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_fnv1a64(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void write_doubles_le(const std::filesystem::path& path, const double* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  if (count > 0)
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
  if (!out) throw ValidationError("short write to " + path.string());
}

std::vector<double> read_doubles_le(const std::filesystem::path& path,
                                    std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<double> v(expected_count);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expected_count * 8));
  if (static_cast<std::size_t>(in.gcount()) != expected_count * 8)
    throw ManifestError("short read from " + path.string());
  return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

std::string format_double(double v) {
  // Shortest representation that round-trips exactly.
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

}  // namespace io

namespace {

json split_to_json(const std::vector<int>& v) { return json(v); }

std::vector<int> split_from_json(const json& j) { return j.get<std::vector<int>>(); }

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);

  io::write_doubles_le(dir / "tensors.f64le", data.tensors.data.data(), data.tensors.data.size());
  io::write_doubles_le(dir / "targets.f64le", data.targets.data.data(), data.targets.data.size());

  json splits;
  splits["train"] = split_to_json(data.train_idx);
  splits["val"] = split_to_json(data.val_idx);
  splits["test"] = split_to_json(data.test_idx);
  io::write_text(dir / "splits.json", splits.dump(2) + "\n");

  json manifest;
  manifest["format_version"] = 1;
  manifest["created"] = [] {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  }();
  manifest["grid_g"] = data.grid_g;
  manifest["config"] =
      data.provenance_json.empty() ? json(nullptr) : json::parse(data.provenance_json);
  manifest["files"]["tensors.f64le"] = {
      {"records", data.tensors.rows},
      {"columns", data.tensors.cols},
      {"fnv1a64", io::to_hex(io::file_fnv1a64(dir / "tensors.f64le"))}};
  manifest["files"]["targets.f64le"] = {
      {"records", data.targets.rows},
      {"columns", data.targets.cols},
      {"fnv1a64", io::to_hex(io::file_fnv1a64(dir / "targets.f64le"))}};
  manifest["files"]["splits.json"] = {
      {"fnv1a64", io::to_hex(io::file_fnv1a64(dir / "splits.json"))}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir, bool verify_checksums) {
  const json manifest = json::parse(io::read_text(dir / "manifest.json"));
  if (manifest.at("format_version").get<int>() != 1)
    throw ManifestError("unsupported dataset format version");

  Dataset data;
  data.grid_g = manifest.at("grid_g").get<int>();
  if (!manifest.at("config").is_null()) data.provenance_json = manifest.at("config").dump();

  const auto& files = manifest.at("files");
  for (const char* name : {"tensors.f64le", "targets.f64le", "splits.json"}) {
    if (!verify_checksums) continue;
    const std::string want = files.at(name).at("fnv1a64").get<std::string>();
    const std::string got = io::to_hex(io::file_fnv1a64(dir / name));
    if (want != got)
      throw ManifestError(std::string("checksum mismatch for ") + name + " in " + dir.string());
  }

  const std::size_t tn = files.at("tensors.f64le").at("records").get<std::size_t>();
  const std::size_t tc = files.at("tensors.f64le").at("columns").get<std::size_t>();
  const std::size_t gn = files.at("targets.f64le").at("records").get<std::size_t>();
  const std::size_t gc = files.at("targets.f64le").at("columns").get<std::size_t>();
  if (tn != gn) throw ManifestError("tensor/target record count mismatch");

  data.tensors.rows = tn;
  data.tensors.cols = tc;
  data.tensors.data = io::read_doubles_le(dir / "tensors.f64le", tn * tc);
  data.targets.rows = gn;
  data.targets.cols = gc;
  data.targets.data = io::read_doubles_le(dir / "targets.f64le", gn * gc);

  const json splits = json::parse(io::read_text(dir / "splits.json"));
  data.train_idx = split_from_json(splits.at("train"));
  data.val_idx = split_from_json(splits.at("val"));
  data.test_idx = split_from_json(splits.at("test"));
  return data;
}

}  // namespace spdheat
