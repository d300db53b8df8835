#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spdheat/spd.hpp"
#include "spdheat/stats.hpp"

namespace spdheat {

// In-memory dataset of (conductivity tensor, coarse-grid temperature) pairs
// with disjoint split index lists and the generating-config snapshot.
struct Dataset {
  Matrix tensors;  // N x 6, serialization order xx, yy, zz, xy, xz, yz
  Matrix targets;  // N x g^3, x-fastest grid ordering
  std::vector<int> train_idx, val_idx, test_idx;
  int grid_g = 0;
  std::string provenance_json;  // config snapshot stored in the manifest

  std::size_t size() const { return tensors.rows; }
  SpdTensor3 tensor_at(std::size_t i) const {
    const auto r = tensors.row(i);
    return SpdTensor3(SymTensor3::from_array({r[0], r[1], r[2], r[3], r[4], r[5]}));
  }
};

// On-disk layout: manifest.json + tensors.f64le + targets.f64le + splits.json.
// The manifest carries record counts and FNV-1a checksums of the binary
// files; load verifies them before trusting the data.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir, bool verify_checksums = true);

namespace io {

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t file_fnv1a64(const std::filesystem::path& path);
std::string to_hex(std::uint64_t value);

void write_doubles_le(const std::filesystem::path& path, const double* data, std::size_t count);
std::vector<double> read_doubles_le(const std::filesystem::path& path, std::size_t expected_count);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Shortest-exact decimal formatting used by every CSV/JSON report writer, so
// reruns of the same pipeline are byte-identical.
std::string format_double(double v);

}  // namespace io
}  // namespace spdheat
