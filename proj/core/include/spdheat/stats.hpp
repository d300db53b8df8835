#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "spdheat/errors.hpp"

namespace spdheat {

// Minimal row-major matrix of doubles; rows are samples, columns grid points.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

namespace stats {

// Per-point Monte Carlo mean and (N-1)-normalized standard deviation.
struct FieldStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::size_t count = 0;
};

// Gaussian kernel density estimate on an equispaced evaluation grid.
struct DensityEstimate {
  std::vector<double> abscissae;  // K
  std::vector<double> density;    // 1/K
  double bandwidth = 0.0;         // K
};

// The nine sample-average normalised norms: per-sample, mean-field and
// std-field variants of l1/l2/linf.
struct NormReport {
  double l1_sample = 0.0, l2_sample = 0.0, linf_sample = 0.0;
  double l1_mean = 0.0, l2_mean = 0.0, linf_mean = 0.0;
  double l1_std = 0.0, l2_std = 0.0, linf_std = 0.0;
};

// Pointwise absolute and relative errors; rel is NaN where the reference is
// exactly zero (relative error undefined there).
struct FieldErrors {
  std::vector<double> abs;
  std::vector<double> rel;
};

// Two-pass mean/std per grid point. The mean is subtracted before squaring,
// which keeps the variance exact at kelvin offsets near 273 K.
FieldStats mc_stats(const Matrix& samples);

// Scott's-rule bandwidth h = std * N^(-1/5) unless one is forced; evaluated
// on `grid_points` equispaced abscissae spanning the samples padded by
// `pad_bandwidths * h` on both sides.
DensityEstimate kde(std::span<const double> samples, std::optional<double> bandwidth = {},
                    int grid_points = 512, double pad_bandwidths = 5.0);

// Discrete KL divergence between two sample sets histogrammed on shared
// equal-width bins over their joint range, with additive smoothing and
// renormalization for empty bins. Always >= 0.
double kl_divergence(std::span<const double> reference, std::span<const double> predicted,
                     int bins = 50, double smoothing = 1e-12);

NormReport norms(const Matrix& reference, const Matrix& predicted);

FieldErrors field_errors(std::span<const double> reference_stat,
                         std::span<const double> predicted_stat);

}  // namespace stats
}  // namespace spdheat
