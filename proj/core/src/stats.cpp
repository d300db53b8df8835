#include "spdheat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spdheat::stats {

namespace {

constexpr double kInvSqrtTwoPi = 0.39894228040143267794;

double vec_norm(std::span<const double> v, int p) {
  double s = 0.0;
  switch (p) {
    case 1:
      for (double x : v) s += std::abs(x);
      return s;
    case 2:
      for (double x : v) s += x * x;
      return std::sqrt(s);
    default:  // infinity
      for (double x : v) s = std::max(s, std::abs(x));
      return s;
  }
}

double diff_norm(std::span<const double> a, std::span<const double> b, int p) {
  double s = 0.0;
  switch (p) {
    case 1:
      for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      return s;
    case 2:
      for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(s);
    default:
      for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
      return s;
  }
}

double sample_std(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> smoothed_histogram(std::span<const double> samples, double lo, double width,
                                       int bins, double smoothing) {
  std::vector<double> p(bins, 0.0);
  for (double x : samples) {
    int b = static_cast<int>((x - lo) / width);
    b = std::clamp(b, 0, bins - 1);  // top edge falls into the last bin
    p[b] += 1.0;
  }
  double total = 0.0;
  for (double& v : p) {
    v = v / static_cast<double>(samples.size()) + smoothing;
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

FieldStats mc_stats(const Matrix& samples) {
  if (samples.rows < 2) throw TooFewSamplesError("mc_stats: need at least 2 samples");

  FieldStats out;
  out.count = samples.rows;
  out.mean.assign(samples.cols, 0.0);
  out.std.assign(samples.cols, 0.0);

  for (std::size_t i = 0; i < samples.rows; ++i) {
    const auto row = samples.row(i);
    for (std::size_t j = 0; j < samples.cols; ++j) out.mean[j] += row[j];
  }
  const double inv_n = 1.0 / static_cast<double>(samples.rows);
  for (double& m : out.mean) m *= inv_n;

  for (std::size_t i = 0; i < samples.rows; ++i) {
    const auto row = samples.row(i);
    for (std::size_t j = 0; j < samples.cols; ++j) {
      const double d = row[j] - out.mean[j];
      out.std[j] += d * d;
    }
  }
  const double inv_nm1 = 1.0 / static_cast<double>(samples.rows - 1);
  for (double& s : out.std) s = std::sqrt(s * inv_nm1);
  return out;
}

DensityEstimate kde(std::span<const double> samples, std::optional<double> bandwidth,
                    int grid_points, double pad_bandwidths) {
  if (samples.size() < 2) throw TooFewSamplesError("kde: need at least 2 samples");
  const double sigma = sample_std(samples);
  if (!(sigma > 0.0) && !bandwidth) throw DegenerateSampleError("kde: sample std is zero");

  DensityEstimate est;
  est.bandwidth =
      bandwidth ? *bandwidth
                : sigma * std::pow(static_cast<double>(samples.size()), -0.2);

  const auto [mn_it, mx_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn_it - pad_bandwidths * est.bandwidth;
  const double hi = *mx_it + pad_bandwidths * est.bandwidth;
  const double step = (hi - lo) / (grid_points - 1);

  est.abscissae.resize(grid_points);
  est.density.resize(grid_points);
  const double scale = 1.0 / (static_cast<double>(samples.size()) * est.bandwidth);
  for (int g = 0; g < grid_points; ++g) {
    const double t = lo + g * step;
    est.abscissae[g] = t;
    double s = 0.0;
    for (double x : samples) {
      const double u = (t - x) / est.bandwidth;
      s += std::exp(-0.5 * u * u);
    }
    est.density[g] = kInvSqrtTwoPi * scale * s;
  }
  return est;
}

double kl_divergence(std::span<const double> reference, std::span<const double> predicted,
                     int bins, double smoothing) {
  if (reference.empty() || predicted.empty())
    throw TooFewSamplesError("kl_divergence: empty sample list");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : reference) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  for (double x : predicted) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(hi > lo)) throw DegenerateSupportError("kl_divergence: joint range has zero width");

  const double width = (hi - lo) / bins;
  const auto p = smoothed_histogram(reference, lo, width, bins, smoothing);
  const auto q = smoothed_histogram(predicted, lo, width, bins, smoothing);

  double d = 0.0;
  for (int b = 0; b < bins; ++b) d += p[b] * std::log(p[b] / q[b]);
  return std::max(0.0, d);
}

NormReport norms(const Matrix& reference, const Matrix& predicted) {
  if (reference.rows != predicted.rows || reference.cols != predicted.cols)
    throw ShapeMismatchError("norms: sample matrices differ in shape");
  if (reference.rows == 0) throw TooFewSamplesError("norms: no samples");

  NormReport rep;
  const int ps[3] = {1, 2, 0};
  double acc[3] = {0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < reference.rows; ++i) {
    const auto r = reference.row(i);
    const auto pr = predicted.row(i);
    for (int k = 0; k < 3; ++k) {
      const double den = vec_norm(r, ps[k]);
      if (den == 0.0) throw ZeroReferenceError("norms: zero-norm reference sample");
      acc[k] += diff_norm(r, pr, ps[k]) / den;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(reference.rows);
  rep.l1_sample = acc[0] * inv_n;
  rep.l2_sample = acc[1] * inv_n;
  rep.linf_sample = acc[2] * inv_n;

  const FieldStats fr = mc_stats(reference);
  const FieldStats fp = mc_stats(predicted);
  auto field_norm = [&](const std::vector<double>& ref, const std::vector<double>& pred, int p) {
    const double den = vec_norm(ref, p);
    if (den == 0.0) throw ZeroReferenceError("norms: zero-norm reference field");
    return diff_norm(ref, pred, p) / den;
  };
  rep.l1_mean = field_norm(fr.mean, fp.mean, 1);
  rep.l2_mean = field_norm(fr.mean, fp.mean, 2);
  rep.linf_mean = field_norm(fr.mean, fp.mean, 0);
  rep.l1_std = field_norm(fr.std, fp.std, 1);
  rep.l2_std = field_norm(fr.std, fp.std, 2);
  rep.linf_std = field_norm(fr.std, fp.std, 0);
  return rep;
}

FieldErrors field_errors(std::span<const double> reference_stat,
                         std::span<const double> predicted_stat) {
  if (reference_stat.size() != predicted_stat.size())
    throw ShapeMismatchError("field_errors: length mismatch");

  FieldErrors e;
  e.abs.resize(reference_stat.size());
  e.rel.resize(reference_stat.size());
  for (std::size_t i = 0; i < reference_stat.size(); ++i) {
    e.abs[i] = std::abs(predicted_stat[i] - reference_stat[i]);
    e.rel[i] = reference_stat[i] == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                        : e.abs[i] / std::abs(reference_stat[i]);
  }
  return e;
}

}  // namespace spdheat::stats
