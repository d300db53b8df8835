#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "spdheat/rng.hpp"
#include "spdheat/spd.hpp"

namespace spdheat {

// Per-axis log-normal eigenvalue model. The table parameters (m_i, s_i) are
// the mean and standard deviation of the log-normal variable itself; the
// underlying Gaussian parameters follow by moment matching:
//   sigma_i^2 = ln(1 + s_i^2 / m_i^2),  mu_i = ln(m_i) - sigma_i^2 / 2.
struct ScalingModel {
  std::array<double, 3> mean{};       // m_i, W/(m*K)
  std::array<double, 3> stddev{};     // s_i, W/(m*K)
  std::array<double, 3> gauss_mu{};   // mu_i of y_i
  std::array<double, 3> gauss_sigma{};  // sigma_i of y_i

  static ScalingModel from_moments(const std::array<double, 3>& mean,
                                   const std::array<double, 3>& stddev);
};

// Von Mises-Fisher orientation model on the unit sphere.
struct OrientationModel {
  Vec3 mean_direction;
  double concentration = 0.0;  // eta >= 0; eta = 0 is the uniform sphere

  void validate() const;
};

// Full stochastic description of the conductivity tensor: a reference
// decomposition (Lambda_bar, Q_bar) plus optional scaling and orientation
// perturbation models.
struct TensorModel {
  SpectralDecomp reference;
  std::optional<ScalingModel> scaling;
  std::optional<OrientationModel> orientation;
  std::uint64_t seed = 0;

  void validate() const;
  Mat3 reference_tensor() const { return reference.reconstruct(); }
};

// Draws a unit direction with density proportional to exp(eta * mu^T x) on
// S^2. Exact inverse-CDF sampling of the polar cosine (no rejection), uniform
// azimuth, then rotation of the pole onto mu. Consumes exactly two uniforms.
Vec3 sample_vmf(const OrientationModel& m, RandomStream& rng);

// Minimal rotation carrying `mean` onto `sampled`, as an axis-angle vector
// w = phi * r with r = mean x sampled normalized and phi = arccos(mean . sampled).
AxisAngle3 rotation_from_direction(const Vec3& mean, const Vec3& sampled);

// Draws the three log-normal eigenvalues; consumes three gaussians.
DiagPos3 sample_scaling(const ScalingModel& m, RandomStream& rng);

// Draws one conductivity tensor:
//   C = exp(W) Qbar exp(Y) Qbar^T exp(W)^T
// with exp(Y) the sampled eigenvalues (Lambda_bar when scaling is absent) and
// exp(W) the sampled frame rotation (identity when orientation is absent).
// Draw order is fixed: scaling first, then orientation, so orientation-only
// models consume the stream exactly as sample_vmf does.
SpdTensor3 sample_tensor(const TensorModel& model, RandomStream& rng);

}  // namespace spdheat
