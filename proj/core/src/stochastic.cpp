#include "spdheat/stochastic.hpp"

#include <algorithm>
#include <cmath>

namespace spdheat {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

// Rotation carrying the pole z-hat onto the unit vector mu.
Mat3 pole_to_direction(const Vec3& mu) {
  const double c = mu.z;
  if (c > 1.0 - 1e-12) return Mat3::identity();
  if (c < -1.0 + 1e-12) return Mat3::diag(1.0, -1.0, -1.0);  // pi turn about x
  const Vec3 v = cross(Vec3{0.0, 0.0, 1.0}, mu);
  const Mat3 vx = skew(v);
  return Mat3::identity() + vx + (1.0 / (1.0 + c)) * (vx * vx);
}

}  // namespace

ScalingModel ScalingModel::from_moments(const std::array<double, 3>& mean,
                                        const std::array<double, 3>& stddev) {
  ScalingModel m;
  m.mean = mean;
  m.stddev = stddev;
  for (int i = 0; i < 3; ++i) {
    if (!(mean[i] > 0.0)) throw ValidationError("ScalingModel: mean must be > 0");
    if (!(stddev[i] >= 0.0)) throw ValidationError("ScalingModel: stddev must be >= 0");
    const double ratio = stddev[i] / mean[i];
    m.gauss_sigma[i] = std::sqrt(std::log1p(ratio * ratio));
    m.gauss_mu[i] = std::log(mean[i]) - 0.5 * m.gauss_sigma[i] * m.gauss_sigma[i];
  }
  return m;
}

void OrientationModel::validate() const {
  if (std::abs(norm(mean_direction) - 1.0) > 1e-12)
    throw ValidationError("OrientationModel: mean direction must be a unit vector");
  if (!(concentration >= 0.0))
    throw ValidationError("OrientationModel: concentration must be >= 0");
}

void TensorModel::validate() const {
  if (!scaling && !orientation)
    throw ValidationError("TensorModel: at least one of scaling/orientation must be present");
  if (orientation) orientation->validate();
}

Vec3 sample_vmf(const OrientationModel& m, RandomStream& rng) {
  m.validate();
  const double u1 = rng.uniform_open();
  const double u2 = rng.uniform();

  double t;  // polar cosine, density prop. to exp(eta * t) on [-1, 1]
  if (m.concentration < 1e-12) {
    t = 2.0 * u1 - 1.0;
  } else {
    // Inverse CDF in log1p/expm1 form; stable from eta ~ 1e-12 up to eta
    // beyond 1e6 where exp(eta) itself would overflow.
    t = 1.0 + std::log1p((u1 - 1.0) * -std::expm1(-2.0 * m.concentration)) / m.concentration;
  }
  t = std::clamp(t, -1.0, 1.0);

  const double sin_polar = std::sqrt(std::max(0.0, 1.0 - t * t));
  const double psi = kTwoPi * u2;
  const Vec3 around_pole{sin_polar * std::cos(psi), sin_polar * std::sin(psi), t};
  return pole_to_direction(m.mean_direction) * around_pole;
}

AxisAngle3 rotation_from_direction(const Vec3& mean, const Vec3& sampled) {
  const double c = std::clamp(dot(mean, sampled), -1.0, 1.0);
  if (c <= -1.0 + 1e-9)
    throw NearAntipodalError("rotation_from_direction: directions are antipodal");
  const double phi = std::acos(c);
  if (phi < 1e-12) return {Vec3{0.0, 0.0, 0.0}};
  return {normalized(cross(mean, sampled)) * phi};
}

DiagPos3 sample_scaling(const ScalingModel& m, RandomStream& rng) {
  std::array<double, 3> lambda{};
  for (int i = 0; i < 3; ++i)
    lambda[i] = std::exp(m.gauss_mu[i] + m.gauss_sigma[i] * rng.gaussian());
  return DiagPos3(lambda);
}

SpdTensor3 sample_tensor(const TensorModel& model, RandomStream& rng) {
  model.validate();

  const Mat3& qbar = model.reference.eigvecs.mat();
  const Mat3 lambda =
      model.scaling ? sample_scaling(*model.scaling, rng).to_mat3()
                    : model.reference.eigvals.to_mat3();

  Mat3 m = qbar * lambda * transpose(qbar);
  if (model.orientation) {
    const Vec3 x = sample_vmf(*model.orientation, rng);
    const AxisAngle3 w = rotation_from_direction(model.orientation->mean_direction, x);
    const Mat3 rot = rotation_exp(w).mat();
    m = rot * m * transpose(rot);
  }
  return SpdTensor3(SymTensor3::from_mat3(m));
}

}  // namespace spdheat
