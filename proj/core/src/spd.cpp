#include "spdheat/spd.hpp"

#include <algorithm>
#include <cmath>

namespace spdheat {

namespace {

constexpr double kJacobiTol = 1e-14;   // relative off-diagonal threshold
constexpr int kJacobiMaxSweeps = 100;
constexpr double kOrthoTol = 1e-10;

double off_diagonal_norm(const Mat3& m) {
  return std::sqrt(2.0 * (m(0, 1) * m(0, 1) + m(0, 2) * m(0, 2) + m(1, 2) * m(1, 2)));
}

// One Jacobi rotation zeroing a(p,q); updates a and accumulates into v.
void jacobi_rotate(Mat3& a, Mat3& v, int p, int q) {
  if (a(p, q) == 0.0) return;
  const double tau = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;

  const double app = a(p, p), aqq = a(q, q), apq = a(p, q);
  a(p, p) = app - t * apq;
  a(q, q) = aqq + t * apq;
  a(p, q) = a(q, p) = 0.0;
  const int r = 3 - p - q;  // the remaining index
  const double arp = a(r, p), arq = a(r, q);
  a(r, p) = a(p, r) = c * arp - s * arq;
  a(r, q) = a(q, r) = s * arp + c * arq;

  for (int i = 0; i < 3; ++i) {
    const double vip = v(i, p), viq = v(i, q);
    v(i, p) = c * vip - s * viq;
    v(i, q) = s * vip + c * viq;
  }
}

}  // namespace

namespace detail {

JacobiResult jacobi_eigen_sym(const Mat3& m) {
  Mat3 a = m;
  Mat3 v = Mat3::identity();
  const double scale = frobenius_norm(m);
  const double tol = kJacobiTol * (scale > 0.0 ? scale : 1.0);

  int sweep = 0;
  while (off_diagonal_norm(a) > tol) {
    if (++sweep > kJacobiMaxSweeps)
      throw ConvergenceError("jacobi_eigen_sym: exceeded sweep cap");
    jacobi_rotate(a, v, 0, 1);
    jacobi_rotate(a, v, 0, 2);
    jacobi_rotate(a, v, 1, 2);
  }

  if (det(v) < 0.0) v.set_col(2, -v.col(2));
  return {{a(0, 0), a(1, 1), a(2, 2)}, v};
}

double rotation_angle(const Mat3& r) {
  return std::acos(std::clamp(0.5 * (trace(r) - 1.0), -1.0, 1.0));
}

}  // namespace detail

SpdTensor3::SpdTensor3(const SymTensor3& s) : sym_(s) {
  // Sylvester's criterion on the leading principal minors.
  const double m1 = s.xx;
  const double m2 = s.xx * s.yy - s.xy * s.xy;
  const double m3 = det(s.to_mat3());
  if (!(m1 > 0.0 && m2 > 0.0 && m3 > 0.0))
    throw NotSpdError("SpdTensor3: a leading principal minor is <= 0");
}

Rotation3::Rotation3(const Mat3& m) : m_(m) {
  const Mat3 g = transpose(m) * m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double expected = (i == j) ? 1.0 : 0.0;
      if (std::abs(g(i, j) - expected) > kOrthoTol)
        throw NotRotationError("Rotation3: matrix is not orthonormal within 1e-10");
    }
  if (std::abs(det(m) - 1.0) > kOrthoTol)
    throw NotRotationError("Rotation3: determinant is not +1 within 1e-10");
}

DiagPos3::DiagPos3(const std::array<double, 3>& v) : v_(v) {
  for (double x : v_)
    if (!(x > 0.0)) throw NotSpdError("DiagPos3: eigenvalues must be strictly positive");
}

SpectralDecomp eigendecompose(const SpdTensor3& t) {
  const auto j = detail::jacobi_eigen_sym(t.to_mat3());
  SpectralDecomp d{DiagPos3(j.eigvals), Rotation3(j.eigvecs), std::nullopt, false};

  const double lmax = std::max({j.eigvals[0], j.eigvals[1], j.eigvals[2]});
  for (int i = 0; i < 3; ++i)
    for (int k = i + 1; k < 3; ++k)
      if (std::abs(j.eigvals[i] - j.eigvals[k]) < 1e-8 * lmax) d.near_degenerate = true;
  return d;
}

SpectralDecomp align(const SpectralDecomp& d, const Rotation3& reference) {
  static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                       {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  static constexpr int kPermParity[6] = {+1, -1, -1, +1, +1, -1};

  const Mat3& q = d.eigvecs.mat();
  const Mat3& ref = reference.mat();

  double best_angle = 0.0;
  Mat3 best_q;
  std::array<double, 3> best_l{};
  bool found = false;

  // 6 permutations x 8 sign patterns; only det(+1) variants are admissible
  // frames. Loop order realizes the lexicographic tie-break.
  for (int pi = 0; pi < 6; ++pi) {
    for (int si = 0; si < 8; ++si) {
      const int s0 = (si & 4) ? -1 : +1;
      const int s1 = (si & 2) ? -1 : +1;
      const int s2 = (si & 1) ? -1 : +1;
      if (kPermParity[pi] * s0 * s1 * s2 != +1) continue;

      Mat3 cand;
      const int sgn[3] = {s0, s1, s2};
      for (int col = 0; col < 3; ++col)
        cand.set_col(col, static_cast<double>(sgn[col]) * q.col(kPerms[pi][col]));

      // d_R = ||log(Q^T R)||_F = sqrt(2) * angle(Q^T R); the angle alone
      // ranks candidates, and trace(Q^T R) = <Q, R>_F.
      const double cos_arg = std::clamp(0.5 * (frobenius_inner(cand, ref) - 1.0), -1.0, 1.0);
      const double angle = std::acos(cos_arg);
      if (!found || angle < best_angle) {
        found = true;
        best_angle = angle;
        best_q = cand;
        for (int col = 0; col < 3; ++col) best_l[col] = d.eigvals[kPerms[pi][col]];
      }
    }
  }

  SpectralDecomp out{DiagPos3(best_l), Rotation3(best_q), reference, d.near_degenerate};
  return out;
}

SymTensor3 log_spd(const SpdTensor3& t) {
  const auto j = detail::jacobi_eigen_sym(t.to_mat3());
  const Mat3 lg = j.eigvecs *
                  Mat3::diag(std::log(j.eigvals[0]), std::log(j.eigvals[1]),
                             std::log(j.eigvals[2])) *
                  transpose(j.eigvecs);
  return SymTensor3::from_mat3(lg);
}

SpdTensor3 exp_sym(const SymTensor3& s) {
  const auto j = detail::jacobi_eigen_sym(s.to_mat3());
  const Mat3 ex = j.eigvecs *
                  Mat3::diag(std::exp(j.eigvals[0]), std::exp(j.eigvals[1]),
                             std::exp(j.eigvals[2])) *
                  transpose(j.eigvecs);
  return SpdTensor3(SymTensor3::from_mat3(ex));
}

Rotation3 rotation_exp(const AxisAngle3& s) {
  const double theta = s.angle();
  const Mat3 w = s.to_skew();
  if (theta < 1e-8) {
    // Second-order series; error O(theta^3) is far below the orthonormality
    // tolerance here.
    return Rotation3(Mat3::identity() + w + 0.5 * (w * w));
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Rotation3(Mat3::identity() + a * w + b * (w * w));
}

AxisAngle3 rotation_log(const Rotation3& r) {
  const double tr = trace(r.mat());
  if (tr <= -1.0 + 1e-6)
    throw NearAntipodalError("rotation_log: rotation angle too close to pi");

  const double theta = detail::rotation_angle(r.mat());
  const Vec3 half_skew = unskew(r.mat());  // = sin(theta) * axis
  if (theta < 1e-8) {
    // theta/sin(theta) -> 1 + theta^2/6
    return {half_skew * (1.0 + theta * theta / 6.0)};
  }
  return {half_skew * (theta / std::sin(theta))};
}

double dist_vec(const SpdTensor3& a, const SpdTensor3& b) {
  const SymTensor3& x = a.sym();
  const SymTensor3& y = b.sym();
  return frobenius_norm(SymTensor3{x.xx - y.xx, x.yy - y.yy, x.zz - y.zz, x.xy - y.xy,
                                   x.xz - y.xz, x.yz - y.yz});
}

double dist_log_euclidean(const SpdTensor3& a, const SpdTensor3& b) {
  const SymTensor3 la = log_spd(a);
  const SymTensor3 lb = log_spd(b);
  return frobenius_norm(SymTensor3{la.xx - lb.xx, la.yy - lb.yy, la.zz - lb.zz, la.xy - lb.xy,
                                   la.xz - lb.xz, la.yz - lb.yz});
}

double dist_scaling_rotation(const SpectralDecomp& a, const SpectralDecomp& b,
                             const MetricConfig& cfg) {
  cfg.validate();
  if (!a.aligned_to || !b.aligned_to)
    throw ValidationError("dist_scaling_rotation: both decompositions must be aligned");
  if (frobenius_norm(a.aligned_to->mat() - b.aligned_to->mat()) > 1e-9)
    throw ValidationError("dist_scaling_rotation: decompositions aligned to different references");

  double dl2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double dlog = std::log(a.eigvals[i]) - std::log(b.eigvals[i]);
    dl2 += dlog * dlog;
  }
  const Mat3 rel = transpose(a.eigvecs.mat()) * b.eigvecs.mat();
  const AxisAngle3 w = rotation_log(Rotation3(rel));
  const double dr = std::sqrt(2.0) * w.angle();  // ||log(Q1^T Q2)||_F
  return std::sqrt(dl2 + cfg.c * dr * dr);
}

}  // namespace spdheat
