#pragma once

#include <array>
#include <optional>

#include "spdheat/errors.hpp"
#include "spdheat/mat3.hpp"

namespace spdheat {

// Symmetric 3x3 tensor stored as its six unique entries. Symmetry holds by
// construction; there is no redundant lower triangle to keep in sync.
struct SymTensor3 {
  double xx = 0.0, yy = 0.0, zz = 0.0;
  double xy = 0.0, xz = 0.0, yz = 0.0;

  Mat3 to_mat3() const {
    Mat3 m;
    m(0, 0) = xx;
    m(1, 1) = yy;
    m(2, 2) = zz;
    m(0, 1) = m(1, 0) = xy;
    m(0, 2) = m(2, 0) = xz;
    m(1, 2) = m(2, 1) = yz;
    return m;
  }

  // Averages the off-diagonal pairs, so nearly-symmetric products of
  // rotations and diagonals collapse onto Sym(3) instead of accumulating
  // rounding skew.
  static SymTensor3 from_mat3(const Mat3& m) {
    return {m(0, 0), m(1, 1), m(2, 2), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
            0.5 * (m(1, 2) + m(2, 1))};
  }

  // Serialization order used by the dataset format: xx, yy, zz, xy, xz, yz.
  std::array<double, 6> to_array() const { return {xx, yy, zz, xy, xz, yz}; }
  static SymTensor3 from_array(const std::array<double, 6>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
};

// Frobenius norm accounting for both off-diagonal copies.
inline double frobenius_norm(const SymTensor3& s) {
  return std::sqrt(s.xx * s.xx + s.yy * s.yy + s.zz * s.zz +
                   2.0 * (s.xy * s.xy + s.xz * s.xz + s.yz * s.yz));
}

// Symmetric positive-definite 3x3 tensor (W/(m*K) for conductivities).
// Definiteness is enforced on construction via the leading principal minors.
struct SpdTensor3 {
  explicit SpdTensor3(const SymTensor3& s);

  const SymTensor3& sym() const { return sym_; }
  Mat3 to_mat3() const { return sym_.to_mat3(); }

 private:
  SymTensor3 sym_;
};

// Proper rotation (element of SO(3)); orthonormality and det = +1 are
// enforced on construction within 1e-10.
struct Rotation3 {
  explicit Rotation3(const Mat3& m);

  const Mat3& mat() const { return m_; }
  Vec3 col(int j) const { return m_.col(j); }

 private:
  Mat3 m_;
};

// Positive diagonal: the eigenvalue part of a spectral decomposition.
struct DiagPos3 {
  explicit DiagPos3(const std::array<double, 3>& v);
  DiagPos3(double l0, double l1, double l2) : DiagPos3(std::array<double, 3>{l0, l1, l2}) {}

  double operator[](int i) const { return v_[i]; }
  const std::array<double, 3>& values() const { return v_; }
  Mat3 to_mat3() const { return Mat3::diag(v_[0], v_[1], v_[2]); }

 private:
  std::array<double, 3> v_;
};

// Axis-angle element of so(3): w = angle * unit axis. Its matrix embedding is
// the skew tensor skew(w).
struct AxisAngle3 {
  Vec3 w;

  double angle() const { return norm(w); }
  Vec3 axis() const { return normalized(w); }  // requires angle() > 0
  Mat3 to_skew() const { return skew(w); }
};

// Eigenvalue/eigenvector pair (Lambda, Q) of an SPD tensor, optionally
// annotated with the reference frame used to resolve sign and permutation
// ambiguity. near_degenerate marks relative eigenvalue gaps below 1e-8, where
// the eigenvector frame (and hence alignment) is not meaningfully unique.
struct SpectralDecomp {
  DiagPos3 eigvals;
  Rotation3 eigvecs;
  std::optional<Rotation3> aligned_to;
  bool near_degenerate = false;

  Mat3 reconstruct() const {
    return eigvecs.mat() * eigvals.to_mat3() * transpose(eigvecs.mat());
  }
};

// Trade-off weight c between the scale and rotation terms of the
// scaling-rotation distance.
struct MetricConfig {
  double c = 1.0;

  void validate() const {
    if (!(c >= 0.0) || !std::isfinite(c)) throw ValidationError("MetricConfig: c must be >= 0");
  }
};

// --- Operations ------------------------------------------------------------

// Symmetric eigendecomposition by cyclic Jacobi sweeps (1e-14 relative
// off-diagonal threshold, 100-sweep cap). Eigenvalues come back in raw solver
// order; the eigenvector matrix is repaired to det +1 by negating its third
// column if needed.
SpectralDecomp eigendecompose(const SpdTensor3& t);

// Resolves the sign/permutation ambiguity of a decomposition against a
// reference frame: of the 24 proper (permutation, sign) variants, returns the
// one minimizing the rotational distance ||log(Q^T R)||_F, eigenvalues
// permuted consistently. Ties break lexicographically on (permutation index,
// sign index).
SpectralDecomp align(const SpectralDecomp& d, const Rotation3& reference);

// Principal matrix logarithm of an SPD tensor: Q log(Lambda) Q^T.
SymTensor3 log_spd(const SpdTensor3& t);

// Matrix exponential of a symmetric tensor; always lands on the SPD cone.
SpdTensor3 exp_sym(const SymTensor3& s);

// Exponential map so(3) -> SO(3) (Rodrigues form).
Rotation3 rotation_exp(const AxisAngle3& s);

// Principal logarithm SO(3) -> so(3); |w| in [0, pi). Throws NearAntipodal
// when trace(r) <= -1 + 1e-6 (rotation angle at the pi branch cut).
AxisAngle3 rotation_log(const Rotation3& r);

// Flat (vectorisation) distance ||a - b||_F.
double dist_vec(const SpdTensor3& a, const SpdTensor3& b);

// Log-Euclidean distance ||log a - log b||_F.
double dist_log_euclidean(const SpdTensor3& a, const SpdTensor3& b);

// Scaling-rotation distance sqrt(d_L^2 + c * d_R^2) between two decompositions
// aligned to a common reference frame.
double dist_scaling_rotation(const SpectralDecomp& a, const SpectralDecomp& b,
                             const MetricConfig& cfg);

namespace detail {

// Jacobi eigensolver for an arbitrary symmetric matrix (no definiteness
// requirement); used by eigendecompose and exp_sym.
struct JacobiResult {
  std::array<double, 3> eigvals;
  Mat3 eigvecs;  // det repaired to +1
};
JacobiResult jacobi_eigen_sym(const Mat3& m);

// Rotation angle in [0, pi] from the trace, without the log map's branch
// restriction. Used to rank alignment candidates.
double rotation_angle(const Mat3& r);

}  // namespace detail

}  // namespace spdheat
