#pragma once

#include <array>
#include <cmath>

namespace spdheat {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](int i) { return (&x)[i]; }
  double operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return {v.x / n, v.y / n, v.z / n};
}

// Dense 3x3 matrix, row-major. Only the handful of operations the manifold
// kernel and the element integrals need.
struct Mat3 {
  std::array<std::array<double, 3>, 3> a{};

  double& operator()(int i, int j) { return a[i][j]; }
  double operator()(int i, int j) const { return a[i][j]; }

  static Mat3 identity() {
    Mat3 m;
    m(0, 0) = m(1, 1) = m(2, 2) = 1.0;
    return m;
  }

  static Mat3 zero() { return {}; }

  static Mat3 diag(double d0, double d1, double d2) {
    Mat3 m;
    m(0, 0) = d0;
    m(1, 1) = d1;
    m(2, 2) = d2;
    return m;
  }

  Vec3 col(int j) const { return {a[0][j], a[1][j], a[2][j]}; }
  Vec3 row(int i) const { return {a[i][0], a[i][1], a[i][2]}; }

  void set_col(int j, const Vec3& v) {
    a[0][j] = v.x;
    a[1][j] = v.y;
    a[2][j] = v.z;
  }
};

inline Mat3 operator+(const Mat3& l, const Mat3& r) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = l(i, j) + r(i, j);
  return m;
}

inline Mat3 operator-(const Mat3& l, const Mat3& r) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = l(i, j) - r(i, j);
  return m;
}

inline Mat3 operator*(const Mat3& l, double s) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = l(i, j) * s;
  return m;
}

inline Mat3 operator*(double s, const Mat3& r) { return r * s; }

inline Mat3 operator*(const Mat3& l, const Mat3& r) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += l(i, k) * r(k, j);
      m(i, j) = s;
    }
  return m;
}

inline Vec3 operator*(const Mat3& m, const Vec3& v) {
  return {dot(m.row(0), v), dot(m.row(1), v), dot(m.row(2), v)};
}

inline Mat3 transpose(const Mat3& m) {
  Mat3 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t(i, j) = m(j, i);
  return t;
}

inline double trace(const Mat3& m) { return m(0, 0) + m(1, 1) + m(2, 2); }

inline double det(const Mat3& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

inline double frobenius_norm(const Mat3& m) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

// Frobenius inner product <A, B> = tr(A^T B).
inline double frobenius_inner(const Mat3& l, const Mat3& r) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += l(i, j) * r(i, j);
  return s;
}

// Cross-product (skew) embedding: skew(w) v = w x v.
inline Mat3 skew(const Vec3& w) {
  Mat3 m;
  m(0, 1) = -w.z;
  m(0, 2) = w.y;
  m(1, 0) = w.z;
  m(1, 2) = -w.x;
  m(2, 0) = -w.y;
  m(2, 1) = w.x;
  return m;
}

inline Vec3 unskew(const Mat3& m) {
  return {0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)), 0.5 * (m(1, 0) - m(0, 1))};
}

}  // namespace spdheat
