#pragma once
#include <array>
#include <cmath>
#include <complex>

namespace qpt {

// 2x2 complex matrix, row-major. Small enough to live in series mode maps.
struct Mat2c {
  std::complex<double> m[4] = {0, 0, 0, 0};

  static Mat2c identity() {
    Mat2c a;
    a.m[0] = a.m[3] = 1.0;
    return a;
  }
  static Mat2c from_real(const std::array<double, 4>& r) {
    Mat2c a;
    for (int i = 0; i < 4; ++i) a.m[i] = r[i];
    return a;
  }

  std::complex<double>& operator()(int i, int j) { return m[2 * i + j]; }
  const std::complex<double>& operator()(int i, int j) const { return m[2 * i + j]; }

  Mat2c& operator+=(const Mat2c& o) {
    for (int i = 0; i < 4; ++i) m[i] += o.m[i];
    return *this;
  }
  Mat2c& operator-=(const Mat2c& o) {
    for (int i = 0; i < 4; ++i) m[i] -= o.m[i];
    return *this;
  }
  Mat2c& operator*=(std::complex<double> s) {
    for (int i = 0; i < 4; ++i) m[i] *= s;
    return *this;
  }
  friend Mat2c operator+(Mat2c a, const Mat2c& b) { return a += b; }
  friend Mat2c operator-(Mat2c a, const Mat2c& b) { return a -= b; }
  friend Mat2c operator*(Mat2c a, std::complex<double> s) { return a *= s; }
  friend Mat2c operator*(std::complex<double> s, Mat2c a) { return a *= s; }
  friend Mat2c operator*(const Mat2c& a, const Mat2c& b) {
    Mat2c c;
    c.m[0] = a.m[0] * b.m[0] + a.m[1] * b.m[2];
    c.m[1] = a.m[0] * b.m[1] + a.m[1] * b.m[3];
    c.m[2] = a.m[2] * b.m[0] + a.m[3] * b.m[2];
    c.m[3] = a.m[2] * b.m[1] + a.m[3] * b.m[3];
    return c;
  }

  Mat2c conj() const {
    Mat2c c;
    for (int i = 0; i < 4; ++i) c.m[i] = std::conj(m[i]);
    return c;
  }
  std::complex<double> trace() const { return m[0] + m[3]; }
  std::complex<double> det() const { return m[0] * m[3] - m[1] * m[2]; }
  double norm_inf() const {
    double v = 0;
    for (int i = 0; i < 4; ++i) v = std::max(v, std::abs(m[i]));
    return v;
  }
};

inline double mode_norm(const Mat2c& a) { return a.norm_inf(); }
inline double mode_norm(const std::complex<double>& a) { return std::abs(a); }
inline Mat2c mode_conj(const Mat2c& a) { return a.conj(); }
inline std::complex<double> mode_conj(const std::complex<double>& a) { return std::conj(a); }

}  // namespace qpt
