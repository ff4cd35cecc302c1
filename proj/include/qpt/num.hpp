#pragma once
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace qpt {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
  std::size_t n = 0;
};

// Ordinary least squares y ~ a + b x.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  f.n = x.size();
  if (f.n < 2) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < f.n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  double n = static_cast<double>(f.n);
  double det = n * sxx - sx * sx;
  if (det == 0) return f;
  f.slope = (n * sxy - sx * sy) / det;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_tot = syy - sy * sy / n;
  double ss_res = 0;
  for (std::size_t i = 0; i < f.n; ++i) {
    double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

// Shortest-form decimal that round-trips a double. Used for all file output so
// identical runs produce byte-identical files.
inline std::string fmt_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// splitmix64, used to derive deterministic low-discrepancy offsets from a seed.
inline std::uint64_t splitmix64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Kronecker (golden-type) low-discrepancy sequence on [0,1)^d with a seeded
// offset: deterministic for a fixed (d, seed), well spread for modest counts.
inline std::vector<double> quasi_random_point(int d, std::size_t i, std::uint64_t seed) {
  static const double irr[8] = {
      0.6180339887498949, 0.7548776662466927, 0.8191725133961645, 0.8566748838545029,
      0.8812714616335696, 0.8986537126286993, 0.9115923534820549, 0.9215993196339830};
  std::uint64_t s = seed;
  std::vector<double> p(d);
  for (int j = 0; j < d; ++j) {
    double off = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
    double v = off + (static_cast<double>(i) + 1.0) * irr[j % 8];
    p[j] = v - std::floor(v);
  }
  return p;
}

}  // namespace qpt
