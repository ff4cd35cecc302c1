#pragma once
#include <complex>
#include <cstdint>
#include <map>
#include <vector>

#include "qpt/errors.hpp"
#include "qpt/mat2.hpp"
#include "qpt/potential.hpp"

namespace qpt {

// Trigonometric series on the half-lattice: value(x) = sum_k c_k exp(i<k,omega>x/2).
// Index k ranges over Z^d; a potential V(omega x) with modes at m lives here at
// k = 2m, while conjugations near a resonance introduce genuinely odd indices.
// Modes are kept in a map with a packed integer key so iteration order, and with
// it every downstream sum, is deterministic.

namespace series_detail {

inline constexpr int kMaxDim = 4;
inline constexpr int kIndexBound = 1 << 14;  // per-component |k_i| limit

inline std::uint64_t pack_key(const ModeIndex& k) {
  if (k.size() < 1 || k.size() > kMaxDim)
    throw ConfigError("series dimension must be between 1 and 4");
  std::uint64_t key = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (k[i] <= -kIndexBound || k[i] >= kIndexBound)
      throw NumericError("series mode index out of range");
    key |= (std::uint64_t(k[i] + kIndexBound) & 0xffff) << (16 * i);
  }
  return key;
}

inline ModeIndex unpack_key(std::uint64_t key, int d) {
  ModeIndex k(d);
  for (int i = 0; i < d; ++i)
    k[i] = int((key >> (16 * i)) & 0xffff) - kIndexBound;
  return k;
}

inline int l1(const ModeIndex& k) {
  int s = 0;
  for (int v : k) s += std::abs(v);
  return s;
}

}  // namespace series_detail

template <class T>
class TrigSeries {
 public:
  explicit TrigSeries(int d) : d_(d) {
    if (d < 1 || d > series_detail::kMaxDim)
      throw ConfigError("series dimension must be between 1 and 4");
  }

  int dim() const { return d_; }
  bool empty() const { return modes_.empty(); }
  std::size_t size() const { return modes_.size(); }
  const std::map<std::uint64_t, T>& raw() const { return modes_; }

  T at(const ModeIndex& k) const {
    auto it = modes_.find(series_detail::pack_key(k));
    return it == modes_.end() ? T{} : it->second;
  }
  void set(const ModeIndex& k, const T& c) {
    check_dim(k);
    modes_[series_detail::pack_key(k)] = c;
  }
  void add(const ModeIndex& k, const T& c) {
    check_dim(k);
    auto key = series_detail::pack_key(k);
    auto it = modes_.find(key);
    if (it == modes_.end())
      modes_.emplace(key, c);
    else
      it->second += c;
  }

  T mean() const { return at(ModeIndex(d_, 0)); }

  // largest l1 index norm present
  int support_radius() const {
    int r = 0;
    for (const auto& [key, c] : modes_)
      r = std::max(r, series_detail::l1(series_detail::unpack_key(key, d_)));
    return r;
  }

  double norm1() const {
    double s = 0;
    for (const auto& [key, c] : modes_) s += mode_norm(c);
    return s;
  }

  double norm_weighted(double r) const {
    double s = 0;
    for (const auto& [key, c] : modes_)
      s += mode_norm(c) *
           std::exp(r * series_detail::l1(series_detail::unpack_key(key, d_)));
    return s;
  }

  TrigSeries& prune(double eps) {
    for (auto it = modes_.begin(); it != modes_.end();)
      it = mode_norm(it->second) <= eps ? modes_.erase(it) : std::next(it);
    return *this;
  }

  TrigSeries& truncate(int radius_cap) {
    for (auto it = modes_.begin(); it != modes_.end();)
      it = series_detail::l1(series_detail::unpack_key(it->first, d_)) > radius_cap
               ? modes_.erase(it)
               : std::next(it);
    return *this;
  }

  // enforce c_{-k} = conj(c_k); kills the rounding-level imaginary residue of a
  // series that represents a real-valued function
  TrigSeries& hermitize() {
    TrigSeries out(d_);
    for (const auto& [key, c] : modes_) {
      ModeIndex k = series_detail::unpack_key(key, d_);
      ModeIndex nk(d_);
      for (int i = 0; i < d_; ++i) nk[i] = -k[i];
      T sym = (c + mode_conj(at(nk))) * std::complex<double>(0.5);
      out.set(k, sym);
      out.set(nk, mode_conj(sym));  // partner may be absent in the source
    }
    modes_ = std::move(out.modes_);
    return *this;
  }

  // value at torus phase theta (components mod 4*pi on the half-lattice)
  T eval_theta(const std::vector<double>& theta) const {
    if (int(theta.size()) != d_) throw ConfigError("theta dimension mismatch");
    T v{};
    for (const auto& [key, c] : modes_) {
      ModeIndex k = series_detail::unpack_key(key, d_);
      double ph = 0;
      for (int i = 0; i < d_; ++i) ph += k[i] * theta[i];
      v += c * std::exp(std::complex<double>(0.0, 0.5 * ph));
    }
    return v;
  }

  // value at spatial point x for frequency vector omega
  T eval_x(const FrequencyVector& omega, double x) const {
    if (omega.dim() != d_) throw ConfigError("frequency dimension mismatch");
    T v{};
    for (const auto& [key, c] : modes_) {
      ModeIndex k = series_detail::unpack_key(key, d_);
      v += c * std::exp(std::complex<double>(0.0, 0.5 * omega.dot(k) * x));
    }
    return v;
  }

  // exact x-derivative along the flow: mode k picks up i<k,omega>/2
  TrigSeries d_omega(const FrequencyVector& omega) const {
    if (omega.dim() != d_) throw ConfigError("frequency dimension mismatch");
    TrigSeries out(d_);
    for (const auto& [key, c] : modes_) {
      ModeIndex k = series_detail::unpack_key(key, d_);
      out.modes_[key] = c * std::complex<double>(0.0, 0.5 * omega.dot(k));
    }
    return out;
  }

  TrigSeries& operator+=(const TrigSeries& o) {
    require_same_dim(o);
    for (const auto& [key, c] : o.modes_) {
      auto it = modes_.find(key);
      if (it == modes_.end())
        modes_.emplace(key, c);
      else
        it->second += c;
    }
    return *this;
  }
  TrigSeries& operator-=(const TrigSeries& o) {
    require_same_dim(o);
    for (const auto& [key, c] : o.modes_) {
      auto it = modes_.find(key);
      if (it == modes_.end())
        modes_.emplace(key, T{} - c);
      else
        it->second -= c;
    }
    return *this;
  }
  TrigSeries& operator*=(std::complex<double> s) {
    for (auto& [key, c] : modes_) c *= s;
    return *this;
  }
  friend TrigSeries operator+(TrigSeries a, const TrigSeries& b) { return a += b; }
  friend TrigSeries operator-(TrigSeries a, const TrigSeries& b) { return a -= b; }
  friend TrigSeries operator*(TrigSeries a, std::complex<double> s) { return a *= s; }
  friend TrigSeries operator*(std::complex<double> s, TrigSeries a) { return a *= s; }

  template <class F>
  void for_each(F&& fn) const {
    for (const auto& [key, c] : modes_)
      fn(series_detail::unpack_key(key, d_), c);
  }

 private:
  void check_dim(const ModeIndex& k) const {
    if (int(k.size()) != d_) throw ConfigError("mode index dimension mismatch");
  }
  void require_same_dim(const TrigSeries& o) const {
    if (o.d_ != d_) throw ConfigError("series dimension mismatch");
  }

  int d_;
  std::map<std::uint64_t, T> modes_;
};

// Convolution product truncated to l1 index radius <= cap; coefficients below
// prune_eps are dropped to keep supports sparse through repeated products.
template <class T>
TrigSeries<T> product(const TrigSeries<T>& a, const TrigSeries<T>& b, int cap,
                      double prune_eps = 1e-16) {
  if (a.dim() != b.dim()) throw ConfigError("series dimension mismatch");
  const int d = a.dim();
  TrigSeries<T> out(d);
  a.for_each([&](const ModeIndex& ka, const T& ca) {
    b.for_each([&](const ModeIndex& kb, const T& cb) {
      ModeIndex k(d);
      int r = 0;
      for (int i = 0; i < d; ++i) {
        k[i] = ka[i] + kb[i];
        r += std::abs(k[i]);
      }
      if (r > cap) return;
      out.add(k, ca * cb);
    });
  });
  out.prune(prune_eps);
  return out;
}

// exp of a matrix-valued series by the power series; converges fast for the
// small exponents the conjugation scheme produces
inline TrigSeries<Mat2c> exp_series(const TrigSeries<Mat2c>& y, int cap,
                                    double prune_eps = 1e-16) {
  TrigSeries<Mat2c> out(y.dim());
  out.set(ModeIndex(y.dim(), 0), Mat2c::identity());
  TrigSeries<Mat2c> term = out;
  for (int n = 1; n <= 40; ++n) {
    term = product(term, y, cap, prune_eps);
    term *= std::complex<double>(1.0 / n);
    if (term.empty()) break;
    out += term;
    if (term.norm1() < 1e-18) break;
  }
  out.prune(prune_eps);
  return out;
}

// scalar series of one matrix entry
inline TrigSeries<std::complex<double>> entry_series(const TrigSeries<Mat2c>& a,
                                                     int i, int j) {
  TrigSeries<std::complex<double>> out(a.dim());
  a.for_each([&](const ModeIndex& k, const Mat2c& c) {
    std::complex<double> v = c(i, j);
    if (v != std::complex<double>{}) out.set(k, v);
  });
  return out;
}

using ScalarSeries = TrigSeries<std::complex<double>>;
using MatSeries = TrigSeries<Mat2c>;

}  // namespace qpt
