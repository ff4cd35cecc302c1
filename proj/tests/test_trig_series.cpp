#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "qpt/num.hpp"
#include "qpt/trig_series.hpp"

using namespace qpt;
using Cplx = std::complex<double>;

namespace {

double uniform(std::uint64_t& s, double lo, double hi) {
  return lo + (hi - lo) * (double(splitmix64(s) >> 11) * 0x1.0p-53);
}

ModeIndex rand_mode(std::uint64_t& s, int d, int radius) {
  ModeIndex k(d);
  for (int i = 0; i < d; ++i)
    k[i] = int(splitmix64(s) % (2 * radius + 1)) - radius;
  return k;
}

ScalarSeries rand_scalar_series(std::uint64_t& s, int d, int n_modes) {
  ScalarSeries a(d);
  for (int i = 0; i < n_modes; ++i)
    a.add(rand_mode(s, d, 3), Cplx(uniform(s, -0.5, 0.5), uniform(s, -0.5, 0.5)));
  return a;
}

MatSeries rand_mat_series(std::uint64_t& s, int d, int n_modes, double scale) {
  MatSeries a(d);
  for (int i = 0; i < n_modes; ++i) {
    Mat2c c;
    for (int j = 0; j < 4; ++j)
      c.m[j] = Cplx(uniform(s, -scale, scale), uniform(s, -scale, scale));
    a.add(rand_mode(s, d, 2), c);
  }
  return a;
}

std::vector<double> rand_theta(std::uint64_t& s, int d) {
  std::vector<double> th(d);
  for (int i = 0; i < d; ++i) th[i] = uniform(s, 0.0, 4.0 * M_PI);
  return th;
}

}  // namespace

TEST_CASE("series mode bookkeeping") {
  ScalarSeries a(2);
  a.set({1, -2}, Cplx(0.5, 0.0));
  a.add({1, -2}, Cplx(0.25, 0.0));
  a.set({0, 0}, Cplx(2.0, 0.0));
  CHECK(a.at({1, -2}) == Cplx(0.75, 0.0));
  CHECK(a.at({3, 3}) == Cplx(0.0, 0.0));
  CHECK(a.mean() == Cplx(2.0, 0.0));
  CHECK(a.support_radius() == 3);
  CHECK(a.size() == 2);
  CHECK(a.norm1() == doctest::Approx(2.75).epsilon(1e-15));

  // l1-weighted analytic norm: single mode of radius 3 scales as e^{3r}
  ScalarSeries b(2);
  b.set({2, -1}, Cplx(0.5, 0.0));
  CHECK(b.norm_weighted(0.4) == doctest::Approx(0.5 * std::exp(1.2)).epsilon(1e-14));

  a.prune(1.0);
  CHECK(a.size() == 1);
  CHECK(a.mean() == Cplx(2.0, 0.0));

  ScalarSeries c(2);
  c.set({3, 1}, Cplx(1, 0));
  c.set({1, 0}, Cplx(1, 0));
  c.truncate(2);
  CHECK(c.size() == 1);
  CHECK(c.at({1, 0}) == Cplx(1, 0));

  CHECK_THROWS_AS(a.set({1, 2, 3}, Cplx(1, 0)), ConfigError);
  CHECK_THROWS_AS(ScalarSeries(0), ConfigError);
  CHECK_THROWS_AS(ScalarSeries(5), ConfigError);
}

TEST_CASE("eval_theta and eval_x agree and respect the half-lattice") {
  FrequencyVector omega = qtest::golden_freq();
  ScalarSeries a(2);
  a.set({2, 0}, Cplx(0.3, -0.1));
  a.set({-2, 0}, Cplx(0.3, 0.1));
  a.set({1, -1}, Cplx(0.0, 0.2));

  for (double x : {0.0, 0.37, 2.5}) {
    std::vector<double> th = {omega.omega[0] * x, omega.omega[1] * x};
    Cplx via_theta = a.eval_theta(th);
    Cplx via_x = a.eval_x(omega, x);
    CHECK(std::abs(via_theta - via_x) < 1e-14);
  }

  // the even pair above is the lift of cos at the full-lattice mode (1,0):
  // value 0.6 cos(omega_0 x) plus phase-shifted parts
  ScalarSeries c(2);
  c.set({2, 0}, Cplx(0.5, 0.0));
  c.set({-2, 0}, Cplx(0.5, 0.0));
  double x = 1.234;
  CHECK(std::real(c.eval_x(omega, x)) == doctest::Approx(std::cos(omega.omega[0] * x)).epsilon(1e-14));

  CHECK_THROWS_AS(a.eval_theta({0.0}), ConfigError);
  CHECK_THROWS_AS(a.eval_x(FrequencyVector{{1.0, 2.0, 3.0}, 0.0, 2.0}, 0.0), ConfigError);
}

TEST_CASE("product matches pointwise multiplication") {
  std::uint64_t s = 42;
  ScalarSeries a = rand_scalar_series(s, 2, 12);
  ScalarSeries b = rand_scalar_series(s, 2, 12);
  ScalarSeries ab = product(a, b, 64, 0.0);
  for (int t = 0; t < 6; ++t) {
    auto th = rand_theta(s, 2);
    Cplx lhs = ab.eval_theta(th);
    Cplx rhs = a.eval_theta(th) * b.eval_theta(th);
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }

  MatSeries ma = rand_mat_series(s, 2, 8, 0.5);
  MatSeries mb = rand_mat_series(s, 2, 8, 0.5);
  MatSeries mab = product(ma, mb, 64, 0.0);
  for (int t = 0; t < 4; ++t) {
    auto th = rand_theta(s, 2);
    Mat2c lhs = mab.eval_theta(th);
    Mat2c rhs = ma.eval_theta(th) * mb.eval_theta(th);
    CHECK((lhs - rhs).norm_inf() < 1e-12);
  }

  // truncation cap drops high modes
  ScalarSeries hi(1);
  hi.set({3}, Cplx(1, 0));
  ScalarSeries hi2 = product(hi, hi, 4, 0.0);
  CHECK(hi2.empty());
  ScalarSeries hi3 = product(hi, hi, 6, 0.0);
  CHECK(hi3.at({6}) == Cplx(1, 0));
}

TEST_CASE("matrix exponential against the closed form") {
  // constant traceless W with W^2 = -4 I: e^W = cos(2) I + sin(2)/2 W
  MatSeries y(1);
  Mat2c w;
  w(0, 1) = 1.0;
  w(1, 0) = -4.0;
  y.set({0}, w);
  MatSeries ey = exp_series(y, 8);
  CHECK(ey.size() == 1);
  Mat2c e = ey.mean();
  double c2 = std::cos(2.0), s2 = std::sin(2.0) / 2.0;
  CHECK(std::abs(e(0, 0) - c2) < 1e-14);
  CHECK(std::abs(e(1, 1) - c2) < 1e-14);
  CHECK(std::abs(e(0, 1) - s2) < 1e-14);
  CHECK(std::abs(e(1, 0) + 4.0 * s2) < 1e-14);

  // hyperbolic branch: W^2 = +I gives cosh/sinh
  MatSeries yh(1);
  Mat2c wh;
  wh(0, 0) = 1.0;
  wh(1, 1) = -1.0;
  yh.set({0}, wh);
  Mat2c eh = exp_series(yh, 8).mean();
  CHECK(std::abs(eh(0, 0) - std::exp(1.0)) < 1e-14);
  CHECK(std::abs(eh(1, 1) - std::exp(-1.0)) < 1e-14);
  CHECK(std::abs(eh(0, 1)) < 1e-15);
}

TEST_CASE("exp of a series inverts against exp of its negation") {
  std::uint64_t s = 7;
  MatSeries y = rand_mat_series(s, 2, 6, 0.15);
  MatSeries ep = exp_series(y, 64);
  MatSeries em = exp_series(y * Cplx(-1.0), 64);
  MatSeries id = product(ep, em, 64, 0.0);
  Mat2c mean = id.mean();
  CHECK((mean - Mat2c::identity()).norm_inf() < 1e-12);
  id.set(ModeIndex(2, 0), mean - Mat2c::identity());
  CHECK(id.norm1() < 1e-12);

  // pointwise check too: exp evaluated at theta equals matrix exp there
  auto th = rand_theta(s, 2);
  Mat2c yt = y.eval_theta(th);
  Mat2c acc = Mat2c::identity(), term = Mat2c::identity();
  for (int n = 1; n <= 30; ++n) {
    term = term * yt * Cplx(1.0 / n);
    acc += term;
  }
  CHECK((ep.eval_theta(th) - acc).norm_inf() < 1e-13);
}

TEST_CASE("d_omega matches a finite difference of eval_x") {
  std::uint64_t s = 99;
  FrequencyVector omega = qtest::golden_freq();
  ScalarSeries a = rand_scalar_series(s, 2, 10);
  ScalarSeries da = a.d_omega(omega);
  double h = 1e-4;
  for (double x : {0.0, 0.8, 3.1}) {
    Cplx fd = (a.eval_x(omega, x + h) - a.eval_x(omega, x - h)) / (2.0 * h);
    Cplx ex = da.eval_x(omega, x);
    CHECK(std::abs(fd - ex) < 1e-5);
  }

  // single mode: derivative multiplies by i<k,omega>/2 exactly
  ScalarSeries m(2);
  m.set({1, -1}, Cplx(1, 0));
  double mu = 0.5 * (omega.omega[0] - omega.omega[1]);
  Cplx dc = m.d_omega(omega).at({1, -1});
  CHECK(std::abs(dc - Cplx(0, mu)) < 1e-15);
}

TEST_CASE("hermitize produces a real-valued series") {
  std::uint64_t s = 5;
  ScalarSeries a = rand_scalar_series(s, 2, 10);
  a.hermitize();
  a.for_each([&](const ModeIndex& k, const Cplx& c) {
    ModeIndex nk = {-k[0], -k[1]};
    CHECK(std::abs(a.at(nk) - std::conj(c)) < 1e-15);
  });
  for (int t = 0; t < 5; ++t) {
    auto th = rand_theta(s, 2);
    CHECK(std::abs(std::imag(a.eval_theta(th))) < 1e-13);
  }
}

TEST_CASE("entry_series extracts matrix components") {
  std::uint64_t s = 11;
  MatSeries m = rand_mat_series(s, 2, 6, 0.4);
  ScalarSeries e01 = entry_series(m, 0, 1);
  auto th = rand_theta(s, 2);
  CHECK(std::abs(e01.eval_theta(th) - m.eval_theta(th)(0, 1)) < 1e-13);
}
