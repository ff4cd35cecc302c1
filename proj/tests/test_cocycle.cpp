#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "qpt/cocycle.hpp"
#include "qpt/errors.hpp"

using namespace qpt;

namespace {
constexpr double kPi = 3.1415926535897932;
}

TEST_CASE("free cocycle matches the closed form") {
  auto V = qtest::zero_potential();
  // E = 2, T = 10: Phi = [[cos(wT), sin(wT)/w], [-w sin(wT), cos(wT)]], w = sqrt(2)
  auto st = integrate_cocycle(2.0, V, 10.0);
  CHECK(st.x == 10.0);
  CHECK(st.Phi[0] == doctest::Approx(-0.0049686621325937736).epsilon(1e-8));
  CHECK(st.Phi[1] == doctest::Approx(0.70709805274679272).epsilon(1e-8));
  CHECK(st.Phi[2] == doctest::Approx(-1.4141961054935854).epsilon(1e-8));
  CHECK(st.Phi[3] == doctest::Approx(-0.0049686621325937736).epsilon(1e-8));
  CHECK(st.det_err < 1e-8);
  // clockwise winding for E > 0
  CHECK(st.phase < 0.0);

  // hyperbolic side: E = -1 gives cosh/sinh growth
  auto hy = integrate_cocycle(-1.0, V, 5.0);
  CHECK(hy.Phi[0] == doctest::Approx(74.209948524787844).epsilon(1e-8));
  CHECK(hy.Phi[1] == doctest::Approx(74.203210577788759).epsilon(1e-8));
  CHECK(hy.Phi[2] == doctest::Approx(74.203210577788759).epsilon(1e-8));
  CHECK(hy.Phi[3] == doctest::Approx(74.209948524787844).epsilon(1e-8));
}

TEST_CASE("quasi-periodic cocycle matches a high-order reference solve") {
  auto V = qtest::two_cosine(0.3);
  auto st = integrate_cocycle(3.0, V, 20.0);
  CHECK(st.Phi[0] == doctest::Approx(-1.1482456582122811).epsilon(1e-7));
  CHECK(st.Phi[1] == doctest::Approx(-0.13085384974959255).epsilon(1e-7));
  CHECK(st.Phi[2] == doctest::Approx(0.12788916666127748).epsilon(1e-7));
  CHECK(st.Phi[3] == doctest::Approx(-0.85631955424238315).epsilon(1e-7));
  CHECK(st.det_err < 1e-8);
}

TEST_CASE("integrate_cocycle rejects bad inputs") {
  auto V = qtest::zero_potential();
  CHECK_THROWS_AS(integrate_cocycle(1.0, V, -1.0), ConfigError);
  IntegrateOptions bad;
  bad.x0 = {0.0, 0.0};
  CHECK_THROWS_AS(integrate_cocycle(1.0, V, 1.0, bad), ConfigError);
  IntegrateOptions hneg;
  hneg.h = 0.0;
  CHECK_THROWS_AS(integrate_cocycle(1.0, V, 1.0, hneg), ConfigError);
}

TEST_CASE("phase guard splits fast winding and reports hopeless steps") {
  auto V = qtest::zero_potential();
  IntegrateOptions opt;
  opt.h = 0.5;
  opt.det_budget = 10.0;  // disables the accuracy clamp so the guard is exercised
  opt.max_halvings = 0;
  CHECK_THROWS_AS(integrate_cocycle(100.0, V, 1.0, opt), StepTooLarge);

  // with halvings allowed the guard refines instead, until the determinant
  // tolerance catches the now-inaccurate step
  opt.max_halvings = 24;
  CHECK_THROWS_AS(integrate_cocycle(100.0, V, 1.0, opt), NumericError);

  // the default budget clamps h enough that both guards stay quiet
  auto st = integrate_cocycle(100.0, V, 100.0);
  CHECK(st.det_err < 1e-8);
}

TEST_CASE("rotation number reproduces sqrt(E) for the free cocycle") {
  auto V = qtest::zero_potential();
  for (double E : {0.5, 2.0, 7.0}) {
    auto r = rotation_number(E, V, 300.0);
    CHECK(r.rho == doctest::Approx(std::sqrt(E)).epsilon(5e-5));
    CHECK(r.err_est < 1e-4);
  }
  auto zero = rotation_number(0.0, V, 100.0);
  CHECK(zero.rho == doctest::Approx(0.0).epsilon(1e-12));
  auto hy = rotation_number(-1.0, V, 100.0);
  CHECK(hy.rho < 1e-3);
  CHECK_THROWS_AS(rotation_number(1.0, V, 100.0, {}, 200.0), ConfigError);
}

TEST_CASE("Lyapunov exponent is sqrt(-E) below the spectrum and ~0 inside") {
  auto V = qtest::zero_potential();
  CHECK(lyapunov_exponent(-4.0, V, 100.0) == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(lyapunov_exponent(-0.25, V, 200.0) == doctest::Approx(0.5).epsilon(2e-2));
  CHECK(lyapunov_exponent(4.0, V, 100.0) < 0.02);
}

TEST_CASE("phases of two tracked vectors never separate by pi") {
  auto V = qtest::two_cosine(0.3);
  std::vector<double> pa, pb;
  IntegrateOptions oa, ob;
  oa.x0 = {1.0, 0.0};
  ob.x0 = {0.0, 1.0};
  integrate_cocycle(5.0, V, 40.0, oa, [&](double, double p) { pa.push_back(p); });
  integrate_cocycle(5.0, V, 40.0, ob, [&](double, double p) { pb.push_back(p); });
  REQUIRE(pa.size() == pb.size());
  double worst = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, std::abs(pa[i] - pb[i]));
  CHECK(worst < kPi);
}

TEST_CASE("label_gaps matches plateaus against half-lattice frequencies") {
  auto freq = qtest::golden_freq();
  RotationCurve c;
  const int n = 20;
  for (int i = 0; i < n; ++i) c.E.push_back(i);
  c.rho = {0, 0, 0, 0, 0.5, 1.0, 2.0, 3.0, kPi, kPi, kPi, kPi, 3.5, 0.77, 0.77, 0.77, 0.77, 4.0,
           4.5, 5.0};
  c.rho[13] = c.rho[14] = c.rho[15] = c.rho[16] = 0.77;  // plateau off the lattice
  c.drho.assign(n, 0.2);
  for (int i : {0, 1, 2, 3, 8, 9, 10, 11, 13, 14, 15, 16}) c.drho[i] = 1e-3;
  c.lyapunov.assign(n, 0.0);
  c.rho_err.assign(n, 0.0);
  c.cls.assign(n, PointClass::uncertain);
  c.gap_label.assign(n, {});

  label_gaps(c, freq, 3, 1e-3, 0.04);
  REQUIRE(c.gaps.size() == 3);

  CHECK(c.gaps[0].labelled);
  CHECK(c.gaps[0].k == ModeIndex{0, 0});  // below the spectrum
  CHECK(c.gaps[1].labelled);
  CHECK(c.gaps[1].k == ModeIndex{1, 0});  // <(1,0), omega>/2 = pi
  CHECK(c.gaps[1].residual < 1e-9);
  CHECK_FALSE(c.gaps[2].labelled);
  CHECK(c.gaps[2].k.empty());

  CHECK(c.cls[9] == PointClass::gap);
  CHECK(c.gap_label[9] == ModeIndex{1, 0});
  CHECK(c.cls[14] == PointClass::uncertain);
  CHECK(c.gap_label[14].empty());

  CHECK_THROWS_AS(label_gaps(c, freq, 0, 1e-3, 0.04), ConfigError);
}

TEST_CASE("label_gaps reports near-degenerate candidates as ambiguous") {
  FrequencyVector freq;
  freq.omega = {qtest::kTwoPi, qtest::kTwoPi * 0.5000004};
  RotationCurve c;
  for (int i = 0; i < 6; ++i) {
    c.E.push_back(i);
    c.rho.push_back(kPi / 2);
    c.drho.push_back(1e-4);
    c.lyapunov.push_back(0.0);
    c.rho_err.push_back(0.0);
    c.cls.push_back(PointClass::uncertain);
    c.gap_label.push_back({});
  }
  // both <(0,1),.>/2 and <(1,-1),.>/2 sit ~1.3e-6 from pi/2
  label_gaps(c, freq, 1, 1e-3, 0.04);
  REQUIRE(c.gaps.size() == 1);
  CHECK(c.gaps[0].ambiguous);
  CHECK_FALSE(c.gaps[0].labelled);
  CHECK(c.cls[2] == PointClass::uncertain);
  CHECK(c.gap_label[2].empty());
}

TEST_CASE("rotation curve finds and labels the (1,0) gap of the two-cosine potential") {
  auto V = qtest::two_cosine(0.3);
  std::vector<double> Es;
  for (int i = 0; i < 24; ++i) Es.push_back(9.3 + 1.2 * i / 23.0);

  CurveOptions opt;
  opt.T = 200.0;
  opt.T_lyap = 100.0;
  auto c = rotation_curve(Es, V, opt);

  CHECK(c.monotone_violations == 0);
  CHECK(c.cls.front() == PointClass::spectrum);
  CHECK(c.cls.back() == PointClass::spectrum);

  const GapLabel* hit = nullptr;
  for (const auto& g : c.gaps)
    if (g.labelled) hit = &g;
  REQUIRE(hit != nullptr);
  CHECK(hit->k == ModeIndex{1, 0});
  CHECK(hit->rho_plateau == doctest::Approx(kPi).epsilon(1e-3));
  CHECK(c.cls[(hit->first + hit->last) / 2] == PointClass::gap);

  std::vector<double> dup = {1.0, 1.0};
  CHECK_THROWS_AS(rotation_curve(dup, V, opt), ConfigError);
  CHECK_THROWS_AS(rotation_curve({}, V, opt), ConfigError);
}
