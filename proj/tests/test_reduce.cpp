#include <cmath>
#include <complex>

#include "doctest.h"
#include "helpers.hpp"
#include "qpt/cocycle.hpp"
#include "qpt/num.hpp"
#include "qpt/reduce.hpp"

using namespace qpt;
using Cplx = std::complex<double>;

namespace {

Mat2c to_mat(const std::array<double, 4>& a) {
  Mat2c m;
  for (int i = 0; i < 4; ++i) m.m[i] = a[i];
  return m;
}

// commutator form of the mode equation the solver must satisfy
Mat2c mode_defect(const std::array<double, 4>& a, const FrequencyVector& freq,
                  const ModeIndex& k, const Mat2c& yk, const Mat2c& fk) {
  Mat2c am = to_mat(a);
  double mu = 0.5 * freq.dot(k);
  return Cplx(0, mu) * yk - (am * yk - yk * am) - fk;
}

std::vector<double> theta_sample(int d, int i, std::uint64_t seed) {
  std::vector<double> th = quasi_random_point(d, std::size_t(i), seed);
  for (double& t : th) t *= 4.0 * M_PI;
  return th;
}

}  // namespace

TEST_CASE("kam schedule arithmetic and validation") {
  KamSchedule s;
  s.eps0 = 1e-3;
  s.sigma = 0.02;
  CHECK(s.eps(0) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(s.eps(1) == doctest::Approx(std::pow(1e-3, 1.02)).epsilon(1e-14));
  CHECK(s.eps(2) == doctest::Approx(std::pow(1e-3, 1.02 * 1.02)).epsilon(1e-14));
  CHECK(s.trunc_n(0) == doctest::Approx(4.0 * 0.02 * std::abs(std::log(1e-3))).epsilon(1e-13));
  CHECK(s.trunc_n(1) / s.trunc_n(0) > 3.9);  // 4x growth, slightly faster via eps_j

  KamSchedule bad = s;
  bad.eps0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.divisor_floor = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.max_steps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("elliptic frame reconstructs the matrix with positive orientation") {
  for (double E : {0.5, 2.0, 9.0}) {
    auto a = schrodinger_generator(E);
    EllipticFrame fr = decompose_elliptic(a);
    CHECK(fr.alpha == doctest::Approx(std::sqrt(E)).epsilon(1e-14));
    // the free cocycle rotates clockwise
    CHECK(fr.upsilon == doctest::Approx(-std::sqrt(E)).epsilon(1e-14));
    double det = fr.S[0] * fr.S[3] - fr.S[1] * fr.S[2];
    CHECK(det > 0.0);

    // A == upsilon * S J S^{-1}
    Mat2c s = to_mat(fr.S), si = to_mat(fr.S_inv);
    Mat2c j;
    j(0, 1) = -1.0;
    j(1, 0) = 1.0;
    Mat2c rebuilt = Cplx(fr.upsilon) * (s * j * si);
    CHECK((rebuilt - to_mat(a)).norm_inf() < 1e-13 * (1.0 + E));
    Mat2c id = s * si;
    CHECK((id - Mat2c::identity()).norm_inf() < 1e-14);
  }

  // a generic traceless elliptic matrix, well away from the canonical form
  std::array<double, 4> g = {0.7, 2.0, -1.5, -0.7};  // disc = 0.49 - 3 < 0
  EllipticFrame fr = decompose_elliptic(g);
  CHECK(fr.alpha == doctest::Approx(std::sqrt(3.0 - 0.49)).epsilon(1e-14));
  Mat2c s = to_mat(fr.S), si = to_mat(fr.S_inv);
  Mat2c j;
  j(0, 1) = -1.0;
  j(1, 0) = 1.0;
  CHECK((Cplx(fr.upsilon) * (s * j * si) - to_mat(g)).norm_inf() < 1e-13);

  CHECK_THROWS_AS(decompose_elliptic({1, 0, 0, -1}), HyperbolicInput);
  CHECK_THROWS_AS(decompose_elliptic(schrodinger_generator(-1.0)), HyperbolicInput);
  CHECK_THROWS_AS(decompose_elliptic({0, 1, 0, 0}), HyperbolicInput);  // parabolic
}

TEST_CASE("homological solve satisfies the mode equation exactly") {
  FrequencyVector freq = qtest::golden_freq();
  auto a = schrodinger_generator(4.0);

  MatSeries f(2);
  Mat2c lower;
  lower(1, 0) = 3e-4;
  f.set({2, 0}, lower);
  f.set({-2, 0}, lower);
  f.set({0, 2}, lower * Cplx(0.5, 0.2));
  f.set({0, -2}, lower * Cplx(0.5, -0.2));

  HomologicalResult hr = homological_solve(a, f, freq, 8, 1e-6);
  CHECK(hr.removed.empty());
  CHECK(hr.Y.size() == 4);
  f.for_each([&](const ModeIndex& k, const Mat2c& fk) {
    CHECK(mode_defect(a, freq, k, hr.Y.at(k), fk).norm_inf() < 1e-12);
  });
  // reality: Y_{-k} = conj(Y_k)
  CHECK((hr.Y.at({-2, 0}) - hr.Y.at({2, 0}).conj()).norm_inf() < 1e-15);

  // a zero mode is the caller's business and must be ignored
  MatSeries fz(2);
  fz.set({0, 0}, lower);
  CHECK(homological_solve(a, fz, freq, 8, 1e-6).Y.empty());

  // truncation window: modes beyond n_trunc stay unsolved
  HomologicalResult narrow = homological_solve(a, f, freq, 1, 1e-6);
  CHECK(narrow.Y.empty());

  CHECK_THROWS_AS(homological_solve(a, f, freq, -1, 1e-6), ConfigError);
  CHECK_THROWS_AS(homological_solve(a, f, freq, 8, 0.0), ConfigError);
}

TEST_CASE("homological solve diverts resonant modes symmetrically") {
  FrequencyVector freq = qtest::golden_freq();
  // alpha = pi makes the (2,0) mode exactly resonant: <k,omega>/2 = 2 pi = 2 alpha
  auto a = schrodinger_generator(M_PI * M_PI);
  MatSeries f(2);
  Mat2c lower;
  lower(1, 0) = 1e-3;
  f.set({2, 0}, lower);
  f.set({-2, 0}, lower);
  f.set({0, 2}, lower);
  f.set({0, -2}, lower);

  HomologicalResult hr = homological_solve(a, f, freq, 8, 1e-6);
  CHECK(hr.removed.size() == 2);
  for (const ModeIndex& k : hr.removed) CHECK(std::abs(k[0]) == 2);
  CHECK(hr.Y.size() == 2);  // the (0,+-2) pair still solves
  CHECK(mode_defect(a, freq, {0, 2}, hr.Y.at({0, 2}), lower).norm_inf() < 1e-12);
}

TEST_CASE("kam step contracts quadratically off resonance") {
  QuasiPeriodicPotential v = qtest::two_cosine(1e-3);
  FrequencyVector freq = v.freq();
  auto a = schrodinger_generator(2.0);
  MatSeries f = potential_to_series(v);
  double f0 = f.norm1();
  CHECK(f0 == doctest::Approx(2e-3).epsilon(1e-12));

  KamSchedule sched;
  KamStepOutcome st = kam_step(a, f, freq, sched, 0);
  CHECK_FALSE(st.renormalized);
  CHECK(st.a_next[0] + st.a_next[3] == 0.0);  // trace dead exactly
  double f1 = st.f_next.norm1();
  CHECK(f1 < 1e-6);
  CHECK(std::log(f1) / std::log(f0) > 1.3);

  // z is unimodular up to the scheme's own error: det(e^Y) = 1
  for (int i = 0; i < 4; ++i) {
    auto th = theta_sample(2, i, 11);
    CHECK(std::abs(st.z.eval_theta(th).det() - 1.0) < 1e-10);
  }
}

TEST_CASE("reduce with no potential is exact") {
  QuasiPeriodicPotential v = qtest::zero_potential();
  ConjugationResult r = reduce_cocycle(2.0, v);
  CHECK(r.status == ReduceStatus::converged);
  CHECK(r.steps == 0);
  CHECK(r.resonances.empty());
  CHECK(r.alpha == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(r.xi == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(r.residual < 1e-13);
  CHECK(r.B[0] + r.B[3] == 0.0);
  CHECK((to_mat(r.B) - to_mat(schrodinger_generator(2.0))).norm_inf() < 1e-13);
  CHECK(r.Y.size() == 1);
  CHECK((r.Y.mean() - Mat2c::identity()).norm_inf() < 1e-14);

  // below the spectrum the constant part is hyperbolic; out of scope, reported
  ConjugationResult neg = reduce_cocycle(-1.0, v);
  CHECK(neg.status == ReduceStatus::diverged);
  CHECK(neg.resonances.empty());

  CHECK_THROWS_AS(reduce_cocycle(std::nan(""), v), ConfigError);
}

TEST_CASE("reduce converges fast on a nonresonant spectrum energy") {
  QuasiPeriodicPotential v = qtest::two_cosine(1e-3);
  ConjugationResult r = reduce_cocycle(2.0, v);
  REQUIRE(r.status == ReduceStatus::converged);
  CHECK(r.steps <= 3);
  CHECK(r.resonances.empty());
  CHECK(r.residual < 1e-8);

  // contraction audit on the recorded norms
  REQUIRE(r.f_norms.size() >= 2);
  for (std::size_t i = 0; i + 1 < r.f_norms.size(); ++i) {
    if (r.f_norms[i + 1] <= 0.0) break;
    CHECK(std::log(r.f_norms[i + 1]) / std::log(r.f_norms[i]) > 1.3);
  }

  // stored residual is the from-scratch measurement, bit for bit
  KamSchedule sched;
  CHECK(r.residual ==
        conjugation_residual(r.Y, r.B, 2.0, v, sched.n_theta, sched.theta_seed));

  // B's eigenvalue pair carries the rotation number
  RotationEstimate rot = rotation_number(2.0, v, 300.0);
  CHECK(std::abs(r.alpha - rot.rho) < 1e-3);

  // eigenvector identity for the Bloch construction
  Cplx v1 = r.B[1], v2 = Cplx(0, r.alpha) - r.B[0];
  Cplx e1 = r.B[0] * v1 + r.B[1] * v2 - Cplx(0, r.alpha) * v1;
  Cplx e2 = r.B[2] * v1 + r.B[3] * v2 - Cplx(0, r.alpha) * v2;
  CHECK(std::abs(e1) < 1e-12);
  CHECK(std::abs(e2) < 1e-12);

  // the conjugation stays invertible on the verification torus
  for (int i = 0; i < 16; ++i) {
    auto th = theta_sample(2, i, 3);
    CHECK(std::abs(r.Y.eval_theta(th).det()) > 0.5);
  }

  // a sharper-than-spec perturbation of B must show up in the residual
  auto b_off = r.B;
  b_off[1] += 1e-3;
  double bumped = conjugation_residual(r.Y, b_off, 2.0, v, 32, sched.theta_seed);
  CHECK(bumped > 1e-4);
}

TEST_CASE("reduce renormalizes through a near-resonant energy") {
  QuasiPeriodicPotential v = qtest::two_cosine(1e-3);
  double alpha_target = M_PI + 0.01;
  double E = alpha_target * alpha_target;
  ConjugationResult r = reduce_cocycle(E, v);
  REQUIRE(r.status == ReduceStatus::converged);
  REQUIRE(r.resonances.size() == 1);
  CHECK(r.resonances[0].k == ModeIndex{1, 0});
  CHECK(r.alpha == doctest::Approx(alpha_target).epsilon(2e-3));
  CHECK(r.xi == doctest::Approx(0.01).epsilon(0.3));
  CHECK(r.xi == doctest::Approx(r.alpha - M_PI).epsilon(1e-12));
  CHECK(r.residual < 1e-8);
}

TEST_CASE("reduce reports gap energies as resonant, not diverged") {
  QuasiPeriodicPotential v = qtest::two_cosine(1e-3);
  // dead center of the rho = pi gap: renormalization lands on an exactly
  // parabolic constant part
  ConjugationResult r = reduce_cocycle(M_PI * M_PI, v);
  CHECK(r.status == ReduceStatus::resonant_skipped);
  REQUIRE(r.resonances.size() == 1);
  CHECK(r.resonances[0].k == ModeIndex{1, 0});
  CHECK(std::isnan(r.alpha));

  // larger coupling opens a wide gap around it
  QuasiPeriodicPotential w = qtest::two_cosine(0.3);
  ConjugationResult rw = reduce_cocycle(9.87, w);
  CHECK(rw.status == ReduceStatus::resonant_skipped);
  REQUIRE(rw.resonances.size() >= 1);
  CHECK(rw.resonances[0].k == ModeIndex{1, 0});
}

TEST_CASE("bloch coefficients solve the eigenvalue problem") {
  QuasiPeriodicPotential v = qtest::two_cosine(1e-3);
  ConjugationResult r = reduce_cocycle(2.0, v);
  REQUIRE(r.status == ReduceStatus::converged);

  BlochCoefficients b = bloch_from_reduction(r, r.alpha);
  CHECK_FALSE(b.smoothing_applied);
  // near the free case the first coefficient pins to 1 and the second to 0
  for (int i = 0; i < 16; ++i) {
    auto th = theta_sample(2, i, 17);
    CHECK(std::abs(b.beta0.eval_theta(th) - 1.0) < 0.1);
    CHECK(std::abs(b.beta1.eval_theta(th)) < 0.1);
  }
  CHECK(bloch_residual_sup(b, v, 100.0, 2001) < 1e-6);

  // the free case is exact
  QuasiPeriodicPotential v0 = qtest::zero_potential();
  ConjugationResult r0 = reduce_cocycle(3.0, v0);
  BlochCoefficients b0 = bloch_from_reduction(r0, r0.alpha);
  CHECK(bloch_residual_sup(b0, v0, 50.0, 501) < 1e-11);

  // refuse to build from a skipped reduction
  ConjugationResult gap = reduce_cocycle(M_PI * M_PI, v);
  CHECK_THROWS_AS(bloch_from_reduction(gap, M_PI), NotConverged);

  // smoothing crushes coefficients near a resonance
  double E_near = (M_PI + 0.01) * (M_PI + 0.01);
  ConjugationResult rn = reduce_cocycle(E_near, v);
  REQUIRE(rn.status == ReduceStatus::converged);
  BlochCoefficients bs = bloch_from_reduction(rn, rn.alpha, true, 0.1);
  CHECK(bs.smoothing_applied);
  CHECK(bs.beta0.norm1() < 1e-12);
  BlochCoefficients braw = bloch_from_reduction(rn, rn.alpha, false);
  CHECK_FALSE(braw.smoothing_applied);
  CHECK(braw.beta0.norm1() > 0.5);
}
