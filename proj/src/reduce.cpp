#include "qpt/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qpt/errors.hpp"
#include "qpt/num.hpp"

namespace qpt {

namespace {

using Cplx = std::complex<double>;
using A4 = std::array<double, 4>;

Mat2c to_mat(const A4& a) {
  Mat2c m;
  for (int i = 0; i < 4; ++i) m.m[i] = a[i];
  return m;
}

A4 real_mul(const A4& a, const A4& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
          a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

// project to zero trace with the off-diagonal untouched; storing h and -h
// makes the invariant trace == 0 hold to the last bit
A4 traceless(const A4& a) {
  double h = 0.5 * (a[0] - a[3]);
  return {h, a[1], a[2], -h};
}

constexpr A4 kJ = {0.0, -1.0, 1.0, 0.0};  // rotation generator

// S J S^{-1}: the rotation generator seen in the frame of A
A4 frame_rotator(const EllipticFrame& fr) {
  return real_mul(fr.S, real_mul(kJ, fr.S_inv));
}

struct EigenBasis {
  Mat2c p, p_inv;
};

// complex diagonalizing basis built on the real frame: A = P diag(i ups, -i ups) P^{-1}
EigenBasis eigen_basis(const EllipticFrame& fr) {
  Mat2c q, q_inv;
  q(0, 0) = 1.0;
  q(0, 1) = 1.0;
  q(1, 0) = Cplx(0, -1);
  q(1, 1) = Cplx(0, 1);
  q_inv(0, 0) = 0.5;
  q_inv(0, 1) = Cplx(0, 0.5);
  q_inv(1, 0) = 0.5;
  q_inv(1, 1) = Cplx(0, -0.5);
  return {to_mat(fr.S) * q, q_inv * to_mat(fr.S_inv)};
}

// the two constant coefficients of S [cos(cx) I + sin(cx) J] S^{-1}:
// plus at e^{+icx}, minus at e^{-icx}
void rotation_coeffs(const EllipticFrame& fr, Mat2c& plus, Mat2c& minus) {
  Mat2c id = Mat2c::identity();
  Mat2c j = to_mat(kJ);
  Mat2c s = to_mat(fr.S), s_inv = to_mat(fr.S_inv);
  plus = s * ((id - Cplx(0, 1) * j) * Cplx(0.5)) * s_inv;
  minus = s * ((id + Cplx(0, 1) * j) * Cplx(0.5)) * s_inv;
}

std::string fmt_e(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

double KamSchedule::eps(int j) const {
  double e = eps0;
  for (int i = 0; i < j; ++i) e = std::pow(e, 1.0 + sigma);
  return e;
}

double KamSchedule::trunc_n(int j) const {
  return std::pow(4.0, j + 1) * sigma * std::abs(std::log(eps(j)));
}

void KamSchedule::validate() const {
  if (!(eps0 > 0.0) || eps0 >= 1.0) throw ConfigError("kam: eps0 must lie in (0,1)");
  if (!(sigma > 0.0)) throw ConfigError("kam: sigma must be positive");
  if (max_steps < 1) throw ConfigError("kam: max_steps must be at least 1");
  if (!(divisor_floor > 0.0)) throw ConfigError("kam: divisor_floor must be positive");
  if (!(target > 0.0)) throw ConfigError("kam: target must be positive");
  if (support_cap < 4) throw ConfigError("kam: support_cap must be at least 4");
  if (!(prune_eps >= 0.0)) throw ConfigError("kam: prune_eps must be non-negative");
  if (n_theta < 1) throw ConfigError("kam: n_theta must be at least 1");
}

const char* to_string(ReduceStatus s) {
  switch (s) {
    case ReduceStatus::converged: return "converged";
    case ReduceStatus::resonant_skipped: return "resonant_skipped";
    default: return "diverged";
  }
}

std::array<double, 4> schrodinger_generator(double E) { return {0.0, 1.0, -E, 0.0}; }

MatSeries potential_to_series(const QuasiPeriodicPotential& v) {
  const int d = v.freq().dim();
  MatSeries f(d);
  for (const auto& [m, vm] : v.modes()) {
    ModeIndex k(d);
    for (int i = 0; i < d; ++i) k[i] = 2 * m[i];
    Mat2c c;
    c(1, 0) = vm;
    f.add(k, c);
  }
  return f;
}

EllipticFrame decompose_elliptic(const std::array<double, 4>& a) {
  // traceless input assumed; eigenvalues are +-sqrt(disc)
  double disc = a[0] * a[0] + a[1] * a[2];
  if (!(disc < 0.0))
    throw HyperbolicInput("constant part is not elliptic (a^2 + bc = " + fmt_e(disc) + ")");
  EllipticFrame fr;
  fr.alpha = std::sqrt(-disc);

  // s2 = A s1 / alpha; pick the better-conditioned column to start from
  double s1x, s1y, s2x, s2y;
  if (std::hypot(a[0], a[2]) >= std::hypot(a[1], a[3])) {
    s1x = 1.0; s1y = 0.0;
    s2x = a[0] / fr.alpha;
    s2y = a[2] / fr.alpha;
  } else {
    s1x = 0.0; s1y = 1.0;
    s2x = a[1] / fr.alpha;
    s2y = a[3] / fr.alpha;
  }
  fr.upsilon = fr.alpha;
  if (s1x * s2y - s1y * s2x < 0.0) {
    s2x = -s2x;
    s2y = -s2y;
    fr.upsilon = -fr.alpha;
  }
  double det = s1x * s2y - s1y * s2x;
  fr.S = {s1x, s2x, s1y, s2y};
  fr.S_inv = {s2y / det, -s2x / det, -s1y / det, s1x / det};
  return fr;
}

HomologicalResult homological_solve(const std::array<double, 4>& a, const MatSeries& f,
                                    const FrequencyVector& freq, int n_trunc,
                                    double divisor_floor) {
  if (f.dim() != freq.dim()) throw ConfigError("homological solve: dimension mismatch");
  if (n_trunc < 0) throw ConfigError("homological solve: negative truncation radius");
  if (!(divisor_floor > 0.0))
    throw ConfigError("homological solve: divisor floor must be positive");
  EllipticFrame fr = decompose_elliptic(a);
  EigenBasis eb = eigen_basis(fr);

  HomologicalResult out(f.dim());
  f.for_each([&](const ModeIndex& k, const Mat2c& c) {
    int r = series_detail::l1(k);
    if (r == 0) return;        // the mean is the caller's to absorb
    if (r > n_trunc) return;   // outside this sweep's window, stays in the remainder
    double mu = 0.5 * freq.dot(k);
    double d0 = mu, dm = mu - 2.0 * fr.upsilon, dp = mu + 2.0 * fr.upsilon;
    double worst = std::min({std::abs(d0), std::abs(dm), std::abs(dp)});
    if (worst < divisor_floor) {
      out.removed.push_back(k);
      return;
    }
    Mat2c g = eb.p_inv * c * eb.p;
    Mat2c yg;
    yg(0, 0) = g(0, 0) / Cplx(0, d0);
    yg(1, 1) = g(1, 1) / Cplx(0, d0);
    yg(0, 1) = g(0, 1) / Cplx(0, dm);
    yg(1, 0) = g(1, 0) / Cplx(0, dp);
    out.Y.set(k, eb.p * yg * eb.p_inv);
  });
  // the equation maps a real F to a real Y; kill the rounding-level asymmetry
  out.Y.hermitize();
  return out;
}

KamStepOutcome kam_step(const std::array<double, 4>& a_in, const MatSeries& f_in,
                        const FrequencyVector& freq, const KamSchedule& sched, int step) {
  sched.validate();
  if (f_in.dim() != freq.dim()) throw ConfigError("kam step: dimension mismatch");
  const int d = f_in.dim();
  const int cap = sched.support_cap;
  const ModeIndex zero(d, 0);

  KamStepOutcome out(d);
  A4 a = traceless(a_in);
  MatSeries f = f_in;
  const double fnorm = f.norm1();
  EllipticFrame fr = decompose_elliptic(a);

  // Resonance scan: a mode whose half-frequency sits near twice the rotation
  // rate would blow up the solve, so shift the rotation away by conjugating
  // with a torus rotation carried by half the resonant index.
  double thr = std::max(4.0 * sched.divisor_floor, std::min(0.2, 2.0 * std::sqrt(fnorm)));
  ModeIndex k_res;
  double best = thr;
  f.for_each([&](const ModeIndex& k, const Mat2c&) {
    double mu = 0.5 * freq.dot(k);
    if (mu <= 0.0) return;
    double gap = std::abs(mu - 2.0 * fr.alpha);
    if (gap < best) {
      best = gap;
      k_res = k;
    }
  });
  MatSeries w(d);
  const bool renorm = !k_res.empty();
  if (renorm) {
    ModeIndex k0(d);
    for (int i = 0; i < d; ++i) {
      if (k_res[i] % 2 != 0)
        throw NumericError("kam step: resonant mode is off the even sublattice");
      k0[i] = k_res[i] / 2;
    }
    int sgn = fr.upsilon > 0.0 ? 1 : -1;
    double c = sgn * 0.5 * freq.dot(k0);

    Mat2c plus, minus;
    rotation_coeffs(fr, plus, minus);
    ModeIndex kp(d), km(d);
    for (int i = 0; i < d; ++i) {
      kp[i] = sgn * k0[i];
      km[i] = -sgn * k0[i];
    }
    w.set(kp, plus);
    w.set(km, minus);
    MatSeries w_inv(d);
    w_inv.set(kp, minus);
    w_inv.set(km, plus);

    f = product(w_inv, product(f, w, cap, sched.prune_eps), cap, sched.prune_eps);
    A4 sjs = frame_rotator(fr);
    for (int i = 0; i < 4; ++i) a[i] -= c * sjs[i];
    a = traceless(a);

    out.renormalized = true;
    out.resonance = {step, k0, sgn};
  }

  // absorb the mean into the constant part
  Mat2c mean = f.mean();
  a[0] += std::real(mean(0, 0));
  a[1] += std::real(mean(0, 1));
  a[2] += std::real(mean(1, 0));
  a[3] += std::real(mean(1, 1));
  a = traceless(a);
  f.set(zero, Mat2c{});
  f.prune(sched.prune_eps);
  try {
    fr = decompose_elliptic(a);  // inside a gap the shifted constant locks hyperbolic
  } catch (const HyperbolicInput& e) {
    if (renorm) throw ResonantLocking(e.what(), out.resonance);
    throw;
  }

  int n_eff = std::max(int(std::ceil(sched.trunc_n(step))), f.support_radius());
  n_eff = std::min(n_eff, cap);
  HomologicalResult hr = homological_solve(a, f, freq, n_eff, sched.divisor_floor);

  // conjugate exactly in series arithmetic; the linearization error stays in f_next
  MatSeries ep = exp_series(hr.Y, cap, sched.prune_eps);
  MatSeries em = exp_series(hr.Y * Cplx(-1.0), cap, sched.prune_eps);
  MatSeries gen(d);
  gen.set(zero, to_mat(a));
  gen += f;
  MatSeries m = product(em, product(gen, ep, cap, sched.prune_eps), cap, sched.prune_eps);
  m -= product(em, ep.d_omega(freq), cap, sched.prune_eps);
  m.hermitize();

  Mat2c m0 = m.mean();
  out.a_next = traceless({std::real(m0(0, 0)), std::real(m0(0, 1)),
                          std::real(m0(1, 0)), std::real(m0(1, 1))});
  m.set(zero, Mat2c{});
  m.prune(sched.prune_eps);
  out.f_next = m;

  double fn1 = m.norm1();
  if (fn1 > 0.9 * fnorm && fn1 > sched.target)
    throw NoContraction("kam step " + std::to_string(step) + ": remainder went from " +
                        fmt_e(fnorm) + " to " + fmt_e(fn1));

  out.z = renorm ? product(w, ep, cap, sched.prune_eps) : ep;
  return out;
}

ConjugationResult reduce_cocycle(double E, const QuasiPeriodicPotential& v,
                                 const KamSchedule& sched) {
  sched.validate();
  v.validate();
  if (!std::isfinite(E)) throw ConfigError("reduce: E must be finite");
  const FrequencyVector& freq = v.freq();
  const int d = freq.dim();
  const ModeIndex zero(d, 0);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  ConjugationResult res;
  res.E = E;
  res.Y = MatSeries(d);
  res.alpha = nan;
  res.xi = nan;

  A4 a = schrodinger_generator(E);
  MatSeries f = potential_to_series(v);
  res.f_norms.push_back(f.norm1());

  MatSeries y_run(d);
  y_run.set(zero, Mat2c::identity());

  bool failed = false;
  for (int j = 0; j < sched.max_steps && f.norm1() >= sched.target; ++j) {
    try {
      KamStepOutcome st = kam_step(a, f, freq, sched, j);
      if (st.renormalized) res.resonances.push_back(st.resonance);
      y_run = product(y_run, st.z, sched.support_cap, sched.prune_eps);
      a = st.a_next;
      f = st.f_next;
      res.f_norms.push_back(f.norm1());
      res.steps = j + 1;
    } catch (const ResonantLocking& e) {
      res.resonances.push_back(e.record);
      res.status = ReduceStatus::resonant_skipped;
      res.message = e.what();
      failed = true;
      break;
    } catch (const HyperbolicInput& e) {
      res.status =
          res.resonances.empty() ? ReduceStatus::diverged : ReduceStatus::resonant_skipped;
      res.message = e.what();
      failed = true;
      break;
    } catch (const NoContraction& e) {
      res.status = ReduceStatus::diverged;
      res.message = e.what();
      failed = true;
      break;
    }
  }

  if (!failed && f.norm1() < sched.target) {
    try {
      EllipticFrame fr = decompose_elliptic(a);

      // fold the torus shifts back so B carries the full rotation rate
      double shift = 0.0;
      double mu_sum = 0.0;
      ModeIndex kw(d, 0);
      for (const ResonanceRecord& rec : res.resonances) {
        double mu = 0.5 * freq.dot(rec.k);
        shift += rec.sign * mu;
        mu_sum += mu;
        for (int i = 0; i < d; ++i) kw[i] += rec.sign * rec.k[i];
      }
      double ups_total = fr.upsilon + shift;
      res.alpha = std::abs(ups_total);
      res.xi = res.alpha - mu_sum;

      A4 sjs = frame_rotator(fr);
      A4 b;
      for (int i = 0; i < 4; ++i) b[i] = ups_total * sjs[i];
      res.B = traceless(b);

      if (series_detail::l1(kw) > 0) {
        // W_back(x) = S [cos I + sin J](-shift * x) S^{-1}, modes at -+kw
        Mat2c plus, minus;
        rotation_coeffs(fr, plus, minus);
        ModeIndex kn(d);
        for (int i = 0; i < d; ++i) kn[i] = -kw[i];
        MatSeries w_back(d);
        w_back.set(kn, plus);
        w_back.set(kw, minus);
        y_run = product(y_run, w_back, sched.support_cap, sched.prune_eps);
      }
      y_run.hermitize();
      y_run.prune(sched.prune_eps);
      res.Y = y_run;
      res.status = ReduceStatus::converged;
      res.residual = conjugation_residual(res.Y, res.B, E, v, sched.n_theta, sched.theta_seed);
      return res;
    } catch (const HyperbolicInput& e) {
      res.status =
          res.resonances.empty() ? ReduceStatus::diverged : ReduceStatus::resonant_skipped;
      res.message = e.what();
    }
  } else if (!failed) {
    res.status = ReduceStatus::diverged;
    res.message = "no convergence in " + std::to_string(sched.max_steps) +
                  " sweeps, remainder " + fmt_e(f.norm1());
  }

  // not converged: report the state reached and an honest residual against it
  res.Y = y_run;
  res.B = traceless(a);
  res.alpha = nan;
  res.xi = nan;
  res.residual = conjugation_residual(y_run, res.B, E, v, sched.n_theta, sched.theta_seed);
  return res;
}

double conjugation_residual(const MatSeries& y, const std::array<double, 4>& b, double E,
                            const QuasiPeriodicPotential& v, int n_theta,
                            std::uint64_t seed) {
  if (n_theta < 1) throw ConfigError("residual check: n_theta must be at least 1");
  const FrequencyVector& freq = v.freq();
  if (y.dim() != freq.dim()) throw ConfigError("residual check: dimension mismatch");
  const int d = y.dim();

  Mat2c bm = to_mat(b);
  Mat2c a0 = to_mat(schrodinger_generator(E));
  MatSeries dy = y.d_omega(freq);

  double sup = 0.0;
  for (int i = 0; i < n_theta; ++i) {
    std::vector<double> th = quasi_random_point(d, std::size_t(i), seed);
    for (double& t : th) t *= 4.0 * M_PI;  // the half-angle torus
    Mat2c yt = y.eval_theta(th);
    Mat2c gen = a0;
    gen(1, 0) += v.eval_theta(th);
    Mat2c r = dy.eval_theta(th) - gen * yt + yt * bm;
    sup = std::max(sup, r.norm_inf());
  }
  return sup;
}

BlochCoefficients bloch_from_reduction(const ConjugationResult& r, double rho, bool smoothing,
                                       double xi_threshold) {
  if (r.status != ReduceStatus::converged)
    throw NotConverged("bloch coefficients need a converged reduction, E=" + fmt_e(r.E) +
                       " ended " + std::string(to_string(r.status)));
  if (!std::isfinite(rho)) throw ConfigError("bloch: rho must be finite");

  BlochCoefficients out(r.Y.dim());
  out.E = r.E;
  out.rho = rho;
  ScalarSeries y11 = entry_series(r.Y, 0, 0);
  ScalarSeries y12 = entry_series(r.Y, 0, 1);
  out.beta0 = y11 * Cplx(r.B[1]) - y12 * Cplx(r.B[0]);
  out.beta1 = y12;
  if (smoothing && std::abs(r.xi) < xi_threshold) {
    Cplx s = std::pow(r.xi, 8);
    out.beta0 *= s;
    out.beta1 *= s;
    out.smoothing_applied = true;
  }
  return out;
}

double bloch_residual_sup(const BlochCoefficients& b, const QuasiPeriodicPotential& v,
                          double x_max, int n_samples) {
  if (n_samples < 2) throw ConfigError("bloch residual: need at least 2 samples");
  if (!(x_max > 0.0)) throw ConfigError("bloch residual: x_max must be positive");
  const FrequencyVector& freq = v.freq();
  if (b.beta0.dim() != freq.dim()) throw ConfigError("bloch residual: dimension mismatch");
  const int d = freq.dim();

  // f(x) = beta0 + i rho beta1; psi = e^{i rho x} f. Substituting into
  // -psi'' + V psi - E psi shifts every V mode by its full-lattice index.
  ScalarSeries f = b.beta0 + Cplx(0.0, b.rho) * b.beta1;
  ScalarSeries r(d);
  f.for_each([&](const ModeIndex& k, const Cplx& c) {
    double mu = 0.5 * freq.dot(k);
    double w = b.rho + mu;
    r.add(k, (w * w - b.E) * c);
  });
  for (const auto& [m, vm] : v.modes()) {
    f.for_each([&](const ModeIndex& k, const Cplx& c) {
      ModeIndex kk(d);
      for (int i = 0; i < d; ++i) kk[i] = k[i] + 2 * m[i];
      r.add(kk, vm * c);
    });
  }

  double sup = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    double x = x_max * double(i) / double(n_samples - 1);
    sup = std::max(sup, std::abs(r.eval_x(freq, x)));
  }
  return sup;
}

}  // namespace qpt
