#include "qpt/cocycle.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>

#include "qpt/errors.hpp"
#include "qpt/half_lattice.hpp"
#include "qpt/parallel.hpp"

namespace qpt {

namespace {

// one RK4 step of Y' = [[0,1],[m(x),0]] Y, row-major Y, m sampled at
// x, x+h/2, x+h
void rk4_mat(double m0, double mh, double m1, double h, double* Y) {
  double k1[4], k2[4], k3[4], k4[4], t[4];
  k1[0] = Y[2];
  k1[1] = Y[3];
  k1[2] = m0 * Y[0];
  k1[3] = m0 * Y[1];
  for (int j = 0; j < 4; ++j) t[j] = Y[j] + 0.5 * h * k1[j];
  k2[0] = t[2];
  k2[1] = t[3];
  k2[2] = mh * t[0];
  k2[3] = mh * t[1];
  for (int j = 0; j < 4; ++j) t[j] = Y[j] + 0.5 * h * k2[j];
  k3[0] = t[2];
  k3[1] = t[3];
  k3[2] = mh * t[0];
  k3[3] = mh * t[1];
  for (int j = 0; j < 4; ++j) t[j] = Y[j] + h * k3[j];
  k4[0] = t[2];
  k4[1] = t[3];
  k4[2] = m1 * t[0];
  k4[3] = m1 * t[1];
  for (int j = 0; j < 4; ++j) Y[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
}

// Advances Y across [x, x+h] and returns the phase increment of Y*x0.
// Splits the step while the increment reaches pi/2, so winding cannot be
// lost between samples.
double step_guarded(const QuasiPeriodicPotential& V, double E, const std::array<double, 2>& x0,
                    double* Y, double x, double h, int depth, int max_depth) {
  double save[4] = {Y[0], Y[1], Y[2], Y[3]};
  double ax = Y[0] * x0[0] + Y[1] * x0[1];
  double ay = Y[2] * x0[0] + Y[3] * x0[1];
  double m0 = V.eval(x) - E;
  double mh = V.eval(x + 0.5 * h) - E;
  double m1 = V.eval(x + h) - E;
  rk4_mat(m0, mh, m1, h, Y);
  double bx = Y[0] * x0[0] + Y[1] * x0[1];
  double by = Y[2] * x0[0] + Y[3] * x0[1];
  double dphi = std::atan2(ax * by - ay * bx, ax * bx + ay * by);
  if (std::abs(dphi) < 0.5 * std::numbers::pi) return dphi;
  if (depth >= max_depth)
    throw StepTooLarge("phase advances >= pi/2 within one step at x = " + std::to_string(x) +
                       ", h = " + std::to_string(h) + "; refine the base step");
  std::copy(save, save + 4, Y);
  double a = step_guarded(V, E, x0, Y, x, 0.5 * h, depth + 1, max_depth);
  double b = step_guarded(V, E, x0, Y, x + 0.5 * h, 0.5 * h, depth + 1, max_depth);
  return a + b;
}

// h small enough that the accumulated determinant drift (~ T h^5 m^3 / 72
// for RK4 on this system) stays within budget
double clamp_step(double h, double E, const QuasiPeriodicPotential& V, double T, double budget) {
  double m = std::max(1.0, std::abs(E) + V.analytic_norm());
  double cap = std::pow(72.0 * budget / (std::max(T, 1e-12) * m * m * m), 0.2);
  return std::min(h, cap);
}

struct SlopeAcc {
  double t0 = 0;
  double n = 0, st = 0, sp = 0, stt = 0, stp = 0;
  void add(double t, double p) {
    double u = t - t0;
    n += 1;
    st += u;
    sp += p;
    stt += u * u;
    stp += u * p;
  }
  double slope() const {
    double den = n * stt - st * st;
    return (n * stp - st * sp) / den;
  }
};

}  // namespace

CocycleState integrate_cocycle(double E, const QuasiPeriodicPotential& V, double T,
                               const IntegrateOptions& opt, const PhaseObserver& observer) {
  if (!(T >= 0) || !std::isfinite(T)) throw ConfigError("integration length must be >= 0");
  if (!(opt.h > 0)) throw ConfigError("step size must be positive");
  if (opt.x0[0] == 0 && opt.x0[1] == 0) throw ConfigError("tracked initial vector is zero");
  CocycleState st;
  if (T == 0) return st;

  double h = clamp_step(opt.h, E, V, T, opt.det_budget);
  auto n = static_cast<std::size_t>(std::ceil(T / h - 1e-12));
  h = T / static_cast<double>(n);

  double Y[4] = {1, 0, 0, 1};
  double phase = 0, det_err = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = static_cast<double>(i) * h;
    phase += step_guarded(V, E, opt.x0, Y, x, h, 0, opt.max_halvings);
    // |det - 1| is only measurable down to the cancellation floor of the
    // products, ~ |Phi|_F^2 eps; drift is tracked above that floor
    double det = Y[0] * Y[3] - Y[1] * Y[2];
    double s2 = Y[0] * Y[0] + Y[1] * Y[1] + Y[2] * Y[2] + Y[3] * Y[3];
    det_err = std::max(det_err, std::abs(det - 1.0) - s2 * 1e-14);
    if (det_err > 1e-8)
      throw NumericError("cocycle determinant drifted by " + std::to_string(det_err) +
                         " (tolerance 1e-8); reduce the step or the budget");
    if (observer) observer(i + 1 == n ? T : static_cast<double>(i + 1) * h, phase);
  }
  st.x = T;
  st.Phi = {Y[0], Y[1], Y[2], Y[3]};
  st.phase = phase;
  st.det_err = det_err;
  return st;
}

RotationEstimate rotation_number(double E, const QuasiPeriodicPotential& V, double T,
                                 const IntegrateOptions& opt, double burn_in) {
  if (!(T > 0)) throw ConfigError("rotation number needs T > 0");
  double t0 = burn_in < 0 ? std::min(10.0, T / 10.0) : burn_in;
  if (t0 >= T) throw ConfigError("burn-in leaves no fit window");
  double tmid = t0 + 0.5 * (T - t0);
  SlopeAcc full{t0}, half{t0};
  integrate_cocycle(E, V, T, opt, [&](double t, double p) {
    if (t < t0) return;
    full.add(t, p);
    if (t <= tmid) half.add(t, p);
  });
  if (full.n < 8 || half.n < 4) throw NumericError("too few samples in rotation fit window");
  double sf = std::abs(full.slope());
  double sh = std::abs(half.slope());
  return {sf, std::abs(sf - sh)};
}

double lyapunov_exponent(double E, const QuasiPeriodicPotential& V, double T,
                         const IntegrateOptions& opt) {
  if (!(T > 0)) throw ConfigError("Lyapunov exponent needs T > 0");
  if (!(opt.h > 0)) throw ConfigError("step size must be positive");
  double nrm = std::hypot(opt.x0[0], opt.x0[1]);
  if (nrm == 0) throw ConfigError("tracked initial vector is zero");

  double h = clamp_step(opt.h, E, V, T, opt.det_budget);
  auto n = static_cast<std::size_t>(std::ceil(T / h - 1e-12));
  h = T / static_cast<double>(n);

  double v0 = opt.x0[0] / nrm, v1 = opt.x0[1] / nrm;
  double logsum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = static_cast<double>(i) * h;
    double m0 = V.eval(x) - E;
    double mh = V.eval(x + 0.5 * h) - E;
    double m1 = V.eval(x + h) - E;
    double k1a = v1, k1b = m0 * v0;
    double ta = v0 + 0.5 * h * k1a, tb = v1 + 0.5 * h * k1b;
    double k2a = tb, k2b = mh * ta;
    ta = v0 + 0.5 * h * k2a;
    tb = v1 + 0.5 * h * k2b;
    double k3a = tb, k3b = mh * ta;
    ta = v0 + h * k3a;
    tb = v1 + h * k3b;
    double k4a = tb, k4b = m1 * ta;
    v0 += h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a);
    v1 += h / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b);
    double n2 = v0 * v0 + v1 * v1;
    if (n2 > 1e24 || n2 < 1e-24) {
      double s = std::sqrt(n2);
      logsum += std::log(s);
      v0 /= s;
      v1 /= s;
    }
  }
  logsum += 0.5 * std::log(v0 * v0 + v1 * v1);
  return std::max(0.0, logsum / T);
}

const char* to_string(PointClass c) {
  switch (c) {
    case PointClass::spectrum:
      return "spectrum";
    case PointClass::gap:
      return "gap";
    default:
      return "uncertain";
  }
}

RotationCurve rotation_curve(const std::vector<double>& energies,
                             const QuasiPeriodicPotential& V, const CurveOptions& opt) {
  if (energies.empty()) throw ConfigError("energy grid is empty");
  for (std::size_t i = 1; i < energies.size(); ++i)
    if (!(energies[i] > energies[i - 1]))
      throw ConfigError("energy grid must be strictly increasing (offending index " +
                        std::to_string(i) + ")");

  const std::size_t n = energies.size();
  RotationCurve c;
  c.E = energies;
  c.rho.resize(n);
  c.drho.assign(n, 0.0);
  c.lyapunov.resize(n);
  c.rho_err.resize(n);
  c.cls.assign(n, PointClass::uncertain);
  c.gap_label.assign(n, {});

  // Inside a gap the tracked vector locks onto the unstable direction only
  // after ~1/lambda; a burn-in proportional to T keeps that transient out of
  // the fit window, where the short default would bias the plateau value.
  double burn = opt.burn_in < 0 ? 0.5 * opt.T : opt.burn_in;
  parallel_for(
      n,
      [&](std::size_t i) {
        auto r = rotation_number(energies[i], V, opt.T, opt.ode, burn);
        c.rho[i] = r.rho;
        c.rho_err[i] = r.err_est;
        c.lyapunov[i] = lyapunov_exponent(energies[i], V, opt.T_lyap, opt.ode);
      },
      opt.threads);

  // rho(E) is nondecreasing; project onto that cone. A decrease is only a
  // violation when it exceeds what the estimator's own error bars allow.
  double prev = c.rho[0], raw_prev = c.rho[0];
  for (std::size_t i = 1; i < n; ++i) {
    double raw = c.rho[i];
    double slack = std::max(opt.monotone_tol, 3.0 * (c.rho_err[i] + c.rho_err[i - 1]));
    if (raw < raw_prev - slack) ++c.monotone_violations;
    c.rho[i] = prev = std::max(prev, raw);
    raw_prev = raw;
  }

  if (n >= 2) {
    c.drho[0] = (c.rho[1] - c.rho[0]) / (c.E[1] - c.E[0]);
    c.drho[n - 1] = (c.rho[n - 1] - c.rho[n - 2]) / (c.E[n - 1] - c.E[n - 2]);
    for (std::size_t i = 1; i + 1 < n; ++i)
      c.drho[i] = (c.rho[i + 1] - c.rho[i - 1]) / (c.E[i + 1] - c.E[i - 1]);
  }

  for (std::size_t i = 0; i < n; ++i)
    c.cls[i] = (c.lyapunov[i] <= opt.lambda_tol && c.drho[i] >= opt.flat_threshold)
                   ? PointClass::spectrum
                   : PointClass::uncertain;

  label_gaps(c, V.freq(), opt.label_k_max, opt.label_tol, opt.flat_threshold);
  return c;
}

void label_gaps(RotationCurve& curve, const FrequencyVector& freq, int k_max, double tol,
                double flat_threshold) {
  freq.validate();
  if (k_max < 1) throw ConfigError("label_gaps needs k_max >= 1");
  const std::size_t n = curve.rho.size();
  curve.gaps.clear();
  curve.gap_label.assign(n, {});
  if (n < 2) return;

  struct Cand {
    ModeIndex k;
    double val;
  };
  std::vector<Cand> cands;
  cands.push_back({ModeIndex(static_cast<std::size_t>(freq.dim()), 0), 0.0});  // below spectrum
  detail::scan_half_lattice(freq.dim(), k_max, [&](const ModeIndex& k) {
    double v = 0.5 * freq.dot(k);
    ModeIndex kk = k;
    if (v < 0) {
      for (int& e : kk) e = -e;
      v = -v;
    }
    cands.push_back({std::move(kk), v});
  });

  std::size_t i = 0;
  while (i < n) {
    if (curve.drho[i] >= flat_threshold) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && curve.drho[j + 1] < flat_threshold) ++j;
    if (j > i) {
      GapLabel g;
      g.first = i;
      g.last = j;
      g.E_lo = curve.E[i];
      g.E_hi = curve.E[j];
      std::vector<double> vals(curve.rho.begin() + static_cast<std::ptrdiff_t>(i),
                               curve.rho.begin() + static_cast<std::ptrdiff_t>(j + 1));
      auto mid = vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2);
      std::nth_element(vals.begin(), mid, vals.end());
      g.rho_plateau = *mid;

      double best = std::numeric_limits<double>::infinity(), second = best;
      const Cand* pick = nullptr;
      for (const Cand& cd : cands) {
        double d = std::abs(cd.val - g.rho_plateau);
        if (d < best) {
          second = best;
          best = d;
          pick = &cd;
        } else if (d < second) {
          second = d;
        }
      }
      g.residual = best;
      if (best <= tol) {
        g.k = pick->k;
        if (second <= tol) {
          g.ambiguous = true;  // two half-lattice values this close: report, don't guess
        } else {
          g.labelled = true;
          for (std::size_t m = i; m <= j; ++m) {
            curve.cls[m] = PointClass::gap;
            curve.gap_label[m] = g.k;
          }
        }
      }
      curve.gaps.push_back(g);
    }
    i = j + 1;
  }
}

}  // namespace qpt
