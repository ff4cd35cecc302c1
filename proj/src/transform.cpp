#include <qpt/transform.hpp>

#include <qpt/errors.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace qpt {
namespace {

using cplx = std::complex<double>;

std::string fmt_short(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Mode map of a scalar series keyed by the packed index, for cross-energy
// arithmetic (neighbouring energies need not share a support).
std::map<std::uint64_t, cplx> mode_map(const ScalarSeries& s) {
  std::map<std::uint64_t, cplx> m;
  s.for_each([&](const ModeIndex& k, const cplx& c) { m[series_detail::pack_key(k)] = c; });
  return m;
}

struct BetaModes {
  std::map<std::uint64_t, cplx> b0, b1;
};

// Union-support finite difference (y_hi - y_lo) / h of two mode maps.
std::map<std::uint64_t, cplx> fd_map(const std::map<std::uint64_t, cplx>& lo,
                                     const std::map<std::uint64_t, cplx>& hi, double h) {
  std::map<std::uint64_t, cplx> out;
  for (const auto& [k, c] : hi) out[k] = c / h;
  for (const auto& [k, c] : lo) out[k] -= c / h;
  return out;
}

double branch_weight(double rho, double drho, double cutoff) {
  double w = 1.0 / (M_PI * drho);
  if (rho > cutoff) w /= 1.0 + std::pow(rho, 8);
  return w;
}

// K, J and their E-derivatives at one grid point, from the flattened entry.
struct KernelVals {
  double K = 0, J = 0, dK = 0, dJ = 0;
};

KernelVals kernels_at(const FrameEntry& e, double x, bool with_derivative) {
  cplx v0 = 0, v1 = 0, dv0 = 0, dv1 = 0;
  for (std::size_t m = 0; m < e.mu.size(); ++m) {
    cplx ph = std::polar(1.0, e.mu[m] * x);
    v0 += e.b0[m] * ph;
    v1 += e.b1[m] * ph;
    if (with_derivative) {
      dv0 += e.db0[m] * ph;
      dv1 += e.db1[m] * ph;
    }
  }
  double beta0 = v0.real(), beta1 = v1.real();
  double s = std::sin(x * e.rho), c = std::cos(x * e.rho);
  KernelVals out;
  out.K = beta0 * s + beta1 * e.rho * c;
  out.J = beta0 * c - beta1 * e.rho * s;
  if (with_derivative) {
    double g0 = dv0.real(), g1 = dv1.real();
    out.dK = g0 * s + x * e.drho * beta0 * c + e.rho * g1 * c + e.drho * beta1 * c -
             e.rho * e.drho * x * beta1 * s;
    out.dJ = g0 * c - x * e.drho * beta0 * s - e.rho * g1 * s - e.drho * beta1 * s -
             e.rho * e.drho * x * beta1 * c;
  }
  return out;
}

TransformedPair integrate_against(const WaveState& q, const SpectralFrame& frame,
                                  bool with_derivative) {
  const SpatialGrid& g = q.grid;
  g.validate();
  if (q.psi.size() != g.n_points) throw ConfigError("transform: state size does not match grid");
  const std::size_t n = g.n_points;
  const double dx = g.dx();

  TransformedPair out;
  out.g1.assign(frame.size(), 0.0);
  out.g2.assign(frame.size(), 0.0);
  for (std::size_t j = 0; j < frame.size(); ++j) {
    const FrameEntry& e = frame.entries[j];
    cplx a1 = 0, a2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      KernelVals kv = kernels_at(e, g.x(i), with_derivative);
      double wq = (i == 0 || i + 1 == n) ? 0.5 : 1.0;  // trapezoid ends
      cplx qi = q.psi[i] * wq;
      if (with_derivative) {
        a1 += qi * kv.dK;
        a2 += qi * kv.dJ;
      } else {
        a1 += qi * kv.K;
        a2 += qi * kv.J;
      }
    }
    out.g1[j] = a1 * dx;
    out.g2[j] = a2 * dx;
  }
  return out;
}

}  // namespace

std::size_t SpectralFrame::locate(double E) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), E,
                             [](const FrameEntry& e, double v) { return e.E < v; });
  for (auto probe : {it, it == entries.begin() ? entries.end() : std::prev(it)}) {
    if (probe != entries.end() && std::abs(probe->E - E) <= 1e-9 * (1.0 + std::abs(E)))
      return static_cast<std::size_t>(probe - entries.begin());
  }
  throw EnergyNotInFrame("E = " + fmt_short(E) + " is not a retained frame energy");
}

double default_cutoff(double eps0, double sigma) {
  if (!(eps0 > 0.0) || !(sigma > 0.0)) throw ConfigError("cutoff rule needs eps0, sigma > 0");
  return std::pow(eps0, -sigma / 4.0);
}

SpectralFrame build_frame(const QuasiPeriodicPotential& V, const RotationCurve& curve,
                          const std::vector<ConjugationResult>& reductions, double cutoff_rho_c,
                          const FrameOptions& opt) {
  const std::size_t n = curve.E.size();
  if (curve.cls.size() != n) throw ConfigError("frame: curve is missing classifications");
  if (reductions.size() != n)
    throw ConfigError("frame: curve has " + std::to_string(n) + " energies but " +
                      std::to_string(reductions.size()) + " reductions");
  if (!(cutoff_rho_c > 0.0)) throw ConfigError("frame: cutoff_rho_c must be positive");
  if (!(opt.max_fd_spacing > 0.0)) throw ConfigError("frame: max_fd_spacing must be positive");

  SpectralFrame frame;
  frame.freq = V.freq();
  frame.cutoff_rho_c = cutoff_rho_c;
  frame.fd_spacing_limit = opt.max_fd_spacing;

  auto reject = [&](std::size_t i, const std::string& why) {
    frame.rejected.push_back("E = " + fmt_short(curve.E[i]) + ": " + why);
  };

  // First pass: admissible energies and their Bloch data. The fold-back
  // signature tags which resonance shifts the row's representation carries:
  // rows with different signatures are different branches of the Bloch data,
  // and the beta finite differences below must not straddle them.
  std::vector<std::size_t> idx;           // curve index per candidate
  std::vector<BetaModes> betas;           // mode maps per candidate
  std::vector<double> rho_of;             // converged alpha per candidate
  std::vector<std::string> sig_of;        // resonance fold-back signature
  for (std::size_t i = 0; i < n; ++i) {
    const ConjugationResult& r = reductions[i];
    if (std::abs(r.E - curve.E[i]) > 1e-9 * (1.0 + std::abs(curve.E[i])))
      throw ConfigError("frame: curve and reductions disagree at grid point " +
                        std::to_string(i));
    if (curve.cls[i] != PointClass::spectrum) {
      reject(i, curve.cls[i] == PointClass::gap ? "classified gap" : "classification uncertain");
      continue;
    }
    if (r.status != ReduceStatus::converged) {
      reject(i, std::string("reduction ") + to_string(r.status));
      continue;
    }
    if (!r.resonances.empty() && !opt.smooth_resonant) {
      reject(i, "near-resonant layer, |xi| = " + fmt_short(std::abs(r.xi)));
      continue;
    }
    bool smooth = opt.smooth_resonant && !r.resonances.empty();
    BlochCoefficients bc = bloch_from_reduction(r, r.alpha, smooth, 1e300);
    std::string sig;
    for (const ResonanceRecord& rec : r.resonances) {
      for (int comp : rec.k) sig += std::to_string(comp) + ",";
      sig += rec.sign > 0 ? "+;" : "-;";
    }
    idx.push_back(i);
    betas.push_back({mode_map(bc.beta0), mode_map(bc.beta1)});
    rho_of.push_back(r.alpha);
    sig_of.push_back(std::move(sig));
  }

  // Group candidates into runs of grid-adjacent points, test transversality
  // per point (one-sided stencils at run edges, central inside), then split
  // each run at its rejections. The stencil may use a neighbour that is later
  // dropped for its own drho sign: its rho value is still valid data.
  std::size_t m = idx.size();
  std::vector<double> drho_of(m, 0.0);
  std::vector<std::size_t> lo_of(m), hi_of(m);
  std::vector<char> ok(m, 0);
  std::size_t a = 0;
  while (a < m) {
    std::size_t b = a;
    while (b + 1 < m && idx[b + 1] == idx[b] + 1) ++b;
    if (b == a) {
      reject(idx[a], "isolated retained point, no derivative stencil");
    } else {
      for (std::size_t c = a; c <= b; ++c) {
        lo_of[c] = (c == a) ? c : c - 1;
        hi_of[c] = (c == b) ? c : c + 1;
        double hE = curve.E[idx[hi_of[c]]] - curve.E[idx[lo_of[c]]];
        drho_of[c] = (rho_of[hi_of[c]] - rho_of[lo_of[c]]) / hE;
        if (drho_of[c] > 0.0)
          ok[c] = 1;
        else
          reject(idx[c], "drho = " + fmt_short(drho_of[c]) + " violates transversality");
      }
    }
    a = b + 1;
  }

  a = 0;
  while (a < m) {
    if (!ok[a]) {
      ++a;
      continue;
    }
    std::size_t b = a;
    while (b + 1 < m && ok[b + 1] && idx[b + 1] == idx[b] + 1) ++b;
    if (b == a) {
      reject(idx[a], "no usable neighbours after transversality rejection");
      ++a;
      continue;
    }
    frame.run_starts.push_back(frame.entries.size());
    for (std::size_t c = a; c <= b; ++c) {
      FrameEntry e;
      e.E = curve.E[idx[c]];
      e.rho = rho_of[c];
      e.drho = drho_of[c];
      e.high_branch = e.rho > cutoff_rho_c;
      e.w = branch_weight(e.rho, e.drho, cutoff_rho_c);

      // rho is continuous across a resonant layer (the fold-back restores it),
      // but beta switches branch there, so its stencil stays inside the rows
      // sharing the signature; a row with no such neighbour keeps dbeta = 0,
      // consistent with the xi^8-flattened layer it sits on.
      std::size_t blo = (c > 0 && idx[c - 1] + 1 == idx[c] && sig_of[c - 1] == sig_of[c]) ? c - 1
                                                                                          : c;
      std::size_t bhi = (c + 1 < m && idx[c + 1] == idx[c] + 1 && sig_of[c + 1] == sig_of[c])
                            ? c + 1
                            : c;
      std::map<std::uint64_t, cplx> db0, db1;
      if (blo != bhi) {
        double hB = curve.E[idx[bhi]] - curve.E[idx[blo]];
        db0 = fd_map(betas[blo].b0, betas[bhi].b0, hB);
        db1 = fd_map(betas[blo].b1, betas[bhi].b1, hB);
      }
      std::map<std::uint64_t, int> keys;
      for (const auto& kv : betas[c].b0) keys[kv.first] = 0;
      for (const auto& kv : betas[c].b1) keys[kv.first] = 0;
      for (const auto& kv : db0) keys[kv.first] = 0;
      for (const auto& kv : db1) keys[kv.first] = 0;
      auto pick = [](const std::map<std::uint64_t, cplx>& mp, std::uint64_t k) {
        auto it = mp.find(k);
        return it == mp.end() ? cplx(0.0) : it->second;
      };
      for (const auto& kv : keys) {
        ModeIndex k = series_detail::unpack_key(kv.first, frame.freq.dim());
        e.mu.push_back(0.5 * frame.freq.dot(k));
        e.b0.push_back(pick(betas[c].b0, kv.first));
        e.b1.push_back(pick(betas[c].b1, kv.first));
        e.db0.push_back(pick(db0, kv.first));
        e.db1.push_back(pick(db1, kv.first));
      }
      frame.entries.push_back(std::move(e));
    }
    a = b + 1;
  }

  if (frame.entries.empty())
    throw EmptyFrame("no energies retained (of " + std::to_string(n) + " grid points)");

  for (std::size_t r = 0; r < frame.run_starts.size(); ++r) {
    std::size_t lo = frame.run_starts[r];
    std::size_t hi = (r + 1 < frame.run_starts.size()) ? frame.run_starts[r + 1]
                                                       : frame.entries.size();
    for (std::size_t j = lo; j < hi; ++j) {
      double left = (j == lo) ? 0.0 : frame.entries[j].E - frame.entries[j - 1].E;
      double right = (j + 1 == hi) ? 0.0 : frame.entries[j + 1].E - frame.entries[j].E;
      frame.entries[j].quad_w = 0.5 * (left + right);
      frame.max_spacing = std::max({frame.max_spacing, left, right});
    }
  }
  return frame;
}

KJ eval_K_J(const SpectralFrame& frame, double E, double x) {
  const FrameEntry& e = frame.entries[frame.locate(E)];
  KernelVals kv = kernels_at(e, x, false);
  return {kv.K, kv.J};
}

TransformedPair apply_transform(const WaveState& q, const SpectralFrame& frame) {
  return integrate_against(q, frame, false);
}

double transform_norm(const TransformedPair& G, const SpectralFrame& frame, MeasureKind kind) {
  if (G.g1.size() != frame.size() || G.g2.size() != frame.size())
    throw ConfigError("transform norm: pair size does not match frame");
  double acc = 0.0;
  for (std::size_t j = 0; j < frame.size(); ++j) {
    const FrameEntry& e = frame.entries[j];
    double wk = e.w;
    if (kind == MeasureKind::dphi_hat) wk *= e.drho * e.drho;
    if (kind == MeasureKind::dphi_tilde) wk *= 4.0 * e.rho * e.rho * e.drho * e.drho;
    acc += (std::norm(G.g1[j]) + std::norm(G.g2[j])) * wk * e.quad_w;
  }
  return std::sqrt(acc);
}

TransformedPair derivative_transform(const WaveState& q, const SpectralFrame& frame) {
  if (frame.max_spacing > frame.fd_spacing_limit)
    throw GridTooCoarse("retained grid spacing " + fmt_short(frame.max_spacing) +
                        " exceeds the finite-difference limit " +
                        fmt_short(frame.fd_spacing_limit));
  return integrate_against(q, frame, true);
}

double ballistic_constant(const WaveState& q0, const SpectralFrame& frame) {
  return transform_norm(apply_transform(q0, frame), frame, MeasureKind::dphi);
}

double oscillatory_integral(const SpectralFrame& frame, OscKind f_kind, int power_k, double M,
                            double x_off, double y_off) {
  if (!(std::abs(M) > 1.0)) throw ConfigError("oscillatory integral: need |M| > 1");
  if (power_k != 0 && power_k != 2 && power_k != 4)
    throw ConfigError("oscillatory integral: power_k must be 0, 2 or 4");

  // Non-oscillatory factor at the nodes, branch damping included.
  std::vector<double> val(frame.size());
  for (std::size_t j = 0; j < frame.size(); ++j) {
    const FrameEntry& e = frame.entries[j];
    double f = 1.0;
    if (f_kind != OscKind::const_one) {
      cplx vx = 0, vy = 0;
      const auto& coef = (f_kind == OscKind::beta00) ? e.b0 : e.b1;
      for (std::size_t m = 0; m < e.mu.size(); ++m) {
        vx += coef[m] * std::polar(1.0, e.mu[m] * x_off);
        vy += coef[m] * std::polar(1.0, e.mu[m] * y_off);
      }
      f = vx.real() * vy.real();
    }
    double g = f * std::pow(e.rho, power_k);
    if (e.high_branch) g /= 1.0 + std::pow(e.rho, 8);
    val[j] = g;
  }

  // Linear-Filon panels in the rho variable, per contiguous run.
  double acc = 0.0;
  for (std::size_t r = 0; r < frame.run_starts.size(); ++r) {
    std::size_t lo = frame.run_starts[r];
    std::size_t hi = (r + 1 < frame.run_starts.size()) ? frame.run_starts[r + 1]
                                                       : frame.entries.size();
    for (std::size_t j = lo; j + 1 < hi; ++j) {
      double r0 = frame.entries[j].rho, r1 = frame.entries[j + 1].rho;
      double h = r1 - r0;
      if (!(h > 0.0)) continue;
      if (h * std::abs(M) > M_PI)
        throw QuadratureUnderResolved("rho step " + fmt_short(h) + " cannot resolve cos(M rho) at M = " +
                                      fmt_short(M));
      double v0 = val[j], v1 = val[j + 1];
      double s0 = std::sin(M * r0), s1 = std::sin(M * r1);
      double c0 = std::cos(M * r0), c1 = std::cos(M * r1);
      acc += v0 * (s1 - s0) / M + (v1 - v0) * (h * s1 / M + (c1 - c0) / (M * M)) / h;
    }
  }
  return acc;
}

double verify_classical_parseval(const WaveState& q, double E_max, std::size_t n_rho) {
  const SpatialGrid& g = q.grid;
  g.validate();
  if (q.psi.size() != g.n_points) throw ConfigError("parseval: state size does not match grid");
  if (!(E_max > 0.0)) throw ConfigError("parseval: E_max must be positive");
  if (n_rho < 2) throw ConfigError("parseval: need at least 2 rho nodes");

  const std::size_t n = g.n_points;
  const double dx = g.dx();
  double qq = 0.0;
  for (std::size_t i = 0; i < n; ++i) qq += std::norm(q.psi[i]);
  qq *= dx;
  if (qq == 0.0) return 0.0;

  // (1/2pi) int (|a|^2 E^-1/2 + |b|^2 E^1/2) dE becomes
  // (1/pi)  int (|a|^2 + rho^2 |b|^2) drho with E = rho^2,
  // a = int q cos(rho x), b = int q sin(rho x)/rho (b -> int x q at rho = 0).
  double rho_max = std::sqrt(E_max);
  double dr = rho_max / static_cast<double>(n_rho - 1);
  double acc = 0.0;
  for (std::size_t j = 0; j < n_rho; ++j) {
    double rho = dr * static_cast<double>(j);
    cplx a = 0, brho = 0;  // brho accumulates rho * b directly
    for (std::size_t i = 0; i < n; ++i) {
      double x = g.x(i);
      double wq = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
      a += q.psi[i] * (std::cos(rho * x) * wq);
      brho += q.psi[i] * (std::sin(rho * x) * wq);
    }
    double term = (std::norm(a) + std::norm(brho)) * dx * dx;
    acc += term * ((j == 0 || j + 1 == n_rho) ? 0.5 : 1.0);
  }
  acc *= dr / M_PI;
  return std::abs(acc - qq) / qq;
}

}  // namespace qpt
