#include "qpt/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "qpt/errors.hpp"
#include "qpt/evolve.hpp"
#include "qpt/parallel.hpp"
#include "qpt/reduce.hpp"
#include "qpt/transform.hpp"

namespace fs = std::filesystem;

namespace qpt {
namespace {

constexpr double kPi = 3.14159265358979323846;

// shortest exact round-trip formatting; CSV determinism rests on this plus
// fixed iteration order everywhere below
std::string g17(double x) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", x);
  return b;
}

std::string g6(double x) {
  char b[40];
  std::snprintf(b, sizeof b, "%.6g", x);
  return b;
}

std::string join_modes(const ModeIndex& k) {
  std::string s;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(k[i]);
  }
  return s;
}

// ---------------------------------------------------------------- plumbing

struct CmdContext {
  RunConfig cfg;
  CliOptions opt;
  std::string out_dir, mpath, hash;
  RunManifest man;
  bool skip = false;
  RunManifest prior;

  void stage(const char* name, const std::function<void()>& body) {
    try {
      body();
      man.stage_ok(name);
    } catch (const std::exception& e) {
      man.stage_failed(name, e.what());
      man.finished_at = utc_now_iso();
      write_manifest(man, mpath);
      throw;
    }
  }

  void emit(const std::string& name, const std::string& bytes) {
    write_file_atomic((fs::path(out_dir) / name).string(), bytes);
    man.outputs.push_back(name);
  }

  RunManifest finish() {
    man.complete = true;
    man.finished_at = utc_now_iso();
    write_manifest(man, mpath);
    std::printf("qpt %s: %zu file(s) in %s (hash %s)\n", man.command.c_str(),
                man.outputs.size(), out_dir.c_str(), hash.c_str());
    return man;
  }
};

CmdContext begin_cmd(const char* command, const RunConfig& cfg, const CliOptions& opt) {
  CmdContext c;
  c.cfg = cfg;
  c.opt = opt;
  c.out_dir = opt.out_override.empty() ? cfg.output_dir : opt.out_override;
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw IoError("cannot create output dir '" + c.out_dir + "': " + ec.message());
  c.hash = config_hash(cfg, command, opt.seed);
  c.mpath = manifest_path(c.out_dir, command);
  if (!opt.force && read_manifest(c.mpath, c.prior) && c.prior.complete &&
      c.prior.config_hash == c.hash) {
    c.skip = true;
    std::printf("qpt %s: up to date (hash %s), skipping — use --force to rerun\n", command,
                c.hash.c_str());
    return c;
  }
  c.man.command = command;
  c.man.config_hash = c.hash;
  c.man.tool_version = tool_version();
  c.man.started_at = utc_now_iso();
  c.man.seed = opt.seed;
  return c;
}

KamSchedule schedule_for(const RunConfig& cfg, const CliOptions& opt) {
  KamSchedule s = cfg.schedule();
  if (opt.seed) s.theta_seed = opt.seed;
  return s;
}

std::vector<ConjugationResult> reduce_grid(const std::vector<double>& energies,
                                           const QuasiPeriodicPotential& V,
                                           const KamSchedule& sched, unsigned threads) {
  std::vector<ConjugationResult> out(energies.size());
  parallel_for(
      energies.size(), [&](std::size_t i) { out[i] = reduce_cocycle(energies[i], V, sched); },
      threads);
  return out;
}

// transport wants the whole grid on the undamped branch (the packet's mass
// is the object of interest, not the paper's default split), so its fallback
// cutoff is the grid top; everything else keeps the eps0^{-sigma/4} formula.
double effective_cutoff(const RunConfig& cfg, bool transport) {
  if (cfg.cutoff_rho_c > 0) return cfg.cutoff_rho_c;
  if (transport) return cfg.rho_max;
  return default_cutoff(cfg.nominal_eps0(), cfg.sigma);
}

// ---------------------------------------------------------------- SVG plots

struct SvgSeries {
  std::vector<double> x, y;
  std::string color = "#1f6fb4";
  bool dashed = false;
};

std::string svg_plot(const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<SvgSeries>& series) {
  const double W = 720, H = 440, L = 70, R = 690, T = 42, B = 396;
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const SvgSeries& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  if (x_lo > x_hi) {
    x_lo = 0;
    x_hi = 1;
    y_lo = 0;
    y_hi = 1;
  }
  if (x_hi - x_lo < 1e-12) {
    x_lo -= 1;
    x_hi += 1;
  }
  if (y_hi - y_lo < 1e-12) {
    y_lo -= 1;
    y_hi += 1;
  }
  double xpad = 0.04 * (x_hi - x_lo), ypad = 0.06 * (y_hi - y_lo);
  x_lo -= xpad;
  x_hi += xpad;
  y_lo -= ypad;
  y_hi += ypad;
  auto px = [&](double x) { return L + (x - x_lo) / (x_hi - x_lo) * (R - L); };
  auto py = [&](double y) { return B - (y - y_lo) / (y_hi - y_lo) * (B - T); };
  auto f2 = [](double v) {
    char b[24];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W << " " << H
    << "\" font-family=\"sans-serif\">\n";
  o << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    double fx = x_lo + (x_hi - x_lo) * i / 4.0;
    double fy = y_lo + (y_hi - y_lo) * i / 4.0;
    o << "<line x1=\"" << f2(px(fx)) << "\" y1=\"" << T << "\" x2=\"" << f2(px(fx)) << "\" y2=\""
      << B << "\" stroke=\"#dddddd\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << f2(py(fy)) << "\" x2=\"" << R << "\" y2=\""
      << f2(py(fy)) << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << f2(px(fx)) << "\" y=\"" << B + 18
      << "\" text-anchor=\"middle\" font-size=\"11\">" << g6(fx) << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << f2(py(fy) + 4)
      << "\" text-anchor=\"end\" font-size=\"11\">" << g6(fy) << "</text>\n";
  }
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << R - L << "\" height=\"" << B - T
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (L + R) / 2 << "\" y=\"" << H - 8
    << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + B) / 2
    << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << (T + B) / 2
    << ")\">" << ylabel << "</text>\n";
  for (const SvgSeries& s : series) {
    o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
    if (s.dashed) o << " stroke-dasharray=\"6 4\"";
    o << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      o << f2(px(s.x[i])) << "," << f2(py(s.y[i])) << " ";
    }
    o << "\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::map<std::string, std::vector<double>> read_csv_columns(const std::string& path) {
  std::map<std::string, std::vector<double>> cols;
  std::ifstream in(path);
  if (!in) return cols;
  std::string line;
  if (!std::getline(in, line)) return cols;
  std::vector<std::string> names;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i < names.size() && std::getline(ss, cell, ','); ++i) {
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      cols[names[i]].push_back(end != cell.c_str() ? v : std::nan(""));
    }
  }
  return cols;
}

// intercept of the same late-window line fit_slope uses, for plotting
double fit_intercept(const NormSeries& s, double late_fraction, double slope) {
  std::size_t m = s.size();
  auto k = static_cast<std::size_t>(std::ceil(late_fraction * static_cast<double>(m)));
  if (k < 1 || k > m) return 0.0;
  double mt = 0, md = 0;
  for (std::size_t i = m - k; i < m; ++i) {
    mt += s.t[i];
    md += s.diffusion[i];
  }
  mt /= static_cast<double>(k);
  md /= static_cast<double>(k);
  return md - slope * mt;
}

}  // namespace

// ------------------------------------------------------------- energy grid

GridCurve build_energy_grid(const RunConfig& cfg, const CliOptions& opt) {
  auto rho_to_E = [](const std::vector<double>& rho) {
    std::vector<double> E(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) E[i] = rho[i] * rho[i];
    return E;
  };
  std::size_t n = 1 + static_cast<std::size_t>(
                          std::llround((cfg.rho_max - cfg.rho_min) / cfg.rho_spacing));
  if (n < 2) n = 2;
  double h = (cfg.rho_max - cfg.rho_min) / static_cast<double>(n - 1);
  std::vector<double> rho(n);
  for (std::size_t i = 0; i < n; ++i) rho[i] = cfg.rho_min + h * static_cast<double>(i);

  CurveOptions co;
  co.T = cfg.curve_T;
  co.T_lyap = cfg.curve_T_lyap;
  co.threads = opt.threads;

  GridCurve gc;
  gc.energies = rho_to_E(rho);
  gc.curve = rotation_curve(gc.energies, cfg.potential, co);
  if (!cfg.graded || gc.curve.gaps.empty()) return gc;

  // refine around each detected gap edge and redo the curve on the union;
  // one round is enough for measure purposes (the fine points only need to
  // resolve where retention stops, not the gap interior)
  std::vector<double> refined = rho;
  for (const GapLabel& g : gc.curve.gaps) {
    for (double edge : {std::sqrt(gc.curve.E[g.first]), std::sqrt(gc.curve.E[g.last])}) {
      double lo = std::max(cfg.rho_min, edge - cfg.grade_pad);
      double hi = std::min(cfg.rho_max, edge + cfg.grade_pad);
      for (double r = lo; r <= hi + 1e-15; r += cfg.fine_spacing) refined.push_back(r);
    }
  }
  std::sort(refined.begin(), refined.end());
  std::vector<double> merged;
  for (double r : refined)
    if (merged.empty() || r - merged.back() > 0.25 * cfg.fine_spacing) merged.push_back(r);

  gc.energies = rho_to_E(merged);
  gc.curve = rotation_curve(gc.energies, cfg.potential, co);
  return gc;
}

// ---------------------------------------------------------------- rotation

RunManifest cmd_rotation(const RunConfig& cfg, const CliOptions& opt) {
  CmdContext c = begin_cmd("rotation", cfg, opt);
  if (c.skip) return c.prior;

  GridCurve gc;
  c.stage("curve", [&] { gc = build_energy_grid(cfg, opt); });

  c.stage("write", [&] {
    const RotationCurve& cv = gc.curve;
    std::ostringstream o;
    o << "E,rho,drho,lyapunov,class,gap_k\n";
    for (std::size_t i = 0; i < cv.E.size(); ++i) {
      o << g17(cv.E[i]) << "," << g17(cv.rho[i]) << "," << g17(cv.drho[i]) << ","
        << g17(cv.lyapunov[i]) << "," << to_string(cv.cls[i]) << ","
        << join_modes(cv.gap_label[i]) << "\n";
    }
    c.emit("rotation.csv", o.str());

    std::ostringstream t;
    t << "E_lo,E_hi,rho_plateau,k,residual,labelled,ambiguous\n";
    for (const GapLabel& g : cv.gaps) {
      t << g17(g.E_lo) << "," << g17(g.E_hi) << "," << g17(g.rho_plateau) << ","
        << join_modes(g.k) << "," << g17(g.residual) << "," << (g.labelled ? 1 : 0) << ","
        << (g.ambiguous ? 1 : 0) << "\n";
    }
    c.emit("rotation_gaps.csv", t.str());
  });

  const RotationCurve& cv = gc.curve;
  std::size_t ns = 0, ng = 0, nu = 0, nl = 0;
  double max_res = 0;
  for (PointClass pc : cv.cls) {
    ns += pc == PointClass::spectrum;
    ng += pc == PointClass::gap;
    nu += pc == PointClass::uncertain;
  }
  for (const GapLabel& g : cv.gaps)
    if (g.labelled) {
      ++nl;
      max_res = std::max(max_res, g.residual);
    }
  c.man.metrics["n_grid"] = static_cast<double>(cv.E.size());
  c.man.metrics["n_spectrum"] = static_cast<double>(ns);
  c.man.metrics["n_gap"] = static_cast<double>(ng);
  c.man.metrics["n_uncertain"] = static_cast<double>(nu);
  c.man.metrics["n_gap_runs"] = static_cast<double>(cv.gaps.size());
  c.man.metrics["n_labelled"] = static_cast<double>(nl);
  c.man.metrics["max_label_residual"] = max_res;
  c.man.metrics["monotone_violations"] = cv.monotone_violations;
  return c.finish();
}

// ------------------------------------------------------------------ reduce

RunManifest cmd_reduce(const RunConfig& cfg, const CliOptions& opt) {
  CmdContext c = begin_cmd("reduce", cfg, opt);
  if (c.skip) return c.prior;

  GridCurve gc;
  std::vector<ConjugationResult> reds;
  c.stage("curve", [&] { gc = build_energy_grid(cfg, opt); });
  c.stage("reduce",
          [&] { reds = reduce_grid(gc.energies, cfg.potential, schedule_for(cfg, opt), opt.threads); });

  c.stage("write", [&] {
    std::ostringstream r;
    r << "# reduction report: " << reds.size() << " energies, tool " << tool_version() << "\n";
    for (std::size_t i = 0; i < reds.size(); ++i) {
      const ConjugationResult& cr = reds[i];
      r << "\nE = " << g17(cr.E) << "  class=" << to_string(gc.curve.cls[i]) << "\n";
      r << "  status=" << to_string(cr.status) << "  steps=" << cr.steps
        << "  residual=" << g17(cr.residual) << "  alpha=" << g17(cr.alpha)
        << "  xi=" << g17(cr.xi) << "\n";
      if (cr.resonances.empty()) {
        r << "  resonances: none\n";
      } else {
        r << "  resonances:";
        for (const ResonanceRecord& rec : cr.resonances) {
          r << " step " << rec.step << ": k=(";
          for (std::size_t q = 0; q < rec.k.size(); ++q)
            r << (q ? "," : "") << rec.k[q];
          r << ") sign=" << (rec.sign > 0 ? "+" : "-") << ";";
        }
        r << "\n";
      }
      if (!cr.message.empty()) r << "  note: " << cr.message << "\n";
      if (cr.status == ReduceStatus::converged) {
        BlochCoefficients bc = bloch_from_reduction(cr, cr.alpha, false, 0.1);
        const FrequencyVector& fv = cfg.potential.freq();
        for (int which = 0; which < 2; ++which) {
          const ScalarSeries& s = which ? bc.beta1 : bc.beta0;
          std::vector<std::pair<double, std::complex<double>>> rows;
          s.for_each([&](const ModeIndex& k, const std::complex<double>& v) {
            rows.emplace_back(fv.dot(k) / 2.0, v);
          });
          std::sort(rows.begin(), rows.end(),
                    [](const auto& a, const auto& b) { return a.first < b.first; });
          r << "  beta" << which << " modes (mu, re, im):\n";
          for (const auto& [mu, v] : rows)
            r << "    " << g17(mu) << " " << g17(v.real()) << " " << g17(v.imag()) << "\n";
        }
      }
    }
    c.emit("reduce_report.txt", r.str());

    std::ostringstream s;
    s << "E,class,status,steps,residual,alpha,xi,n_resonances\n";
    for (std::size_t i = 0; i < reds.size(); ++i) {
      const ConjugationResult& cr = reds[i];
      s << g17(cr.E) << "," << to_string(gc.curve.cls[i]) << "," << to_string(cr.status) << ","
        << cr.steps << "," << g17(cr.residual) << "," << g17(cr.alpha) << "," << g17(cr.xi) << ","
        << cr.resonances.size() << "\n";
    }
    c.emit("reduce_summary.csv", s.str());
  });

  std::size_t nc = 0, nr = 0, nd = 0, n_spec = 0, nc_spec = 0, steps_max = 0;
  double res_max = 0;
  for (std::size_t i = 0; i < reds.size(); ++i) {
    const ConjugationResult& cr = reds[i];
    nc += cr.status == ReduceStatus::converged;
    nr += cr.status == ReduceStatus::resonant_skipped;
    nd += cr.status == ReduceStatus::diverged;
    steps_max = std::max(steps_max, static_cast<std::size_t>(cr.steps));
    if (cr.status == ReduceStatus::converged) res_max = std::max(res_max, cr.residual);
    if (gc.curve.cls[i] == PointClass::spectrum) {
      ++n_spec;
      nc_spec += cr.status == ReduceStatus::converged;
    }
  }
  c.man.metrics["n_grid"] = static_cast<double>(reds.size());
  c.man.metrics["n_converged"] = static_cast<double>(nc);
  c.man.metrics["n_resonant_skipped"] = static_cast<double>(nr);
  c.man.metrics["n_diverged"] = static_cast<double>(nd);
  c.man.metrics["frac_converged_spectrum"] =
      n_spec ? static_cast<double>(nc_spec) / static_cast<double>(n_spec) : 1.0;
  c.man.metrics["residual_max_converged"] = res_max;
  c.man.metrics["steps_max"] = static_cast<double>(steps_max);
  return c.finish();
}

// --------------------------------------------------------------- transport

RunManifest cmd_transport(const RunConfig& cfg, const CliOptions& opt) {
  CmdContext c = begin_cmd("transport", cfg, opt);
  if (c.skip) return c.prior;

  SpatialGrid grid{cfg.half_length, cfg.n_points};
  WaveState q0;
  NormSeries series;
  c.stage("evolve", [&] {
    grid.validate();
    q0 = init_packet(grid, cfg.packet_x0, cfg.packet_width, cfg.packet_momentum);
    series = evolve_and_record(q0, cfg.potential, cfg.T, cfg.dt, cfg.sample_stride);
    if (series.truncated) c.man.flags.push_back("containment_truncated");
    double drift = 0;
    for (double v : series.l2) drift = std::max(drift, std::abs(v - series.l2.front()));
    c.man.metrics["l2_drift"] = drift;
  });

  SlopeFit fit;
  c.stage("fit", [&] {
    fit = fit_slope(series, cfg.late_fraction);
    c.man.metrics["slope"] = fit.slope;
    c.man.metrics["fit_r2"] = fit.r2;
    c.man.metrics["fit_intercept"] = fit_intercept(series, cfg.late_fraction, fit.slope);
    c.man.metrics["upper_c"] = check_upper_bound(series, norms(q0));
  });

  GridCurve gc;
  std::vector<ConjugationResult> reds;
  SpectralFrame frame;
  c.stage("curve", [&] { gc = build_energy_grid(cfg, opt); });
  c.stage("reduce", [&] {
    reds = reduce_grid(gc.energies, cfg.potential, schedule_for(cfg, opt), opt.threads);
    double res_max = 0;
    for (const ConjugationResult& cr : reds)
      if (cr.status == ReduceStatus::converged) res_max = std::max(res_max, cr.residual);
    c.man.metrics["residual_max_converged"] = res_max;
  });
  c.stage("frame", [&] {
    FrameOptions fo;
    fo.max_fd_spacing = cfg.max_fd_spacing;
    frame = build_frame(cfg.potential, gc.curve, reds, effective_cutoff(cfg, true), fo);
    c.man.metrics["frame_rows"] = static_cast<double>(frame.size());
    c.man.metrics["frame_rejected"] = static_cast<double>(frame.rejected.size());
  });

  TransformedPair G0;
  c.stage("transform", [&] {
    G0 = apply_transform(q0, frame);
    double l2 = norms(q0).l2;
    double iso = std::abs(transform_norm(G0, frame, MeasureKind::dphi_hat) - l2) / l2;
    double C = ballistic_constant(q0, frame);
    c.man.metrics["iso_defect"] = iso;
    c.man.metrics["C"] = C;
    c.man.metrics["C_classical"] = 0.5 * C;  // classical-measure normalization
    c.man.metrics["ratio"] = C > 0 ? fit.slope / C : 0.0;
  });

  c.stage("write", [&] {
    std::ostringstream n;
    n << "t,l2,h1,diffusion,boundary_mass\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
      n << g17(series.t[i]) << "," << g17(series.l2[i]) << "," << g17(series.h1[i]) << ","
        << g17(series.diffusion[i]) << "," << g17(series.boundary_mass[i]) << "\n";
    }
    c.emit("transport_norms.csv", n.str());

    double b = c.man.metrics["fit_intercept"];
    std::ostringstream d;
    d << "# t diffusion fit\n";
    for (std::size_t i = 0; i < series.size(); ++i)
      d << g17(series.t[i]) << " " << g17(series.diffusion[i]) << " "
        << g17(fit.slope * series.t[i] + b) << "\n";
    c.emit("transport_fit.dat", d.str());

    std::ostringstream f;
    f << "E,rho,drho,w,beta0_0_re,beta0_0_im,beta1_0_re,beta1_0_im,status\n";
    for (const FrameEntry& e : frame.entries) {
      std::complex<double> m0{0, 0}, m1{0, 0};
      for (std::size_t i = 0; i < e.mu.size(); ++i)
        if (std::abs(e.mu[i]) < 1e-12) {
          m0 = e.b0[i];
          m1 = e.b1[i];
        }
      f << g17(e.E) << "," << g17(e.rho) << "," << g17(e.drho) << "," << g17(e.w) << ","
        << g17(m0.real()) << "," << g17(m0.imag()) << "," << g17(m1.real()) << ","
        << g17(m1.imag()) << "," << (e.high_branch ? "high" : "low") << "\n";
    }
    for (const std::string& rej : frame.rejected) {
      // rejection lines read "E = <val>: reason"
      double E = 0;
      std::string reason = rej;
      if (rej.rfind("E = ", 0) == 0) {
        std::size_t colon = rej.find(':');
        E = std::strtod(rej.c_str() + 4, nullptr);
        if (colon != std::string::npos) reason = rej.substr(colon + 2);
      }
      std::replace(reason.begin(), reason.end(), ',', ';');
      f << g17(E) << ",0,0,0,0,0,0,0,rejected: " << reason << "\n";
    }
    c.emit("transport_frame.csv", f.str());

    std::ostringstream g;
    g << "E,re_g1,im_g1,re_g2,im_g2\n";
    for (std::size_t i = 0; i < frame.size(); ++i) {
      g << g17(frame.entries[i].E) << "," << g17(G0.g1[i].real()) << "," << g17(G0.g1[i].imag())
        << "," << g17(G0.g2[i].real()) << "," << g17(G0.g2[i].imag()) << "\n";
    }
    c.emit("transport_transform.csv", g.str());

    SvgSeries data{series.t, series.diffusion, "#1f6fb4", false};
    std::vector<double> ft = {series.t.front(), series.t.back()};
    std::vector<double> fd = {fit.slope * ft[0] + b, fit.slope * ft[1] + b};
    SvgSeries line{ft, fd, "#d62728", true};
    c.emit("transport.svg",
           svg_plot("diffusion norm vs time (slope " + g6(fit.slope) + ", C " +
                        g6(c.man.metrics["C"]) + ")",
                    "t", "diffusion norm", {data, line}));
  });

  return c.finish();
}

// --------------------------------------------------------------- integrals

namespace {

struct SweepCombo {
  OscKind kind;
  int k;
  const char* name;
};

constexpr SweepCombo kCombos[] = {
    {OscKind::const_one, 0, "const_one"}, {OscKind::const_one, 2, "const_one"},
    {OscKind::const_one, 4, "const_one"}, {OscKind::beta00, 0, "beta00"},
    {OscKind::beta00, 2, "beta00"},       {OscKind::beta00, 4, "beta00"},
    {OscKind::beta11, 0, "beta11"},       {OscKind::beta11, 2, "beta11"},
    {OscKind::beta11, 4, "beta11"},
};

// low-branch prefix of a frame (entries are ascending in rho, so the damped
// branch is a suffix); used for the free-case closed-form cross-check
SpectralFrame low_branch_prefix(const SpectralFrame& frame) {
  SpectralFrame low = frame;
  std::size_t n_low = 0;
  while (n_low < low.entries.size() && !low.entries[n_low].high_branch) ++n_low;
  low.entries.resize(n_low);
  low.run_starts.erase(
      std::remove_if(low.run_starts.begin(), low.run_starts.end(),
                     [&](std::size_t s) { return s >= n_low; }),
      low.run_starts.end());
  return low;
}

// Median of pairwise log-log slopes (Theil-Sen). The sampled |integral| is an
// oscillating multiple of its decay envelope, so a least-squares line gets
// dragged by near-cancellation minima; the pairwise median shrugs them off.
double loglog_exponent(const std::vector<double>& M, const std::vector<double>& v,
                       std::size_t* n_used) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < M.size(); ++i) {
    if (!(std::abs(v[i]) > 0) || !std::isfinite(v[i])) continue;
    xs.push_back(std::log(M[i]));
    ys.push_back(std::log(std::abs(v[i])));
  }
  *n_used = xs.size();
  if (xs.size() < 2) return 999.0;  // identically-zero sweep decays faster than any power
  std::vector<double> slopes;
  slopes.reserve(xs.size() * (xs.size() - 1) / 2);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j)
      if (xs[j] != xs[i]) slopes.push_back((ys[j] - ys[i]) / (xs[j] - xs[i]));
  if (slopes.empty()) return 999.0;
  std::sort(slopes.begin(), slopes.end());
  std::size_t m = slopes.size() / 2;
  double med = (slopes.size() % 2) ? slopes[m] : 0.5 * (slopes[m - 1] + slopes[m]);
  return -med;
}

}  // namespace

RunManifest cmd_integrals(const RunConfig& cfg, const CliOptions& opt) {
  CmdContext c = begin_cmd("integrals", cfg, opt);
  if (c.skip) return c.prior;

  GridCurve gc;
  std::vector<ConjugationResult> reds;
  SpectralFrame frame;
  c.stage("curve", [&] { gc = build_energy_grid(cfg, opt); });
  c.stage("reduce",
          [&] { reds = reduce_grid(gc.energies, cfg.potential, schedule_for(cfg, opt), opt.threads); });
  c.stage("frame", [&] {
    FrameOptions fo;
    fo.max_fd_spacing = cfg.max_fd_spacing;
    frame = build_frame(cfg.potential, gc.curve, reds, effective_cutoff(cfg, false), fo);
    c.man.metrics["frame_rows"] = static_cast<double>(frame.size());
    c.man.metrics["frame_rejected"] = static_cast<double>(frame.rejected.size());
    double h_max = 0;
    for (std::size_t r = 0; r < frame.run_starts.size(); ++r) {
      std::size_t s = frame.run_starts[r];
      std::size_t e = (r + 1 < frame.run_starts.size()) ? frame.run_starts[r + 1] : frame.size();
      for (std::size_t i = s; i + 1 < e; ++i)
        h_max = std::max(h_max, frame.entries[i + 1].rho - frame.entries[i].rho);
    }
    if (h_max * cfg.m_max > kPi)
      throw ConfigError("integrals.m_max = " + g6(cfg.m_max) +
                        " needs energy_grid.spacing <= " + g6(kPi / cfg.m_max) +
                        " in rho (panel phase advance must stay below pi)");
  });

  // linear M grid: uniform phase resolution for the envelope windows below
  std::vector<double> Ms(cfg.n_m);
  {
    double dM = (cfg.m_max - cfg.m_min) / static_cast<double>(cfg.n_m - 1);
    for (std::size_t i = 0; i < cfg.n_m; ++i)
      Ms[i] = cfg.m_min + dM * static_cast<double>(i);
  }

  std::map<std::string, std::vector<double>> sweeps;  // "<name>:<k>" -> values
  c.stage("sweep", [&] {
    for (const SweepCombo& sc : kCombos) {
      std::vector<double> vals(Ms.size());
      for (std::size_t i = 0; i < Ms.size(); ++i)
        vals[i] = oscillatory_integral(frame, sc.kind, sc.k, Ms[i], cfg.x_off, cfg.y_off);
      sweeps[std::string(sc.name) + ":" + std::to_string(sc.k)] = std::move(vals);
    }
    // the paper-style mean-subtracted k = 0 product, by linearity
    std::vector<double> m1(Ms.size());
    for (std::size_t i = 0; i < Ms.size(); ++i)
      m1[i] = sweeps["beta00:0"][i] - sweeps["const_one:0"][i];
    sweeps["beta00m1:0"] = std::move(m1);

    if (cfg.potential.empty()) {
      // free case: the low-branch k=0 sweep telescopes to the sine family
      SpectralFrame low = low_branch_prefix(frame);
      double dev = 0;
      if (!low.entries.empty()) {
        for (double M : Ms) {
          double closed = 0;
          for (std::size_t r = 0; r < low.run_starts.size(); ++r) {
            std::size_t s = low.run_starts[r];
            std::size_t e =
                (r + 1 < low.run_starts.size()) ? low.run_starts[r + 1] : low.entries.size();
            if (e - s < 2) continue;
            closed +=
                (std::sin(M * low.entries[e - 1].rho) - std::sin(M * low.entries[s].rho)) / M;
          }
          dev = std::max(dev,
                         std::abs(oscillatory_integral(low, OscKind::const_one, 0, M) - closed));
        }
      }
      c.man.metrics["free_k0_closed_form_dev"] = dev;
    }
  });

  struct ExpRow {
    std::string name;
    int k = 0;
    double exponent = 0;
    std::size_t n = 0;
  };
  std::vector<ExpRow> fits;
  c.stage("fit", [&] {
    // The sweep is an oscillating multiple of its decay envelope (boundary
    // sine terms beat against each other), so fit the envelope: sup |v| over
    // sliding windows wide enough for one period of the slowest boundary
    // phase 2 pi / rho_min, at log-spaced centers. Narrower windows at small
    // M cannot reach full constructive alignment and bias the fit flat.
    double W = 2.0 * kPi / frame.entries.front().rho;
    W = std::min(W, (cfg.m_max - cfg.m_min) / 8.0);  // keep a usable center span
    double c_lo = cfg.m_min + 0.5 * W, c_hi = cfg.m_max - 0.5 * W;
    const std::size_t n_env = 24;
    std::vector<double> centers(n_env);
    for (std::size_t i = 0; i < n_env; ++i)
      centers[i] = c_lo * std::exp(std::log(c_hi / c_lo) * static_cast<double>(i) /
                                   static_cast<double>(n_env - 1));

    // values at the quadrature's rounding floor are treated as zero, so an
    // identically-vanishing integrand reports the 999 sentinel instead of
    // fitting its own noise
    double floor = 1e-14 * (frame.entries.back().rho - frame.entries.front().rho);
    auto envelope = [&](const std::vector<double>& vals) {
      std::vector<double> env(n_env, 0.0);
      for (std::size_t i = 0; i < n_env; ++i)
        for (std::size_t q = 0; q < Ms.size(); ++q)
          if (std::abs(Ms[q] - centers[i]) <= 0.5 * W && std::abs(vals[q]) >= floor)
            env[i] = std::max(env[i], std::abs(vals[q]));
      return env;
    };

    for (const SweepCombo& sc : kCombos) {
      ExpRow row;
      row.name = sc.name;
      row.k = sc.k;
      std::vector<double> env = envelope(sweeps.at(std::string(sc.name) + ":" + std::to_string(sc.k)));
      row.exponent = loglog_exponent(centers, env, &row.n);
      fits.push_back(row);
    }
    ExpRow row;
    row.name = "beta00m1";
    std::vector<double> env = envelope(sweeps.at("beta00m1:0"));
    row.exponent = loglog_exponent(centers, env, &row.n);
    fits.push_back(row);

    double mn = 1e300;
    for (const ExpRow& r : fits) {
      if (r.n >= 2)
        c.man.metrics["exponent_" + r.name + "_" + std::to_string(r.k)] = r.exponent;
      if (r.n >= 2) mn = std::min(mn, r.exponent);
    }
    if (mn < 1e300) c.man.metrics["exponent_min"] = mn;
    c.man.metrics["n_fit_windows"] = static_cast<double>(n_env);
  });

  c.stage("write", [&] {
    std::ostringstream s;
    s << "f_kind,k,M,value\n";
    auto dump = [&](const char* name, int k) {
      const std::vector<double>& vals = sweeps.at(std::string(name) + ":" + std::to_string(k));
      for (std::size_t i = 0; i < Ms.size(); ++i)
        s << name << "," << k << "," << g17(Ms[i]) << "," << g17(vals[i]) << "\n";
    };
    for (const SweepCombo& sc : kCombos) dump(sc.name, sc.k);
    dump("beta00m1", 0);
    c.emit("integrals_sweep.csv", s.str());

    std::ostringstream e;
    e << "f_kind,k,exponent,n_fit\n";
    for (const auto& r : fits)
      e << r.name << "," << r.k << "," << g17(r.exponent) << "," << r.n << "\n";
    c.emit("integrals_exponents.csv", e.str());
  });

  c.man.metrics["n_m"] = static_cast<double>(cfg.n_m);
  return c.finish();
}

// ------------------------------------------------------------------ report

RunManifest cmd_report(const std::string& out_dir, const CliOptions& opt) {
  if (!fs::is_directory(out_dir)) throw IoError("report: no such directory: " + out_dir);

  RunManifest man;
  man.command = "report";
  man.config_hash = "-";
  man.tool_version = tool_version();
  man.started_at = utc_now_iso();
  man.seed = opt.seed;

  // gather manifests, sorted by file name for a deterministic summary
  std::vector<std::string> mfiles;
  for (const auto& de : fs::directory_iterator(out_dir)) {
    if (!de.is_regular_file()) continue;
    std::string name = de.path().filename().string();
    if (name.size() > 14 && name.substr(name.size() - 14) == "_manifest.json" &&
        name != "report_manifest.json")
      mfiles.push_back(name);
  }
  std::sort(mfiles.begin(), mfiles.end());

  std::vector<RunManifest> runs;
  for (const std::string& name : mfiles) {
    RunManifest m;
    if (read_manifest((fs::path(out_dir) / name).string(), m)) runs.push_back(m);
  }
  man.stage_ok("scan");

  // file accounting: every data file must be claimed by exactly one manifest
  std::vector<std::string> report_outputs = {"report_summary.txt"};
  bool want_svg = false;
  std::map<std::string, int> claims;
  for (const RunManifest& m : runs)
    for (const std::string& f : m.outputs) claims[f]++;
  std::vector<std::string> orphans, multi;
  for (const auto& de : fs::directory_iterator(out_dir)) {
    if (!de.is_regular_file()) continue;
    std::string name = de.path().filename().string();
    std::string ext = de.path().extension().string();
    if (ext != ".csv" && ext != ".txt" && ext != ".dat" && ext != ".svg") continue;
    if (std::find(report_outputs.begin(), report_outputs.end(), name) != report_outputs.end())
      continue;
    if (name == "report.svg") continue;  // regenerated below
    if (claims.find(name) == claims.end()) orphans.push_back(name);
  }
  for (const auto& [f, n] : claims)
    if (n > 1) multi.push_back(f);
  std::sort(orphans.begin(), orphans.end());
  std::sort(multi.begin(), multi.end());
  man.stage_ok("audit");

  // headline figure: transport diffusion if available, else integrals decay
  std::string svg;
  {
    auto norms = read_csv_columns((fs::path(out_dir) / "transport_norms.csv").string());
    auto sweep = read_csv_columns((fs::path(out_dir) / "integrals_sweep.csv").string());
    if (norms.count("t") && norms.count("diffusion")) {
      std::vector<SvgSeries> ss;
      ss.push_back({norms["t"], norms["diffusion"], "#1f6fb4", false});
      for (const RunManifest& m : runs)
        if (m.command == "transport" && m.metrics.count("slope") &&
            m.metrics.count("fit_intercept")) {
          double sl = m.metrics.at("slope"), ic = m.metrics.at("fit_intercept");
          std::vector<double> ft = {norms["t"].front(), norms["t"].back()};
          ss.push_back({ft, {sl * ft[0] + ic, sl * ft[1] + ic}, "#d62728", true});
        }
      svg = svg_plot("diffusion norm vs time", "t", "diffusion norm", ss);
    } else if (sweep.count("M") && sweep.count("value")) {
      // log-log of the beta00 k=2 sweep; re-read by hand for the combo filter
      std::ifstream in((fs::path(out_dir) / "integrals_sweep.csv").string());
      std::string line;
      std::getline(in, line);
      std::vector<double> lx, ly;
      while (std::getline(in, line)) {
        std::stringstream ssl(line);
        std::string kind, kcol, mcol, vcol;
        std::getline(ssl, kind, ',');
        std::getline(ssl, kcol, ',');
        std::getline(ssl, mcol, ',');
        std::getline(ssl, vcol, ',');
        if (kind != "beta00" || kcol != "2") continue;
        double M = std::strtod(mcol.c_str(), nullptr);
        double v = std::abs(std::strtod(vcol.c_str(), nullptr));
        if (v > 0) {
          lx.push_back(std::log10(M));
          ly.push_back(std::log10(v));
        }
      }
      if (!lx.empty())
        svg = svg_plot("oscillatory integral decay, beta00 k=2", "log10 M", "log10 |integral|",
                       {{lx, ly, "#1f6fb4", false}});
    }
  }
  if (!svg.empty()) {
    want_svg = true;
    report_outputs.push_back("report.svg");
  }

  std::ostringstream s;
  s << "qpt run summary: " << out_dir << "\n";
  s << "tool " << tool_version() << ", generated " << man.started_at << "\n";
  for (const RunManifest& m : runs) {
    s << "\n=== " << m.command << " (hash " << m.config_hash << ", "
      << (m.complete ? "complete" : "INCOMPLETE") << ", finished " << m.finished_at << ") ===\n";
    s << "  stages:";
    for (const StageStatus& st : m.stages) s << " " << st.name << "=" << st.status << ";";
    s << "\n";
    if (!m.flags.empty()) {
      s << "  flags:";
      for (const std::string& f : m.flags) s << " " << f;
      s << "\n";
    }
    s << "  metrics:\n";
    for (const auto& [k, v] : m.metrics) s << "    " << k << " = " << g17(v) << "\n";
    s << "  outputs:";
    for (const std::string& f : m.outputs) s << " " << f;
    s << "\n";
  }
  s << "\n=== file audit ===\n";
  if (orphans.empty() && multi.empty()) {
    s << "  clean: every data file is claimed by exactly one manifest\n";
  } else {
    for (const std::string& f : orphans) s << "  orphan (no manifest claims it): " << f << "\n";
    for (const std::string& f : multi) s << "  multiply claimed: " << f << "\n";
  }

  write_file_atomic((fs::path(out_dir) / "report_summary.txt").string(), s.str());
  if (want_svg) write_file_atomic((fs::path(out_dir) / "report.svg").string(), svg);
  man.outputs = report_outputs;
  man.stage_ok("write");

  man.metrics["n_manifests"] = static_cast<double>(runs.size());
  man.metrics["n_orphans"] = static_cast<double>(orphans.size());
  man.metrics["n_multi_referenced"] = static_cast<double>(multi.size());
  man.complete = true;
  man.finished_at = utc_now_iso();
  write_manifest(man, manifest_path(out_dir, "report"));
  std::printf("qpt report: %zu manifest(s), %zu orphan(s), summary in %s\n", runs.size(),
              orphans.size(), out_dir.c_str());
  return man;
}

// ---------------------------------------------------------------- dispatch

int run_command(const std::string& command, const CliOptions& opt) {
  try {
    if (command == "report") {
      std::string dir = opt.out_override;
      if (dir.empty()) {
        if (opt.config_path.empty())
          throw ConfigError("report needs --config (for its output_dir) or --out");
        dir = load_config(opt.config_path).output_dir;
      }
      cmd_report(dir, opt);
      return 0;
    }
    if (opt.config_path.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_config(opt.config_path);
    if (command == "rotation")
      cmd_rotation(cfg, opt);
    else if (command == "reduce")
      cmd_reduce(cfg, opt);
    else if (command == "transport")
      cmd_transport(cfg, opt);
    else if (command == "integrals")
      cmd_integrals(cfg, opt);
    else
      throw ConfigError("unknown command: " + command);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "qpt %s: validation error: %s\n", command.c_str(), e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "qpt %s: i/o error: %s\n", command.c_str(), e.what());
    return 4;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "qpt %s: numerical failure: %s\n", command.c_str(), e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "qpt %s: internal error: %s\n", command.c_str(), e.what());
    return 3;
  }
}

}  // namespace qpt
