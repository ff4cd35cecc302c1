#include "qpt/evolve.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <string>

#include "qpt/errors.hpp"
#include "qpt/num.hpp"

namespace qpt {

namespace {

// FFTW's planner mutates global state; executions on distinct plans are fine.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr double kBoundaryCap = 1e-6;
constexpr double kDriftCap = 1e-8;

struct FftPair {
  std::size_t n = 0;
  fftw_complex* buf = nullptr;
  fftw_plan fwd = nullptr, bwd = nullptr;

  explicit FftPair(std::size_t n_) : n(n_) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    buf = fftw_alloc_complex(n);
    if (!buf) throw NumericError("FFT buffer allocation failed");
    int ni = static_cast<int>(n);
    fwd = fftw_plan_dft_1d(ni, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_1d(ni, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~FftPair() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (buf) fftw_free(buf);
  }
  FftPair(const FftPair&) = delete;
  FftPair& operator=(const FftPair&) = delete;

  std::complex<double>* data() { return reinterpret_cast<std::complex<double>*>(buf); }
};

double xi_of(std::size_t m, std::size_t n, double L) {
  auto mi = static_cast<std::ptrdiff_t>(m);
  if (m >= n / 2) mi -= static_cast<std::ptrdiff_t>(n);
  return 3.14159265358979323846 * static_cast<double>(mi) / L;
}

}  // namespace

void SpatialGrid::validate() const {
  if (!(half_length > 0)) throw ConfigError("grid half-length must be positive");
  if (n_points < 16 || (n_points & (n_points - 1)) != 0)
    throw ConfigError("grid size must be a power of two >= 16");
}

WaveState init_packet(const SpatialGrid& grid, double x0, double width, double momentum) {
  grid.validate();
  if (!(width > 0)) throw ConfigError("packet width must be positive");
  double z = (grid.half_length - std::abs(x0)) / width;
  // erfc(z) bounds the ideal packet's L2 mass outside [-L, L]
  if (!(z > 0) || std::erfc(z) > 1e-12)
    throw PacketTooWide("packet tail mass at the domain boundary exceeds 1e-12 (offset " +
                        std::to_string(x0) + ", width " + std::to_string(width) + ", L " +
                        std::to_string(grid.half_length) + ")");

  WaveState s;
  s.grid = grid;
  s.psi.resize(grid.n_points);
  double mass = 0;
  for (std::size_t i = 0; i < grid.n_points; ++i) {
    double x = grid.x(i);
    double u = (x - x0) / width;
    double amp = std::exp(-0.5 * u * u);
    s.psi[i] = std::polar(amp, momentum * x);
    mass += amp * amp;
  }
  mass *= grid.dx();
  double scale = 1.0 / std::sqrt(mass);
  for (auto& v : s.psi) v *= scale;
  return s;
}

struct StrangPropagator::Impl {
  SpatialGrid grid;
  double dt;
  FftPair fft;
  std::vector<std::complex<double>> half_v;  // e^{-i V(x_i) dt/2}
  std::vector<std::complex<double>> kinetic;  // e^{-i xi_m^2 dt}

  Impl(const SpatialGrid& g, const QuasiPeriodicPotential& V, double dt_)
      : grid(g), dt(dt_), fft(g.n_points) {
    half_v.resize(g.n_points);
    kinetic.resize(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i)
      half_v[i] = std::polar(1.0, -0.5 * dt * V.eval(g.x(i)));
    for (std::size_t m = 0; m < g.n_points; ++m) {
      double xi = xi_of(m, g.n_points, g.half_length);
      kinetic[m] = std::polar(1.0, -dt * xi * xi);
    }
  }
};

StrangPropagator::StrangPropagator(const SpatialGrid& grid, const QuasiPeriodicPotential& V,
                                   double dt) {
  grid.validate();
  if (!std::isfinite(dt)) throw ConfigError("time step must be finite");
  impl_ = std::make_unique<Impl>(grid, V, dt);
}

StrangPropagator::~StrangPropagator() = default;

double StrangPropagator::dt() const { return impl_->dt; }

void StrangPropagator::step(WaveState& state) {
  const std::size_t n = impl_->grid.n_points;
  if (state.psi.size() != n) throw ConfigError("state does not match the propagator grid");
  std::complex<double>* w = impl_->fft.data();
  for (std::size_t i = 0; i < n; ++i) w[i] = state.psi[i] * impl_->half_v[i];
  fftw_execute(impl_->fft.fwd);
  double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t m = 0; m < n; ++m) w[m] *= impl_->kinetic[m] * inv_n;
  fftw_execute(impl_->fft.bwd);
  for (std::size_t i = 0; i < n; ++i) state.psi[i] = w[i] * impl_->half_v[i];
  state.time += impl_->dt;
}

WaveState step_strang(const WaveState& state, const QuasiPeriodicPotential& V, double dt) {
  StrangPropagator prop(state.grid, V, dt);
  WaveState out = state;
  prop.step(out);
  return out;
}

Norms norms(const WaveState& state) {
  const SpatialGrid& g = state.grid;
  g.validate();
  const std::size_t n = g.n_points;
  if (state.psi.size() != n) throw ConfigError("state size does not match its grid");
  Norms out;
  double dx = g.dx();
  double band = 0.9 * g.half_length;
  double l2 = 0, diff = 0, bnd = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = g.x(i);
    double p = std::norm(state.psi[i]);
    l2 += p;
    diff += x * x * p;
    if (std::abs(x) > band) bnd += p;
  }
  out.l2 = std::sqrt(l2 * dx);
  out.diffusion = std::sqrt(diff * dx);
  out.boundary_mass = bnd * dx;

  FftPair fft(n);
  std::memcpy(fft.data(), state.psi.data(), n * sizeof(std::complex<double>));
  fftw_execute(fft.fwd);
  const std::complex<double>* w = fft.data();
  double grad = 0;
  for (std::size_t m = 0; m < n; ++m) {
    double xi = xi_of(m, n, g.half_length);
    grad += xi * xi * std::norm(w[m]);
  }
  out.grad = std::sqrt(grad * dx / static_cast<double>(n));
  out.h1 = std::hypot(out.l2, out.grad);
  return out;
}

namespace {

std::size_t step_count(double T, double dt) {
  if (!(T >= 0)) throw ConfigError("evolution time must be >= 0");
  if (!(dt > 0)) throw ConfigError("dt must be positive");
  double raw = T / dt;
  auto n = static_cast<std::size_t>(std::llround(raw));
  if (std::abs(static_cast<double>(n) * dt - T) > 1e-9 * std::max(1.0, T))
    throw ConfigError("T must be an integer multiple of dt");
  return n;
}

}  // namespace

NormSeries evolve_and_record(const WaveState& q0, const QuasiPeriodicPotential& V, double T,
                             double dt, std::size_t sample_stride) {
  if (sample_stride == 0) throw ConfigError("sample stride must be >= 1");
  std::size_t n_steps = step_count(T, dt);

  NormSeries series;
  WaveState s = q0;
  StrangPropagator prop(q0.grid, V, dt);

  Norms first = norms(s);
  double l2_ref = first.l2;
  auto record = [&](double t, const Norms& nm) {
    if (nm.boundary_mass > kBoundaryCap) {
      series.truncated = true;
      return false;
    }
    if (std::abs(nm.l2 - l2_ref) > kDriftCap)
      throw NumericError("L2 norm drifted by " + std::to_string(std::abs(nm.l2 - l2_ref)) +
                         " (tolerance 1e-8)");
    series.t.push_back(t);
    series.l2.push_back(nm.l2);
    series.h1.push_back(nm.h1);
    series.diffusion.push_back(nm.diffusion);
    series.boundary_mass.push_back(nm.boundary_mass);
    return true;
  };
  if (!record(q0.time, first)) return series;

  for (std::size_t i = 1; i <= n_steps; ++i) {
    prop.step(s);
    if (i % sample_stride == 0 || i == n_steps) {
      if (!record(s.time, norms(s))) break;
    }
  }
  return series;
}

WaveState evolve_state(const WaveState& q0, const QuasiPeriodicPotential& V, double T, double dt) {
  std::size_t n_steps = step_count(T, dt);
  WaveState s = q0;
  StrangPropagator prop(q0.grid, V, dt);
  for (std::size_t i = 0; i < n_steps; ++i) prop.step(s);
  return s;
}

SlopeFit fit_slope(const NormSeries& series, double late_fraction) {
  if (!(late_fraction > 0) || late_fraction > 1)
    throw ConfigError("late_fraction must lie in (0, 1]");
  std::size_t m = series.size();
  auto k = static_cast<std::size_t>(std::ceil(late_fraction * static_cast<double>(m)));
  if (k < 10)
    throw WindowTooSmall("slope fit needs >= 10 samples in the late window, got " +
                         std::to_string(k));
  std::size_t start = m - k;
  std::vector<double> ts(series.t.begin() + static_cast<std::ptrdiff_t>(start), series.t.end());
  std::vector<double> ds(series.diffusion.begin() + static_cast<std::ptrdiff_t>(start),
                         series.diffusion.end());
  LineFit f = fit_line(ts, ds);
  SlopeFit out;
  out.slope = std::max(0.0, f.slope);
  out.r2 = f.r2;
  out.n = k;
  return out;
}

double check_upper_bound(const NormSeries& series, const Norms& q0_norms) {
  double denom = q0_norms.h1 + q0_norms.diffusion;
  if (!(denom > 0)) return 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    double t = series.t[i] - (series.size() ? series.t[0] : 0.0);
    if (t <= 0) continue;
    c = std::max(c, (series.diffusion[i] - q0_norms.diffusion) / (denom * t));
  }
  return c;
}

}  // namespace qpt
