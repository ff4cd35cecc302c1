#pragma once
#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include "qpt/potential.hpp"

namespace qpt {

// Periodic domain [-L, L) sampled at n points; wavenumbers xi_m = pi*m/L
// with m in [-n/2, n/2).
struct SpatialGrid {
  double half_length = 400.0;
  std::size_t n_points = 8192;

  double dx() const { return 2.0 * half_length / static_cast<double>(n_points); }
  double x(std::size_t i) const { return -half_length + static_cast<double>(i) * dx(); }
  void validate() const;  // L > 0, n a power of two >= 16
};

struct WaveState {
  SpatialGrid grid;
  std::vector<std::complex<double>> psi;
  double time = 0.0;
};

struct Norms {
  double l2 = 0;
  double grad = 0;  // ||q'||_{L2}, spectral derivative
  double h1 = 0;    // sqrt(l2^2 + grad^2)
  double diffusion = 0;
  double boundary_mass = 0;  // L2 mass in the outer 10% of the domain
};

struct NormSeries {
  std::vector<double> t, l2, h1, diffusion, boundary_mass;
  bool truncated = false;  // containment cut the run short
  std::size_t size() const { return t.size(); }
};

// Normalized Gaussian exp(-(x-x0)^2/(2 width^2)) exp(i momentum x).
// Rejects packets whose ideal tail mass outside the domain exceeds 1e-12.
WaveState init_packet(const SpatialGrid& grid, double x0, double width, double momentum);

// Strang splitting: half potential phase, exact kinetic factor e^{-i xi^2 dt}
// in Fourier space, half potential phase. V = 0 evolution is exact per step,
// and dt < 0 runs the exact inverse (time reversal).
class StrangPropagator {
 public:
  StrangPropagator(const SpatialGrid& grid, const QuasiPeriodicPotential& V, double dt);
  ~StrangPropagator();
  StrangPropagator(const StrangPropagator&) = delete;
  StrangPropagator& operator=(const StrangPropagator&) = delete;

  void step(WaveState& state);
  double dt() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// single-step convenience wrapper (builds plans each call; use the class for runs)
WaveState step_strang(const WaveState& state, const QuasiPeriodicPotential& V, double dt);

Norms norms(const WaveState& state);

// Steps q0 for n = T/dt steps (T must be a multiple of dt), sampling norms at
// t = 0 and every sample_stride steps. Aborts with a flag (not an error) once
// boundary mass exceeds 1e-6; samples past that point are not retained.
// Throws NumericError if the L2 norm drifts by more than 1e-8.
NormSeries evolve_and_record(const WaveState& q0, const QuasiPeriodicPotential& V, double T,
                             double dt, std::size_t sample_stride);

// endpoint state only
WaveState evolve_state(const WaveState& q0, const QuasiPeriodicPotential& V, double T, double dt);

struct SlopeFit {
  double slope = 0;
  double r2 = 0;
  std::size_t n = 0;  // samples in the fit window
};

// Least-squares line through diffusion(t) over the last late_fraction of the
// samples; needs at least 10 samples in the window.
SlopeFit fit_slope(const NormSeries& series, double late_fraction);

// Smallest c with diffusion(t) <= diffusion(0) + c (h1_0 + diffusion_0) t
// over all samples.
double check_upper_bound(const NormSeries& series, const Norms& q0_norms);

}  // namespace qpt
