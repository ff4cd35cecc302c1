#pragma once

// Modified spectral transformation built from per-energy Bloch data.
//
// A frame collects, over the energies that survived classification and
// reduction, the rotation number rho, its E-derivative, the Bloch
// coefficients beta0/beta1 and the measure weight
//
//   w(E) = (pi drho)^-1             rho <= cutoff,
//   w(E) = (pi drho (1+rho^8))^-1   rho >  cutoff.
//
// The transform of a state q is the pair G(E) = (int q K dx, int q J dx)
// with K = beta0 sin(x rho) + beta1 rho cos(x rho) and
// J = beta0 cos(x rho) - beta1 rho sin(x rho); its measures dphi = w dE,
// dphi_hat = (drho)^2 dphi and dphi_tilde = 4 rho^2 (drho)^2 dphi give the
// norms whose free-case values collapse to classical Fourier identities.

#include <qpt/cocycle.hpp>
#include <qpt/evolve.hpp>
#include <qpt/reduce.hpp>

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace qpt {

enum class MeasureKind { dphi, dphi_hat, dphi_tilde };

// One retained energy. The beta series are flattened to parallel arrays so
// x-evaluation is a plain dot with e^{i mu x}; evaluations are real up to
// rounding (coefficients inherit the hermitian mode symmetry) and the
// residual imaginary part is dropped.
struct FrameEntry {
  double E = 0;
  double rho = 0;
  double drho = 0;    // finite difference across the retained run
  double w = 0;       // measure weight, branch per cutoff
  double quad_w = 0;  // trapezoid weight for int . dE; gaps contribute zero
  bool high_branch = false;
  std::vector<double> mu;                      // half-lattice frequencies <k,omega>/2
  std::vector<std::complex<double>> b0, b1;    // beta0, beta1 mode coefficients
  std::vector<std::complex<double>> db0, db1;  // d/dE of the same modes
};

struct FrameOptions {
  // Energies whose reduction renormalized sit on a resonant layer. By default
  // they are dropped from the frame (the retained grid is the non-resonant
  // set); setting this keeps them with the beta series tamed by xi^8 instead.
  bool smooth_resonant = false;
  // derivative_transform refuses frames whose retained grid is coarser.
  double max_fd_spacing = 0.1;
};

struct SpectralFrame {
  FrequencyVector freq;
  double cutoff_rho_c = 0;
  double max_spacing = 0;      // widest E step inside a retained run
  double fd_spacing_limit = 0.1;
  std::vector<FrameEntry> entries;      // ascending in E
  std::vector<std::string> rejected;    // diagnostics for dropped grid points
  std::vector<std::size_t> run_starts;  // entry index where a contiguous run begins

  std::size_t size() const { return entries.size(); }
  std::size_t locate(double E) const;  // EnergyNotInFrame if absent
};

// The paper-default branch boundary, eps0^(-sigma/4).
double default_cutoff(double eps0, double sigma);

// Assembles the frame from a classified rotation curve and the per-energy
// reductions (same grid, same order). Keeps energies that are classified
// spectrum, converged, and carry drho > 0; everything else lands in
// `rejected` with a reason. Throws EmptyFrame when nothing survives.
SpectralFrame build_frame(const QuasiPeriodicPotential& V, const RotationCurve& curve,
                          const std::vector<ConjugationResult>& reductions, double cutoff_rho_c,
                          const FrameOptions& opt = {});

struct KJ {
  double K = 0, J = 0;
};

// Kernel pair at a frame energy; E must match a retained entry.
KJ eval_K_J(const SpectralFrame& frame, double E, double x);

// Per-energy transformed pair, aligned with frame.entries.
struct TransformedPair {
  std::vector<std::complex<double>> g1, g2;
  std::size_t size() const { return g1.size(); }
};

// Sq = (int q K dx, int q J dx) by trapezoid on q's grid.
TransformedPair apply_transform(const WaveState& q, const SpectralFrame& frame);

// sqrt( sum_E (|g1|^2+|g2|^2) w_kind quad_w ), w_dphi = w,
// w_dphi_hat = (drho)^2 w, w_dphi_tilde = 4 rho^2 (drho)^2 w.
double transform_norm(const TransformedPair& G, const SpectralFrame& frame, MeasureKind kind);

// (int q dK dx, int q dJ dx) with dK, dJ the E-derivatives of the kernels
// (chain rule through beta, rho). Throws GridTooCoarse when the retained grid
// is too wide for the finite-difference data the frame carries.
TransformedPair derivative_transform(const WaveState& q, const SpectralFrame& frame);

// C = |S q0|_dphi, the constant in the ballistic lower bound.
double ballistic_constant(const WaveState& q0, const SpectralFrame& frame);

enum class OscKind { const_one, beta00, beta11 };

// int f rho^k cos(M rho) drho over the retained grid, low branch plus
// (1+rho^8)-damped high branch, integrated in the rho variable with a
// linear-Filon rule per panel (exact when the non-oscillatory factor is
// piecewise linear, so const_one with k=0 gives sin(M rho) / M differences
// exactly). f = beta_l(x_off) beta_l(y_off) for the beta kinds.
// Requires |M| > 1 and power_k in {0,2,4}; throws QuadratureUnderResolved
// when a panel is wider than pi/M in rho.
double oscillatory_integral(const SpectralFrame& frame, OscKind f_kind, int power_k, double M,
                            double x_off = 0.7, double y_off = -1.3);

// Classical free-case Parseval check: integrates |int q cos(sqrt(E)x)dx|^2
// and |int q sin(sqrt(E)x)/sqrt(E) dx|^2 against (1/2pi)(E^-1/2, E^1/2) dE up
// to E_max (in the rho variable, n_rho trapezoid nodes) and returns the
// relative defect against |q|^2. Only meaningful for V = 0 states.
double verify_classical_parseval(const WaveState& q, double E_max, std::size_t n_rho = 2001);

}  // namespace qpt
