#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qpt/potential.hpp"
#include "qpt/trig_series.hpp"

namespace qpt {

// Iterative conjugation of the first-order system
//   (q, q')' = (A0(E) + F0(omega x)) (q, q'),   A0 = [[0,1],[-E,0]],
// toward a constant coefficient matrix. Each sweep solves the linearized
// commutator equation for an exponent Y, conjugates exactly in series
// arithmetic, and absorbs the surviving mean into the constant part. Near a
// resonance the rotation is renormalized by a torus shift before solving.

struct KamSchedule {
  double eps0 = 1e-3;          // nominal size of the starting perturbation
  double sigma = 0.02;         // exponent gain per sweep
  int max_steps = 8;
  double divisor_floor = 1e-6; // modes with any divisor below this are diverted
  double target = 1e-10;       // finished when |F|_1 drops below this
  int support_cap = 64;        // hard l1 cap for series supports in products
  double prune_eps = 1e-16;
  int n_theta = 64;            // phases for the independent residual check
  std::uint64_t theta_seed = 2026;

  double eps(int j) const;     // eps_{j}, the planned perturbation sizes
  double trunc_n(int j) const; // N_j, the planned truncation radii
  void validate() const;
};

enum class ReduceStatus { converged, resonant_skipped, diverged };
const char* to_string(ReduceStatus s);

struct ResonanceRecord {
  int step = 0;
  ModeIndex k;    // canonical label, <k,omega> > 0
  int sign = 1;   // orientation of the rotation the shift removed
};

// Thrown when the constant part leaves the elliptic regime in the same sweep
// that renormalized a resonance: the caller keeps the record (it is what
// distinguishes a gap energy from a genuine divergence).
struct ResonantLocking : HyperbolicInput {
  ResonanceRecord record;
  ResonantLocking(const std::string& msg, ResonanceRecord rec)
      : HyperbolicInput(msg), record(std::move(rec)) {}
};

struct ConjugationResult {
  double E = 0.0;
  ReduceStatus status = ReduceStatus::diverged;
  std::array<double, 4> B{0, 0, 0, 0};  // constant generator, exactly traceless
  double alpha = 0.0;     // imaginary part of B's eigenvalue pair +-i*alpha
  double xi = 0.0;        // renormalized rotation: alpha - sum <k_j,omega>/2
  double residual = 0.0;  // sup-norm defect of the conjugation identity
  MatSeries Y{1};         // quasi-periodic conjugation, D_w Y = (A0+F0)Y - Y B
  std::vector<ResonanceRecord> resonances;
  std::vector<double> f_norms;  // |F_j|_1 per sweep, f_norms[0] is the input
  int steps = 0;
  std::string message;
};

// A0(E) and the series lift of the potential into the lower-left entry.
std::array<double, 4> schrodinger_generator(double E);
MatSeries potential_to_series(const QuasiPeriodicPotential& v);

// Real frame for an elliptic constant matrix: A = upsilon * S J S^{-1} with
// J the rotation generator, det S > 0, |upsilon| = alpha > 0. Throws
// HyperbolicInput when the eigenvalues are not purely imaginary.
struct EllipticFrame {
  double alpha = 0.0;
  double upsilon = 0.0;  // signed rotation rate
  std::array<double, 4> S{1, 0, 0, 1};
  std::array<double, 4> S_inv{1, 0, 0, 1};
};
EllipticFrame decompose_elliptic(const std::array<double, 4>& a);

// One linearized commutator solve: i<k,omega> Y_k = [A, Y_k] + F_k per mode,
// in the eigenbasis of A, for 0 < |k|_1 <= n_trunc. Modes where any divisor
// falls below divisor_floor are diverted to `removed` untouched; the zero
// mode is the caller's to absorb.
struct HomologicalResult {
  MatSeries Y;
  std::vector<ModeIndex> removed;
  HomologicalResult(int d) : Y(d) {}
};
HomologicalResult homological_solve(const std::array<double, 4>& a, const MatSeries& f,
                                    const FrequencyVector& freq, int n_trunc,
                                    double divisor_floor);

// One full sweep: resonance scan (with torus-shift renormalization when one
// is found), mean absorption, homological solve, exact conjugation by e^Y.
// Throws HyperbolicInput when the constant part leaves the elliptic regime
// and NoContraction when the remainder refuses to shrink.
struct KamStepOutcome {
  std::array<double, 4> a_next{0, 0, 0, 0};
  MatSeries f_next;
  MatSeries z;  // the sweep's conjugation factor, W * e^Y
  bool renormalized = false;
  ResonanceRecord resonance;
  KamStepOutcome(int d) : f_next(d), z(d) {}
};
KamStepOutcome kam_step(const std::array<double, 4>& a, const MatSeries& f,
                        const FrequencyVector& freq, const KamSchedule& sched, int step);

// Full reduction at energy E. On convergence B has eigenvalues +-i*alpha with
// alpha reconstructing the rotation number, and `residual` is re-measured from
// scratch on quasi-random phases. alpha/xi are meaningful only on convergence.
ConjugationResult reduce_cocycle(double E, const QuasiPeriodicPotential& v,
                                 const KamSchedule& sched = {});

// sup over n_theta quasi-random phases of |D_w Y - (A0 + F0) Y + Y B|.
double conjugation_residual(const MatSeries& y, const std::array<double, 4>& b, double E,
                            const QuasiPeriodicPotential& v, int n_theta,
                            std::uint64_t seed);

// Bloch-wave coefficients: psi(x) = e^{i rho x} (beta0 + i rho beta1)(x) built
// from the eigenvector (B12, i rho - B11). Requires a converged reduction.
// With smoothing enabled, coefficients at |xi| below the threshold are scaled
// by xi^8 instead of being reported raw.
struct BlochCoefficients {
  ScalarSeries beta0;
  ScalarSeries beta1;
  double E = 0.0;
  double rho = 0.0;
  bool smoothing_applied = false;
  BlochCoefficients(int d) : beta0(d), beta1(d) {}
};
BlochCoefficients bloch_from_reduction(const ConjugationResult& r, double rho,
                                       bool smoothing = false, double xi_threshold = 0.1);

// sup_{x in [0, x_max]} |H psi - E psi| by direct substitution, sampled on an
// n_samples grid; derivatives are exact per mode.
double bloch_residual_sup(const BlochCoefficients& b, const QuasiPeriodicPotential& v,
                          double x_max, int n_samples);

}  // namespace qpt
