#pragma once
#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "qpt/potential.hpp"

namespace qpt {

// Fundamental matrix of  (q, q')' = [[0,1],[V(omega x)-E,0]] (q, q')
// together with the unwrapped argument of Phi(x) X0.
struct CocycleState {
  double x = 0.0;
  std::array<double, 4> Phi = {1, 0, 0, 1};  // row-major
  double phase = 0.0;
  double det_err = 0.0;  // max |det Phi - 1| at step boundaries, above the fp measurement floor
};

struct IntegrateOptions {
  double h = 2e-3;
  std::array<double, 2> x0 = {1.0, 0.0};  // tracked initial vector
  // Fixed-step RK4 drifts in det by ~ (h^2 E)^3/72 per step; h is clamped so
  // the accumulated drift stays within this budget (spec tolerance is 1e-8).
  double det_budget = 1e-9;
  int max_halvings = 24;  // phase guard |dphi| < pi/2 splits steps up to this depth
};

// Called after every accepted step with (x, unwrapped phase).
using PhaseObserver = std::function<void(double, double)>;

CocycleState integrate_cocycle(double E, const QuasiPeriodicPotential& V, double T,
                               const IntegrateOptions& opt = {},
                               const PhaseObserver& observer = {});

struct RotationEstimate {
  double rho = 0.0;      // rotation number (absolute winding rate)
  double err_est = 0.0;  // half-window vs full-window slope discrepancy
};

// Least-squares slope of the unwrapped phase over [burn_in, T]; the raw
// endpoint quotient carries an O(1/T) oscillation that the fit suppresses.
// burn_in < 0 selects the default min(10, T/10).
RotationEstimate rotation_number(double E, const QuasiPeriodicPotential& V, double T,
                                 const IntegrateOptions& opt = {}, double burn_in = -1.0);

// Top Lyapunov exponent by renormalized vector growth; clamped at 0.
double lyapunov_exponent(double E, const QuasiPeriodicPotential& V, double T,
                         const IntegrateOptions& opt = {});

enum class PointClass { spectrum, gap, uncertain };
const char* to_string(PointClass c);

struct GapLabel {
  std::size_t first = 0, last = 0;  // inclusive index run in the curve
  double E_lo = 0, E_hi = 0;
  double rho_plateau = 0;
  ModeIndex k;          // canonical sign: <k,omega> >= 0; empty if unlabelled
  double residual = 0;  // |rho_plateau - <k,omega>/2|
  bool labelled = false;
  bool ambiguous = false;  // two candidates within tolerance; reported, not guessed
};

struct RotationCurve {
  std::vector<double> E, rho, drho, lyapunov, rho_err;
  std::vector<PointClass> cls;
  std::vector<ModeIndex> gap_label;  // per point, empty when none
  std::vector<GapLabel> gaps;
  int monotone_violations = 0;
};

struct CurveOptions {
  double T = 500.0;
  double T_lyap = 200.0;
  IntegrateOptions ode;
  double burn_in = -1.0;         // < 0: T/2, long enough for in-gap direction locking
  double flat_threshold = 0.04;  // drho below this is plateau material
  double lambda_tol = 0.02;
  double monotone_tol = 1e-3;
  int label_k_max = 3;
  double label_tol = 1e-3;
  unsigned threads = 0;
};

// Rotation number, derivative, Lyapunov exponent and classification over an
// energy grid (strictly increasing; duplicates rejected).
RotationCurve rotation_curve(const std::vector<double>& energies,
                             const QuasiPeriodicPotential& V, const CurveOptions& opt = {});

// Detects flat plateaus of rho and matches them against half lattice values
// <k,omega>/2, |k| <= k_max. Fills curve.gaps / curve.gap_label and upgrades
// the class of labelled plateau points to gap.
void label_gaps(RotationCurve& curve, const FrequencyVector& freq, int k_max, double tol,
                double flat_threshold);

}  // namespace qpt
