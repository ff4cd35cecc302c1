#pragma once
#include <complex>
#include <map>
#include <string>
#include <vector>

namespace qpt {

using ModeIndex = std::vector<int>;  // k in Z^d; |k| always means the max norm

int mode_abs(const ModeIndex& k);

// Frequency vector omega in R^d together with the non-resonance constants
// (gamma, tau) it is declared to satisfy:
//   inf_j |<k,omega>/2 - j*pi| > gamma / |k|^tau   for 0 < |k| <= K.
// The constants are data; diophantine_margin measures what actually holds.
struct FrequencyVector {
  std::vector<double> omega;
  double gamma = 0.0;
  double tau = 2.0;

  int dim() const { return static_cast<int>(omega.size()); }
  double dot(const ModeIndex& k) const;  // <k, omega>
  void validate() const;
};

// min over 0 < |k| <= k_max of |k|^tau * dist(<k,omega>/2, pi*Z).
// A resonant omega yields 0; that is reported, not thrown.
double diophantine_margin(const FrequencyVector& freq, int k_max);

// Real-analytic quasi-periodic potential
//   V(theta) = Re sum_k vhat_k e^{i<k,theta>},  theta in T^d,
// evaluated along the orbit theta = omega*x. Coefficients are stored for
// every listed k and must satisfy vhat_{-k} = conj(vhat_k) so V is real.
class QuasiPeriodicPotential {
 public:
  QuasiPeriodicPotential() = default;
  QuasiPeriodicPotential(FrequencyVector freq, double radius_r);

  // Sets vhat_k and vhat_{-k} = conj(v) together.
  void set_mode(const ModeIndex& k, std::complex<double> v);
  // Adds amp*cos(<k,theta>); convenience for the standard test potentials.
  void add_cosine(const ModeIndex& k, double amp);

  double eval(double x) const;                             // V(omega x)
  double eval_theta(const std::vector<double>& th) const;  // V(theta)
  double analytic_norm() const;  // sum |vhat_k| e^{r |k|}
  int support_radius() const;    // max |k| over stored modes

  const FrequencyVector& freq() const { return freq_; }
  double radius() const { return radius_r_; }
  const std::map<ModeIndex, std::complex<double>>& modes() const { return modes_; }
  bool empty() const { return modes_.empty(); }

  // Hermitian symmetry, finiteness, dimension match. Throws ConfigError.
  void validate() const;

 private:
  void compile() const;

  FrequencyVector freq_;
  double radius_r_ = 0.5;
  std::map<ModeIndex, std::complex<double>> modes_;

  // flattened half-space table for the hot eval path:
  // V(omega x) = c0 + sum_i a_i cos(f_i x) + b_i sin(f_i x)
  mutable bool compiled_ = false;
  mutable double const_term_ = 0.0;
  mutable std::vector<double> f_, a_, b_;
};

// Potential spec file (structured text): d, omega[], gamma, tau, r, modes[].
// Modes whose conjugate partner is absent are mirror-completed on load;
// a present-but-inconsistent partner is a validation error.
QuasiPeriodicPotential load_potential(const std::string& path);
void save_potential(const QuasiPeriodicPotential& v, const std::string& path);

// Same {d, omega, gamma, tau, r, modes} object, from serialized JSON text;
// `where` prefixes error messages. Shared by the file loader and the run
// config's inline form.
QuasiPeriodicPotential potential_from_json_text(const std::string& text, const std::string& where);
std::string potential_to_json_text(const QuasiPeriodicPotential& v);

}  // namespace qpt
