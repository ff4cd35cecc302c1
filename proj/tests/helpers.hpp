#pragma once
#include "qpt/potential.hpp"

// shared fixtures for the unit suites
namespace qtest {

inline constexpr double kGolden = 0.61803398874989485;
inline constexpr double kTwoPi = 6.2831853071795865;

inline qpt::FrequencyVector golden_freq(double gamma = 0.01, double tau = 3.0) {
  qpt::FrequencyVector f;
  f.omega = {kTwoPi, kTwoPi * kGolden};
  f.gamma = gamma;
  f.tau = tau;
  return f;
}

// V(theta) = amp (cos theta_1 + cos theta_2)
inline qpt::QuasiPeriodicPotential two_cosine(double amp, double r = 0.5) {
  qpt::QuasiPeriodicPotential v(golden_freq(), r);
  v.add_cosine({1, 0}, amp);
  v.add_cosine({0, 1}, amp);
  return v;
}

inline qpt::QuasiPeriodicPotential zero_potential(double r = 0.5) {
  return qpt::QuasiPeriodicPotential(golden_freq(), r);
}

}  // namespace qtest
