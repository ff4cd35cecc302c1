#pragma once

#include <cstdint>
#include <string>

#include "qpt/potential.hpp"
#include "qpt/reduce.hpp"

namespace qpt {

// One experiment per config file. The file is JSON; every key is optional and
// defaulted except "potential". Unknown keys are rejected with the offending
// line so a typo can't silently fall back to a default.
struct RunConfig {
  QuasiPeriodicPotential potential;
  std::string potential_file;  // empty when the potential was given inline

  // grid block: spatial box for the evolution
  double half_length = 300.0;
  std::size_t n_points = 4096;

  // evolution block
  double dt = 0.005;
  double T = 30.0;
  std::size_t sample_stride = 20;
  double late_fraction = 0.4;  // tail share of samples the slope fit uses

  // packet block
  double packet_x0 = 0.0;
  double packet_width = 2.0;
  double packet_momentum = 2.0;

  // energy_grid block, uniform in rho = sqrt(E); the finite differences and
  // the spectral measures both live in rho, so the grid does too. Graded
  // refinement inserts fine-spaced points around detected gap edges.
  double rho_min = 0.05;
  double rho_max = 4.0;
  double rho_spacing = 0.01;
  bool graded = false;
  double fine_spacing = 1e-3;
  double grade_pad = 0.05;
  double max_fd_spacing = 0.1;  // coarsest energy step the frame accepts

  // curve block: rotation-number estimation horizons
  double curve_T = 300.0;
  double curve_T_lyap = 150.0;

  // schedule block (eps0 <= 0 means "derive from the potential")
  double eps0 = 0.0;
  double sigma = 0.02;
  int max_steps = 8;
  double divisor_floor = 1e-6;

  // cutoff_rho_c: <= 0 keeps the per-command default (transport pins the
  // cutoff to the grid top, integrals keeps the eps0^{-sigma/4} formula)
  double cutoff_rho_c = 0.0;

  // integrals block
  double m_min = 2.0;
  double m_max = 200.0;
  std::size_t n_m = 400;
  double x_off = 0.7;
  double y_off = -1.3;

  std::string output_dir = "out";

  // canonical serialisation of everything above (sorted keys, fixed number
  // formatting); equal strings <=> the runs are interchangeable
  std::string canonical;

  KamSchedule schedule() const;  // filled from the schedule block + potential
  double nominal_eps0() const;   // eps0 override, else analytic norm, else 1e-3
  void validate() const;
};

// Parses and validates. `source` names the file in error messages; referenced
// potential files resolve relative to the config's directory.
RunConfig parse_config(const std::string& text, const std::string& source);
RunConfig load_config(const std::string& path);

// FNV-1a over the canonical config text plus everything else that can change
// numbers in the outputs (potential content, command, seed, tool version).
std::uint64_t fnv1a(const std::string& bytes);
std::string config_hash(const RunConfig& cfg, const std::string& command, std::uint64_t seed);

}  // namespace qpt
