#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qpt/cocycle.hpp"
#include "qpt/config.hpp"
#include "qpt/manifest.hpp"

namespace qpt {

struct CliOptions {
  std::string config_path;
  std::string out_override;  // --out beats config.output_dir
  bool force = false;
  unsigned threads = 0;  // 0: one worker per core
  std::uint64_t seed = 0;
};

// The energy grid and its rotation curve travel together: grading inserts
// points near detected gap edges and the curve is recomputed on the union.
struct GridCurve {
  std::vector<double> energies;
  RotationCurve curve;
};
GridCurve build_energy_grid(const RunConfig& cfg, const CliOptions& opt);

// One command per process. Each writes its CSVs plus <command>_manifest.json
// into the out dir and returns the manifest it wrote (or the prior one when
// the run was skipped as up to date).
RunManifest cmd_rotation(const RunConfig& cfg, const CliOptions& opt);
RunManifest cmd_reduce(const RunConfig& cfg, const CliOptions& opt);
RunManifest cmd_transport(const RunConfig& cfg, const CliOptions& opt);
RunManifest cmd_integrals(const RunConfig& cfg, const CliOptions& opt);
// report aggregates the manifests already in the out dir; a config is only
// needed to locate that dir when --out is not given
RunManifest cmd_report(const std::string& out_dir, const CliOptions& opt);

// Dispatch + error-to-exit-code mapping: 0 ok, 2 validation, 3 numerical,
// 4 I/O. Prints the failure reason to stderr.
int run_command(const std::string& command, const CliOptions& opt);

}  // namespace qpt
