#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace qpt {

struct StageStatus {
  std::string name;
  std::string status;  // "ok", "skipped", or "failed: <reason>"
};

// Written next to the outputs, one per command. The hash ties the manifest to
// the exact config + potential + seed that produced the files, so a rerun can
// prove it has nothing to do.
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  std::uint64_t seed = 0;
  std::vector<StageStatus> stages;
  std::map<std::string, double> metrics;
  std::vector<std::string> outputs;  // files this run owns, relative to the out dir
  std::vector<std::string> flags;    // e.g. containment_truncated
  bool complete = false;

  void stage_ok(const std::string& name) { stages.push_back({name, "ok"}); }
  void stage_failed(const std::string& name, const std::string& why) {
    stages.push_back({name, "failed: " + why});
  }
};

std::string tool_version();
std::string utc_now_iso();

std::string manifest_path(const std::string& out_dir, const std::string& command);

// tmp + rename so readers never observe a half-written manifest
void write_manifest(const RunManifest& m, const std::string& path);
bool read_manifest(const std::string& path, RunManifest& out);

// Writes bytes to path via tmp + rename. All CSV/plot emission funnels
// through here: content is fully formatted first, so identical inputs give
// bit-identical files.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace qpt
