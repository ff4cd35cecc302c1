#include "qpt/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "qpt/errors.hpp"

namespace qpt {

std::string tool_version() { return "qpt 0.1.0"; }

std::string utc_now_iso() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string manifest_path(const std::string& out_dir, const std::string& command) {
  return (std::filesystem::path(out_dir) / (command + "_manifest.json")).string();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

void write_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["tool_version"] = m.tool_version;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["seed"] = m.seed;
  j["complete"] = m.complete;
  j["stages"] = nlohmann::json::array();
  for (const StageStatus& s : m.stages) j["stages"].push_back({{"name", s.name}, {"status", s.status}});
  j["metrics"] = m.metrics;
  j["outputs"] = m.outputs;
  j["flags"] = m.flags;
  write_file_atomic(path, j.dump(2) + "\n");
}

bool read_manifest(const std::string& path, RunManifest& out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  try {
    out = RunManifest{};
    out.command = j.value("command", "");
    out.config_hash = j.value("config_hash", "");
    out.tool_version = j.value("tool_version", "");
    out.started_at = j.value("started_at", "");
    out.finished_at = j.value("finished_at", "");
    out.seed = j.value("seed", std::uint64_t{0});
    out.complete = j.value("complete", false);
    if (j.contains("stages"))
      for (const auto& s : j["stages"])
        out.stages.push_back({s.value("name", ""), s.value("status", "")});
    if (j.contains("metrics"))
      out.metrics = j["metrics"].get<std::map<std::string, double>>();
    if (j.contains("outputs")) out.outputs = j["outputs"].get<std::vector<std::string>>();
    if (j.contains("flags")) out.flags = j["flags"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    return false;
  }
  return true;
}

}  // namespace qpt
