#include "qpt/config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "qpt/errors.hpp"
#include "qpt/evolve.hpp"
#include "qpt/manifest.hpp"

namespace qpt {
namespace {

using nlohmann::json;

// Best-effort line anchor: first occurrence of the quoted key in the raw
// text. Good enough for hand-written configs, where key names rarely repeat.
std::string line_anchor(const std::string& text, const std::string& key) {
  auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return "";
  long line = 1 + static_cast<long>(std::count(text.begin(), text.begin() + (long)pos, '\n'));
  return ":" + std::to_string(line);
}

struct Ctx {
  const std::string& text;
  const std::string& source;

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError(source + line_anchor(text, key) + ": " + why);
  }

  void reject_unknown(const json& obj, const std::string& path,
                      std::initializer_list<const char*> allowed) const {
    for (const auto& [key, val] : obj.items()) {
      (void)val;
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok)
        fail(key, "unknown key '" + (path.empty() ? key : path + "." + key) + "'");
    }
  }

  const json* block(const json& j, const char* key) const {
    if (!j.contains(key) || j[key].is_null()) return nullptr;
    if (!j[key].is_object()) fail(key, std::string("'") + key + "' must be an object");
    return &j[key];
  }

  double num(const json& obj, const std::string& path, const char* key, double def) const {
    if (!obj.contains(key) || obj[key].is_null()) return def;
    if (!obj[key].is_number()) fail(key, "'" + path + key + "' must be a number");
    return obj[key].get<double>();
  }

  std::size_t uint(const json& obj, const std::string& path, const char* key,
                   std::size_t def) const {
    if (!obj.contains(key) || obj[key].is_null()) return def;
    if (!obj[key].is_number_unsigned() &&
        !(obj[key].is_number_integer() && obj[key].get<long long>() >= 0))
      fail(key, "'" + path + key + "' must be a non-negative integer");
    return obj[key].get<std::size_t>();
  }

  bool boolean(const json& obj, const std::string& path, const char* key, bool def) const {
    if (!obj.contains(key) || obj[key].is_null()) return def;
    if (!obj[key].is_boolean()) fail(key, "'" + path + key + "' must be true or false");
    return obj[key].get<bool>();
  }

  std::string str(const json& obj, const std::string& path, const char* key,
                  const std::string& def) const {
    if (!obj.contains(key) || obj[key].is_null()) return def;
    if (!obj[key].is_string()) fail(key, "'" + path + key + "' must be a string");
    return obj[key].get<std::string>();
  }
};

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte is a 1-based offset just past the problem
    std::size_t upto = std::min(text.size(), e.byte > 0 ? (std::size_t)e.byte - 1 : 0);
    long line = 1 + static_cast<long>(std::count(text.begin(), text.begin() + (long)upto, '\n'));
    throw ConfigError(source + ":" + std::to_string(line) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(source + ": top level must be an object");

  Ctx c{text, source};
  c.reject_unknown(j, "",
                   {"potential", "grid", "evolution", "packet", "energy_grid", "curve",
                    "schedule", "cutoff_rho_c", "integrals", "output_dir"});

  RunConfig cfg;

  if (!j.contains("potential"))
    throw ConfigError(source + ": missing required key 'potential'");
  const json& p = j["potential"];
  if (!p.is_object()) c.fail("potential", "'potential' must be an object");
  c.reject_unknown(p, "potential", {"file", "inline"});
  bool has_file = p.contains("file") && !p["file"].is_null();
  bool has_inline = p.contains("inline") && !p["inline"].is_null();
  if (has_file == has_inline)
    c.fail("potential", "'potential' needs exactly one of 'file' or 'inline'");
  if (has_file) {
    std::string f = c.str(p, "potential.", "file", "");
    std::filesystem::path fp(f);
    if (fp.is_relative()) {
      std::filesystem::path base = std::filesystem::path(source).parent_path();
      if (!base.empty()) fp = base / fp;
    }
    if (!std::filesystem::exists(fp))
      c.fail("file", "potential.file '" + fp.string() + "' does not exist");
    cfg.potential = load_potential(fp.string());
    cfg.potential_file = fp.string();
  } else {
    cfg.potential = potential_from_json_text(p["inline"].dump(), source + ": potential.inline");
  }

  if (const json* g = c.block(j, "grid")) {
    c.reject_unknown(*g, "grid", {"half_length", "n_points"});
    cfg.half_length = c.num(*g, "grid.", "half_length", cfg.half_length);
    cfg.n_points = c.uint(*g, "grid.", "n_points", cfg.n_points);
  }
  if (const json* e = c.block(j, "evolution")) {
    c.reject_unknown(*e, "evolution", {"dt", "T", "sample_stride", "late_fraction"});
    cfg.dt = c.num(*e, "evolution.", "dt", cfg.dt);
    cfg.T = c.num(*e, "evolution.", "T", cfg.T);
    cfg.sample_stride = c.uint(*e, "evolution.", "sample_stride", cfg.sample_stride);
    cfg.late_fraction = c.num(*e, "evolution.", "late_fraction", cfg.late_fraction);
  }
  if (const json* pk = c.block(j, "packet")) {
    c.reject_unknown(*pk, "packet", {"x0", "width", "momentum"});
    cfg.packet_x0 = c.num(*pk, "packet.", "x0", cfg.packet_x0);
    cfg.packet_width = c.num(*pk, "packet.", "width", cfg.packet_width);
    cfg.packet_momentum = c.num(*pk, "packet.", "momentum", cfg.packet_momentum);
  }
  if (const json* eg = c.block(j, "energy_grid")) {
    c.reject_unknown(*eg, "energy_grid",
                     {"rho_min", "rho_max", "spacing", "graded", "fine_spacing", "pad",
                      "max_fd_spacing"});
    cfg.rho_min = c.num(*eg, "energy_grid.", "rho_min", cfg.rho_min);
    cfg.rho_max = c.num(*eg, "energy_grid.", "rho_max", cfg.rho_max);
    cfg.rho_spacing = c.num(*eg, "energy_grid.", "spacing", cfg.rho_spacing);
    cfg.graded = c.boolean(*eg, "energy_grid.", "graded", cfg.graded);
    cfg.fine_spacing = c.num(*eg, "energy_grid.", "fine_spacing", cfg.fine_spacing);
    cfg.grade_pad = c.num(*eg, "energy_grid.", "pad", cfg.grade_pad);
    cfg.max_fd_spacing = c.num(*eg, "energy_grid.", "max_fd_spacing", cfg.max_fd_spacing);
  }
  if (const json* cv = c.block(j, "curve")) {
    c.reject_unknown(*cv, "curve", {"T", "T_lyap"});
    cfg.curve_T = c.num(*cv, "curve.", "T", cfg.curve_T);
    cfg.curve_T_lyap = c.num(*cv, "curve.", "T_lyap", cfg.curve_T_lyap);
  }
  if (const json* s = c.block(j, "schedule")) {
    c.reject_unknown(*s, "schedule", {"eps0", "sigma", "max_steps", "divisor_floor"});
    cfg.eps0 = c.num(*s, "schedule.", "eps0", cfg.eps0);
    cfg.sigma = c.num(*s, "schedule.", "sigma", cfg.sigma);
    cfg.max_steps = static_cast<int>(c.uint(*s, "schedule.", "max_steps", (std::size_t)cfg.max_steps));
    cfg.divisor_floor = c.num(*s, "schedule.", "divisor_floor", cfg.divisor_floor);
  }
  cfg.cutoff_rho_c = c.num(j, "", "cutoff_rho_c", cfg.cutoff_rho_c);
  if (const json* in = c.block(j, "integrals")) {
    c.reject_unknown(*in, "integrals", {"m_min", "m_max", "n_m", "x_off", "y_off"});
    cfg.m_min = c.num(*in, "integrals.", "m_min", cfg.m_min);
    cfg.m_max = c.num(*in, "integrals.", "m_max", cfg.m_max);
    cfg.n_m = c.uint(*in, "integrals.", "n_m", cfg.n_m);
    cfg.x_off = c.num(*in, "integrals.", "x_off", cfg.x_off);
    cfg.y_off = c.num(*in, "integrals.", "y_off", cfg.y_off);
  }
  cfg.output_dir = c.str(j, "", "output_dir", cfg.output_dir);

  cfg.validate();

  // canonical form from the parsed values: formatting, key order and spelled-
  // out defaults all wash out of the hash
  json cj;
  cj["potential"] = json::parse(potential_to_json_text(cfg.potential));
  cj["grid"] = {{"half_length", cfg.half_length}, {"n_points", cfg.n_points}};
  cj["evolution"] = {{"dt", cfg.dt},
                     {"T", cfg.T},
                     {"sample_stride", cfg.sample_stride},
                     {"late_fraction", cfg.late_fraction}};
  cj["packet"] = {{"x0", cfg.packet_x0},
                  {"width", cfg.packet_width},
                  {"momentum", cfg.packet_momentum}};
  cj["energy_grid"] = {{"rho_min", cfg.rho_min},     {"rho_max", cfg.rho_max},
                       {"spacing", cfg.rho_spacing}, {"graded", cfg.graded},
                       {"fine_spacing", cfg.fine_spacing}, {"pad", cfg.grade_pad},
                       {"max_fd_spacing", cfg.max_fd_spacing}};
  cj["curve"] = {{"T", cfg.curve_T}, {"T_lyap", cfg.curve_T_lyap}};
  cj["schedule"] = {{"eps0", cfg.eps0},
                    {"sigma", cfg.sigma},
                    {"max_steps", cfg.max_steps},
                    {"divisor_floor", cfg.divisor_floor}};
  cj["cutoff_rho_c"] = cfg.cutoff_rho_c;
  cj["integrals"] = {{"m_min", cfg.m_min},
                     {"m_max", cfg.m_max},
                     {"n_m", cfg.n_m},
                     {"x_off", cfg.x_off},
                     {"y_off", cfg.y_off}};
  cj["output_dir"] = cfg.output_dir;
  cfg.canonical = cj.dump();

  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path);
}

double RunConfig::nominal_eps0() const {
  if (eps0 > 0) return eps0;
  double n = potential.analytic_norm();
  return n > 0 ? n : 1e-3;
}

KamSchedule RunConfig::schedule() const {
  KamSchedule s;
  s.eps0 = nominal_eps0();
  s.sigma = sigma;
  s.max_steps = max_steps;
  s.divisor_floor = divisor_floor;
  return s;
}

void RunConfig::validate() const {
  SpatialGrid grid{half_length, n_points};
  grid.validate();
  check(dt > 0, "evolution.dt must be > 0");
  check(T >= 0, "evolution.T must be >= 0");
  check(sample_stride >= 1, "evolution.sample_stride must be >= 1");
  check(late_fraction > 0 && late_fraction <= 1, "evolution.late_fraction must lie in (0, 1]");
  check(packet_width > 0, "packet.width must be > 0");
  check(rho_min > 0, "energy_grid.rho_min must be > 0 (E = 0 is not elliptic)");
  check(rho_max > rho_min, "energy_grid.rho_max must exceed rho_min");
  check(rho_spacing > 0 && rho_spacing <= rho_max - rho_min,
        "energy_grid.spacing must lie in (0, rho_max - rho_min]");
  check(fine_spacing > 0 && fine_spacing <= rho_spacing,
        "energy_grid.fine_spacing must lie in (0, spacing]");
  check(grade_pad >= 0, "energy_grid.pad must be >= 0");
  check(max_fd_spacing > 0, "energy_grid.max_fd_spacing must be > 0");
  check(curve_T > 0, "curve.T must be > 0");
  check(curve_T_lyap > 0, "curve.T_lyap must be > 0");
  check(eps0 >= 0, "schedule.eps0 must be >= 0 (0 derives it from the potential)");
  check(sigma > 0, "schedule.sigma must be > 0");
  check(max_steps >= 0, "schedule.max_steps must be >= 0");
  check(divisor_floor > 0, "schedule.divisor_floor must be > 0");
  check(cutoff_rho_c >= 0, "cutoff_rho_c must be >= 0 (0 keeps the command default)");
  check(m_min > 1, "integrals.m_min must exceed 1 (the oscillatory quadrature needs |M| > 1)");
  check(m_max > m_min, "integrals.m_max must exceed m_min");
  check(n_m >= 8, "integrals.n_m must be >= 8");
  check(!output_dir.empty(), "output_dir must not be empty");
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& cfg, const std::string& command, std::uint64_t seed) {
  std::string all = cfg.canonical + "\n" + command + "\n" + std::to_string(seed) + "\n" +
                    tool_version();
  std::uint64_t h = fnv1a(all);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace qpt
