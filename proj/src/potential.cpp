#include "qpt/potential.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "json.hpp"
#include "qpt/errors.hpp"
#include "qpt/half_lattice.hpp"
#include "qpt/num.hpp"

namespace qpt {

int mode_abs(const ModeIndex& k) {
  int m = 0;
  for (int v : k) m = std::max(m, std::abs(v));
  return m;
}

double FrequencyVector::dot(const ModeIndex& k) const {
  double s = 0;
  for (std::size_t i = 0; i < omega.size(); ++i) s += k[i] * omega[i];
  return s;
}

void FrequencyVector::validate() const {
  if (omega.empty()) throw ConfigError("frequency vector must have d >= 1");
  for (double w : omega)
    if (!std::isfinite(w)) throw ConfigError("frequency vector has non-finite entry");
  if (!(gamma >= 0) || !std::isfinite(tau)) throw ConfigError("bad Diophantine constants");
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// distance from s to the nearest multiple of pi
double dist_to_pi_lattice(double s) {
  double j = std::round(s / kPi);
  return std::abs(s - j * kPi);
}

}  // namespace

double diophantine_margin(const FrequencyVector& freq, int k_max) {
  freq.validate();
  if (k_max < 1) throw ConfigError("diophantine_margin needs k_max >= 1");
  double margin = std::numeric_limits<double>::infinity();
  detail::scan_half_lattice(freq.dim(), k_max, [&](const ModeIndex& k) {
    double d = dist_to_pi_lattice(freq.dot(k) / 2.0);
    double m = std::pow(mode_abs(k), freq.tau) * d;
    if (m < margin) margin = m;
  });
  return margin;
}

QuasiPeriodicPotential::QuasiPeriodicPotential(FrequencyVector freq, double radius_r)
    : freq_(std::move(freq)), radius_r_(radius_r) {
  freq_.validate();
  if (!(radius_r_ > 0)) throw ConfigError("analyticity radius r must be positive");
}

void QuasiPeriodicPotential::set_mode(const ModeIndex& k, std::complex<double> v) {
  if (static_cast<int>(k.size()) != freq_.dim())
    throw ConfigError("mode index dimension does not match omega");
  ModeIndex mk(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) mk[i] = -k[i];
  if (mk == k) {
    // k = 0: real by symmetry
    if (std::abs(v.imag()) > 0)
      throw ConfigError("constant mode must be real");
    modes_[k] = v;
  } else {
    modes_[k] = v;
    modes_[mk] = std::conj(v);
  }
  compiled_ = false;
}

void QuasiPeriodicPotential::add_cosine(const ModeIndex& k, double amp) {
  auto it = modes_.find(k);
  std::complex<double> cur = it == modes_.end() ? 0.0 : it->second;
  set_mode(k, cur + amp / 2.0);
}

void QuasiPeriodicPotential::validate() const {
  freq_.validate();
  if (!(radius_r_ > 0)) throw ConfigError("analyticity radius r must be positive");
  for (const auto& [k, v] : modes_) {
    if (static_cast<int>(k.size()) != freq_.dim())
      throw ConfigError("mode index dimension does not match omega");
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw ConfigError("potential coefficient is not finite");
    ModeIndex mk(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) mk[i] = -k[i];
    auto it = modes_.find(mk);
    if (it == modes_.end() || std::abs(it->second - std::conj(v)) > 1e-15 * (1 + std::abs(v)))
      throw ConfigError("potential coefficients are not Hermitian-symmetric");
  }
}

void QuasiPeriodicPotential::compile() const {
  const_term_ = 0.0;
  f_.clear();
  a_.clear();
  b_.clear();
  for (const auto& [k, v] : modes_) {
    bool zero = true, positive = false;
    for (int ki : k) {
      if (ki != 0) {
        zero = false;
        positive = ki > 0;
        break;
      }
    }
    if (zero) {
      const_term_ = v.real();
      continue;
    }
    if (!positive) continue;  // conjugate partner carries this term
    // v e^{i f x} + conj(v) e^{-i f x} = 2 Re(v) cos(fx) - 2 Im(v) sin(fx)
    f_.push_back(freq_.dot(k));
    a_.push_back(2.0 * v.real());
    b_.push_back(-2.0 * v.imag());
  }
  compiled_ = true;
}

double QuasiPeriodicPotential::eval(double x) const {
  if (!compiled_) compile();
  double s = const_term_;
  for (std::size_t i = 0; i < f_.size(); ++i) {
    double ph = f_[i] * x;
    s += a_[i] * std::cos(ph) + b_[i] * std::sin(ph);
  }
  return s;
}

double QuasiPeriodicPotential::eval_theta(const std::vector<double>& th) const {
  if (static_cast<int>(th.size()) != freq_.dim())
    throw ConfigError("theta dimension does not match omega");
  std::complex<double> s = 0;
  for (const auto& [k, v] : modes_) {
    double ph = 0;
    for (std::size_t i = 0; i < th.size(); ++i) ph += k[i] * th[i];
    s += v * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return s.real();
}

double QuasiPeriodicPotential::analytic_norm() const {
  double s = 0;
  for (const auto& [k, v] : modes_) s += std::abs(v) * std::exp(radius_r_ * mode_abs(k));
  return s;
}

int QuasiPeriodicPotential::support_radius() const {
  int r = 0;
  for (const auto& [k, v] : modes_) {
    (void)v;
    r = std::max(r, mode_abs(k));
  }
  return r;
}

QuasiPeriodicPotential potential_from_json_text(const std::string& text,
                                                const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (key != "d" && key != "omega" && key != "gamma" && key != "tau" && key != "r" &&
        key != "modes")
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
  try {
    int d = j.at("d").get<int>();
    FrequencyVector fv;
    fv.omega = j.at("omega").get<std::vector<double>>();
    fv.gamma = j.at("gamma").get<double>();
    fv.tau = j.at("tau").get<double>();
    if (static_cast<int>(fv.omega.size()) != d)
      throw ConfigError(where + ": omega length != d");
    QuasiPeriodicPotential v(fv, j.at("r").get<double>());
    std::map<ModeIndex, std::complex<double>> listed;
    for (const auto& m : j.at("modes")) {
      for (const auto& [key, val] : m.items()) {
        (void)val;
        if (key != "k" && key != "re" && key != "im")
          throw ConfigError(where + ": unknown mode key '" + key + "'");
      }
      ModeIndex k = m.at("k").get<std::vector<int>>();
      if (static_cast<int>(k.size()) != d)
        throw ConfigError(where + ": mode index length != d");
      listed[k] = {m.at("re").get<double>(), m.at("im").get<double>()};
    }
    for (const auto& [k, c] : listed) {
      ModeIndex mk(k.size());
      for (std::size_t i = 0; i < k.size(); ++i) mk[i] = -k[i];
      auto it = listed.find(mk);
      if (it != listed.end() && std::abs(it->second - std::conj(c)) > 1e-12 * (1 + std::abs(c)))
        throw ConfigError(where + ": modes are not Hermitian-symmetric");
      v.set_mode(k, c);  // mirror-completes the partner
    }
    v.validate();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

QuasiPeriodicPotential load_potential(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open potential file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return potential_from_json_text(text, "potential file " + path);
}

std::string potential_to_json_text(const QuasiPeriodicPotential& v) {
  nlohmann::json j;
  j["d"] = v.freq().dim();
  j["omega"] = v.freq().omega;
  j["gamma"] = v.freq().gamma;
  j["tau"] = v.freq().tau;
  j["r"] = v.radius();
  j["modes"] = nlohmann::json::array();
  for (const auto& [k, c] : v.modes()) {
    j["modes"].push_back({{"k", k}, {"re", c.real()}, {"im", c.imag()}});
  }
  return j.dump(2);
}

void save_potential(const QuasiPeriodicPotential& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write potential file: " + path);
  out << potential_to_json_text(v) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace qpt
