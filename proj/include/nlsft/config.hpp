#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "nlsft/errors.hpp"
#include "nlsft/units.hpp"

namespace nlsft {

/// Flat key=value configuration.  Lines starting with '#' (after optional
/// whitespace) and blank lines are ignored.  Keys are case-sensitive.
class Config {
 public:
  Config() = default;

  static Config parse(std::istream& is) {
    Config c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ParameterError("config line " + std::to_string(lineno) + ": missing '='");
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      if (key.empty())
        throw ParameterError("config line " + std::to_string(lineno) + ": empty key");
      c.kv_[key] = val;
    }
    return c;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParameterError("cannot open config file " + path);
    return parse(is);
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ParameterError("missing config key '" + key + "'");
    return it->second;
  }
  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
  double get_double(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : to_double(key, it->second);
  }

  long get_long(const std::string& key) const { return to_long(key, get_string(key)); }
  long get_long(const std::string& key, long dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : to_long(key, it->second);
  }

  void set(const std::string& key, const std::string& val) { kv_[key] = val; }

  /// Canonical form: keys in sorted order, one per line.  The hash of this
  /// form is embedded in output headers so results can be traced to inputs.
  std::string canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv_) os << k << "=" << v << "\n";
    return os.str();
  }

  /// FNV-1a over the canonical serialization.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ParameterError("config key '" + key + "': cannot parse '" + v + "' as number");
    }
  }
  static long to_long(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      long x = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ParameterError("config key '" + key + "': cannot parse '" + v + "' as integer");
    }
  }

  std::map<std::string, std::string> kv_;
};

/// Build the physical parameter block from a config, falling back to the
/// standard-fiber defaults for any missing key.
inline PhysicalParams params_from_config(const Config& c) {
  PhysicalParams p;
  p.beta2_ps2_per_km = c.get_double("beta2_ps2_per_km", p.beta2_ps2_per_km);
  p.gamma_per_W_km = c.get_double("gamma_per_W_km", p.gamma_per_W_km);
  p.bandwidth_Hz = c.get_double("bandwidth_GHz", p.bandwidth_Hz * 1e-9) * 1e9;
  p.span_km = c.get_double("span_km", p.span_km);
  p.num_spans = static_cast<int>(c.get_long("num_spans", p.num_spans));
  p.n_sp = c.get_double("n_sp", p.n_sp);
  p.photon_energy_J = c.get_double("photon_energy_J", p.photon_energy_J);
  p.alpha_loss_dB_per_km = c.get_double("alpha_loss_dB_per_km", p.alpha_loss_dB_per_km);
  if (c.has("power_dBm"))
    p.power_W = 1e-3 * std::pow(10.0, c.get_double("power_dBm") / 10.0);
  p.validate();
  return p;
}

}  // namespace nlsft
