#pragma once

/// Experiment configuration: a plain-text file of `key = value` lines grouped
/// under `[section]` headers. Numeric values accept arithmetic on literals and
/// `pi` (e.g. `2*pi`, `1/1024`); lists are comma-separated. Unknown keys are
/// errors. The same dotted keys (`grid.n`, `assimilation.mu`, ...) are used
/// for command-line overrides.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nudge2d/forcing.hpp"
#include "nudge2d/observables.hpp"

namespace nudge2d {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Recursive-descent evaluator for + - * / ( ) on decimal literals and pi.
class Expression {
 public:
  explicit Expression(std::string text) : s_(std::move(text)) {}

  double evaluate() {
    const double v = sum();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + s_.substr(pos_) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("cannot evaluate '" + s_ + "': " + why);
  }
  void skip() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double sum() {
    double v = product();
    for (;;) {
      if (accept('+'))
        v += product();
      else if (accept('-'))
        v -= product();
      else
        return v;
    }
  }
  double product() {
    double v = unary();
    for (;;) {
      if (accept('*'))
        v *= unary();
      else if (accept('/'))
        v /= unary();
      else
        return v;
    }
  }
  double unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return atom();
  }
  double atom() {
    if (accept('(')) {
      const double v = sum();
      if (!accept(')')) fail("missing ')'");
      return v;
    }
    skip();
    if (s_.compare(pos_, 2, "pi") == 0) {
      pos_ += 2;
      return std::numbers::pi;
    }
    if (s_.compare(pos_, 3, "inf") == 0) {
      pos_ += 3;
      return std::numeric_limits<double>::infinity();
    }
    double v = 0.0;
    const char* first = s_.data() + pos_;
    const auto [ptr, ec] = std::from_chars(first, s_.data() + s_.size(), v);
    if (ec != std::errc() || ptr == first) fail("expected a number");
    pos_ += static_cast<std::size_t>(ptr - first);
    return v;
  }

  std::string s_;
  std::size_t pos_ = 0;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty list entry in '" + s + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline double parse_number(const std::string& text) { return detail::Expression(text).evaluate(); }

inline long long parse_integer(const std::string& text) {
  const double v = parse_number(text);
  if (!(std::abs(v) < 9.0e15) || v != std::floor(v))
    throw ConfigError("expected an integer, got '" + text + "'");
  return static_cast<long long>(v);
}

inline bool parse_bool(const std::string& text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ConfigError("expected a boolean, got '" + text + "'");
}

struct RunConfig {
  // [grid]
  int n = 128;
  double length = 2.0 * std::numbers::pi;
  // [physics]
  double nu = 1e-3;
  double dt = 1.0 / 1024.0;
  // [forcing]
  int band_lo = 10;
  int band_hi = 12;
  double grashof = 1e5;
  std::uint64_t seed = 1;
  // [spinup]
  double spinup_duration = 0.0;
  std::string spinup_checkpoint;  ///< where u0 is cached; empty disables caching
  // [assimilation]
  double T = 2000.0;
  double eps = 1e-10;
  std::optional<double> T0;  ///< defaults to 2T/3
  ObservationKind kind = ObservationKind::nodal;
  std::vector<int> K{16};
  std::vector<double> eta{0.0};
  std::vector<double> mu{1.0};
  int modal_radius = 0;
  // [output]
  std::string dir = ".";
  std::string series = "series.csv";
  std::string sweep = "sweep.csv";
  long long checkpoint_interval = 0;  ///< steps between run checkpoints; 0 disables
  int sample_stride = 64;
  int workers = 1;
  bool record_wall_time = true;  ///< false writes wall_s = 0 for byte-comparable CSVs

  double T0_effective() const { return T0 ? *T0 : 2.0 * T / 3.0; }

  ForcingSpec forcing_spec() const { return {band_lo, band_hi, grashof, seed, nu, length}; }

  ObservationSpec observation(int K_value, double eta_value) const {
    if (kind == ObservationKind::modal) return {ObservationKind::modal, K_value, 0.0, modal_radius};
    if (kind == ObservationKind::nodal_smoothed && !(eta_value > 0.0))
      throw ConfigError("nodal_smoothed observations need eta > 0");
    return ObservationSpec::nodal_with_eta(K_value, eta_value);
  }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(what);
    };
    require(n >= 8 && (n & (n - 1)) == 0, "grid.n must be a power of two >= 8");
    require(length > 0.0 && std::isfinite(length), "grid.length must be positive");
    require(nu > 0.0, "physics.nu must be positive");
    require(dt > 0.0, "physics.dt must be positive");
    require(band_lo > 0 && band_lo <= band_hi, "forcing band must satisfy 0 < band_lo <= band_hi");
    require(grashof > 0.0, "forcing.grashof must be positive");
    require(spinup_duration >= 0.0, "spinup.duration must be >= 0");
    require(T > 0.0, "assimilation.T must be positive");
    require(eps > 0.0, "assimilation.eps must be positive");
    require(T0_effective() >= 0.0 && T0_effective() < T, "assimilation.T0 must lie in [0, T)");
    for (int k : K) require(k >= 1, "assimilation.K entries must be >= 1");
    for (double e : eta) require(e >= 0.0, "assimilation.eta entries must be >= 0");
    for (double m : mu) require(m >= 0.0, "assimilation.mu entries must be >= 0");
    require(checkpoint_interval >= 0, "output.checkpoint_interval must be >= 0");
    require(sample_stride >= 1, "output.sample_stride must be >= 1");
    require(workers >= 1, "output.workers must be >= 1");
  }

  /// FNV-1a over the fields that determine the reference trajectory.
  std::uint64_t hash() const {
    std::ostringstream s;
    s << n << '|' << detail::format_double(length) << '|' << detail::format_double(nu) << '|'
      << detail::format_double(dt) << '|' << band_lo << '|' << band_hi << '|'
      << detail::format_double(grashof) << '|' << seed;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s.str()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

/// Key table shared by the file parser, command-line overrides and dumps.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::format_double;
  auto join = [](const auto& xs, auto fmt) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + fmt(xs[i]);
    return out;
  };
  static const std::vector<ConfigKey> keys = {
      {"grid.n", "collocation points per dimension",
       [](RunConfig& c, const std::string& v) { c.n = static_cast<int>(parse_integer(v)); },
       [](const RunConfig& c) { return std::to_string(c.n); }},
      {"grid.length", "box side L",
       [](RunConfig& c, const std::string& v) { c.length = parse_number(v); },
       [](const RunConfig& c) { return format_double(c.length); }},
      {"physics.nu", "kinematic viscosity",
       [](RunConfig& c, const std::string& v) { c.nu = parse_number(v); },
       [](const RunConfig& c) { return format_double(c.nu); }},
      {"physics.dt", "time step",
       [](RunConfig& c, const std::string& v) { c.dt = parse_number(v); },
       [](const RunConfig& c) { return format_double(c.dt); }},
      {"forcing.band_lo", "smallest |k|^2 in the forcing annulus",
       [](RunConfig& c, const std::string& v) { c.band_lo = static_cast<int>(parse_integer(v)); },
       [](const RunConfig& c) { return std::to_string(c.band_lo); }},
      {"forcing.band_hi", "largest |k|^2 in the forcing annulus",
       [](RunConfig& c, const std::string& v) { c.band_hi = static_cast<int>(parse_integer(v)); },
       [](const RunConfig& c) { return std::to_string(c.band_hi); }},
      {"forcing.grashof", "Grashof number",
       [](RunConfig& c, const std::string& v) { c.grashof = parse_number(v); },
       [](const RunConfig& c) { return format_double(c.grashof); }},
      {"forcing.seed", "phase seed",
       [](RunConfig& c, const std::string& v) {
         const long long s = parse_integer(v);
         if (s < 0) throw ConfigError("forcing.seed must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"spinup.duration", "spin-up time from rest",
       [](RunConfig& c, const std::string& v) { c.spinup_duration = parse_number(v); },
       [](const RunConfig& c) { return format_double(c.spinup_duration); }},
      {"spinup.checkpoint", "cache file for the spun-up state",
       [](RunConfig& c, const std::string& v) { c.spinup_checkpoint = v; },
       [](const RunConfig& c) { return c.spinup_checkpoint; }},
      {"assimilation.T", "assimilation window length",
       [](RunConfig& c, const std::string& v) { c.T = parse_number(v); },
       [](const RunConfig& c) { return format_double(c.T); }},
      {"assimilation.eps", "error threshold",
       [](RunConfig& c, const std::string& v) { c.eps = parse_number(v); },
       [](const RunConfig& c) { return format_double(c.eps); }},
      {"assimilation.T0", "start of the averaging window (default 2T/3)",
       [](RunConfig& c, const std::string& v) {
         if (v == "auto")
           c.T0.reset();
         else
           c.T0 = parse_number(v);
       },
       [](const RunConfig& c) { return c.T0 ? format_double(*c.T0) : std::string("auto"); }},
      {"assimilation.kind", "nodal, nodal_smoothed or modal",
       [](RunConfig& c, const std::string& v) {
         try {
           c.kind = parse_observation_kind(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       },
       [](const RunConfig& c) { return to_string(c.kind); }},
      {"assimilation.K", "nodes per dimension (list)",
       [](RunConfig& c, const std::string& v) {
         c.K.clear();
         for (const auto& s : detail::split_list(v)) c.K.push_back(static_cast<int>(parse_integer(s)));
       },
       [join](const RunConfig& c) { return join(c.K, [](int k) { return std::to_string(k); }); }},
      {"assimilation.eta", "mollifier width in units of h (list)",
       [](RunConfig& c, const std::string& v) {
         c.eta.clear();
         for (const auto& s : detail::split_list(v)) c.eta.push_back(parse_number(s));
       },
       [join](const RunConfig& c) { return join(c.eta, format_double); }},
      {"assimilation.mu", "nudging coefficients (list)",
       [](RunConfig& c, const std::string& v) {
         c.mu.clear();
         for (const auto& s : detail::split_list(v)) c.mu.push_back(parse_number(s));
       },
       [join](const RunConfig& c) { return join(c.mu, format_double); }},
      {"assimilation.modal_radius", "retained radius for modal observations",
       [](RunConfig& c, const std::string& v) { c.modal_radius = static_cast<int>(parse_integer(v)); },
       [](const RunConfig& c) { return std::to_string(c.modal_radius); }},
      {"output.dir", "output directory",
       [](RunConfig& c, const std::string& v) { c.dir = v; },
       [](const RunConfig& c) { return c.dir; }},
      {"output.series", "error-series CSV file name",
       [](RunConfig& c, const std::string& v) { c.series = v; },
       [](const RunConfig& c) { return c.series; }},
      {"output.sweep", "sweep CSV file name",
       [](RunConfig& c, const std::string& v) { c.sweep = v; },
       [](const RunConfig& c) { return c.sweep; }},
      {"output.checkpoint_interval", "steps between run checkpoints (0 = off)",
       [](RunConfig& c, const std::string& v) { c.checkpoint_interval = parse_integer(v); },
       [](const RunConfig& c) { return std::to_string(c.checkpoint_interval); }},
      {"output.sample_stride", "steps between recorded samples",
       [](RunConfig& c, const std::string& v) { c.sample_stride = static_cast<int>(parse_integer(v)); },
       [](const RunConfig& c) { return std::to_string(c.sample_stride); }},
      {"output.workers", "sweep worker threads",
       [](RunConfig& c, const std::string& v) { c.workers = static_cast<int>(parse_integer(v)); },
       [](const RunConfig& c) { return std::to_string(c.workers); }},
      {"output.record_wall_time", "write measured wall time (false writes 0)",
       [](RunConfig& c, const std::string& v) { c.record_wall_time = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.record_wall_time ? "true" : "false"); }},
  };
  return keys;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name != key) continue;
    try {
      k.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
    return;
  }
  throw ConfigError("unknown key '" + key + "'");
}

inline RunConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
  RunConfig cfg;
  std::string line, section;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string name = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + name + "' outside any section");
    const std::string key = section + "." + name;
    if (auto it = seen.find(key); it != seen.end())
      throw ConfigError(where + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(it->second) + ")");
    seen[key] = lineno;
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

/// Serializes every key; parse_config on the result reproduces the config.
inline std::string dump_config(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace nudge2d
