#pragma once

// Flat `namespace.key = value` configuration with line diagnostics and
// command-line overrides.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deortho/errors.hpp"
#include "deortho/grid.hpp"
#include "deortho/model.hpp"
#include "deortho/propagator.hpp"
#include "deortho/perturb.hpp"

namespace deortho {

enum class RunMode { full, adiabatic, sweep, perturb };

inline std::string to_string(RunMode m) {
  switch (m) {
  case RunMode::full: return "full";
  case RunMode::adiabatic: return "adiabatic";
  case RunMode::sweep: return "sweep";
  case RunMode::perturb: return "perturb";
  }
  return "?";
}

inline RunMode parse_mode(const std::string& s) {
  if (s == "full") return RunMode::full;
  if (s == "adiabatic") return RunMode::adiabatic;
  if (s == "sweep") return RunMode::sweep;
  if (s == "perturb") return RunMode::perturb;
  throw ConfigError("unknown mode '" + s + "' (full, adiabatic, sweep, perturb)");
}

struct RunConfig {
  ModelParams model;
  double pop1 = 0.5;
  double phi = 0.0;
  GridSpec grid;

  RunMode mode = RunMode::full;
  PropagationOptions prop;
  std::vector<double> snapshots{5.0, 10.0, 20.0};  // omega_B t
  int series_points = 200;                          // R_0 time series over the run window
  bool r0_auto = true;
  double r0 = 0.0;

  std::vector<double> sweep_JL;
  std::vector<double> sweep_kappa;
  int workers = 1;

  double eps_den = 1e-12;
  double tol_nac = 1e-4;

  std::vector<double> JL_series{0.05, 0.1, 0.2};
  double readout = 5.0;
  int quad_steps = 200;
  ZerothNuclei zeroth = ZerothNuclei::adiabatic;

  double window() const { return snapshots.empty() ? 0.0 : *std::max_element(snapshots.begin(), snapshots.end()); }

  /// Cross-field checks; throws ConfigError.
  void validate() const {
    try {
      ModelParams m = model;
      m.set_superposition(pop1, phi);
      m.validate();
      grid.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (snapshots.empty()) throw ConfigError("run.snapshots is empty");
    for (double s : snapshots)
      if (!(s > 0.0)) throw ConfigError("run.snapshots must be positive");
    if (!(prop.dt_omega > 0.0)) throw ConfigError("run.dt_omega must be positive");
    if (!(prop.tol_prop > 0.0)) throw ConfigError("tol.prop must be positive");
    if (prop.krylov_cap < 2) throw ConfigError("run.krylov_cap must be >= 2");
    if (series_points < 1) throw ConfigError("run.series_points must be >= 1");
    if (!(eps_den > 0.0 && eps_den < 1.0)) throw ConfigError("tol.eps_den must lie in (0, 1)");
    if (!(tol_nac > 0.0)) throw ConfigError("tol.nac must be positive");
    if (workers < 1) throw ConfigError("sweep.workers must be >= 1");
    if (quad_steps < 2 || quad_steps % 2) throw ConfigError("perturb.quad_steps must be even and >= 2");
    if (!(readout > 0.0)) throw ConfigError("perturb.readout must be positive");
    for (double v : sweep_JL)
      if (!(v >= 0.0)) throw ConfigError("sweep.JL entries must be non-negative");
    for (double v : sweep_kappa)
      if (!(v >= 0.0)) throw ConfigError("sweep.kappa entries must be non-negative");
    for (double v : JL_series)
      if (!(v >= 0.0)) throw ConfigError("perturb.JL_series entries must be non-negative");
    if (mode == RunMode::sweep && sweep_JL.empty() && sweep_kappa.empty())
      throw ConfigError("sweep mode needs at least one of sweep.JL, sweep.kappa");
  }

  /// Model parameters with the superposition coefficients applied.
  ModelParams resolved_model() const {
    ModelParams m = model;
    m.set_superposition(pop1, phi);
    return m;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
  auto e = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
  return b < e ? std::string(b, e) : std::string();
}

inline double parse_double(const std::string& v) {
  const std::string t = trim(v);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) throw ConfigError("not a number: '" + t + "'");
  return out;
}

inline long parse_long(const std::string& v) {
  const std::string t = trim(v);
  long out = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) throw ConfigError("not an integer: '" + t + "'");
  return out;
}

inline std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  const std::string t = trim(v);
  if (t.empty()) return out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.g0", [](RunConfig& c, const std::string& v) { c.model.g0 = parse_double(v); }},
      {"model.gx", [](RunConfig& c, const std::string& v) { c.model.gx = parse_double(v); }},
      {"model.kappa", [](RunConfig& c, const std::string& v) { c.model.kappa = parse_double(v); }},
      {"model.alpha", [](RunConfig& c, const std::string& v) { c.model.alpha = static_cast<int>(parse_long(v)); }},
      {"model.K", [](RunConfig& c, const std::string& v) { c.model.K = parse_double(v); }},
      {"model.LW", [](RunConfig& c, const std::string& v) { c.model.LW = parse_double(v); }},
      {"model.Lx", [](RunConfig& c, const std::string& v) { c.model.Lx = parse_double(v); }},
      {"model.sigma", [](RunConfig& c, const std::string& v) { c.model.sigma = parse_double(v); }},
      {"model.JL", [](RunConfig& c, const std::string& v) { c.model.JL = parse_double(v); }},
      {"model.pop1", [](RunConfig& c, const std::string& v) { c.pop1 = parse_double(v); }},
      {"model.phi", [](RunConfig& c, const std::string& v) { c.phi = parse_double(v); }},
      {"grid.n_points", [](RunConfig& c, const std::string& v) { c.grid.n_points = parse_long(v); }},
      {"grid.dR", [](RunConfig& c, const std::string& v) { c.grid.dR = parse_double(v); }},
      {"run.mode", [](RunConfig& c, const std::string& v) { c.mode = parse_mode(trim(v)); }},
      {"run.scheme",
       [](RunConfig& c, const std::string& v) {
         try {
           c.prop.scheme = parse_scheme(trim(v));
         } catch (const Error& e) {
           throw ConfigError(e.what());
         }
       }},
      {"run.dt_omega", [](RunConfig& c, const std::string& v) { c.prop.dt_omega = parse_double(v); }},
      {"run.krylov_cap", [](RunConfig& c, const std::string& v) { c.prop.krylov_cap = static_cast<int>(parse_long(v)); }},
      {"run.snapshots", [](RunConfig& c, const std::string& v) { c.snapshots = parse_list(v); }},
      {"run.series_points", [](RunConfig& c, const std::string& v) { c.series_points = static_cast<int>(parse_long(v)); }},
      {"run.R0",
       [](RunConfig& c, const std::string& v) {
         if (trim(v) == "auto") {
           c.r0_auto = true;
         } else {
           c.r0_auto = false;
           c.r0 = parse_double(v);
         }
       }},
      {"sweep.JL", [](RunConfig& c, const std::string& v) { c.sweep_JL = parse_list(v); }},
      {"sweep.kappa", [](RunConfig& c, const std::string& v) { c.sweep_kappa = parse_list(v); }},
      {"sweep.workers", [](RunConfig& c, const std::string& v) { c.workers = static_cast<int>(parse_long(v)); }},
      {"tol.eps_den", [](RunConfig& c, const std::string& v) { c.eps_den = parse_double(v); }},
      {"tol.prop", [](RunConfig& c, const std::string& v) { c.prop.tol_prop = parse_double(v); }},
      {"tol.nac", [](RunConfig& c, const std::string& v) { c.tol_nac = parse_double(v); }},
      {"tol.leakage", [](RunConfig& c, const std::string& v) { c.prop.leakage_tol = parse_double(v); }},
      {"tol.norm_drift", [](RunConfig& c, const std::string& v) { c.prop.norm_drift_tol = parse_double(v); }},
      {"perturb.JL_series", [](RunConfig& c, const std::string& v) { c.JL_series = parse_list(v); }},
      {"perturb.readout", [](RunConfig& c, const std::string& v) { c.readout = parse_double(v); }},
      {"perturb.quad_steps", [](RunConfig& c, const std::string& v) { c.quad_steps = static_cast<int>(parse_long(v)); }},
      {"perturb.zeroth",
       [](RunConfig& c, const std::string& v) {
         const std::string t = trim(v);
         if (t == "adiabatic") c.zeroth = ZerothNuclei::adiabatic;
         else if (t == "frozen") c.zeroth = ZerothNuclei::frozen;
         else throw ConfigError("perturb.zeroth must be 'adiabatic' or 'frozen'");
       }},
  };
  return table;
}

/// Full dotted key. A bare key resolves to the model namespace first, then to
/// the single namespace that has it.
inline std::string resolve_key(const std::string& key) {
  const auto& table = setters();
  if (table.count(key)) return key;
  if (key.find('.') == std::string::npos) {
    if (table.count("model." + key)) return "model." + key;
    std::string found;
    for (const auto& [full, _] : table) {
      if (full.substr(full.find('.') + 1) == key) {
        if (!found.empty()) throw ConfigError("ambiguous key '" + key + "'");
        found = full;
      }
    }
    if (!found.empty()) return found;
  }
  throw ConfigError("unknown key '" + key + "'");
}

} // namespace detail

/// Applies one `key = value` assignment; `where` prefixes diagnostics.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value,
                          const std::string& where) {
  try {
    const std::string full = detail::resolve_key(detail::trim(key));
    detail::setters().at(full)(cfg, value);
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    const std::string prefix = "ConfigError: ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    throw ConfigError(where + ": " + msg);
  }
}

/// Parses config text. `source` names the input in diagnostics.
inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1), where);
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

/// Applies `key=value` overrides in order.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set " + s + ": expected key=value");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1), "--set " + s);
  }
}

/// All keys with their resolved values, in table order.
inline std::vector<std::pair<std::string, std::string>> describe(const RunConfig& c) {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  auto list = [&](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
    return s;
  };
  return {
      {"model.g0", num(c.model.g0)},
      {"model.gx", num(c.model.gx)},
      {"model.kappa", num(c.model.kappa)},
      {"model.alpha", std::to_string(c.model.alpha)},
      {"model.K", num(c.model.K)},
      {"model.LW", num(c.model.LW)},
      {"model.Lx", num(c.model.Lx)},
      {"model.sigma", num(c.model.sigma)},
      {"model.JL", num(c.model.JL)},
      {"model.pop1", num(c.pop1)},
      {"model.phi", num(c.phi)},
      {"grid.n_points", std::to_string(c.grid.n_points)},
      {"grid.dR", num(c.grid.dR)},
      {"run.mode", to_string(c.mode)},
      {"run.scheme", to_string(c.prop.scheme)},
      {"run.dt_omega", num(c.prop.dt_omega)},
      {"run.krylov_cap", std::to_string(c.prop.krylov_cap)},
      {"run.snapshots", list(c.snapshots)},
      {"run.series_points", std::to_string(c.series_points)},
      {"run.R0", c.r0_auto ? std::string("auto") : num(c.r0)},
      {"sweep.JL", list(c.sweep_JL)},
      {"sweep.kappa", list(c.sweep_kappa)},
      {"sweep.workers", std::to_string(c.workers)},
      {"tol.eps_den", num(c.eps_den)},
      {"tol.prop", num(c.prop.tol_prop)},
      {"tol.nac", num(c.tol_nac)},
      {"tol.leakage", num(c.prop.leakage_tol)},
      {"tol.norm_drift", num(c.prop.norm_drift_tol)},
      {"perturb.JL_series", list(c.JL_series)},
      {"perturb.readout", num(c.readout)},
      {"perturb.quad_steps", std::to_string(c.quad_steps)},
      {"perturb.zeroth", c.zeroth == ZerothNuclei::frozen ? "frozen" : "adiabatic"},
  };
}

} // namespace deortho
