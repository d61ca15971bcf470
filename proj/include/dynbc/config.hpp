#pragma once

// Experiment configuration.
//
// Grammar: one `key = value` per line, `#` starts a comment, blank lines are
// ignored, keys are dotted (section.name), lists are comma separated. Every key
// has a default; unknown or repeated keys and malformed values raise
// ConfigError naming the key.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dynbc/carleman.hpp"
#include "dynbc/coefficients.hpp"
#include "dynbc/error.hpp"
#include "dynbc/field_io.hpp"
#include "dynbc/forward.hpp"
#include "dynbc/inverse.hpp"

namespace dynbc {

struct ExperimentConfig {
  // mesh
  double radius = 1.0;
  int nr = 32;
  int nth = 64;
  // coefficients
  std::string preset = "identity";
  PresetParams params;
  // time
  WindowSetup window;
  Scheme scheme = Scheme::ImplicitEuler;
  double rtol = 1e-10;
  // forward
  std::string forward_source = "separable";  // separable | zero | radial
  std::string forward_initial = "zero";      // zero | random
  // convergence
  int convergence_levels = 3;
  int convergence_base_nr = 16;
  int convergence_base_nth = 32;
  int convergence_spatial_steps = 400;
  std::vector<int> convergence_time_steps = {25, 50, 100, 200};
  double convergence_t_end = 1.0;
  // carleman
  double lambda = 1.5;
  std::vector<double> s_grid = {2, 4, 8, 16, 32};
  int carleman_ensemble = 20;
  double omega_radius = 0.3;
  double omega_prime_radius = 0.2;
  bool discrete_L = false;
  bool carleman_refine = true;
  // inverse
  SectorMask omega;
  double known_amplitude = 0.5;
  int n_radial = 4;
  int n_angular = 16;
  int n_surface = 16;
  double epsilon = 1e-10;
  std::vector<double> noise_levels = {1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
  std::vector<double> epsilon_grid = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7};
  // stability
  int stability_samples = 50;
  int stability_pairs = 25;
  bool stability_refine = true;
  // run
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  DiskMesh mesh() const { return DiskMesh(radius, nr, nth); }
  ProblemCoefficients coefficients(const DiskMesh& m) const { return preset_coefficients(m); }
  ProblemCoefficients preset_coefficients(const DiskMesh& m) const { return dynbc::preset(preset, m, params); }

  InverseSetup inverse_setup(int refine = 1) const {
    const DiskMesh m(radius, nr * refine, nth * refine);
    return InverseSetup(m, preset_coefficients(m), window.refined(refine), omega,
                        KnownPart::standard(radius, known_amplitude), scheme, rtol);
  }

  CarlemanSweepConfig carleman() const {
    CarlemanSweepConfig c;
    c.radius = radius;
    c.nr = nr;
    c.nth = nth;
    c.preset = preset;
    c.params = params;
    c.window = window;
    c.scheme = scheme;
    c.rtol = rtol;
    c.lambda = lambda;
    c.s_grid = s_grid;
    c.ensemble = carleman_ensemble;
    c.seed = seed;
    c.omega_radius = omega_radius;
    c.omega_prime_radius = omega_prime_radius;
    c.n_radial = n_radial;
    c.n_angular = n_angular;
    c.n_surface = n_surface;
    c.discrete_L = discrete_L;
    c.known_amplitude = known_amplitude;
    return c;
  }

  StabilityConfig stability() const {
    StabilityConfig s;
    s.samples = stability_samples;
    s.pairs = stability_pairs;
    s.seed = seed;
    s.refine = stability_refine;
    s.n_radial = n_radial;
    s.n_angular = n_angular;
    s.n_surface = n_surface;
    return s;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a finite number, got '" + v + "'");
  }
}

inline long long parse_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an unsigned 64-bit integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      s += format_number(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

struct KeySpec {
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::map<std::string, KeySpec>& config_keys() {
  using C = ExperimentConfig;
  static const std::map<std::string, KeySpec> keys = [] {
    std::map<std::string, KeySpec> k;
    auto dbl = [&](const char* name, double C::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) { c.*m = parse_double(key, v); },
                 [m](const C& c) { return format_number(c.*m); }};
    };
    auto integer = [&](const char* name, int C::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) { c.*m = int(parse_integer(key, v)); },
                 [m](const C& c) { return std::to_string(c.*m); }};
    };
    auto boolean = [&](const char* name, bool C::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) { c.*m = parse_bool(key, v); },
                 [m](const C& c) { return std::string(c.*m ? "true" : "false"); }};
    };
    auto text = [&](const char* name, std::string C::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) {
                   if (v.empty()) throw ConfigError(key, "value must not be empty");
                   c.*m = v;
                 },
                 [m](const C& c) { return c.*m; }};
    };
    auto dlist = [&](const char* name, std::vector<double> C::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) {
                   std::vector<double> out;
                   for (const auto& s : split_list(v)) out.push_back(parse_double(key, s));
                   if (out.empty()) throw ConfigError(key, "list must not be empty");
                   c.*m = out;
                 },
                 [m](const C& c) { return join(c.*m); }};
    };
    auto ilist = [&](const char* name, std::vector<int> C::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) {
                   std::vector<int> out;
                   for (const auto& s : split_list(v)) out.push_back(int(parse_integer(key, s)));
                   if (out.empty()) throw ConfigError(key, "list must not be empty");
                   c.*m = out;
                 },
                 [m](const C& c) { return join(c.*m); }};
    };
    auto pdbl = [&](const char* name, double PresetParams::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) { c.params.*m = parse_double(key, v); },
                 [m](const C& c) { return format_number(c.params.*m); }};
    };
    auto wdbl = [&](const char* name, double WindowSetup::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) { c.window.*m = parse_double(key, v); },
                 [m](const C& c) { return format_number(c.window.*m); }};
    };
    auto wint = [&](const char* name, int WindowSetup::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) {
                   c.window.*m = int(parse_integer(key, v));
                 },
                 [m](const C& c) { return std::to_string(c.window.*m); }};
    };
    auto odbl = [&](const char* name, double SectorMask::*m) {
      k[name] = {[m](C& c, const std::string& key, const std::string& v) { c.omega.*m = parse_double(key, v); },
                 [m](const C& c) { return format_number(c.omega.*m); }};
    };

    dbl("mesh.radius", &C::radius);
    integer("mesh.nr", &C::nr);
    integer("mesh.nth", &C::nth);
    text("coefficients.preset", &C::preset);
    pdbl("coefficients.a0", &PresetParams::a0);
    pdbl("coefficients.a1", &PresetParams::a1);
    pdbl("coefficients.amplitude", &PresetParams::amplitude);
    pdbl("coefficients.coupling", &PresetParams::coupling);
    pdbl("coefficients.drift", &PresetParams::drift);
    pdbl("coefficients.potential", &PresetParams::potential);
    k["coefficients.seed"] = {[](C& c, const std::string& key, const std::string& v) { c.params.seed = parse_u64(key, v); },
                              [](const C& c) { return std::to_string(c.params.seed); }};
    wdbl("time.t_start", &WindowSetup::t_start);
    wdbl("time.t0", &WindowSetup::t0);
    wdbl("time.T", &WindowSetup::T);
    wint("time.window_steps", &WindowSetup::window_steps);
    wint("time.pre_steps", &WindowSetup::pre_steps);
    k["time.scheme"] = {[](C& c, const std::string& key, const std::string& v) {
                          try {
                            c.scheme = parse_scheme(v);
                          } catch (const InvalidArgument&) {
                            throw ConfigError(key, "expected implicit_euler or trapezoidal, got '" + v + "'");
                          }
                        },
                        [](const C& c) { return std::string(scheme_name(c.scheme)); }};
    dbl("time.rtol", &C::rtol);
    text("forward.source", &C::forward_source);
    text("forward.initial", &C::forward_initial);
    integer("convergence.levels", &C::convergence_levels);
    integer("convergence.base_nr", &C::convergence_base_nr);
    integer("convergence.base_nth", &C::convergence_base_nth);
    integer("convergence.spatial_steps", &C::convergence_spatial_steps);
    ilist("convergence.time_steps", &C::convergence_time_steps);
    dbl("convergence.t_end", &C::convergence_t_end);
    dbl("carleman.lambda", &C::lambda);
    dlist("carleman.s_grid", &C::s_grid);
    integer("carleman.ensemble", &C::carleman_ensemble);
    dbl("carleman.omega_radius", &C::omega_radius);
    dbl("carleman.omega_prime_radius", &C::omega_prime_radius);
    boolean("carleman.discrete_L", &C::discrete_L);
    boolean("carleman.refine", &C::carleman_refine);
    odbl("inverse.omega.r_in", &SectorMask::r_in);
    odbl("inverse.omega.r_out", &SectorMask::r_out);
    odbl("inverse.omega.theta_lo", &SectorMask::th_lo);
    odbl("inverse.omega.theta_hi", &SectorMask::th_hi);
    dbl("inverse.known_amplitude", &C::known_amplitude);
    integer("inverse.basis.radial", &C::n_radial);
    integer("inverse.basis.angular", &C::n_angular);
    integer("inverse.basis.surface", &C::n_surface);
    dbl("inverse.epsilon", &C::epsilon);
    dlist("inverse.noise_levels", &C::noise_levels);
    dlist("inverse.epsilon_grid", &C::epsilon_grid);
    integer("stability.samples", &C::stability_samples);
    integer("stability.pairs", &C::stability_pairs);
    boolean("stability.refine", &C::stability_refine);
    k["seed"] = {[](C& c, const std::string& key, const std::string& v) { c.seed = parse_u64(key, v); },
                 [](const C& c) { return std::to_string(c.seed); }};
    text("output.dir", &C::output_dir);
    return k;
  }();
  return keys;
}

}  // namespace detail

/// Range and consistency checks; errors name the first offending key.
inline void validate_config(const ExperimentConfig& c) {
  auto need = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
  };
  need(c.radius > 0.0, "mesh.radius", "must be positive");
  need(c.nr >= 2, "mesh.nr", "must be >= 2");
  need(c.nth >= 4 && c.nth % 2 == 0, "mesh.nth", "must be even and >= 4");
  {
    bool known = false;
    for (const char* n : preset_names()) known = known || c.preset == n;
    need(known, "coefficients.preset", "unknown preset '" + c.preset + "'");
  }
  need(c.params.a0 > 0.0, "coefficients.a0", "must be positive");
  need(c.params.a1 >= 0.0, "coefficients.a1", "must be nonnegative");
  need(c.window.T > c.window.t0, "time.T", "must exceed time.t0");
  need(c.window.t0 > c.window.t_start || (c.window.t0 == c.window.t_start && c.window.pre_steps == 0), "time.t0",
       "must not precede time.t_start");
  need(c.window.window_steps >= 2 && c.window.window_steps % 2 == 0, "time.window_steps", "must be even and >= 2");
  need(c.window.pre_steps >= 0, "time.pre_steps", "must be nonnegative");
  {
    const double dt = (c.window.T - c.window.t0) / c.window.window_steps;
    need(std::abs((c.window.t0 - c.window.t_start) - c.window.pre_steps * dt) <= 1e-9 * std::max(1.0, std::abs(c.window.t0)),
         "time.pre_steps", "must equal (t0 - t_start) / dt with dt = (T - t0) / window_steps");
  }
  need(c.rtol > 0.0 && c.rtol < 1.0, "time.rtol", "must lie in (0, 1)");
  need(c.forward_source == "separable" || c.forward_source == "zero" || c.forward_source == "radial", "forward.source",
       "expected separable, zero or radial");
  need(c.forward_initial == "zero" || c.forward_initial == "random", "forward.initial", "expected zero or random");
  need(c.convergence_levels >= 2, "convergence.levels", "must be >= 2");
  need(c.convergence_base_nr >= 2, "convergence.base_nr", "must be >= 2");
  need(c.convergence_base_nth >= 4 && c.convergence_base_nth % 2 == 0, "convergence.base_nth", "must be even and >= 4");
  need(c.convergence_spatial_steps >= 1, "convergence.spatial_steps", "must be positive");
  need(c.convergence_time_steps.size() >= 3, "convergence.time_steps", "needs at least three entries");
  for (std::size_t i = 0; i < c.convergence_time_steps.size(); ++i)
    need(c.convergence_time_steps[i] >= 3 && (i == 0 || c.convergence_time_steps[i] > c.convergence_time_steps[i - 1]),
         "convergence.time_steps", "must be increasing and >= 3");
  need(c.convergence_t_end > 0.0, "convergence.t_end", "must be positive");
  need(c.lambda > 0.0, "carleman.lambda", "must be positive");
  for (std::size_t i = 0; i < c.s_grid.size(); ++i)
    need(c.s_grid[i] >= 1.0 && (i == 0 || c.s_grid[i] > c.s_grid[i - 1]), "carleman.s_grid",
         "must be increasing with entries >= 1");
  need(c.carleman_ensemble >= 1, "carleman.ensemble", "must be >= 1");
  need(c.omega_prime_radius > 0.0, "carleman.omega_prime_radius", "must be positive");
  need(c.omega_radius > c.omega_prime_radius && c.omega_radius < c.radius, "carleman.omega_radius",
       "must lie between carleman.omega_prime_radius and mesh.radius");
  need(c.omega.r_in >= 0.0, "inverse.omega.r_in", "must be nonnegative");
  need(c.omega.r_out > c.omega.r_in && c.omega.r_out < c.radius, "inverse.omega.r_out",
       "must lie between inverse.omega.r_in and mesh.radius");
  need(c.omega.th_hi > c.omega.th_lo, "inverse.omega.theta_hi", "must exceed inverse.omega.theta_lo");
  need(c.known_amplitude >= 0.0 && c.known_amplitude < 1.0, "inverse.known_amplitude", "must lie in [0, 1)");
  need(c.n_radial >= 1 && c.n_radial <= c.nr, "inverse.basis.radial", "must lie in [1, mesh.nr]");
  need(c.n_angular >= 1 && c.n_angular <= c.nth, "inverse.basis.angular", "must lie in [1, mesh.nth]");
  need(c.n_surface >= 0 && c.n_surface <= c.nth, "inverse.basis.surface", "must lie in [0, mesh.nth]");
  need(c.n_radial * c.n_angular + c.n_surface <= 80, "inverse.basis.radial", "basis dimension exceeds the cap of 80");
  need(c.epsilon > 0.0, "inverse.epsilon", "must be positive");
  for (double d : c.noise_levels) need(d > 0.0, "inverse.noise_levels", "entries must be positive");
  for (std::size_t i = 0; i < c.epsilon_grid.size(); ++i)
    need(c.epsilon_grid[i] > 0.0 && (i == 0 || c.epsilon_grid[i] < c.epsilon_grid[i - 1]), "inverse.epsilon_grid",
         "must be positive and decreasing");
  need(c.stability_samples >= 0, "stability.samples", "must be nonnegative");
  need(c.stability_pairs >= 0, "stability.pairs", "must be nonnegative");
  need(c.stability_samples + c.stability_pairs >= 2, "stability.samples", "ensemble needs at least two members");
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  const auto& keys = detail::config_keys();
  std::map<std::string, int> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line, "line " + std::to_string(lineno) + " is not of the form key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError(key, "unknown key (line " + std::to_string(lineno) + ")");
    if (seen.count(key)) throw ConfigError(key, "repeated on line " + std::to_string(lineno));
    seen[key] = lineno;
    it->second.set(c, key, value);
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--config", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

/// Canonical `key = value` listing of every setting (sorted by key).
inline std::string config_to_text(const ExperimentConfig& c, bool include_output = true) {
  std::string s;
  for (const auto& [key, spec] : detail::config_keys()) {
    if (!include_output && key == "output.dir") continue;
    s += key + " = " + spec.get(c) + "\n";
  }
  return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

/// Hash of the canonical configuration without the output directory.
inline std::string config_hash(const ExperimentConfig& c) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config_to_text(c, false))));
  return buf;
}

}  // namespace dynbc
