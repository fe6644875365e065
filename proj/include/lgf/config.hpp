#pragma once

// Run configuration: a JSON tree with one section per stage, validated on load.
//
//   {
//     "seed": 1,
//     "model":       {"varpi": 1.4142135623730951, "toy": {"dimension": 1, "velocities": [[1,0,0], ...]}},
//     "equilibrium": {"r": 0.3, "theta": -0.1}            or {"n": [n0, n1, n2, n3, n4]},
//     "dynamics":    {"chi": 1.5, "L": 8, "epsilon": 0.125, "horizon": 0.0, "events": 1000000,
//                     "replicas": 1, "frames": 4, "collision_rate_scale": 1.0},
//     "spectral":    {"diffusion": {"kind": "scalar" | "compatible" | "full", "G": ..., "Dbar": ...},
//                     "tau_eig": 1e-9, "condition_cap": 1e8, "residual_tol": 1e-10,
//                     "lyapunov_tol": 1e-10, "hermiticity_tol": 1e-8},
//     "ou":          {"delta": 0.05, "lags": [0, 1, 10, 40], "replicas": 100000, "modes": [[1,0,0], ...], "z_max": 4},
//     "static":      {"L": 16, "samples": 20000, "modes": [[1,0,0], ...], "z_max": 4},
//     "oracles":     {"systems": [...], "trials": 3, "tolerance": 1e-10},
//     "outputs":     {"directory": "out", "formats": ["json", "csv", "bin"]}
//   }
//
// Toy velocity components are integers or [unit, varpi] pairs.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgf/equilibrium.hpp"
#include "lgf/errors.hpp"
#include "lgf/exactlab/enumerated.hpp"
#include "lgf/model.hpp"
#include "lgf/observables.hpp"
#include "lgf/spectral.hpp"

#ifndef LGF_VERSION
#define LGF_VERSION "1.0.0"
#endif

namespace lgf {

using json = nlohmann::json;

inline constexpr const char* kVersion = LGF_VERSION;

struct DynamicsConfig {
  double chi = 1.5;
  int L = 8;
  double epsilon = 0.125;
  double horizon = 0.0;
  std::uint64_t events = 0;
  int replicas = 1;
  int frames = 4;
  double collision_rate_scale = 1.0;
};

struct SpectralConfig {
  DiffusionTensor diffusion;
  std::string kind = "scalar";
  EigenOptions eigen;
  double lyapunov_tol = 1e-10;
  double hermiticity_tol = 1e-8;
};

struct OUConfig {
  double delta = 0.05;
  std::vector<int> lags{0, 1, 10, 40};
  std::size_t replicas = 100000;
  std::vector<ModeIndex> modes{{1, 0, 0}, {0, 1, 1}, {1, -1, 2}};
  double z_max = 4.0;
};

struct StaticConfig {
  int L = 16;
  std::size_t samples = 20000;
  std::vector<ModeIndex> modes;
  double z_max = 4.0;
};

struct OracleSystem {
  std::string name;
  int dimension = 1;
  std::array<int, 3> extent{2, 1, 1};
  bool periodic = true;
  ToySpec toy;
  double chi = 1.5;
  bool collisions = true;
  ChemicalPotential n{{0.2, -0.3, 0.15, 0.1, -0.25}};
};

struct OraclesConfig {
  std::vector<OracleSystem> systems;
  int trials = 3;
  double tolerance = 1e-10;
};

struct OutputConfig {
  std::string directory = "out";
  std::set<std::string> formats{"json", "csv", "bin"};
  [[nodiscard]] bool wants(const std::string& f) const { return formats.count(f) > 0; }
};

struct RunConfig {
  std::uint64_t seed = 0;
  double varpi = std::sqrt(2.0);
  std::optional<ToySpec> toy;
  ChemicalPotential n = ChemicalPotential::reference(0.3, -0.1);
  DynamicsConfig dynamics;
  SpectralConfig spectral;
  OUConfig ou;
  StaticConfig statics;
  OraclesConfig oracles;
  OutputConfig outputs;

  json source;  // the document as loaded, seed override applied
  std::uint64_t hash = 0;

  [[nodiscard]] VelocitySet velocities() const {
    return toy ? build_velocity_set(varpi, *toy) : build_velocity_set(varpi);
  }
};

// ---------------------------------------------------------------------------
// Hashing and provenance

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Object keys are kept sorted by nlohmann::json, so the dump is canonical.
inline std::uint64_t config_hash(const json& doc) { return fnv1a(doc.dump()); }

inline json provenance(const RunConfig& c) {
  return {{"version", kVersion}, {"config_hash", hex64(c.hash)}, {"config", c.source}};
}

/// Leading comment lines for CSV artifacts.
inline std::string csv_preamble(const RunConfig& c) {
  return "# lgf " + std::string(kVersion) + " config_hash=" + hex64(c.hash) + "\n# config " + c.source.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : keys) ok |= k == a;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
T read(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline double read_number(const json& j, const char* key, double fallback, const std::string& where) {
  const double x = read<double>(j, key, fallback, where);
  if (!std::isfinite(x)) throw ConfigError(where + "." + key + " must be finite");
  return x;
}

inline std::int64_t read_int(const json& j, const char* key, std::int64_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
  return j.at(key).get<std::int64_t>();
}

inline SymbolicScalar scalar(const json& j, const std::string& where) {
  if (j.is_number_integer()) return {j.get<std::int64_t>(), 0};
  if (j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer()) {
    return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
  }
  throw ConfigError(where + ": velocity components are integers or [unit, varpi] pairs");
}

inline ToySpec toy_spec(const json& j, const std::string& where) {
  allow_keys(j, where, {"dimension", "velocities"});
  ToySpec t;
  t.dimension = static_cast<int>(read_int(j, "dimension", 1, where));
  if (!j.contains("velocities") || !j["velocities"].is_array() || j["velocities"].empty()) {
    throw ConfigError(where + ".velocities must be a non-empty list");
  }
  for (const auto& v : j["velocities"]) {
    if (!v.is_array() || v.size() != 3) throw ConfigError(where + ": each velocity has three components");
    t.velocities.push_back({scalar(v[0], where), scalar(v[1], where), scalar(v[2], where)});
  }
  return t;
}

inline ModeIndex mode(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": a mode is three integers");
  ModeIndex z{};
  for (int a = 0; a < 3; ++a) {
    if (!j[a].is_number_integer()) throw ConfigError(where + ": a mode is three integers");
    z[a] = j[a].get<int>();
  }
  return z;
}

inline std::vector<ModeIndex> modes(const json& j, const char* key, std::vector<ModeIndex> fallback,
                                    const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_array()) throw ConfigError(where + "." + key + " must be a list");
  std::vector<ModeIndex> out;
  for (const auto& m : j[key]) out.push_back(mode(m, where + "." + key));
  return out;
}

inline Mat5d matrix5(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 5) throw ConfigError(where + " must be a 5x5 matrix");
  Mat5d m;
  for (int i = 0; i < 5; ++i) {
    if (!j[i].is_array() || j[i].size() != 5) throw ConfigError(where + " must be a 5x5 matrix");
    for (int k = 0; k < 5; ++k) {
      if (!j[i][k].is_number()) throw ConfigError(where + " entries must be numbers");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

inline ChemicalPotential potential(const json& j, const std::string& where) {
  allow_keys(j, where, {"r", "theta", "n"});
  if (j.contains("n")) {
    if (j.contains("r") || j.contains("theta")) throw ConfigError(where + ": give either n or (r, theta)");
    const auto& a = j["n"];
    if (!a.is_array() || a.size() != 5) throw ConfigError(where + ".n must have five entries");
    ChemicalPotential n;
    for (int b = 0; b < 5; ++b) {
      if (!a[b].is_number()) throw ConfigError(where + ".n entries must be numbers");
      n.n[b] = a[b].get<double>();
    }
    if (!n.finite()) throw ConfigError(where + ".n must be finite");
    return n;
  }
  return ChemicalPotential::reference(read_number(j, "r", 0.3, where), read_number(j, "theta", -0.1, where));
}

inline void check_modes(const std::vector<ModeIndex>& list, int L, int dim, const std::string& where) {
  for (const auto& z : list) {
    if (z == ModeIndex{0, 0, 0}) throw ConfigError(where + ": mode 0 is not a fluctuation mode");
    for (int a = 0; a < 3; ++a) {
      if (std::abs(z[a]) > L) throw ConfigError(where + ": mode outside the grid");
      if (a >= dim && z[a] != 0) throw ConfigError(where + ": mode component beyond the lattice dimension");
    }
  }
}

}  // namespace detail

/// The toy suite used by the `oracles` subcommand when none is configured.
inline std::vector<OracleSystem> default_oracle_suite() {
  auto sys = [](std::string name, int dim, std::array<int, 3> extent, std::vector<std::array<int, 3>> v) {
    OracleSystem s;
    s.name = std::move(name);
    s.dimension = dim;
    s.extent = extent;
    s.toy = ToySpec::from_integers(dim, v);
    return s;
  };
  return {sys("pair_1d", 1, {2, 1, 1}, {{1, 0, 0}, {-1, 0, 0}}),
          sys("three_speed_ring", 1, {4, 1, 1}, {{-1, 0, 0}, {0, 0, 0}, {1, 0, 0}}),
          sys("hpp_2x2", 2, {2, 2, 1}, {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}}),
          sys("axes_3d", 3, {2, 1, 1}, {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}})};
}

inline exactlab::SystemSpec system_spec(const OracleSystem& o, double varpi) {
  exactlab::SystemSpec s;
  s.lattice = std::make_shared<const Lattice>(o.dimension, o.extent, o.periodic);
  s.V = build_velocity_set(varpi, o.toy);
  s.chi = o.chi;
  s.collisions = o.collisions;
  return s;
}

/// Validates and loads a configuration document. `seed_override` replaces
/// (or supplies) the mandatory seed.
inline RunConfig parse_config(json doc, std::optional<std::uint64_t> seed_override = std::nullopt) {
  using namespace detail;
  allow_keys(doc, "config",
             {"seed", "model", "equilibrium", "dynamics", "spectral", "ou", "static", "oracles", "outputs"});
  if (seed_override) doc["seed"] = *seed_override;
  if (!doc.contains("seed")) throw ConfigError("seed is mandatory");
  if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<std::int64_t>() >= 0)) {
    throw ConfigError("seed must be a non-negative integer");
  }
  RunConfig c;
  c.seed = doc["seed"].get<std::uint64_t>();

  const json empty = json::object();
  auto section = [&](const char* key) -> const json& { return doc.contains(key) ? doc[key] : empty; };

  const auto& model = section("model");
  allow_keys(model, "model", {"varpi", "toy"});
  c.varpi = read_number(model, "varpi", std::sqrt(2.0), "model");
  if (model.contains("toy") && !model["toy"].is_null()) c.toy = toy_spec(model["toy"], "model.toy");
  const VelocitySet V = c.velocities();  // validates varpi and the toy table

  c.n = potential(section("equilibrium"), "equilibrium");

  const auto& dyn = section("dynamics");
  allow_keys(dyn, "dynamics",
             {"chi", "L", "epsilon", "horizon", "events", "replicas", "frames", "collision_rate_scale"});
  auto& d = c.dynamics;
  d.chi = read_number(dyn, "chi", d.chi, "dynamics");
  d.L = static_cast<int>(read_int(dyn, "L", d.L, "dynamics"));
  if (d.L < 1) throw ConfigError("dynamics.L must be at least 1");
  d.epsilon = read_number(dyn, "epsilon", 1.0 / d.L, "dynamics");
  d.horizon = read_number(dyn, "horizon", d.horizon, "dynamics");
  const auto events = read_int(dyn, "events", 0, "dynamics");
  d.replicas = static_cast<int>(read_int(dyn, "replicas", d.replicas, "dynamics"));
  d.frames = static_cast<int>(read_int(dyn, "frames", d.frames, "dynamics"));
  d.collision_rate_scale = read_number(dyn, "collision_rate_scale", d.collision_rate_scale, "dynamics");
  if (!(d.chi > 0.5 * V.max_abs_component())) throw ConfigError("dynamics.chi must exceed max|v_alpha|/2");
  if (!(d.epsilon > 0.0)) throw ConfigError("dynamics.epsilon must be positive");
  if (d.horizon < 0.0 || events < 0) throw ConfigError("dynamics.horizon and dynamics.events must be non-negative");
  d.events = static_cast<std::uint64_t>(events);
  if (d.replicas < 1 || d.frames < 1) throw ConfigError("dynamics.replicas and dynamics.frames must be positive");
  if (d.collision_rate_scale < 0.0) throw ConfigError("dynamics.collision_rate_scale must be non-negative");

  const auto& sp = section("spectral");
  allow_keys(sp, "spectral",
             {"diffusion", "tau_eig", "condition_cap", "residual_tol", "lyapunov_tol", "hermiticity_tol"});
  auto& s = c.spectral;
  s.eigen.tau_eig = read_number(sp, "tau_eig", s.eigen.tau_eig, "spectral");
  s.eigen.condition_cap = read_number(sp, "condition_cap", s.eigen.condition_cap, "spectral");
  s.eigen.residual_tol = read_number(sp, "residual_tol", s.eigen.residual_tol, "spectral");
  s.lyapunov_tol = read_number(sp, "lyapunov_tol", s.lyapunov_tol, "spectral");
  s.hermiticity_tol = read_number(sp, "hermiticity_tol", s.hermiticity_tol, "spectral");
  s.diffusion = DiffusionTensor(d.chi);
  if (sp.contains("diffusion")) {
    const auto& df = sp["diffusion"];
    allow_keys(df, "spectral.diffusion", {"kind", "G", "Dbar"});
    s.kind = read<std::string>(df, "kind", "scalar", "spectral.diffusion");
    if (s.kind == "compatible") {
      if (!df.contains("G")) throw ConfigError("spectral.diffusion.G is required for kind 'compatible'");
      const Mat5d G = matrix5(df["G"], "spectral.diffusion.G");
      if ((G - G.transpose()).cwiseAbs().maxCoeff() > 0.0) throw ConfigError("spectral.diffusion.G must be symmetric");
      const Mat5d C = compressibility_matrix(equilibrium_params(c.n, V));
      s.diffusion = compatible_diffusion(d.chi, G, C);
    } else if (s.kind == "full") {
      const auto& t = df.contains("Dbar") ? df["Dbar"] : json();
      if (!t.is_array() || t.size() != 3) throw ConfigError("spectral.diffusion.Dbar must be 3x3x5x5");
      for (int a = 0; a < 3; ++a) {
        if (!t[a].is_array() || t[a].size() != 3) throw ConfigError("spectral.diffusion.Dbar must be 3x3x5x5");
        for (int g = 0; g < 3; ++g) s.diffusion.Dbar[a][g] = matrix5(t[a][g], "spectral.diffusion.Dbar");
      }
    } else if (s.kind != "scalar") {
      throw ConfigError("spectral.diffusion.kind must be scalar, compatible or full");
    }
  }
  validate(s.diffusion);

  const auto& ou = section("ou");
  allow_keys(ou, "ou", {"delta", "lags", "replicas", "modes", "z_max"});
  c.ou.delta = read_number(ou, "delta", c.ou.delta, "ou");
  if (!(c.ou.delta > 0.0)) throw ConfigError("ou.delta must be positive");
  c.ou.lags = read<std::vector<int>>(ou, "lags", c.ou.lags, "ou");
  {
    bool zero = false;
    for (int l : c.ou.lags) {
      if (l < 0) throw ConfigError("ou.lags must be non-negative");
      zero |= l == 0;
    }
    if (!zero || c.ou.lags.size() < 2) throw ConfigError("ou.lags must contain 0 and at least one more lag");
  }
  const auto ou_replicas = read_int(ou, "replicas", static_cast<std::int64_t>(c.ou.replicas), "ou");
  if (ou_replicas < 2) throw ConfigError("ou.replicas must be at least 2");
  c.ou.replicas = static_cast<std::size_t>(ou_replicas);
  c.ou.modes = modes(ou, "modes", c.ou.modes, "ou");
  c.ou.z_max = read_number(ou, "z_max", c.ou.z_max, "ou");
  check_modes(c.ou.modes, d.L, V.dimension(), "ou.modes");

  const auto& st = section("static");
  allow_keys(st, "static", {"L", "samples", "modes", "z_max"});
  c.statics.L = static_cast<int>(read_int(st, "L", d.L, "static"));
  if (c.statics.L < 1) throw ConfigError("static.L must be at least 1");
  const auto samples = read_int(st, "samples", static_cast<std::int64_t>(c.statics.samples), "static");
  if (samples < 2) throw ConfigError("static.samples must be at least 2");
  c.statics.samples = static_cast<std::size_t>(samples);
  c.statics.modes = modes(st, "modes", c.ou.modes, "static");
  c.statics.z_max = read_number(st, "z_max", c.statics.z_max, "static");
  check_modes(c.statics.modes, c.statics.L, V.dimension(), "static.modes");

  const auto& orc = section("oracles");
  allow_keys(orc, "oracles", {"systems", "trials", "tolerance"});
  c.oracles.trials = static_cast<int>(read_int(orc, "trials", c.oracles.trials, "oracles"));
  c.oracles.tolerance = read_number(orc, "tolerance", c.oracles.tolerance, "oracles");
  if (c.oracles.trials < 1 || !(c.oracles.tolerance > 0.0)) throw ConfigError("oracles.trials and tolerance must be positive");
  if (orc.contains("systems")) {
    if (!orc["systems"].is_array()) throw ConfigError("oracles.systems must be a list");
    int i = 0;
    for (const auto& js : orc["systems"]) {
      const std::string where = "oracles.systems[" + std::to_string(i++) + "]";
      allow_keys(js, where, {"name", "extent", "periodic", "toy", "chi", "collisions", "equilibrium"});
      OracleSystem o;
      o.name = read<std::string>(js, "name", "system" + std::to_string(i - 1), where);
      if (!js.contains("toy")) throw ConfigError(where + ".toy is required");
      o.toy = toy_spec(js["toy"], where + ".toy");
      o.dimension = o.toy.dimension;
      o.extent = read<std::array<int, 3>>(js, "extent", o.extent, where);
      o.periodic = read<bool>(js, "periodic", o.periodic, where);
      o.chi = read_number(js, "chi", o.chi, where);
      o.collisions = read<bool>(js, "collisions", o.collisions, where);
      if (js.contains("equilibrium")) o.n = potential(js["equilibrium"], where + ".equilibrium");
      const VelocitySet toyV = build_velocity_set(c.varpi, o.toy);
      const Lattice lat(o.dimension, o.extent, o.periodic);
      if (lat.sites() * toyV.size() > 20) throw ConfigError(where + " exceeds 2^20 states");
      if (!(o.chi > 0.5 * toyV.max_abs_component())) throw ConfigError(where + ".chi too small");
      c.oracles.systems.push_back(std::move(o));
    }
  } else {
    c.oracles.systems = default_oracle_suite();
  }

  const auto& out = section("outputs");
  allow_keys(out, "outputs", {"directory", "formats"});
  c.outputs.directory = read<std::string>(out, "directory", c.outputs.directory, "outputs");
  if (out.contains("formats")) {
    c.outputs.formats.clear();
    for (const auto& f : read<std::vector<std::string>>(out, "formats", {}, "outputs")) {
      if (f != "json" && f != "csv" && f != "bin") throw ConfigError("outputs.formats: unknown format " + f);
      c.outputs.formats.insert(f);
    }
    if (!c.outputs.wants("json")) throw ConfigError("outputs.formats must include json (summaries are JSON)");
  }

  c.source = std::move(doc);
  c.hash = config_hash(c.source);
  return c;
}

inline RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(std::move(doc), seed_override);
}

}  // namespace lgf
