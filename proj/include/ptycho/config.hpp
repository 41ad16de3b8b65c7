#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ptycho/admm.hpp"
#include "ptycho/baselines.hpp"
#include "ptycho/error.hpp"
#include "ptycho/harness.hpp"
#include "ptycho/lattice.hpp"
#include "ptycho/metrics.hpp"

namespace ptycho {

enum class SolverKind { admm, admm2, epie, dr, palm };

inline std::string_view to_string(SolverKind s) {
  switch (s) {
    case SolverKind::admm: return "admm";
    case SolverKind::admm2: return "admm2";
    case SolverKind::epie: return "epie";
    case SolverKind::dr: return "dr";
    case SolverKind::palm: return "palm";
  }
  return "admm";
}

inline SolverKind parse_solver_kind(std::string_view s) {
  if (s == "admm") return SolverKind::admm;
  if (s == "admm2") return SolverKind::admm2;
  if (s == "epie") return SolverKind::epie;
  if (s == "dr") return SolverKind::dr;
  if (s == "palm") return SolverKind::palm;
  throw ConfigError("unknown solver '" + std::string(s) + "' (expected admm|admm2|epie|dr|palm)");
}

/// Flat experiment description. Every field maps to one key of the JSON
/// config document under the same name.
struct ExperimentConfig {
  std::string preset;

  // geometry and simulation
  int image_side = 64;
  int frame_side = 16;
  int dist = 4;
  LatticeKind lattice = LatticeKind::random;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> lattice_seed;  ///< defaults to seed
  PhantomStyle phantom = PhantomStyle::complex_pair;
  ProbeStyle probe = ProbeStyle::disk_defocus;
  double probe_amplitude = 10.0;
  std::optional<double> eta;  ///< nullopt: noiseless data

  // solver selection and stopping
  SolverKind solver = SolverKind::admm;
  Metric metric = Metric::pagm;
  std::optional<double> epsilon;  ///< absolute; otherwise epsilon_rel * max f
  double epsilon_rel = 1e-8;
  int max_iters = 1000;
  double rfactor_tol = 1e-6;

  // ADMM (Model I and II)
  double beta = 0.04;
  std::optional<double> alpha1;  ///< defaults to beta (beta1 for Model II)
  std::optional<double> alpha2;
  bool safeguarded = true;
  double r1 = 1e-6;
  double r2 = 1e-3;
  double s1 = 1e-6;
  double s2 = 1e-6;
  double c_omega = 1e8;
  double c_u = 1e8;
  int prox_inner_iters = 1;
  std::optional<double> prox_step;
  double beta1 = 0.04;
  double beta2 = 0.4;
  double tau = 10.0;

  // baselines
  double d1 = 1.0;
  double d2 = 1.0;
  int dr_inner_T = 2;
  double palm_tau1 = 1.0;
  double palm_tau2 = 1.0;
  PalmStepRule palm_steps = PalmStepRule::adaptive;

  // files
  std::string data;  ///< dataset directory written by `simulate`
  std::string out;
  bool dump_pgm = false;
};

namespace config_detail {

using nlohmann::json;

inline const std::map<std::string, json, std::less<>>& presets() {
  static const std::map<std::string, json, std::less<>> table = [] {
    std::map<std::string, json, std::less<>> t;
    const json noiseless{{"solver", "admm"}, {"precond", "safeguarded"}, {"max_iters", 1000}, {"rfactor_tol", 1e-6}};
    const json noisy{{"solver", "admm"}, {"precond", "safeguarded"}, {"max_iters", 300}, {"rfactor_tol", 0.0},
                     {"eta", 1.0}};
    auto with = [](json base, json extra) {
      base.update(extra);
      return base;
    };
    t["paper-noiseless-pagm"] = with(noiseless, {{"metric", "pagm"}, {"beta", 0.04}});
    t["paper-noiseless-pipm"] = with(noiseless, {{"metric", "pipm"}, {"beta", 0.1}});
    t["paper-noiseless-igm"] = with(noiseless, {{"metric", "igm"}, {"beta", 0.04}});
    t["paper-noiseless-wigm"] = with(noiseless, {{"metric", "wigm"}, {"beta", 0.1}, {"epsilon", 0.1}});
    t["paper-noisy-pagm"] = with(noisy, {{"metric", "pagm"}, {"beta", 0.2}});
    t["paper-noisy-pipm"] = with(noisy, {{"metric", "pipm"}, {"beta", 0.3}});
    t["paper-noisy-igm"] = with(noisy, {{"metric", "igm"}, {"beta", 100.0}});
    t["paper-noisy-wigm"] = with(noisy, {{"metric", "wigm"}, {"beta", 1.0}, {"epsilon", 10.0}});
    t["paper-model2"] = with(noiseless, {{"solver", "admm2"},
                                         {"metric", "pagm"},
                                         {"lattice", "square"},
                                         {"beta1", 0.04},
                                         {"beta2", 0.4},
                                         {"tau", 10.0}});
    return t;
  }();
  return table;
}

template <class T>
T as(const json& v, std::string_view key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' has the wrong type (" + v.dump() + ")");
  }
}

inline int as_int(const json& v, std::string_view key) {
  if (!v.is_number_integer()) throw ConfigError("config key '" + std::string(key) + "' must be an integer");
  return v.get<int>();
}

inline std::uint64_t as_u64(const json& v, std::string_view key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ConfigError("config key '" + std::string(key) + "' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline double as_num(const json& v, std::string_view key) {
  if (!v.is_number()) throw ConfigError("config key '" + std::string(key) + "' must be a number");
  return v.get<double>();
}

inline void apply_key(ExperimentConfig& c, const std::string& k, const json& v) {
  if (k == "preset") c.preset = as<std::string>(v, k);
  else if (k == "image_side") c.image_side = as_int(v, k);
  else if (k == "frame_side") c.frame_side = as_int(v, k);
  else if (k == "dist") c.dist = as_int(v, k);
  else if (k == "lattice") c.lattice = parse_lattice_kind(as<std::string>(v, k));
  else if (k == "seed") c.seed = as_u64(v, k);
  else if (k == "lattice_seed") c.lattice_seed = as_u64(v, k);
  else if (k == "phantom") c.phantom = parse_phantom_style(as<std::string>(v, k));
  else if (k == "probe") c.probe = parse_probe_style(as<std::string>(v, k));
  else if (k == "probe_amplitude") c.probe_amplitude = as_num(v, k);
  else if (k == "eta") c.eta = v.is_null() ? std::nullopt : std::optional<double>(as_num(v, k));
  else if (k == "solver") c.solver = parse_solver_kind(as<std::string>(v, k));
  else if (k == "metric") c.metric = parse_metric(as<std::string>(v, k));
  else if (k == "epsilon") c.epsilon = v.is_null() ? std::nullopt : std::optional<double>(as_num(v, k));
  else if (k == "epsilon_rel") c.epsilon_rel = as_num(v, k);
  else if (k == "max_iters") c.max_iters = as_int(v, k);
  else if (k == "rfactor_tol") c.rfactor_tol = as_num(v, k);
  else if (k == "beta") c.beta = as_num(v, k);
  else if (k == "alpha1") c.alpha1 = as_num(v, k);
  else if (k == "alpha2") c.alpha2 = as_num(v, k);
  else if (k == "precond") {
    const auto s = as<std::string>(v, k);
    if (s != "none" && s != "safeguarded")
      throw ConfigError("config key 'precond' must be \"none\" or \"safeguarded\"");
    c.safeguarded = s == "safeguarded";
  } else if (k == "r1") c.r1 = as_num(v, k);
  else if (k == "r2") c.r2 = as_num(v, k);
  else if (k == "s1") c.s1 = as_num(v, k);
  else if (k == "s2") c.s2 = as_num(v, k);
  else if (k == "c_omega") c.c_omega = as_num(v, k);
  else if (k == "c_u") c.c_u = as_num(v, k);
  else if (k == "prox_inner_iters") c.prox_inner_iters = as_int(v, k);
  else if (k == "prox_step") c.prox_step = as_num(v, k);
  else if (k == "beta1") c.beta1 = as_num(v, k);
  else if (k == "beta2") c.beta2 = as_num(v, k);
  else if (k == "tau") c.tau = as_num(v, k);
  else if (k == "d1") c.d1 = as_num(v, k);
  else if (k == "d2") c.d2 = as_num(v, k);
  else if (k == "dr_inner_T") c.dr_inner_T = as_int(v, k);
  else if (k == "palm_tau1") c.palm_tau1 = as_num(v, k);
  else if (k == "palm_tau2") c.palm_tau2 = as_num(v, k);
  else if (k == "palm_steps") {
    const auto s = as<std::string>(v, k);
    if (s == "adaptive") c.palm_steps = PalmStepRule::adaptive;
    else if (s == "fixed") c.palm_steps = PalmStepRule::fixed;
    else throw ConfigError("config key 'palm_steps' must be \"adaptive\" or \"fixed\"");
  } else if (k == "data") c.data = as<std::string>(v, k);
  else if (k == "out") c.out = as<std::string>(v, k);
  else if (k == "dump_pgm") c.dump_pgm = as<bool>(v, k);
  else throw ConfigError("unknown config key '" + k + "'");
}

}  // namespace config_detail

inline std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : config_detail::presets()) names.push_back(k);
  return names;
}

/// Defaults, then the preset (from `overrides` or `file`), then the file,
/// then `overrides`. Unknown keys and ill-typed values are configuration
/// errors.
inline ExperimentConfig resolve_config(const nlohmann::json& file, const nlohmann::json& overrides) {
  if (!file.is_object() || !overrides.is_object()) throw ConfigError("config must be a flat JSON object");
  ExperimentConfig c;
  std::string preset;
  if (overrides.contains("preset")) preset = config_detail::as<std::string>(overrides["preset"], "preset");
  else if (file.contains("preset")) preset = config_detail::as<std::string>(file["preset"], "preset");
  if (!preset.empty()) {
    const auto& table = config_detail::presets();
    auto it = table.find(preset);
    if (it == table.end()) {
      std::string known;
      for (const auto& [k, v] : table) known += (known.empty() ? "" : ", ") + k;
      throw ConfigError("unknown preset '" + preset + "' (known: " + known + ")");
    }
    for (const auto& [k, v] : it->second.items()) config_detail::apply_key(c, k, v);
    c.preset = preset;
  }
  for (const auto& [k, v] : file.items())
    if (k != "preset") config_detail::apply_key(c, k, v);
  for (const auto& [k, v] : overrides.items())
    if (k != "preset") config_detail::apply_key(c, k, v);
  return c;
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  try {
    auto j = nlohmann::json::parse(is);
    if (!j.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
    for (const auto& [k, v] : j.items())
      if (v.is_object() || v.is_array()) throw ConfigError(path.string() + ": key '" + k + "' must be a scalar");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Every resolved setting, for manifests.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json j{{"preset", c.preset},
         {"image_side", c.image_side},
         {"frame_side", c.frame_side},
         {"dist", c.dist},
         {"lattice", std::string(to_string(c.lattice))},
         {"seed", c.seed},
         {"lattice_seed", c.lattice_seed.value_or(c.seed)},
         {"phantom", std::string(to_string(c.phantom))},
         {"probe", std::string(to_string(c.probe))},
         {"probe_amplitude", c.probe_amplitude},
         {"eta", c.eta ? json(*c.eta) : json(nullptr)},
         {"solver", std::string(to_string(c.solver))},
         {"metric", std::string(to_string(c.metric))},
         {"epsilon", c.epsilon ? json(*c.epsilon) : json(nullptr)},
         {"epsilon_rel", c.epsilon_rel},
         {"max_iters", c.max_iters},
         {"rfactor_tol", c.rfactor_tol},
         {"beta", c.beta},
         {"precond", c.safeguarded ? "safeguarded" : "none"},
         {"r1", c.r1},
         {"r2", c.r2},
         {"s1", c.s1},
         {"s2", c.s2},
         {"c_omega", c.c_omega},
         {"c_u", c.c_u},
         {"prox_inner_iters", c.prox_inner_iters},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"tau", c.tau},
         {"d1", c.d1},
         {"d2", c.d2},
         {"dr_inner_T", c.dr_inner_T},
         {"palm_tau1", c.palm_tau1},
         {"palm_tau2", c.palm_tau2},
         {"palm_steps", c.palm_steps == PalmStepRule::adaptive ? "adaptive" : "fixed"},
         {"dump_pgm", c.dump_pgm}};
  if (c.alpha1) j["alpha1"] = *c.alpha1;
  if (c.alpha2) j["alpha2"] = *c.alpha2;
  if (c.prox_step) j["prox_step"] = *c.prox_step;
  return j;
}

inline DatasetSpec dataset_spec(const ExperimentConfig& c) {
  DatasetSpec s;
  s.image_side = c.image_side;
  s.frame_side = c.frame_side;
  s.dist = c.dist;
  s.lattice = c.lattice;
  s.lattice_seed = c.lattice_seed.value_or(c.seed);
  s.phantom = c.phantom;
  s.probe = c.probe;
  s.probe_amplitude = c.probe_amplitude;
  if (c.eta) s.noise = NoiseSpec{*c.eta, c.seed};
  return s;
}

/// The metric with epsilon resolved against the data when not given.
inline MetricSpec metric_spec(const ExperimentConfig& c, std::span<const double> f) {
  MetricSpec m{c.metric, 0.0};
  if (c.metric != Metric::igm) m.epsilon = c.epsilon ? *c.epsilon : c.epsilon_rel * max_value(f);
  if (c.metric != Metric::igm && !(m.epsilon > 0.0))
    throw DataError("cannot derive epsilon: intensity data is identically zero");
  return m;
}

namespace config_detail {

inline void fill_common(AdmmCommon& a, const ExperimentConfig& c, double beta, std::span<const double> f) {
  a.alpha1 = c.alpha1.value_or(beta);
  a.alpha2 = c.alpha2.value_or(beta);
  if (c.safeguarded) a.precond = Safeguard{c.r1, c.r2, c.s1, c.s2};
  a.c_omega = c.c_omega;
  a.c_u = c.c_u;
  a.max_iters = c.max_iters;
  a.rfactor_tol = c.rfactor_tol;
  a.metric = metric_spec(c, f);
  a.prox_inner_iters = c.prox_inner_iters;
  a.prox_step = c.prox_step;
}

}  // namespace config_detail

inline SolverConfigI solver_config_i(const ExperimentConfig& c, const RealStack& f) {
  SolverConfigI s;
  config_detail::fill_common(s, c, c.beta, f.span());
  s.beta = c.beta;
  validate(s);
  return s;
}

/// Model II; `probe_dp` holds the probe diffraction magnitudes c.
inline SolverConfigII solver_config_ii(const ExperimentConfig& c, const RealStack& f, RealField probe_dp) {
  SolverConfigII s;
  config_detail::fill_common(s, c, c.beta1, f.span());
  s.beta1 = c.beta1;
  s.beta2 = c.beta2;
  s.tau = c.tau;
  std::vector<double> c2(probe_dp.size());
  for (std::size_t t = 0; t < c2.size(); ++t) c2[t] = probe_dp[t] * probe_dp[t];
  s.probe_metric = MetricSpec{c.metric, 0.0};
  if (c.metric != Metric::igm) s.probe_metric.epsilon = c.epsilon_rel * max_value(c2);
  if (c.metric == Metric::wigm && c.epsilon) s.probe_metric.epsilon = *c.epsilon;
  s.probe_dp = std::move(probe_dp);
  validate(s);
  return s;
}

inline BaselineConfig baseline_config(const ExperimentConfig& c, const RealStack& f) {
  BaselineConfig b;
  switch (c.solver) {
    case SolverKind::epie: b.algorithm = BaselineAlgorithm::epie; break;
    case SolverKind::dr: b.algorithm = BaselineAlgorithm::dr; break;
    case SolverKind::palm: b.algorithm = BaselineAlgorithm::palm; break;
    default: throw ConfigError("solver '" + std::string(to_string(c.solver)) + "' is not a baseline");
  }
  b.d1 = c.d1;
  b.d2 = c.d2;
  b.dr_inner_T = c.dr_inner_T;
  b.palm_tau1 = c.palm_tau1;
  b.palm_tau2 = c.palm_tau2;
  b.palm_steps = c.palm_steps;
  b.seed = c.seed;
  b.metric = metric_spec(c, f.span());
  b.c_omega = c.c_omega;
  b.c_u = c.c_u;
  validate(b);
  return b;
}

}  // namespace ptycho
