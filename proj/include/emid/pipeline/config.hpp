#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emid/error.hpp"
#include "emid/estimators/config.hpp"
#include "emid/numkit/rng.hpp"
#include "emid/synthgen/shift.hpp"

namespace emid::pipeline {

using nlohmann::json;

// Bad or unreadable configuration. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelSpec {
  enum class Type { true_conditional, uniform, tuned, perturbed };
  Type type = Type::perturbed;
  double noise = 0.5;
  std::size_t steps = 200;
  double lr = 0.0;  // 0: the safe step size of the base joint
};

inline std::string to_string(ModelSpec::Type t) {
  switch (t) {
    case ModelSpec::Type::true_conditional: return "true_conditional";
    case ModelSpec::Type::uniform: return "uniform";
    case ModelSpec::Type::tuned: return "tuned";
    case ModelSpec::Type::perturbed: return "perturbed";
  }
  return "?";
}

struct VerifyConfig {
  std::vector<std::string> suites{"lemma1", "theorem1", "theorem2", "theorem3", "corollary", "identities", "appendix"};
  std::size_t instances = 1000;
  std::size_t theorem1_instances = 100;
  std::size_t identity_instances = 1000;
  std::size_t appendix_trials = 10000;
  std::size_t max_alphabet = 6;
  std::size_t replay_files_per_suite = 10;
};

struct SweepConfig {
  std::vector<synthgen::ShiftKind> kinds{synthgen::ShiftKind::visual, synthgen::ShiftKind::text,
                                         synthgen::ShiftKind::joint, synthgen::ShiftKind::conditional};
  std::size_t nv = 4, nt = 4, ny = 3, scenes = 2;
  std::size_t ladders = 10;
  std::size_t levels = 3;
  bool include_baseline = false;
  bool allow_single_modality = false;
  std::size_t samples = 0;  // > 0: sample each scenario, write feature dumps and sample divergences
};

struct CalibrationConfig {
  std::vector<double> rhos{0.3, 0.6, 0.9};
  std::size_t n = 10000;
  std::size_t seeds = 5;
  double mae_tolerance = 0.12;
  double independence_tolerance = 0.05;
  std::size_t independence_n = 10000;
  std::vector<std::string> independence_estimators{"club", "mine", "nwj", "infonce"};
  std::size_t critic_iterations = 500;  // MINE / NWJ / InfoNCE; CLUB uses estimator.iterations
  bool discrete = true;
  std::size_t discrete_n = 100000;
  double discrete_tolerance = 0.1;
  bool held_out = true;  // false: estimate on the training sample
};

struct CorrelateConfig {
  std::size_t permutations = 10000;
  std::string input;  // prior run directory; empty: the output directory
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "emid-out";
  double tolerance = 1e-9;
  VerifyConfig verify;
  SweepConfig sweep;
  ModelSpec model;
  estimators::EstimatorConfig estimator;
  CalibrationConfig calibration;
  CorrelateConfig correlate;

  void validate() const;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a table");
  for (const auto& [k, v] : obj.items())
    if (!known.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& slot, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    slot = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_size(const json& obj, const char* key, std::size_t& slot, const std::string& where) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  slot = v.get<std::size_t>();
}

}  // namespace detail

inline ModelSpec::Type model_type_from_string(const std::string& s) {
  if (s == "true_conditional") return ModelSpec::Type::true_conditional;
  if (s == "uniform") return ModelSpec::Type::uniform;
  if (s == "tuned") return ModelSpec::Type::tuned;
  if (s == "perturbed") return ModelSpec::Type::perturbed;
  throw ConfigError("model.type: unknown model '" + s + "'");
}

inline RunConfig config_from_json(const json& doc) {
  using detail::read;
  using detail::read_size;
  RunConfig c;
  detail::reject_unknown(doc, {"seed", "out", "tolerance", "verify", "sweep", "model", "estimator", "calibration", "correlate"},
                         "config");
  if (doc.contains("seed")) {
    const auto& sd = doc["seed"];
    if (!sd.is_number_integer() || (!sd.is_number_unsigned() && sd.get<std::int64_t>() < 0))
      throw ConfigError("config.seed: expected a non-negative integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  read(doc, "out", c.out, "config");
  read(doc, "tolerance", c.tolerance, "config");

  if (doc.contains("verify")) {
    const auto& v = doc["verify"];
    detail::reject_unknown(v, {"suites", "instances", "theorem1_instances", "identity_instances", "appendix_trials",
                               "max_alphabet", "replay_files_per_suite"},
                           "verify");
    read(v, "suites", c.verify.suites, "verify");
    read_size(v, "instances", c.verify.instances, "verify");
    read_size(v, "theorem1_instances", c.verify.theorem1_instances, "verify");
    read_size(v, "identity_instances", c.verify.identity_instances, "verify");
    read_size(v, "appendix_trials", c.verify.appendix_trials, "verify");
    read_size(v, "max_alphabet", c.verify.max_alphabet, "verify");
    read_size(v, "replay_files_per_suite", c.verify.replay_files_per_suite, "verify");
  }

  if (doc.contains("sweep")) {
    const auto& s = doc["sweep"];
    detail::reject_unknown(s, {"kinds", "nv", "nt", "ny", "scenes", "ladders", "levels", "include_baseline",
                               "allow_single_modality", "samples"},
                           "sweep");
    if (s.contains("kinds")) {
      std::vector<std::string> names;
      read(s, "kinds", names, "sweep");
      c.sweep.kinds.clear();
      for (const auto& n : names) {
        try {
          c.sweep.kinds.push_back(synthgen::shift_kind_from_string(n));
        } catch (const ContractError&) {
          throw ConfigError("sweep.kinds: unknown kind '" + n + "'");
        }
      }
    }
    read_size(s, "nv", c.sweep.nv, "sweep");
    read_size(s, "nt", c.sweep.nt, "sweep");
    read_size(s, "ny", c.sweep.ny, "sweep");
    read_size(s, "scenes", c.sweep.scenes, "sweep");
    read_size(s, "ladders", c.sweep.ladders, "sweep");
    read_size(s, "levels", c.sweep.levels, "sweep");
    read(s, "include_baseline", c.sweep.include_baseline, "sweep");
    read(s, "allow_single_modality", c.sweep.allow_single_modality, "sweep");
    read_size(s, "samples", c.sweep.samples, "sweep");
  }

  if (doc.contains("model")) {
    const auto& m = doc["model"];
    detail::reject_unknown(m, {"type", "noise", "steps", "lr"}, "model");
    std::string type = to_string(c.model.type);
    read(m, "type", type, "model");
    c.model.type = model_type_from_string(type);
    read(m, "noise", c.model.noise, "model");
    read_size(m, "steps", c.model.steps, "model");
    read(m, "lr", c.model.lr, "model");
  }

  if (doc.contains("estimator")) {
    const auto& e = doc["estimator"];
    detail::reject_unknown(e, {"hidden", "lr", "batch", "iterations", "weight_decay", "logvar_clamp", "ema_decay", "nce_batch"},
                           "estimator");
    read_size(e, "hidden", c.estimator.hidden, "estimator");
    read(e, "lr", c.estimator.lr, "estimator");
    read_size(e, "batch", c.estimator.batch, "estimator");
    read_size(e, "iterations", c.estimator.iterations, "estimator");
    read(e, "weight_decay", c.estimator.weight_decay, "estimator");
    read(e, "logvar_clamp", c.estimator.logvar_clamp, "estimator");
    read(e, "ema_decay", c.estimator.ema_decay, "estimator");
    read_size(e, "nce_batch", c.estimator.nce_batch, "estimator");
  }

  if (doc.contains("calibration")) {
    const auto& k = doc["calibration"];
    detail::reject_unknown(k, {"rhos", "n", "seeds", "mae_tolerance", "independence_tolerance", "independence_n",
                               "independence_estimators", "critic_iterations", "discrete", "discrete_n", "discrete_tolerance",
                               "held_out"},
                           "calibration");
    read(k, "rhos", c.calibration.rhos, "calibration");
    read_size(k, "n", c.calibration.n, "calibration");
    read_size(k, "seeds", c.calibration.seeds, "calibration");
    read(k, "mae_tolerance", c.calibration.mae_tolerance, "calibration");
    read(k, "independence_tolerance", c.calibration.independence_tolerance, "calibration");
    read_size(k, "independence_n", c.calibration.independence_n, "calibration");
    read(k, "independence_estimators", c.calibration.independence_estimators, "calibration");
    read_size(k, "critic_iterations", c.calibration.critic_iterations, "calibration");
    read(k, "discrete", c.calibration.discrete, "calibration");
    read_size(k, "discrete_n", c.calibration.discrete_n, "calibration");
    read(k, "discrete_tolerance", c.calibration.discrete_tolerance, "calibration");
    read(k, "held_out", c.calibration.held_out, "calibration");
  }

  if (doc.contains("correlate")) {
    const auto& k = doc["correlate"];
    detail::reject_unknown(k, {"permutations", "input"}, "correlate");
    read_size(k, "permutations", c.correlate.permutations, "correlate");
    read(k, "input", c.correlate.input, "correlate");
  }
  c.validate();
  return c;
}

inline void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (std::isnan(tolerance)) fail("tolerance: must be a number");
  static const std::set<std::string> suite_names{"lemma1", "theorem1", "theorem2", "theorem3", "corollary", "identities", "appendix"};
  for (const auto& s : verify.suites)
    if (!suite_names.count(s)) fail("verify.suites: unknown suite '" + s + "'");
  if (verify.max_alphabet < 2) fail("verify.max_alphabet: need at least 2");
  if (sweep.kinds.empty()) fail("sweep.kinds: need at least one kind");
  if (sweep.nv < 1 || sweep.nt < 1 || sweep.ny < 2) fail("sweep: alphabet sizes too small");
  if (sweep.scenes < 1 || sweep.scenes > std::min(sweep.nv, sweep.nt)) fail("sweep.scenes: need 1 <= scenes <= min(nv, nt)");
  if (sweep.levels < 2) fail("sweep.levels: need at least 2");
  if (sweep.ladders < 1) fail("sweep.ladders: need at least 1");
  for (auto k : sweep.kinds) {
    if (k == synthgen::ShiftKind::visual && sweep.nv <= sweep.scenes) fail("sweep: visual shifts need nv > scenes");
    if (k == synthgen::ShiftKind::text && sweep.nt <= sweep.scenes) fail("sweep: text shifts need nt > scenes");
    if (k == synthgen::ShiftKind::joint && sweep.scenes < 2) fail("sweep: joint shifts need scenes >= 2");
  }
  if (!(model.noise >= 0.0)) fail("model.noise: must be non-negative");
  if (!(model.lr >= 0.0)) fail("model.lr: must be non-negative");
  try {
    estimator.validate();
  } catch (const ContractError& e) {
    fail(std::string("estimator: ") + e.what());
  }
  for (double r : calibration.rhos)
    if (!(r > -1.0 && r < 1.0)) fail("calibration.rhos: each rho must lie in (-1, 1)");
  if (calibration.n < 2 || calibration.seeds < 1) fail("calibration: n >= 2 and seeds >= 1 required");
  static const std::set<std::string> est_names{"club", "mine", "nwj", "infonce"};
  for (const auto& e : calibration.independence_estimators)
    if (!est_names.count(e)) fail("calibration.independence_estimators: unknown estimator '" + e + "'");
  if (correlate.permutations < 1) fail("correlate.permutations: need at least 1");
}

inline json to_json(const RunConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.sweep.kinds) kinds.push_back(synthgen::to_string(k));
  const auto& e = c.estimator;
  return json{
      {"seed", c.seed},
      {"out", c.out},
      {"tolerance", c.tolerance},
      {"verify",
       {{"suites", c.verify.suites},
        {"instances", c.verify.instances},
        {"theorem1_instances", c.verify.theorem1_instances},
        {"identity_instances", c.verify.identity_instances},
        {"appendix_trials", c.verify.appendix_trials},
        {"max_alphabet", c.verify.max_alphabet},
        {"replay_files_per_suite", c.verify.replay_files_per_suite}}},
      {"sweep",
       {{"kinds", kinds},
        {"nv", c.sweep.nv},
        {"nt", c.sweep.nt},
        {"ny", c.sweep.ny},
        {"scenes", c.sweep.scenes},
        {"ladders", c.sweep.ladders},
        {"levels", c.sweep.levels},
        {"include_baseline", c.sweep.include_baseline},
        {"allow_single_modality", c.sweep.allow_single_modality},
        {"samples", c.sweep.samples}}},
      {"model", {{"type", to_string(c.model.type)}, {"noise", c.model.noise}, {"steps", c.model.steps}, {"lr", c.model.lr}}},
      {"estimator",
       {{"hidden", e.hidden},
        {"lr", e.lr},
        {"batch", e.batch},
        {"iterations", e.iterations},
        {"weight_decay", e.weight_decay},
        {"logvar_clamp", e.logvar_clamp},
        {"ema_decay", e.ema_decay},
        {"nce_batch", e.nce_batch}}},
      {"calibration",
       {{"rhos", c.calibration.rhos},
        {"n", c.calibration.n},
        {"seeds", c.calibration.seeds},
        {"mae_tolerance", c.calibration.mae_tolerance},
        {"independence_tolerance", c.calibration.independence_tolerance},
        {"independence_n", c.calibration.independence_n},
        {"independence_estimators", c.calibration.independence_estimators},
        {"critic_iterations", c.calibration.critic_iterations},
        {"discrete", c.calibration.discrete},
        {"discrete_n", c.calibration.discrete_n},
        {"discrete_tolerance", c.calibration.discrete_tolerance},
        {"held_out", c.calibration.held_out}}},
      {"correlate", {{"permutations", c.correlate.permutations}, {"input", c.correlate.input}}}};
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(doc);
}

/// FNV-1a over the canonical dump, output location excluded.
inline std::string config_hash(const RunConfig& c) {
  auto doc = to_json(c);
  doc.erase("out");
  const auto text = doc.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(numkit::hash_label(text)));
  return buf;
}

}  // namespace emid::pipeline
