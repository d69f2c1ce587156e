// Copyright 2026 The skilldisc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "skilldisc/config.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

extern char** environ;

namespace skilldisc {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Walks the fields of one section. The same visitor body serves
// serialization and strict parsing.
class Writer {
 public:
  template <typename T>
  void operator()(const char* key, const T& value) {
    out[key] = value;
  }
  ordered_json out = ordered_json::object();
};

class Reader {
 public:
  Reader(const json& in, std::string section) : in_(in), section_(std::move(section)) {
    if (!in_.is_object()) throw ConfigError(section_ + ": expected an object");
  }

  template <typename T>
  void operator()(const char* key, T& value) {
    seen_.insert(key);
    auto it = in_.find(key);
    if (it == in_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned() &&
              it->template get<int64_t>() < 0) {
            throw ConfigError("expected a nonnegative integer");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("expected a string");
      } else {
        if (!it->is_array()) throw ConfigError("expected a list");
      }
      value = it->template get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : in_.items()) {
      if (!seen_.count(key)) throw ConfigError(section_ + "." + key + ": unknown key");
    }
  }

 private:
  const json& in_;
  std::string section_;
  std::set<std::string> seen_;
};

template <typename V, typename C>
void visit_env(V& v, C& c) {
  v("tasks", c.tasks);
  v("n_objects", c.n_objects);
  v("multi_object", c.multi_object);
  v("success_radius", c.success_radius);
}

template <typename V, typename C>
void visit_policy(V& v, C& c) {
  v("n_primitives", c.n_primitives);
  v("hidden", c.hidden);
  v("layers", c.layers);
  v("log_std_min", c.log_std_min);
  v("log_std_max", c.log_std_max);
  v("w_floor", c.w_floor);
  v("gating_input_scale", c.gating_input_scale);
}

template <typename V, typename C>
void visit_encoder(V& v, C& c) {
  v("n_layers", c.n_layers);
  v("n_heads", c.n_heads);
  v("model_width", c.model_width);
  v("mlp_width", c.mlp_width);
  v("max_objects", c.max_objects);
}

template <typename V, typename C>
void visit_estimator(V& v, C& c) {
  v("hidden", c.hidden);
  v("layers", c.layers);
  v("lr", c.lr);
  v("k_mix", c.k_mix);
  v("prior_samples", c.prior_samples);
  v("reward_clip", c.reward_clip);
  v("log_std_min", c.log_std_min);
  v("log_std_max", c.log_std_max);
  v("delta_scale", c.delta_scale);
  v("jsd_weight", c.jsd_weight);
  v("dads_weight", c.dads_weight);
  v("updates_per_step", c.updates_per_step);
  v("dv_comparison", c.dv_comparison);
}

template <typename V, typename C>
void visit_sac(V& v, C& c) {
  v("gamma", c.gamma);
  v("tau", c.tau);
  v("batch_size", c.batch_size);
  v("actor_lr", c.actor_lr);
  v("critic_lr", c.critic_lr);
  v("alpha_lr", c.alpha_lr);
  v("init_alpha", c.init_alpha);
  v("target_entropy", c.target_entropy);
  v("critic_hidden", c.critic_hidden);
  v("critic_layers", c.critic_layers);
  v("critic_input_scale", c.critic_input_scale);
  v("buffer_capacity", c.buffer_capacity);
  v("her_k", c.her_k);
  v("her_strategy", c.her_strategy);
}

template <typename V, typename C>
void visit_run(V& v, C& c) {
  v("seed", c.seed);
  v("steps", c.steps);
  v("episodes_per_iter", c.episodes_per_iter);
  v("updates_per_step", c.updates_per_step);
  v("warmup_steps", c.warmup_steps);
  v("eval_every", c.eval_every);
  v("eval_episodes", c.eval_episodes);
  v("checkpoint_every", c.checkpoint_every);
  v("real_wall_time", c.real_wall_time);
}

const std::vector<std::string>& section_names() {
  static const std::vector<std::string> names{"env", "policy", "encoder",
                                              "estimator", "sac", "run"};
  return names;
}

// Merges `patch` into `base` one level deep (sections, then keys).
void merge_into(json& base, const json& patch, const std::string& origin) {
  if (patch.is_null()) return;
  if (!patch.is_object()) throw ConfigError(origin + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    if (key == "phase") {
      base[key] = value;
      continue;
    }
    if (!value.is_object()) throw ConfigError(origin + ": section '" + key + "' must be an object");
    for (const auto& [field, v] : value.items()) base[key][field] = v;
  }
}

}  // namespace

std::vector<TaskSpec> EnvConfig::task_specs() const {
  std::vector<TaskSpec> specs;
  for (const auto& name : tasks) {
    TaskSpec spec = TaskSpec::make(parse_task(name), n_objects);
    if (success_radius > 0) spec.success_radius = success_radius;
    spec.validate();
    specs.push_back(spec);
  }
  return specs;
}

void EnvConfig::validate() const {
  if (tasks.empty()) throw ConfigError("env.tasks: at least one task is required");
  std::set<std::string> unique(tasks.begin(), tasks.end());
  if (unique.size() != tasks.size()) throw ConfigError("env.tasks: duplicate task");
  if (n_objects < 1 || n_objects > kMaxObjects) {
    throw ConfigError("env.n_objects: must be in [1, " + std::to_string(kMaxObjects) + "]");
  }
  if (!multi_object && n_objects != 1) {
    throw ConfigError("env.n_objects: more than one object requires env.multi_object");
  }
  if (!(success_radius >= 0)) throw ConfigError("env.success_radius: must be nonnegative");
  for (const auto& name : tasks) {
    try {
      TaskId id = parse_task(name);
      if (is_articulated(id) && n_objects != 1) {
        throw ConfigError("articulated tasks take a single object");
      }
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("env.tasks: ") + e.what());
    }
  }
}

void RunConfig::validate() const {
  if (steps < 0) throw ConfigError("run.steps: must be nonnegative");
  if (episodes_per_iter < 1) throw ConfigError("run.episodes_per_iter: must be positive");
  if (!(updates_per_step > 0)) throw ConfigError("run.updates_per_step: must be positive");
  if (warmup_steps < 0) throw ConfigError("run.warmup_steps: must be nonnegative");
  if (eval_every < 0) throw ConfigError("run.eval_every: must be nonnegative");
  if (eval_episodes < 1) throw ConfigError("run.eval_episodes: must be positive");
  if (checkpoint_every < 0) throw ConfigError("run.checkpoint_every: must be nonnegative");
}

void ExperimentConfig::validate() const {
  try {
    parse_phase(phase);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("phase: ") + e.what());
  }
  env.validate();
  if (policy.n_primitives < 1) throw ConfigError("policy.n_primitives: must be positive");
  if (policy.hidden < 1 || policy.layers < 1) throw ConfigError("policy.hidden/layers: must be positive");
  if (!(policy.log_std_min < policy.log_std_max)) {
    throw ConfigError("policy.log_std_min: must be below log_std_max");
  }
  if (!(policy.w_floor > 0)) throw ConfigError("policy.w_floor: must be positive");
  if (!(policy.gating_input_scale > 0)) {
    throw ConfigError("policy.gating_input_scale: must be positive");
  }
  try {
    encoder.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("encoder: ") + e.what());
  }
  if (env.n_objects > encoder.max_objects) {
    throw ConfigError("env.n_objects: exceeds encoder.max_objects");
  }
  if (estimator.hidden < 1 || estimator.layers < 1 || estimator.k_mix < 1 ||
      estimator.prior_samples < 1 || estimator.updates_per_step < 0) {
    throw ConfigError("estimator: sizes must be positive");
  }
  if (!(estimator.lr > 0)) throw ConfigError("estimator.lr: must be positive");
  if (!(estimator.reward_clip > 0)) throw ConfigError("estimator.reward_clip: must be positive");
  if (!(estimator.log_std_min < estimator.log_std_max)) {
    throw ConfigError("estimator.log_std_min: must be below log_std_max");
  }
  try {
    sac.validate();
    parse_her_strategy(sac.her_strategy);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("sac: ") + e.what());
  }
  run.validate();
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["phase"] = phase;
  Writer w;
  visit_env(w, env);
  j["env"] = std::exchange(w.out, ordered_json::object());
  visit_policy(w, policy);
  j["policy"] = std::exchange(w.out, ordered_json::object());
  visit_encoder(w, encoder);
  j["encoder"] = std::exchange(w.out, ordered_json::object());
  visit_estimator(w, estimator);
  j["estimator"] = std::exchange(w.out, ordered_json::object());
  visit_sac(w, sac);
  j["sac"] = std::exchange(w.out, ordered_json::object());
  visit_run(w, run);
  j["run"] = std::exchange(w.out, ordered_json::object());
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected an object at top level");
  ExperimentConfig c;
  const auto& sections = section_names();
  for (const auto& [key, value] : j.items()) {
    if (key == "phase") {
      if (!value.is_string()) throw ConfigError("phase: expected a string");
      c.phase = value.get<std::string>();
    } else if (std::find(sections.begin(), sections.end(), key) == sections.end()) {
      throw ConfigError(key + ": unknown section");
    }
  }
  auto read = [&](const char* name, auto&& visit, auto& section) {
    auto it = j.find(name);
    if (it == j.end()) return;
    Reader r(*it, name);
    visit(r, section);
    r.finish();
  };
  read("env", [](Reader& r, EnvConfig& s) { visit_env(r, s); }, c.env);
  read("policy", [](Reader& r, PolicyConfig& s) { visit_policy(r, s); }, c.policy);
  read("encoder", [](Reader& r, EncoderConfig& s) { visit_encoder(r, s); }, c.encoder);
  read("estimator", [](Reader& r, EstimatorConfig& s) { visit_estimator(r, s); }, c.estimator);
  read("sac", [](Reader& r, SacConfig& s) { visit_sac(r, s); }, c.sac);
  read("run", [](Reader& r, RunConfig& s) { visit_run(r, s); }, c.run);
  return c;
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_json().dump()); }

ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::map<std::string, std::string>& env,
                                const json& flags) {
  json merged = json(ExperimentConfig{}.to_json());
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config file not found: " + file->string());
    json parsed;
    try {
      parsed = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + file->string() + ": " + e.what());
    }
    // Strict check on the file's own keys before merging.
    ExperimentConfig::from_json(parsed);
    merge_into(merged, parsed, file->string());
  }

  const std::string prefix = "SKILLDISC_";
  json env_patch = json::object();
  for (const auto& [name, raw] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    std::string lower;
    for (char ch : rest) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    if (lower == "phase") {
      env_patch["phase"] = value;
      continue;
    }
    std::string section;
    for (const auto& s : section_names()) {
      if (lower.rfind(s + "_", 0) == 0) section = s;
    }
    if (section.empty()) throw ConfigError(name + ": unknown section in environment override");
    env_patch[section][lower.substr(section.size() + 1)] = value;
  }
  // Values such as tasks may arrive as a bare string.
  if (env_patch.contains("env") && env_patch["env"].contains("tasks") &&
      env_patch["env"]["tasks"].is_string()) {
    env_patch["env"]["tasks"] = json::array({env_patch["env"]["tasks"]});
  }
  ExperimentConfig::from_json(env_patch);
  merge_into(merged, env_patch, "environment");

  ExperimentConfig::from_json(flags.is_null() ? json::object() : flags);
  merge_into(merged, flags, "flags");

  ExperimentConfig config = ExperimentConfig::from_json(merged);
  config.validate();
  return config;
}

std::map<std::string, std::string> skilldisc_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string entry(*e);
    auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(0, eq);
    if (name.rfind("SKILLDISC_", 0) == 0) out[name] = entry.substr(eq + 1);
  }
  return out;
}

}  // namespace skilldisc
