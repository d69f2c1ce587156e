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

#ifndef SKILLDISC_CONFIG_H_
#define SKILLDISC_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "skilldisc/encoder.h"
#include "skilldisc/env.h"
#include "skilldisc/mi.h"
#include "skilldisc/policy.h"
#include "skilldisc/sac.h"

namespace skilldisc {

struct EnvConfig {
  std::vector<std::string> tasks{"pick_place"};
  int n_objects = 1;
  // Multi-object mode: the set encoder produces the state feature and every
  // episode carries an intention vector.
  bool multi_object = false;
  double success_radius = 0.0;  // 0 keeps each task's default

  std::vector<TaskSpec> task_specs() const;
  void validate() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int64_t steps = 300000;  // environment steps
  int episodes_per_iter = 16;
  double updates_per_step = 0.125;
  int64_t warmup_steps = 2000;  // no updates before this many env steps
  int64_t eval_every = 5000;
  int eval_episodes = 50;
  int64_t checkpoint_every = 0;  // 0: final checkpoint only
  // Metrics carry step * 0.05 s as wall_time unless real time is requested.
  bool real_wall_time = false;

  void validate() const;
};

struct ExperimentConfig {
  std::string phase = "pretrain";
  EnvConfig env;
  PolicyConfig policy;
  EncoderConfig encoder;
  EstimatorConfig estimator;
  SacConfig sac;
  RunConfig run;

  // Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  // Rejects unknown sections and keys.
  static ExperimentConfig from_json(const nlohmann::json& j);
  // SHA-256 of the canonical JSON form.
  std::string hash() const;
};

// Layered resolution, later layers winning: defaults, the file, environment
// variables SKILLDISC_<SECTION>_<KEY> (values parsed as JSON, falling back
// to a plain string), then `flags` (a partial config document).
ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::map<std::string, std::string>& env,
                                const nlohmann::json& flags);

// SKILLDISC_* entries of the process environment.
std::map<std::string, std::string> skilldisc_environment();

}  // namespace skilldisc

#endif  // SKILLDISC_CONFIG_H_
