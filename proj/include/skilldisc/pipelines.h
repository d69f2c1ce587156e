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

#ifndef SKILLDISC_PIPELINES_H_
#define SKILLDISC_PIPELINES_H_

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "skilldisc/analysis.h"
#include "skilldisc/checkpoint.h"
#include "skilldisc/config.h"
#include "skilldisc/encoder.h"
#include "skilldisc/policy.h"

namespace skilldisc {

// Control period of the simulated robot; metrics report step * kControlPeriod
// as wall time unless real time is requested.
inline constexpr double kControlPeriod = 0.05;

// JSONL metric stream. Every record carries step, wall_time and phase and
// steps strictly increase; violations throw ValidationError. A record with
// a non-finite number is written to abort_dump.json beside the stream and
// throws NonFiniteError.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  ~MetricsWriter();
  MetricsWriter(const MetricsWriter&) = delete;
  MetricsWriter& operator=(const MetricsWriter&) = delete;

  void write(const nlohmann::ordered_json& record);
  int64_t records() const { return records_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::optional<int64_t> last_step_;
  int64_t records_ = 0;
};

struct ControlInput {
  const WorldState* state = nullptr;
  const Observation* obs = nullptr;
  Conditioning cond;
  int intention = 0;  // index of the object of interest
};

class Controller {
 public:
  virtual ~Controller() = default;
  // One action per input, all episodes advancing in lockstep.
  virtual std::vector<Action> act(const std::vector<ControlInput>& inputs) = 0;
};

// Uniform actions in [-1, 1]^A.
class RandomController : public Controller {
 public:
  explicit RandomController(std::uint64_t seed) : rng_(seed) {}
  std::vector<Action> act(const std::vector<ControlInput>& inputs) override;

 private:
  std::mt19937_64 rng_;
};

// Hand-written pick-and-place: hover, descend, grasp, carry to the goal.
class ScriptedPickPlace : public Controller {
 public:
  std::vector<Action> act(const std::vector<ControlInput>& inputs) override;
};

// The MCP policy under its own conditioning. Sample mode draws from a
// private generator.
class PolicyController : public Controller {
 public:
  PolicyController(McpPolicy policy, SetEncoder encoder, ActMode mode,
                   std::uint64_t seed = 0);
  std::vector<Action> act(const std::vector<ControlInput>& inputs) override;

  // Inputs and outputs of the most recent act() call.
  const torch::Tensor& last_features() const { return last_features_; }
  const torch::Tensor& last_cond() const { return last_cond_; }
  const torch::Tensor& last_actions() const { return last_actions_; }

 private:
  McpPolicy policy_;
  SetEncoder encoder_;
  ActMode mode_;
  at::Generator gen_;
  torch::Tensor last_features_, last_cond_, last_actions_;
};

struct EvalOptions {
  int n_episodes = 50;
  std::uint64_t seed = 0;
  bool record = false;
  // Goal-conditioned episodes use GoalTaskCond{goal, task_index, n_tasks};
  // skill episodes draw z uniformly from [-1, 1]^D instead of a goal.
  CondKind cond_kind = CondKind::kGoalTask;
  int task_index = 0;
  int n_tasks = 1;
  bool multi_object = false;
};

struct EvalResult {
  double success_rate = 0.0;
  std::vector<int> successes;
  TrajectorySet trajectories;  // filled when recording
};

// n fresh-seeded episodes; success means the sparse reward was attained at
// any step. Throws ConfigError for n_episodes < 1.
EvalResult evaluate(Controller& controller, const TaskSpec& spec, const EvalOptions& options);

// Module shapes needed to rebuild a policy from a checkpoint.
struct ModelMeta {
  int feature_dim = 0;
  CondSpec cond;
  int n_tasks = 1;
  bool multi_object = false;

  nlohmann::json to_json() const;
  static ModelMeta from_json(const nlohmann::json& j);
};

struct LoadedPolicy {
  Checkpoint checkpoint;
  ExperimentConfig config;
  ModelMeta meta;
  McpPolicy policy{nullptr};
  SetEncoder encoder{nullptr};  // empty in single-object mode
};

LoadedPolicy load_policy(const std::filesystem::path& dir);
LoadedPolicy load_policy(const Checkpoint& checkpoint);

struct RunResult {
  std::filesystem::path checkpoint;
  int64_t steps = 0;
  int64_t updates = 0;
  nlohmann::ordered_json last_record;
};

// Unsupervised pretraining. Writes config.resolved, metrics.jsonl and
// checkpoints/ under `out`; a zero step budget checkpoints the initial
// parameters.
RunResult pretrain(const ExperimentConfig& config, const std::filesystem::path& out);

// Goal-conditioned transfer for any number of tasks; one task is GCRL.
// With a checkpoint the primitives (and encoder) are loaded and frozen and
// the gating is rebuilt; without one everything trains from scratch.
RunResult transfer(const ExperimentConfig& config,
                   const std::optional<std::filesystem::path>& pretrain_checkpoint,
                   const std::filesystem::path& out);
RunResult transfer_gcrl(const ExperimentConfig& config,
                        const std::optional<std::filesystem::path>& pretrain_checkpoint,
                        const std::filesystem::path& out);
RunResult transfer_mtrl(const ExperimentConfig& config,
                        const std::optional<std::filesystem::path>& pretrain_checkpoint,
                        const std::filesystem::path& out);

// Trajectories of a pretrained skill policy with uniform random skills.
TrajectorySet skill_trajectories(const LoadedPolicy& loaded, int n, std::uint64_t seed,
                                 ActMode mode);
// Uniform-random policy baseline on the same environment.
TrajectorySet random_trajectories(const TaskSpec& spec, int n, std::uint64_t seed,
                                  bool multi_object);

// On-policy (feature, cond, action) samples for AFS, drawn by rolling out
// the loaded policy in sample mode.
struct PolicySample {
  torch::Tensor features, cond, actions;
};
PolicySample on_policy_sample(const LoadedPolicy& loaded, int n_pairs, std::uint64_t seed);

// First step whose record has `key` >= threshold.
std::optional<int64_t> first_step_reaching(const std::vector<nlohmann::json>& records,
                                           const std::string& key, double threshold);

}  // namespace skilldisc

#endif  // SKILLDISC_PIPELINES_H_
