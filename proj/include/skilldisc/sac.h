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

#ifndef SKILLDISC_SAC_H_
#define SKILLDISC_SAC_H_

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "skilldisc/encoder.h"
#include "skilldisc/env.h"
#include "skilldisc/policy.h"

namespace skilldisc {

enum class Phase { kPretrain, kGcrl, kMtrl };
std::string_view phase_name(Phase phase);
Phase parse_phase(std::string_view name);  // throws ConfigError

enum class HerStrategy { kFuture, kFinal };
HerStrategy parse_her_strategy(std::string_view name);

struct SacConfig {
  double gamma = 0.98;
  double tau = 0.005;
  int batch_size = 256;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  double init_alpha = 0.1;
  double target_entropy = -static_cast<double>(kActionDim);
  int critic_hidden = 128;
  int critic_layers = 2;
  // Multiplies the critics' (feature, cond) input; actions enter unscaled.
  double critic_input_scale = 10.0;
  int64_t buffer_capacity = 1000000;  // transitions
  int her_k = 4;
  std::string her_strategy = "future";

  void validate() const;
};

// One environment transition plus the positions the intrinsic estimators
// consume (intended object s_o, gripper s_r) and the achieved goal of the
// next state.
struct Transition {
  std::vector<float> obs;
  std::vector<float> next_obs;
  std::vector<float> cond;
  std::vector<float> intention;  // empty in single-object mode
  Action action{};
  double reward = 0.0;
  bool done = false;
  Phase phase = Phase::kPretrain;
  int task = 0;
  Vec3 s_o{}, s_r{}, s_o_next{}, s_r_next{};
  Vec3 achieved_next{};
};

// A complete rollout. Index t of the state arrays is the state before
// action t; they hold length() + 1 entries.
struct Episode {
  Phase phase = Phase::kPretrain;
  int task = 0;
  TaskSpec spec;
  Conditioning cond;
  std::vector<std::vector<float>> obs;
  std::vector<Action> actions;
  std::vector<Vec3> gripper;
  std::vector<Vec3> object;    // intended object (or handle)
  std::vector<Vec3> achieved;  // achieved goal of the intended element
  std::vector<float> intention;

  int length() const { return static_cast<int>(actions.size()); }
  void validate() const;
};

// Transitions of `episode` under its own conditioning. Goal phases get the
// sparse task reward; pretraining rewards are 0 (replaced at sample time).
std::vector<Transition> episode_transitions(const Episode& episode,
                                            const CondSpec& spec);

// Original transitions plus, per step, k copies whose goal is the achieved
// goal of a later state. `future` draws uniformly from states strictly after
// the transition's next state and falls back to the final state at the last
// step. Output is ordered step by step: original, then its k copies.
std::vector<Transition> her_relabel(const Episode& episode,
                                    HerStrategy strategy, int k,
                                    std::mt19937_64& rng, const CondSpec& spec);

struct ReplayLayout {
  int obs_dim = 0;
  int cond_dim = 0;
  int intention_dim = 0;

  int row_width() const;
  bool operator==(const ReplayLayout&) const = default;
};

// Column views over sampled rows.
struct Batch {
  torch::Tensor obs, next_obs, action, reward, done, cond, intention, task;
  torch::Tensor s_o, s_r, s_o_next, s_r_next, achieved_next;

  int64_t size() const { return obs.size(0); }
  static Batch concat(const std::vector<Batch>& parts);
};

// Ring of fixed-size episode blocks (an episode after relabeling). Writes
// overwrite the oldest block, so episodes are stored and evicted whole.
class ReplayBuffer {
 public:
  ReplayBuffer(ReplayLayout layout, int64_t capacity, int64_t block_size);

  void add(const std::vector<Transition>& block);
  int64_t size() const { return n_blocks_ * block_size_; }
  int64_t capacity() const { return max_blocks_ * block_size_; }
  bool empty() const { return n_blocks_ == 0; }
  const ReplayLayout& layout() const { return layout_; }

  // Uniform over stored transitions.
  Batch sample(int64_t n, std::mt19937_64& rng) const;
  Batch gather(const torch::Tensor& rows) const;
  // Stored row (oldest block first) rebuilt as a Transition.
  Transition at(int64_t index) const;
  std::string checksum(int64_t index) const;

 private:
  int64_t physical(int64_t logical) const;

  ReplayLayout layout_;
  int64_t block_size_;
  int64_t max_blocks_;
  int64_t n_blocks_ = 0;
  int64_t next_block_ = 0;
  torch::Tensor storage_;
};

std::vector<float> pack_transition(const Transition& t, const ReplayLayout& layout);

struct MultitaskSample {
  Batch batch;
  std::vector<int> shares;  // per task, 0 for skipped tasks
  std::vector<std::string> warnings;
};

// Equal shares per nonempty buffer, remainder handed out round-robin from
// the first task. Empty buffers are skipped with a warning.
std::vector<int> multitask_shares(const std::vector<bool>& nonempty, int batch_size);
MultitaskSample multitask_sample(const std::vector<const ReplayBuffer*>& buffers,
                                 int batch_size, std::mt19937_64& rng);

// alpha_j = exp(log_alpha_j), one independent scalar per task so tasks
// missing from a batch receive no gradient and no optimizer step. Updated by
// plain gradient descent.
class TemperatureModel {
 public:
  TemperatureModel(int n_tasks, double init_alpha, double lr);

  int n_tasks() const { return static_cast<int>(log_alpha_.size()); }
  double alpha(int task) const;
  std::vector<double> alphas() const;
  // Per-row alpha for task indices [B] (detached).
  torch::Tensor alpha_for(const torch::Tensor& task) const;
  // Dual step: per task j present in the batch,
  //   loss_j = -log_alpha_j * mean_{rows of j}(log_prob + target_entropy).
  double update(const torch::Tensor& log_prob, const torch::Tensor& task,
                double target_entropy);

  std::string to_bytes() const;
  void from_bytes(const std::string& bytes);

 private:
  std::vector<torch::Tensor> log_alpha_;
  std::unique_ptr<torch::optim::SGD> opt_;
};

class CriticImpl : public torch::nn::Module {
 public:
  CriticImpl(int feature_dim, int cond_dim, int hidden, int layers, double input_scale = 1.0);
  torch::Tensor forward(const torch::Tensor& feature, const torch::Tensor& cond,
                        const torch::Tensor& action);

 private:
  torch::nn::Sequential net_{nullptr};
  double input_scale_;
};
TORCH_MODULE(Critic);

// Twin critics and their Polyak targets.
class CriticSetImpl : public torch::nn::Module {
 public:
  CriticSetImpl(int feature_dim, int cond_dim, const SacConfig& config);
  Critic q1{nullptr}, q2{nullptr}, q1_target{nullptr}, q2_target{nullptr};
  std::vector<torch::Tensor> online_parameters();
};
TORCH_MODULE(CriticSet);

struct LossRecord {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double q_mean = 0.0;
  double target_mean = 0.0;
  double entropy = 0.0;  // -mean log_prob
};

// Soft actor-critic over (feature, conditioning). The optional encoder maps
// flat observations plus intentions to features; it is trained through the
// critic loss when `encoder_trainable` and read detached by the actor.
class SacAgent {
 public:
  SacAgent(McpPolicy policy, SetEncoder encoder, bool encoder_trainable,
           LayoutManifest layout, int n_tasks, const SacConfig& config);

  torch::Tensor features(const torch::Tensor& obs, const torch::Tensor& intention);
  // r + gamma * (min target Q(s', a') - alpha * log pi(a'|s')), a' ~ pi.
  torch::Tensor critic_targets(const Batch& batch, at::Generator& gen);
  LossRecord update(const Batch& batch, at::Generator& gen);

  McpPolicy policy() const { return policy_; }
  SetEncoder encoder() const { return encoder_; }
  CriticSet critics() const { return critics_; }
  TemperatureModel& temperature() { return temperature_; }
  const SacConfig& config() const { return config_; }

 private:
  SacConfig config_;
  LayoutManifest layout_;
  McpPolicy policy_;
  SetEncoder encoder_;
  CriticSet critics_{nullptr};
  TemperatureModel temperature_;
  std::unique_ptr<torch::optim::Adam> actor_opt_;
  std::unique_ptr<torch::optim::Adam> critic_opt_;
};

}  // namespace skilldisc

#endif  // SKILLDISC_SAC_H_
