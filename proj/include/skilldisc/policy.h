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

#ifndef SKILLDISC_POLICY_H_
#define SKILLDISC_POLICY_H_

#include <torch/torch.h>

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "skilldisc/common.h"
#include "skilldisc/env.h"

namespace skilldisc {

inline constexpr double kWeightFloor = 1e-4;
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr int kSkillDim = 2;

// Episode-constant skill latent, z in [-1, 1]^D.
struct SkillLatent {
  std::vector<float> z;
};

struct GoalCond {
  Vec3 goal{};
};

struct GoalTaskCond {
  Vec3 goal{};
  int task = 0;
  int n_tasks = 1;
};

// What the gating network (and critics) condition on besides the state
// feature. The intention index selects the object of interest in
// multi-object mode and reaches the networks through the encoder tokens.
struct Conditioning {
  std::variant<SkillLatent, GoalCond, GoalTaskCond> value;
  std::optional<int> intention;

  std::vector<float> vector() const;
  bool operator==(const Conditioning& other) const;
};

enum class CondKind { kSkill, kGoal, kGoalTask };

// Width of the conditioning vector fed to the gating network. A goal_task
// spec with a single task carries no embedding: the one-hot of one task is
// constant.
struct CondSpec {
  CondKind kind = CondKind::kSkill;
  int skill_dim = kSkillDim;
  int n_tasks = 0;

  static CondSpec skill(int dim = kSkillDim);
  static CondSpec goal();
  static CondSpec goal_task(int n_tasks);
  int width() const;
  bool operator==(const CondSpec&) const = default;
};

// Conditioning vector for `cond` under `spec`; throws ValidationError when
// the variant does not match.
std::vector<float> encode_conditioning(const Conditioning& cond,
                                       const CondSpec& spec);

struct PolicyConfig {
  int n_primitives = 8;
  int hidden = 128;
  int layers = 2;
  double log_std_min = kLogStdMin;
  double log_std_max = kLogStdMax;
  double w_floor = kWeightFloor;
  // Multiplies the gating network's (feature, cond) input.
  double gating_input_scale = 10.0;
  int action_dim = kActionDim;
};

// Diagonal Gaussian over the pre-squash action, [..., A].
struct ComposedGaussian {
  torch::Tensor mean;
  torch::Tensor std;
};

// Multiplicative composition of N Gaussian primitives:
//   sigma^j = (sum_i W_i / sigma_i^j)^-1
//   mu^j    = sigma^j * sum_i (W_i / sigma_i^j) mu_i^j
// with sigma entering as the first power. means and stds are [..., N, A],
// weights [..., N]. Throws DegenerateGatingError when a weight row sums
// below `w_floor` and DomainError when a std is below `sigma_min`.
ComposedGaussian compose(const torch::Tensor& means, const torch::Tensor& stds,
                         const torch::Tensor& weights,
                         double w_floor = kWeightFloor,
                         double sigma_min = std::exp(kLogStdMin));

// Raises weight rows whose sum is below `w_floor` so that they sum to it
// (uniformly when the row is all zero).
torch::Tensor apply_weight_floor(const torch::Tensor& weights, double w_floor);

// log density of tanh-squashed actions under `dist`, summed over the last
// dimension. Actions are clipped to (-1, 1) before the inverse.
torch::Tensor squashed_log_prob(const ComposedGaussian& dist,
                                const torch::Tensor& action);

// log(1 - tanh(u)^2) evaluated without cancellation.
torch::Tensor log_one_minus_tanh_sq(const torch::Tensor& u);

class PrimitiveSetImpl : public torch::nn::Module {
 public:
  PrimitiveSetImpl(int feature_dim, const PolicyConfig& config);

  // means, stds, each [B, N, A].
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& feature);

  int feature_dim() const { return feature_dim_; }
  bool frozen() const { return frozen_; }
  void freeze();
  std::string checksum() const;

 private:
  int feature_dim_;
  PolicyConfig config_;
  bool frozen_ = false;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(PrimitiveSet);

class GatingNetImpl : public torch::nn::Module {
 public:
  GatingNetImpl(int feature_dim, int cond_dim, const PolicyConfig& config);

  // Nonnegative weights [B, N] after the floor rule.
  torch::Tensor forward(const torch::Tensor& feature, const torch::Tensor& cond);

  int feature_dim() const { return feature_dim_; }
  int cond_dim() const { return cond_dim_; }

 private:
  int feature_dim_;
  int cond_dim_;
  PolicyConfig config_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(GatingNet);

enum class ActMode { kSample, kDeterministic };

struct ActResult {
  torch::Tensor action;    // [B, A] in [-1, 1]
  torch::Tensor log_prob;  // [B]; undefined in deterministic mode
  torch::Tensor pre_squash;
};

struct PolicyComponents {
  torch::Tensor means;    // [B, N, A]
  torch::Tensor stds;     // [B, N, A]
  torch::Tensor weights;  // [B, N]
};

class McpPolicyImpl : public torch::nn::Module {
 public:
  McpPolicyImpl(int feature_dim, CondSpec cond, const PolicyConfig& config);

  PolicyComponents components(const torch::Tensor& feature,
                              const torch::Tensor& cond);
  ComposedGaussian distribution(const torch::Tensor& feature,
                                const torch::Tensor& cond);

  // Reparameterized draw (sample mode) or squashed mean (deterministic).
  ActResult act(const torch::Tensor& feature, const torch::Tensor& cond,
                ActMode mode, std::optional<at::Generator> gen = std::nullopt);

  // Excludes primitive parameters from every optimizer built afterwards.
  // Idempotent.
  void freeze_primitives();

  // Fresh gating for a new conditioning; primitives are untouched. Throws
  // ConfigError when `feature_dim` differs from the primitives' input width.
  void reinit_gating(const CondSpec& cond, int feature_dim);

  std::vector<torch::Tensor> trainable_parameters();

  PrimitiveSet primitives() const { return primitives_; }
  GatingNet gating() const { return gating_; }
  const CondSpec& cond_spec() const { return cond_; }
  const PolicyConfig& config() const { return config_; }
  int feature_dim() const { return feature_dim_; }

 private:
  int feature_dim_;
  CondSpec cond_;
  PolicyConfig config_;
  PrimitiveSet primitives_{nullptr};
  GatingNet gating_{nullptr};
};
TORCH_MODULE(McpPolicy);

}  // namespace skilldisc

#endif  // SKILLDISC_POLICY_H_
