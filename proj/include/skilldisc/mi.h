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

#ifndef SKILLDISC_MI_H_
#define SKILLDISC_MI_H_

#include <torch/torch.h>

#include <memory>
#include <optional>

namespace skilldisc {

struct EstimatorConfig {
  int hidden = 64;
  int layers = 2;
  double lr = 3e-4;
  int k_mix = 4;
  int prior_samples = 64;
  double reward_clip = 50.0;
  // Skill-dynamics std bounds (log, meters) and output scale for the
  // predicted mean displacement.
  double log_std_min = -7.0;
  double log_std_max = 0.0;
  double delta_scale = 0.025;
  double jsd_weight = 1.0;
  double dads_weight = 1.0;
  int updates_per_step = 1;
  bool dv_comparison = false;
};

// T(x) = log 2 - log(1 + e^-x); always < log 2.
double jsd_witness_T(double raw);
// f*(t) = -log(2 - e^t); throws DomainError for t >= log 2.
double jsd_conjugate_fstar(double t);

torch::Tensor witness_transform(const torch::Tensor& raw);
// f*(T(raw)) = softplus(raw) - log 2, the stable closed form.
torch::Tensor conjugate_of_transform(const torch::Tensor& raw);

// E_P[T(g)] - E_Q[f*(T(g))] from witness scores on paired and shuffled
// samples.
torch::Tensor jsd_bound_from_scores(const torch::Tensor& joint,
                                    const torch::Tensor& marginal);
// E_P[g] - log E_Q[e^g].
torch::Tensor dv_bound_from_scores(const torch::Tensor& joint,
                                   const torch::Tensor& marginal);

// Aligned rows drawn from replay. The JSD term pairs the post-transition
// object and gripper positions; the skill-dynamics term models
// s_o_next - s_o given (s_o, z).
struct IntrinsicBatch {
  torch::Tensor s_o;
  torch::Tensor s_r;
  torch::Tensor z;
  torch::Tensor s_o_next;
  torch::Tensor s_r_next;

  int64_t size() const { return s_o.size(0); }
  void validate() const;
};

class WitnessImpl : public torch::nn::Module {
 public:
  WitnessImpl(int dim_o, int dim_r, const EstimatorConfig& config);
  torch::Tensor forward(const torch::Tensor& s_o, const torch::Tensor& s_r);

 private:
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(Witness);

enum class BoundKind { kJsd, kDonskerVaradhan };

// Variational MI estimator between object and gripper states. The marginal
// distribution is formed by pairing s_o with s_r permuted by `perm`.
class MiEstimator {
 public:
  MiEstimator(int dim_o, int dim_r, const EstimatorConfig& config,
              BoundKind kind = BoundKind::kJsd);

  torch::Tensor bound(const torch::Tensor& s_o, const torch::Tensor& s_r,
                      const torch::Tensor& perm);
  // One ascent step on the bound; returns the pre-step value.
  double update(const torch::Tensor& s_o, const torch::Tensor& s_r,
                const torch::Tensor& perm);
  // Mean of f*(T(g)) over shuffled pairs.
  double marginal_stat(const torch::Tensor& s_o, const torch::Tensor& s_r,
                       const torch::Tensor& perm);
  // T(g(s_o, s_r)) - marginal_stat, per row.
  torch::Tensor pointwise_reward(const torch::Tensor& s_o,
                                 const torch::Tensor& s_r, double marginal_stat);

  Witness witness() const { return witness_; }
  BoundKind kind() const { return kind_; }

 private:
  BoundKind kind_;
  Witness witness_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_;
};

struct MixtureParams {
  torch::Tensor log_weights;  // [B, K], normalized
  torch::Tensor means;        // [B, K, D]
  torch::Tensor stds;         // [B, K, D]
};

// log sum_k w_k N(x; mu_k, diag(sigma_k^2)), per row.
torch::Tensor mixture_log_prob(const MixtureParams& params, const torch::Tensor& x);

// Mixture-of-Gaussians predictor of the object displacement given the
// object state and skill.
class SkillDynamicsImpl : public torch::nn::Module {
 public:
  SkillDynamicsImpl(int dim_o, int dim_z, const EstimatorConfig& config);

  MixtureParams forward(const torch::Tensor& s_o, const torch::Tensor& z);
  torch::Tensor log_prob(const torch::Tensor& s_o, const torch::Tensor& z,
                         const torch::Tensor& s_o_next);

  int dim_z() const { return dim_z_; }

 private:
  int dim_o_;
  int dim_z_;
  EstimatorConfig config_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(SkillDynamics);

// r = log q(.|z) - log mean_l q(.|z_l), clipped to [-clip, clip], from
// log-densities [B] and [B, L]. Exactly 0 when every prior term equals the
// numerator.
torch::Tensor dads_reward_from_log_probs(const torch::Tensor& log_q,
                                         const torch::Tensor& log_q_prior,
                                         double clip);

class SkillDynamicsModel {
 public:
  SkillDynamicsModel(int dim_o, int dim_z, const EstimatorConfig& config);

  // Maximum-likelihood step; returns the pre-step negative log-likelihood.
  double update(const torch::Tensor& s_o, const torch::Tensor& z,
                const torch::Tensor& s_o_next);

  // prior_z is [L, dim_z].
  torch::Tensor reward(const torch::Tensor& s_o, const torch::Tensor& z,
                       const torch::Tensor& s_o_next,
                       const torch::Tensor& prior_z);

  SkillDynamics net() const { return net_; }

 private:
  EstimatorConfig config_;
  SkillDynamics net_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_;
};

struct IntrinsicRewards {
  torch::Tensor r1;     // JSD term
  torch::Tensor r2;     // skill-dynamics term
  torch::Tensor total;  // jsd_weight * r1 + dads_weight * r2
  double jsd_bound = 0.0;
  double marginal_stat = 0.0;
};

struct EstimatorStats {
  double jsd_bound = 0.0;
  double dads_nll = 0.0;
  std::optional<double> dv_bound;
};

// Both estimators plus the optional Donsker-Varadhan comparator.
class IntrinsicRewardModel {
 public:
  IntrinsicRewardModel(int dim_o, int dim_r, int dim_z,
                       const EstimatorConfig& config);

  EstimatorStats update(const IntrinsicBatch& batch, at::Generator& gen);
  // Rewards from the current estimator parameters.
  IntrinsicRewards rewards(const IntrinsicBatch& batch, at::Generator& gen);

  MiEstimator& jsd() { return jsd_; }
  SkillDynamicsModel& dynamics() { return dynamics_; }
  MiEstimator* dv() { return dv_ ? &*dv_ : nullptr; }
  const EstimatorConfig& config() const { return config_; }

 private:
  EstimatorConfig config_;
  MiEstimator jsd_;
  SkillDynamicsModel dynamics_;
  std::optional<MiEstimator> dv_;
};

}  // namespace skilldisc

#endif  // SKILLDISC_MI_H_
