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

#include "skilldisc/mi.h"

#include <cmath>
#include <numbers>

#include "skilldisc/common.h"
#include "skilldisc/nn.h"

namespace skilldisc {
namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

double jsd_witness_T(double raw) {
  // log(1 + e^-x) as a stable softplus.
  double softplus_neg = raw > 0 ? std::log1p(std::exp(-raw))
                                : -raw + std::log1p(std::exp(raw));
  return kLn2 - softplus_neg;
}

double jsd_conjugate_fstar(double t) {
  if (!(t < kLn2)) {
    throw DomainError("f*(t) requires t < log 2, got " + std::to_string(t));
  }
  return -std::log(2.0 - std::exp(t));
}

torch::Tensor witness_transform(const torch::Tensor& raw) {
  return kLn2 - torch::softplus(-raw);
}

torch::Tensor conjugate_of_transform(const torch::Tensor& raw) {
  return torch::softplus(raw) - kLn2;
}

torch::Tensor jsd_bound_from_scores(const torch::Tensor& joint,
                                    const torch::Tensor& marginal) {
  return witness_transform(joint).mean() - conjugate_of_transform(marginal).mean();
}

torch::Tensor dv_bound_from_scores(const torch::Tensor& joint,
                                   const torch::Tensor& marginal) {
  return joint.mean() - (torch::logsumexp(marginal, 0) -
                         std::log(static_cast<double>(marginal.size(0))));
}

void IntrinsicBatch::validate() const {
  const int64_t n = s_o.size(0);
  if (s_r.size(0) != n || z.size(0) != n || s_o_next.size(0) != n ||
      s_r_next.size(0) != n) {
    throw ValidationError("intrinsic batch fields have unequal lengths");
  }
  if (n < 2) throw ValidationError("intrinsic batch needs at least 2 rows");
}

WitnessImpl::WitnessImpl(int dim_o, int dim_r, const EstimatorConfig& config) {
  net_ = register_module("net",
                         nn::mlp(dim_o + dim_r, config.hidden, config.layers, 1));
}

torch::Tensor WitnessImpl::forward(const torch::Tensor& s_o,
                                   const torch::Tensor& s_r) {
  return net_->forward(torch::cat({s_o, s_r}, -1)).squeeze(-1);
}

MiEstimator::MiEstimator(int dim_o, int dim_r, const EstimatorConfig& config,
                         BoundKind kind)
    : kind_(kind), witness_(dim_o, dim_r, config) {
  opt_ = std::make_unique<torch::optim::Adam>(
      witness_->parameters(), torch::optim::AdamOptions(config.lr));
}

torch::Tensor MiEstimator::bound(const torch::Tensor& s_o,
                                 const torch::Tensor& s_r,
                                 const torch::Tensor& perm) {
  auto joint = witness_->forward(s_o, s_r);
  auto marginal = witness_->forward(s_o, s_r.index_select(0, perm));
  return kind_ == BoundKind::kJsd ? jsd_bound_from_scores(joint, marginal)
                                  : dv_bound_from_scores(joint, marginal);
}

double MiEstimator::update(const torch::Tensor& s_o, const torch::Tensor& s_r,
                           const torch::Tensor& perm) {
  auto value = bound(s_o, s_r, perm);
  opt_->zero_grad();
  (-value).backward();
  opt_->step();
  return value.item<double>();
}

double MiEstimator::marginal_stat(const torch::Tensor& s_o,
                                  const torch::Tensor& s_r,
                                  const torch::Tensor& perm) {
  torch::NoGradGuard no_grad;
  auto marginal = witness_->forward(s_o, s_r.index_select(0, perm));
  return conjugate_of_transform(marginal).mean().item<double>();
}

torch::Tensor MiEstimator::pointwise_reward(const torch::Tensor& s_o,
                                            const torch::Tensor& s_r,
                                            double marginal_stat) {
  torch::NoGradGuard no_grad;
  return witness_transform(witness_->forward(s_o, s_r)) - marginal_stat;
}

torch::Tensor mixture_log_prob(const MixtureParams& params,
                               const torch::Tensor& x) {
  auto z = (x.unsqueeze(-2) - params.means) / params.stds;
  auto per_component =
      (-0.5 * z.square() - params.stds.log() - kHalfLog2Pi).sum(-1);
  return torch::logsumexp(params.log_weights + per_component, -1);
}

SkillDynamicsImpl::SkillDynamicsImpl(int dim_o, int dim_z,
                                     const EstimatorConfig& config)
    : dim_o_(dim_o), dim_z_(dim_z), config_(config) {
  const int k = config.k_mix;
  net_ = register_module(
      "net", nn::mlp(dim_o + dim_z, config.hidden, config.layers,
                     k * (1 + 2 * dim_o)));
}

MixtureParams SkillDynamicsImpl::forward(const torch::Tensor& s_o,
                                         const torch::Tensor& z) {
  const int k = config_.k_mix;
  const int d = dim_o_;
  auto out = net_->forward(torch::cat({s_o, z}, -1));
  auto lead = s_o.sizes().vec();
  lead.pop_back();
  auto comp_shape = lead;
  comp_shape.push_back(k);
  comp_shape.push_back(d);
  auto logits = out.narrow(-1, 0, k);
  auto means = config_.delta_scale * out.narrow(-1, k, k * d).reshape(comp_shape);
  auto raw = out.narrow(-1, k + k * d, k * d).reshape(comp_shape);
  auto log_std = config_.log_std_min +
                 (config_.log_std_max - config_.log_std_min) * torch::sigmoid(raw);
  return {torch::log_softmax(logits, -1), means, log_std.exp()};
}

torch::Tensor SkillDynamicsImpl::log_prob(const torch::Tensor& s_o,
                                          const torch::Tensor& z,
                                          const torch::Tensor& s_o_next) {
  return mixture_log_prob(forward(s_o, z), s_o_next - s_o);
}

torch::Tensor dads_reward_from_log_probs(const torch::Tensor& log_q,
                                         const torch::Tensor& log_q_prior,
                                         double clip) {
  // -log mean_l exp(lp_l - lp), shifted by the row max for stability.
  auto diff = log_q_prior - log_q.unsqueeze(-1);
  auto shift = std::get<0>(diff.max(-1, /*keepdim=*/true));
  auto log_mean = shift.squeeze(-1) + torch::exp(diff - shift).mean(-1).log();
  return (-log_mean).clamp(-clip, clip);
}

SkillDynamicsModel::SkillDynamicsModel(int dim_o, int dim_z,
                                       const EstimatorConfig& config)
    : config_(config), net_(dim_o, dim_z, config) {
  opt_ = std::make_unique<torch::optim::Adam>(
      net_->parameters(), torch::optim::AdamOptions(config.lr));
}

double SkillDynamicsModel::update(const torch::Tensor& s_o,
                                  const torch::Tensor& z,
                                  const torch::Tensor& s_o_next) {
  auto nll = -net_->log_prob(s_o, z, s_o_next).mean();
  opt_->zero_grad();
  nll.backward();
  opt_->step();
  return nll.item<double>();
}

torch::Tensor SkillDynamicsModel::reward(const torch::Tensor& s_o,
                                         const torch::Tensor& z,
                                         const torch::Tensor& s_o_next,
                                         const torch::Tensor& prior_z) {
  torch::NoGradGuard no_grad;
  const int64_t b = s_o.size(0);
  const int64_t l = prior_z.size(0);
  // Numerator and prior terms share one forward pass: column 0 holds z.
  auto all_z = torch::cat({z.unsqueeze(1), prior_z.unsqueeze(0).expand({b, l, z.size(1)})},
                          1);  // [B, L+1, Dz]
  auto s = s_o.unsqueeze(1).expand({b, l + 1, s_o.size(1)});
  auto s_next = s_o_next.unsqueeze(1).expand({b, l + 1, s_o.size(1)});
  auto lp = net_->log_prob(s.reshape({b * (l + 1), -1}),
                           all_z.reshape({b * (l + 1), -1}),
                           s_next.reshape({b * (l + 1), -1}))
                .reshape({b, l + 1});
  return dads_reward_from_log_probs(lp.select(1, 0), lp.narrow(1, 1, l),
                                    config_.reward_clip);
}

IntrinsicRewardModel::IntrinsicRewardModel(int dim_o, int dim_r, int dim_z,
                                           const EstimatorConfig& config)
    : config_(config),
      jsd_(dim_o, dim_r, config, BoundKind::kJsd),
      dynamics_(dim_o, dim_z, config) {
  if (config.dv_comparison) dv_.emplace(dim_o, dim_r, config, BoundKind::kDonskerVaradhan);
}

EstimatorStats IntrinsicRewardModel::update(const IntrinsicBatch& batch,
                                            at::Generator& gen) {
  batch.validate();
  EstimatorStats stats;
  auto perm = torch::randperm(batch.size(), gen, torch::kLong);
  stats.jsd_bound = jsd_.update(batch.s_o_next, batch.s_r_next, perm);
  stats.dads_nll = dynamics_.update(batch.s_o, batch.z, batch.s_o_next);
  if (dv_) stats.dv_bound = dv_->update(batch.s_o_next, batch.s_r_next, perm);
  return stats;
}

IntrinsicRewards IntrinsicRewardModel::rewards(const IntrinsicBatch& batch,
                                               at::Generator& gen) {
  batch.validate();
  IntrinsicRewards out;
  auto perm = torch::randperm(batch.size(), gen, torch::kLong);
  out.marginal_stat = jsd_.marginal_stat(batch.s_o_next, batch.s_r_next, perm);
  out.r1 = jsd_.pointwise_reward(batch.s_o_next, batch.s_r_next, out.marginal_stat);
  out.jsd_bound = out.r1.mean().item<double>();
  auto prior = torch::rand({config_.prior_samples, batch.z.size(1)}, gen) * 2.0 - 1.0;
  out.r2 = dynamics_.reward(batch.s_o, batch.z, batch.s_o_next, prior);
  out.total = config_.jsd_weight * out.r1 + config_.dads_weight * out.r2;
  return out;
}

}  // namespace skilldisc
