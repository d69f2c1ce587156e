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

#include "skilldisc/policy.h"

#include <cmath>
#include <numbers>

#include "skilldisc/nn.h"

namespace skilldisc {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kSquashClip = 1.0 - 1e-6;

std::vector<float> one_hot(int index, int width) {
  std::vector<float> v(static_cast<std::size_t>(width), 0.f);
  v[static_cast<std::size_t>(index)] = 1.f;
  return v;
}

}  // namespace

std::vector<float> Conditioning::vector() const {
  return std::visit(
      [](const auto& v) -> std::vector<float> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SkillLatent>) {
          return v.z;
        } else if constexpr (std::is_same_v<T, GoalCond>) {
          return {static_cast<float>(v.goal[0]), static_cast<float>(v.goal[1]),
                  static_cast<float>(v.goal[2])};
        } else {
          std::vector<float> out = {static_cast<float>(v.goal[0]),
                                    static_cast<float>(v.goal[1]),
                                    static_cast<float>(v.goal[2])};
          auto t = one_hot(v.task, v.n_tasks);
          out.insert(out.end(), t.begin(), t.end());
          return out;
        }
      },
      value);
}

bool Conditioning::operator==(const Conditioning& other) const {
  if (intention != other.intention || value.index() != other.value.index()) {
    return false;
  }
  if (const auto* a = std::get_if<SkillLatent>(&value)) {
    return a->z == std::get<SkillLatent>(other.value).z;
  }
  if (const auto* a = std::get_if<GoalCond>(&value)) {
    return a->goal == std::get<GoalCond>(other.value).goal;
  }
  const auto& a = std::get<GoalTaskCond>(value);
  const auto& b = std::get<GoalTaskCond>(other.value);
  return a.goal == b.goal && a.task == b.task && a.n_tasks == b.n_tasks;
}

CondSpec CondSpec::skill(int dim) { return {CondKind::kSkill, dim, 0}; }
CondSpec CondSpec::goal() { return {CondKind::kGoal, kSkillDim, 0}; }
CondSpec CondSpec::goal_task(int n_tasks) {
  return {CondKind::kGoalTask, kSkillDim, n_tasks};
}

int CondSpec::width() const {
  switch (kind) {
    case CondKind::kSkill: return skill_dim;
    case CondKind::kGoal: return kGoalDim;
    case CondKind::kGoalTask: return kGoalDim + (n_tasks > 1 ? n_tasks : 0);
  }
  return 0;
}

std::vector<float> encode_conditioning(const Conditioning& cond,
                                       const CondSpec& spec) {
  switch (spec.kind) {
    case CondKind::kSkill: {
      const auto* s = std::get_if<SkillLatent>(&cond.value);
      if (!s || static_cast<int>(s->z.size()) != spec.skill_dim) {
        throw ValidationError("expected a skill latent of width " +
                              std::to_string(spec.skill_dim));
      }
      return s->z;
    }
    case CondKind::kGoal: {
      const auto* g = std::get_if<GoalCond>(&cond.value);
      if (!g) throw ValidationError("expected a goal conditioning");
      return cond.vector();
    }
    case CondKind::kGoalTask: {
      const auto* g = std::get_if<GoalTaskCond>(&cond.value);
      if (!g || g->n_tasks != spec.n_tasks || g->task < 0 ||
          g->task >= g->n_tasks) {
        throw ValidationError("expected a goal+task conditioning over " +
                              std::to_string(spec.n_tasks) + " tasks");
      }
      if (spec.n_tasks == 1) {
        return {static_cast<float>(g->goal[0]), static_cast<float>(g->goal[1]),
                static_cast<float>(g->goal[2])};
      }
      return cond.vector();
    }
  }
  return {};
}

ComposedGaussian compose(const torch::Tensor& means, const torch::Tensor& stds,
                         const torch::Tensor& weights, double w_floor,
                         double sigma_min) {
  if (means.sizes() != stds.sizes() || means.dim() < 2 ||
      weights.dim() != means.dim() - 1 ||
      weights.size(-1) != means.size(-2)) {
    throw ValidationError("compose: incompatible shapes");
  }
  {
    torch::NoGradGuard no_grad;
    if (weights.sum(-1).min().item<double>() < w_floor * (1.0 - 1e-5)) {
      throw DegenerateGatingError("gating weights sum below floor " +
                                  std::to_string(w_floor));
    }
    if (stds.min().item<double>() < sigma_min * (1.0 - 1e-5)) {
      throw DomainError("primitive std below sigma_min");
    }
  }
  auto precision = weights.unsqueeze(-1) / stds;  // W_i / sigma_i^j
  auto std = precision.sum(-2).reciprocal();
  auto mean = std * (precision * means).sum(-2);
  return {mean, std};
}

torch::Tensor apply_weight_floor(const torch::Tensor& weights, double w_floor) {
  const int64_t n = weights.size(-1);
  auto sum = weights.sum(-1, /*keepdim=*/true);
  auto lifted = torch::where(sum > 0, weights * (w_floor / sum.clamp_min(1e-30)),
                             torch::full_like(weights, w_floor / n));
  return torch::where(sum < w_floor, lifted, weights);
}

torch::Tensor log_one_minus_tanh_sq(const torch::Tensor& u) {
  return 2.0 * (std::numbers::ln2 - u - torch::softplus(-2.0 * u));
}

torch::Tensor squashed_log_prob(const ComposedGaussian& dist,
                                const torch::Tensor& action) {
  auto a = action.clamp(-kSquashClip, kSquashClip);
  auto u = torch::atanh(a);
  auto z = (u - dist.mean) / dist.std;
  auto log_normal = -0.5 * z.square() - dist.std.log() - kHalfLog2Pi;
  return (log_normal - log_one_minus_tanh_sq(u)).sum(-1);
}

PrimitiveSetImpl::PrimitiveSetImpl(int feature_dim, const PolicyConfig& config)
    : feature_dim_(feature_dim), config_(config) {
  const int n = config.n_primitives;
  const int a = config.action_dim;
  net_ = register_module(
      "net", nn::mlp(feature_dim, config.hidden, config.layers, 2 * n * a));
  // Start near mean 0, std 1 for every primitive.
  torch::NoGradGuard no_grad;
  auto head = nn::last_linear(net_);
  head->weight.mul_(0.1);
  head->bias.zero_();
  const double target =
      -config.log_std_min / (config.log_std_max - config.log_std_min);
  head->bias.slice(0, n * a, 2 * n * a).fill_(std::log(target / (1.0 - target)));
}

std::pair<torch::Tensor, torch::Tensor> PrimitiveSetImpl::forward(
    const torch::Tensor& feature) {
  const int n = config_.n_primitives;
  const int a = config_.action_dim;
  auto out = net_->forward(feature);
  auto lead = feature.sizes().vec();
  lead.pop_back();
  auto shape = lead;
  shape.push_back(n);
  shape.push_back(a);
  auto means = out.narrow(-1, 0, n * a).reshape(shape);
  auto raw = out.narrow(-1, n * a, n * a).reshape(shape);
  auto log_std = config_.log_std_min +
                 (config_.log_std_max - config_.log_std_min) * torch::sigmoid(raw);
  return {means, log_std.exp()};
}

void PrimitiveSetImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  frozen_ = true;
}

std::string PrimitiveSetImpl::checksum() const {
  return nn::checksum(parameters());
}

GatingNetImpl::GatingNetImpl(int feature_dim, int cond_dim,
                             const PolicyConfig& config)
    : feature_dim_(feature_dim), cond_dim_(cond_dim), config_(config) {
  net_ = register_module("net", nn::mlp(feature_dim + cond_dim, config.hidden,
                                        config.layers, config.n_primitives));
  // softplus(bias) = 1/N so the initial weights sum to one.
  torch::NoGradGuard no_grad;
  auto head = nn::last_linear(net_);
  head->weight.mul_(0.1);
  head->bias.fill_(std::log(std::expm1(1.0 / config.n_primitives)));
}

torch::Tensor GatingNetImpl::forward(const torch::Tensor& feature,
                                     const torch::Tensor& cond) {
  auto x = torch::cat({feature, cond}, -1) * config_.gating_input_scale;
  auto w = torch::softplus(net_->forward(x));
  return apply_weight_floor(w, config_.w_floor);
}

McpPolicyImpl::McpPolicyImpl(int feature_dim, CondSpec cond,
                             const PolicyConfig& config)
    : feature_dim_(feature_dim), cond_(cond), config_(config) {
  primitives_ = register_module("primitives", PrimitiveSet(feature_dim, config));
  gating_ = register_module("gating", GatingNet(feature_dim, cond.width(), config));
}

PolicyComponents McpPolicyImpl::components(const torch::Tensor& feature,
                                           const torch::Tensor& cond) {
  auto [means, stds] = primitives_->forward(feature);
  auto weights = gating_->forward(feature, cond);
  return {means, stds, weights};
}

ComposedGaussian McpPolicyImpl::distribution(const torch::Tensor& feature,
                                             const torch::Tensor& cond) {
  auto c = components(feature, cond);
  return compose(c.means, c.stds, c.weights, config_.w_floor,
                 std::exp(config_.log_std_min));
}

ActResult McpPolicyImpl::act(const torch::Tensor& feature,
                             const torch::Tensor& cond, ActMode mode,
                             std::optional<at::Generator> gen) {
  auto dist = distribution(feature, cond);
  if (mode == ActMode::kDeterministic) {
    return {torch::tanh(dist.mean), torch::Tensor(), dist.mean};
  }
  auto eps = torch::randn(dist.mean.sizes(), gen, dist.mean.options());
  auto u = dist.mean + dist.std * eps;
  auto log_normal = -0.5 * eps.square() - dist.std.log() - kHalfLog2Pi;
  auto log_prob = (log_normal - log_one_minus_tanh_sq(u)).sum(-1);
  return {torch::tanh(u), log_prob, u};
}

void McpPolicyImpl::freeze_primitives() { primitives_->freeze(); }

void McpPolicyImpl::reinit_gating(const CondSpec& cond, int feature_dim) {
  if (feature_dim != primitives_->feature_dim()) {
    throw ConfigError("gating feature width " + std::to_string(feature_dim) +
                      " does not match primitive input width " +
                      std::to_string(primitives_->feature_dim()));
  }
  cond_ = cond;
  gating_ = replace_module("gating",
                           GatingNet(feature_dim, cond.width(), config_));
}

std::vector<torch::Tensor> McpPolicyImpl::trainable_parameters() {
  return nn::trainable(parameters());
}

}  // namespace skilldisc
