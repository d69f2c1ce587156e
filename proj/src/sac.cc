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

#include "skilldisc/sac.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "skilldisc/nn.h"

namespace skilldisc {
namespace {

// Fixed columns after obs, next_obs, cond and intention: action, reward,
// done, task, phase, s_o, s_r, s_o_next, s_r_next, achieved_next.
constexpr int kFixedColumns = kActionDim + 4 + 5 * 3;

struct Columns {
  int obs, next_obs, cond, intention, action, reward, done, task, phase, s_o,
      s_r, s_o_next, s_r_next, achieved_next;
};

Columns columns(const ReplayLayout& l) {
  Columns c{};
  c.obs = 0;
  c.next_obs = c.obs + l.obs_dim;
  c.cond = c.next_obs + l.obs_dim;
  c.intention = c.cond + l.cond_dim;
  c.action = c.intention + l.intention_dim;
  c.reward = c.action + kActionDim;
  c.done = c.reward + 1;
  c.task = c.done + 1;
  c.phase = c.task + 1;
  c.s_o = c.phase + 1;
  c.s_r = c.s_o + 3;
  c.s_o_next = c.s_r + 3;
  c.s_r_next = c.s_o_next + 3;
  c.achieved_next = c.s_r_next + 3;
  return c;
}

Vec3 read3(const float* p) { return {p[0], p[1], p[2]}; }

Conditioning with_goal(const Conditioning& cond, const Vec3& goal) {
  Conditioning out = cond;
  if (auto* g = std::get_if<GoalCond>(&out.value)) {
    g->goal = goal;
  } else if (auto* gt = std::get_if<GoalTaskCond>(&out.value)) {
    gt->goal = goal;
  } else {
    throw ValidationError("goal relabeling needs goal conditioning");
  }
  return out;
}

Vec3 desired_goal(const Conditioning& cond) {
  if (const auto* g = std::get_if<GoalCond>(&cond.value)) return g->goal;
  if (const auto* gt = std::get_if<GoalTaskCond>(&cond.value)) return gt->goal;
  throw ValidationError("conditioning carries no goal");
}

Transition base_transition(const Episode& e, int t) {
  const auto ut = static_cast<std::size_t>(t);
  Transition tr;
  tr.obs = e.obs[ut];
  tr.next_obs = e.obs[ut + 1];
  tr.intention = e.intention;
  tr.action = e.actions[ut];
  tr.done = t == e.length() - 1;
  tr.phase = e.phase;
  tr.task = e.task;
  tr.s_o = e.object[ut];
  tr.s_r = e.gripper[ut];
  tr.s_o_next = e.object[ut + 1];
  tr.s_r_next = e.gripper[ut + 1];
  tr.achieved_next = e.achieved[ut + 1];
  return tr;
}

}  // namespace

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::kPretrain: return "pretrain";
    case Phase::kGcrl: return "gcrl";
    case Phase::kMtrl: return "mtrl";
  }
  return "";
}

Phase parse_phase(std::string_view name) {
  for (Phase p : {Phase::kPretrain, Phase::kGcrl, Phase::kMtrl}) {
    if (phase_name(p) == name) return p;
  }
  throw ConfigError("unknown phase '" + std::string(name) + "'");
}

HerStrategy parse_her_strategy(std::string_view name) {
  if (name == "future") return HerStrategy::kFuture;
  if (name == "final") return HerStrategy::kFinal;
  throw ConfigError("unknown HER strategy '" + std::string(name) + "'");
}

void SacConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("sac.gamma must be in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sac.tau must be in (0, 1]");
  if (batch_size < 2) throw ConfigError("sac.batch_size must be at least 2");
  if (!(actor_lr > 0 && critic_lr > 0 && alpha_lr > 0)) {
    throw ConfigError("sac learning rates must be positive");
  }
  if (!(init_alpha > 0)) throw ConfigError("sac.init_alpha must be positive");
  if (critic_hidden < 1 || critic_layers < 1) throw ConfigError("sac critic sizes must be positive");
  if (!(critic_input_scale > 0)) throw ConfigError("sac.critic_input_scale must be positive");
  if (buffer_capacity < 1) throw ConfigError("sac.buffer_capacity must be positive");
  if (her_k < 0) throw ConfigError("sac.her_k must be nonnegative");
  parse_her_strategy(her_strategy);
}

void Episode::validate() const {
  const auto n = actions.size();
  if (n == 0) throw ValidationError("episode is empty");
  if (obs.size() != n + 1 || gripper.size() != n + 1 || object.size() != n + 1 ||
      achieved.size() != n + 1) {
    throw ValidationError("episode state arrays must hold length + 1 entries");
  }
}

std::vector<Transition> episode_transitions(const Episode& episode,
                                            const CondSpec& spec) {
  episode.validate();
  const auto cond = encode_conditioning(episode.cond, spec);
  std::vector<Transition> out;
  out.reserve(episode.actions.size());
  for (int t = 0; t < episode.length(); ++t) {
    auto tr = base_transition(episode, t);
    tr.cond = cond;
    if (episode.phase != Phase::kPretrain) {
      tr.reward = sparse_reward(tr.achieved_next, desired_goal(episode.cond),
                                episode.spec.success_radius);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<Transition> her_relabel(const Episode& episode, HerStrategy strategy,
                                    int k, std::mt19937_64& rng,
                                    const CondSpec& spec) {
  episode.validate();
  if (episode.phase == Phase::kPretrain) {
    throw ValidationError("goal relabeling applies to goal-conditioned phases");
  }
  if (k < 0) throw ValidationError("her k must be nonnegative");
  const int len = episode.length();
  const double radius = episode.spec.success_radius;
  const auto original = episode_transitions(episode, spec);
  std::vector<Transition> out;
  out.reserve(original.size() * static_cast<std::size_t>(k + 1));
  for (int t = 0; t < len; ++t) {
    out.push_back(original[static_cast<std::size_t>(t)]);
    for (int j = 0; j < k; ++j) {
      int index = len;
      if (strategy == HerStrategy::kFuture && t + 2 <= len) {
        std::uniform_int_distribution<int> pick(t + 2, len);
        index = pick(rng);
      }
      const Vec3 goal = episode.achieved[static_cast<std::size_t>(index)];
      auto tr = base_transition(episode, t);
      tr.cond = encode_conditioning(with_goal(episode.cond, goal), spec);
      tr.reward = sparse_reward(tr.achieved_next, goal, radius);
      out.push_back(std::move(tr));
    }
  }
  return out;
}

int ReplayLayout::row_width() const {
  return 2 * obs_dim + cond_dim + intention_dim + kFixedColumns;
}

std::vector<float> pack_transition(const Transition& t, const ReplayLayout& layout) {
  if (static_cast<int>(t.obs.size()) != layout.obs_dim ||
      static_cast<int>(t.next_obs.size()) != layout.obs_dim ||
      static_cast<int>(t.cond.size()) != layout.cond_dim ||
      static_cast<int>(t.intention.size()) != layout.intention_dim) {
    throw ValidationError("transition does not match the replay layout");
  }
  if (!std::isfinite(t.reward)) throw ValidationError("transition reward is not finite");
  std::vector<float> row;
  row.reserve(static_cast<std::size_t>(layout.row_width()));
  auto put = [&row](const auto& values) {
    for (auto v : values) row.push_back(static_cast<float>(v));
  };
  put(t.obs);
  put(t.next_obs);
  put(t.cond);
  put(t.intention);
  put(t.action);
  row.push_back(static_cast<float>(t.reward));
  row.push_back(t.done ? 1.f : 0.f);
  row.push_back(static_cast<float>(t.task));
  row.push_back(static_cast<float>(static_cast<int>(t.phase)));
  put(t.s_o);
  put(t.s_r);
  put(t.s_o_next);
  put(t.s_r_next);
  put(t.achieved_next);
  return row;
}

Batch Batch::concat(const std::vector<Batch>& parts) {
  auto cat = [&parts](torch::Tensor Batch::*field) {
    std::vector<torch::Tensor> pieces;
    for (const auto& p : parts) pieces.push_back(p.*field);
    return torch::cat(pieces, 0);
  };
  Batch b;
  for (auto field : {&Batch::obs, &Batch::next_obs, &Batch::action, &Batch::reward,
                     &Batch::done, &Batch::cond, &Batch::intention, &Batch::task,
                     &Batch::s_o, &Batch::s_r, &Batch::s_o_next, &Batch::s_r_next,
                     &Batch::achieved_next}) {
    b.*field = cat(field);
  }
  return b;
}

ReplayBuffer::ReplayBuffer(ReplayLayout layout, int64_t capacity, int64_t block_size)
    : layout_(layout), block_size_(block_size) {
  if (block_size < 1) throw ConfigError("replay block size must be positive");
  max_blocks_ = std::max<int64_t>(1, capacity / block_size);
  storage_ = torch::zeros({max_blocks_ * block_size_, layout.row_width()});
}

void ReplayBuffer::add(const std::vector<Transition>& block) {
  if (static_cast<int64_t>(block.size()) != block_size_) {
    throw ValidationError("replay block has " + std::to_string(block.size()) +
                          " transitions, expected " + std::to_string(block_size_));
  }
  auto acc = storage_.accessor<float, 2>();
  const int64_t base = next_block_ * block_size_;
  for (int64_t i = 0; i < block_size_; ++i) {
    const auto row = pack_transition(block[static_cast<std::size_t>(i)], layout_);
    for (std::size_t c = 0; c < row.size(); ++c) {
      acc[base + i][static_cast<int64_t>(c)] = row[c];
    }
  }
  next_block_ = (next_block_ + 1) % max_blocks_;
  n_blocks_ = std::min(n_blocks_ + 1, max_blocks_);
}

int64_t ReplayBuffer::physical(int64_t logical) const {
  // Oldest block first.
  const int64_t oldest = n_blocks_ < max_blocks_ ? 0 : next_block_;
  const int64_t block = (oldest + logical / block_size_) % max_blocks_;
  return block * block_size_ + logical % block_size_;
}

Batch ReplayBuffer::sample(int64_t n, std::mt19937_64& rng) const {
  if (empty()) throw ValidationError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<int64_t> pick(0, size() - 1);
  std::vector<int64_t> rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r = pick(rng);
  return gather(torch::tensor(rows, torch::kLong));
}

Batch ReplayBuffer::gather(const torch::Tensor& rows) const {
  auto m = storage_.index_select(0, rows);
  const auto c = columns(layout_);
  auto col = [&m](int start, int width) { return m.narrow(1, start, width); };
  Batch b;
  b.obs = col(c.obs, layout_.obs_dim);
  b.next_obs = col(c.next_obs, layout_.obs_dim);
  b.cond = col(c.cond, layout_.cond_dim);
  b.intention = col(c.intention, layout_.intention_dim);
  b.action = col(c.action, kActionDim);
  b.reward = col(c.reward, 1).squeeze(1);
  b.done = col(c.done, 1).squeeze(1);
  b.task = col(c.task, 1).squeeze(1).to(torch::kLong);
  b.s_o = col(c.s_o, 3);
  b.s_r = col(c.s_r, 3);
  b.s_o_next = col(c.s_o_next, 3);
  b.s_r_next = col(c.s_r_next, 3);
  b.achieved_next = col(c.achieved_next, 3);
  return b;
}

Transition ReplayBuffer::at(int64_t index) const {
  if (index < 0 || index >= size()) throw IndexError("replay index out of range");
  const auto c = columns(layout_);
  auto row = storage_[physical(index)].contiguous();
  const float* p = row.data_ptr<float>();
  auto slice = [p](int start, int width) {
    return std::vector<float>(p + start, p + start + width);
  };
  Transition t;
  t.obs = slice(c.obs, layout_.obs_dim);
  t.next_obs = slice(c.next_obs, layout_.obs_dim);
  t.cond = slice(c.cond, layout_.cond_dim);
  t.intention = slice(c.intention, layout_.intention_dim);
  for (int j = 0; j < kActionDim; ++j) t.action[static_cast<std::size_t>(j)] = p[c.action + j];
  t.reward = p[c.reward];
  t.done = p[c.done] != 0.f;
  t.task = static_cast<int>(p[c.task]);
  t.phase = static_cast<Phase>(static_cast<int>(p[c.phase]));
  t.s_o = read3(p + c.s_o);
  t.s_r = read3(p + c.s_r);
  t.s_o_next = read3(p + c.s_o_next);
  t.s_r_next = read3(p + c.s_r_next);
  t.achieved_next = read3(p + c.achieved_next);
  return t;
}

std::string ReplayBuffer::checksum(int64_t index) const {
  if (index < 0 || index >= size()) throw IndexError("replay index out of range");
  auto row = storage_[physical(index)].contiguous();
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(row.data_ptr<float>()),
                                     static_cast<std::size_t>(row.numel()) * sizeof(float)));
}

std::vector<int> multitask_shares(const std::vector<bool>& nonempty, int batch_size) {
  const int k = static_cast<int>(std::count(nonempty.begin(), nonempty.end(), true));
  std::vector<int> shares(nonempty.size(), 0);
  if (k == 0) throw ValidationError("every task buffer is empty");
  int remainder = batch_size % k;
  for (std::size_t j = 0; j < nonempty.size(); ++j) {
    if (!nonempty[j]) continue;
    shares[j] = batch_size / k + (remainder > 0 ? 1 : 0);
    if (remainder > 0) --remainder;
  }
  return shares;
}

MultitaskSample multitask_sample(const std::vector<const ReplayBuffer*>& buffers,
                                 int batch_size, std::mt19937_64& rng) {
  std::vector<bool> nonempty;
  MultitaskSample out;
  for (std::size_t j = 0; j < buffers.size(); ++j) {
    nonempty.push_back(!buffers[j]->empty());
    if (buffers[j]->empty()) {
      out.warnings.push_back("task " + std::to_string(j) +
                             " buffer is empty; skipped in this batch");
    }
  }
  out.shares = multitask_shares(nonempty, batch_size);
  std::vector<Batch> parts;
  for (std::size_t j = 0; j < buffers.size(); ++j) {
    if (out.shares[j] > 0) parts.push_back(buffers[j]->sample(out.shares[j], rng));
  }
  out.batch = Batch::concat(parts);
  return out;
}

TemperatureModel::TemperatureModel(int n_tasks, double init_alpha, double lr) {
  if (n_tasks < 1) throw ConfigError("temperature model needs at least one task");
  std::vector<torch::Tensor> params;
  for (int j = 0; j < n_tasks; ++j) {
    log_alpha_.push_back(
        torch::full({}, std::log(init_alpha), torch::kFloat).requires_grad_(true));
  }
  opt_ = std::make_unique<torch::optim::SGD>(log_alpha_, torch::optim::SGDOptions(lr));
}

double TemperatureModel::alpha(int task) const {
  return std::exp(log_alpha_.at(static_cast<std::size_t>(task)).item<double>());
}

std::vector<double> TemperatureModel::alphas() const {
  std::vector<double> out;
  for (int j = 0; j < n_tasks(); ++j) out.push_back(alpha(j));
  return out;
}

torch::Tensor TemperatureModel::alpha_for(const torch::Tensor& task) const {
  torch::NoGradGuard no_grad;
  auto table = torch::stack(log_alpha_).exp();
  return table.index_select(0, task);
}

double TemperatureModel::update(const torch::Tensor& log_prob, const torch::Tensor& task,
                                double target_entropy) {
  auto gap = (log_prob.detach() + target_entropy);
  torch::Tensor loss;
  for (int j = 0; j < n_tasks(); ++j) {
    auto mask = task == j;
    const auto count = mask.sum().item<int64_t>();
    if (count == 0) continue;
    auto term = -log_alpha_[static_cast<std::size_t>(j)] * gap.masked_select(mask).mean();
    loss = loss.defined() ? loss + term : term;
  }
  if (!loss.defined()) return 0.0;
  opt_->zero_grad();
  for (auto& p : log_alpha_) p.mutable_grad() = torch::Tensor();
  loss.backward();
  opt_->step();
  return loss.item<double>();
}

std::string TemperatureModel::to_bytes() const {
  auto values = torch::stack(log_alpha_).detach().contiguous();
  return std::string(reinterpret_cast<const char*>(values.data_ptr<float>()),
                     static_cast<std::size_t>(values.numel()) * sizeof(float));
}

void TemperatureModel::from_bytes(const std::string& bytes) {
  if (bytes.size() != log_alpha_.size() * sizeof(float)) {
    throw CorruptionError("temperature blob has the wrong size");
  }
  torch::NoGradGuard no_grad;
  const auto* p = reinterpret_cast<const float*>(bytes.data());
  for (std::size_t j = 0; j < log_alpha_.size(); ++j) log_alpha_[j].fill_(p[j]);
}

CriticImpl::CriticImpl(int feature_dim, int cond_dim, int hidden, int layers,
                       double input_scale)
    : input_scale_(input_scale) {
  net_ = register_module(
      "net", nn::mlp(feature_dim + cond_dim + kActionDim, hidden, layers, 1));
}

torch::Tensor CriticImpl::forward(const torch::Tensor& feature, const torch::Tensor& cond,
                                  const torch::Tensor& action) {
  auto state = torch::cat({feature, cond}, -1) * input_scale_;
  return net_->forward(torch::cat({state, action}, -1)).squeeze(-1);
}

CriticSetImpl::CriticSetImpl(int feature_dim, int cond_dim, const SacConfig& config) {
  auto make = [&] {
    return Critic(feature_dim, cond_dim, config.critic_hidden, config.critic_layers,
                  config.critic_input_scale);
  };
  q1 = register_module("q1", make());
  q2 = register_module("q2", make());
  q1_target = register_module("q1_target", make());
  q2_target = register_module("q2_target", make());
  nn::hard_copy(*q1_target, *q1);
  nn::hard_copy(*q2_target, *q2);
  for (auto& p : q1_target->parameters()) p.set_requires_grad(false);
  for (auto& p : q2_target->parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> CriticSetImpl::online_parameters() {
  auto params = q1->parameters();
  for (auto& p : q2->parameters()) params.push_back(p);
  return params;
}

SacAgent::SacAgent(McpPolicy policy, SetEncoder encoder, bool encoder_trainable,
                   LayoutManifest layout, int n_tasks, const SacConfig& config)
    : config_(config),
      layout_(layout),
      policy_(std::move(policy)),
      encoder_(std::move(encoder)),
      temperature_(n_tasks, config.init_alpha, config.alpha_lr) {
  config.validate();
  const int feature_dim = encoder_ ? encoder_->output_width() : layout.total;
  if (feature_dim != policy_->feature_dim()) {
    throw ConfigError("policy feature width " + std::to_string(policy_->feature_dim()) +
                      " does not match " + std::to_string(feature_dim));
  }
  critics_ = CriticSet(feature_dim, policy_->cond_spec().width(), config);
  actor_opt_ = std::make_unique<torch::optim::Adam>(
      policy_->trainable_parameters(), torch::optim::AdamOptions(config.actor_lr));
  auto critic_params = critics_->online_parameters();
  if (encoder_ && encoder_trainable) {
    for (auto& p : nn::trainable(encoder_->parameters())) critic_params.push_back(p);
  }
  critic_opt_ = std::make_unique<torch::optim::Adam>(
      critic_params, torch::optim::AdamOptions(config.critic_lr));
}

torch::Tensor SacAgent::features(const torch::Tensor& obs, const torch::Tensor& intention) {
  if (!encoder_) return obs;
  return encoder_->forward(tokenize_batch(obs, layout_, intention));
}

torch::Tensor SacAgent::critic_targets(const Batch& batch, at::Generator& gen) {
  torch::NoGradGuard no_grad;
  auto f_next = features(batch.next_obs, batch.intention);
  auto next = policy_->act(f_next, batch.cond, ActMode::kSample, gen);
  auto q_next = torch::min(critics_->q1_target->forward(f_next, batch.cond, next.action),
                           critics_->q2_target->forward(f_next, batch.cond, next.action));
  auto alpha = temperature_.alpha_for(batch.task);
  return batch.reward + config_.gamma * (q_next - alpha * next.log_prob);
}

LossRecord SacAgent::update(const Batch& batch, at::Generator& gen) {
  LossRecord rec;
  auto check = [](const torch::Tensor& loss, const char* name) {
    if (!torch::isfinite(loss).all().item<bool>()) {
      throw NonFiniteError(std::string(name) + " loss is not finite");
    }
  };

  auto target = critic_targets(batch, gen);
  auto f = features(batch.obs, batch.intention);
  auto q1 = critics_->q1->forward(f, batch.cond, batch.action);
  auto q2 = critics_->q2->forward(f, batch.cond, batch.action);
  auto critic_loss = torch::mse_loss(q1, target) + torch::mse_loss(q2, target);
  check(critic_loss, "critic");
  critic_opt_->zero_grad();
  critic_loss.backward();
  critic_opt_->step();

  torch::Tensor f_actor;
  {
    torch::NoGradGuard no_grad;
    f_actor = features(batch.obs, batch.intention);
  }
  auto act = policy_->act(f_actor, batch.cond, ActMode::kSample, gen);
  auto q_pi = torch::min(critics_->q1->forward(f_actor, batch.cond, act.action),
                         critics_->q2->forward(f_actor, batch.cond, act.action));
  auto alpha = temperature_.alpha_for(batch.task);
  auto actor_loss = (alpha * act.log_prob - q_pi).mean();
  check(actor_loss, "actor");
  actor_opt_->zero_grad();
  actor_loss.backward();
  actor_opt_->step();

  rec.alpha_loss = temperature_.update(act.log_prob, batch.task, config_.target_entropy);
  nn::polyak_update(*critics_->q1_target, *critics_->q1, config_.tau);
  nn::polyak_update(*critics_->q2_target, *critics_->q2, config_.tau);

  rec.critic_loss = critic_loss.item<double>();
  rec.actor_loss = actor_loss.item<double>();
  rec.q_mean = q1.mean().item<double>();
  rec.target_mean = target.mean().item<double>();
  rec.entropy = -act.log_prob.mean().item<double>();
  return rec;
}

}  // namespace skilldisc
