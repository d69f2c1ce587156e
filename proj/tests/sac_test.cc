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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "skilldisc/nn.h"

namespace skilldisc {
namespace {

// Random-action rollout of a goal-conditioned episode.
Episode random_episode(TaskId task, int n_objects, std::uint64_t seed, int len = kHorizon,
                       int task_index = 0, int n_tasks = 1) {
  auto spec = TaskSpec::make(task, n_objects);
  auto [s, obs] = reset(spec, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Episode e;
  e.phase = n_tasks > 1 ? Phase::kMtrl : Phase::kGcrl;
  e.task = task_index;
  e.spec = spec;
  e.cond = {GoalTaskCond{sample_goal(spec, rng), task_index, n_tasks}, std::nullopt};
  const int intended = static_cast<int>(seed % static_cast<std::uint64_t>(n_objects));
  if (n_objects > 1) {
    e.intention.assign(kMaxObjects, 0.f);
    e.intention[static_cast<std::size_t>(intended)] = 1.f;
    e.cond.intention = intended;
  }
  auto record = [&](const WorldState& st, const Observation& o) {
    e.obs.push_back(o.flat());
    e.gripper.push_back(st.gripper_pos);
    e.object.push_back(st.objects[static_cast<std::size_t>(intended)].pos);
    e.achieved.push_back(achieved_goal(st, intended));
  };
  record(s, obs);
  for (int t = 0; t < len; ++t) {
    Action a{u(rng), u(rng), u(rng), u(rng)};
    e.actions.push_back(a);
    std::tie(s, obs) = step(s, a);
    record(s, obs);
  }
  return e;
}

ReplayLayout layout_for(const Episode& e, const CondSpec& spec) {
  return {static_cast<int>(e.obs[0].size()), spec.width(),
          static_cast<int>(e.intention.size())};
}

TEST(HerTest, CountsAndIdentity) {
  auto e = random_episode(TaskId::kPickPlace, 1, 3);
  auto spec = CondSpec::goal_task(1);
  std::mt19937_64 rng(0);
  auto expanded = her_relabel(e, HerStrategy::kFuture, 4, rng, spec);
  EXPECT_EQ(expanded.size(), 250u);
  auto plain = her_relabel(e, HerStrategy::kFuture, 0, rng, spec);
  auto original = episode_transitions(e, spec);
  ASSERT_EQ(plain.size(), original.size());
  for (std::size_t i = 0; i < plain.size(); ++i) {
    EXPECT_EQ(pack_transition(plain[i], layout_for(e, spec)),
              pack_transition(original[i], layout_for(e, spec)));
  }
}

TEST(HerTest, OwnAchievedNextStateGivesReward) {
  auto e = random_episode(TaskId::kPickPlace, 1, 5);
  std::mt19937_64 rng(1);
  auto out = her_relabel(e, HerStrategy::kFuture, 1, rng, CondSpec::goal_task(1));
  // The last step has no state after its own next state, so its copy falls
  // back to the final state, which is that next state.
  const auto& last = out.back();
  EXPECT_EQ(last.reward, 1.0);
  EXPECT_FLOAT_EQ(last.cond[0], static_cast<float>(last.achieved_next[0]));
}

TEST(HerTest, FutureGoalsComeFromStrictlyLaterStates) {
  auto e = random_episode(TaskId::kPush, 1, 8, 6);
  std::mt19937_64 rng(2);
  auto out = her_relabel(e, HerStrategy::kFuture, 4, rng, CondSpec::goal_task(1));
  for (int t = 0; t < e.length(); ++t) {
    for (int j = 1; j <= 4; ++j) {
      const auto& tr = out[static_cast<std::size_t>(t * 5 + j)];
      bool found = false;
      for (int f = std::min(t + 2, e.length()); f <= e.length(); ++f) {
        const auto& g = e.achieved[static_cast<std::size_t>(f)];
        if (tr.cond[0] == static_cast<float>(g[0]) && tr.cond[1] == static_cast<float>(g[1]) &&
            tr.cond[2] == static_cast<float>(g[2])) {
          found = true;
        }
      }
      EXPECT_TRUE(found);
    }
  }
}

TEST(HerTest, RelabeledRewardsRecomputeFromScratch) {
  std::mt19937_64 rng(9);
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; checked < 10000; ++seed) {
    const TaskId task = seed % 3 == 0 ? TaskId::kPickPlace
                        : seed % 3 == 1 ? TaskId::kDrawerOpen
                                        : TaskId::kPush;
    const int n = task == TaskId::kPickPlace ? 1 + static_cast<int>(seed % 4) : 1;
    auto e = random_episode(task, n, seed);
    auto strategy = seed % 2 ? HerStrategy::kFuture : HerStrategy::kFinal;
    for (const auto& tr : her_relabel(e, strategy, 4, rng, CondSpec::goal_task(1))) {
      Vec3 goal{tr.cond[0], tr.cond[1], tr.cond[2]};
      const double reward = sparse_reward(tr.achieved_next, goal, e.spec.success_radius);
      ASSERT_EQ(tr.reward, reward);
      EXPECT_EQ(tr.intention, e.intention);
      ++checked;
    }
  }
}

TEST(HerTest, PretrainEpisodesRejected) {
  auto e = random_episode(TaskId::kPickPlace, 1, 1);
  e.phase = Phase::kPretrain;
  std::mt19937_64 rng(0);
  EXPECT_THROW(her_relabel(e, HerStrategy::kFuture, 4, rng, CondSpec::goal_task(1)),
               ValidationError);
}

TEST(ReplayTest, SampledRowsMatchStored) {
  auto spec = CondSpec::goal_task(1);
  auto first = random_episode(TaskId::kPickPlace, 3, 0);
  ReplayBuffer buffer(layout_for(first, spec), 1000, 250);
  std::mt19937_64 rng(4);
  std::vector<std::vector<Transition>> blocks;
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto e = random_episode(TaskId::kPickPlace, 3, s * 3);
    blocks.push_back(her_relabel(e, HerStrategy::kFuture, 4, rng, spec));
    buffer.add(blocks.back());
  }
  EXPECT_EQ(buffer.size(), 750);
  for (int64_t i = 0; i < buffer.size(); ++i) {
    const auto& original = blocks[static_cast<std::size_t>(i / 250)][static_cast<std::size_t>(i % 250)];
    auto packed = pack_transition(original, buffer.layout());
    auto expected = sha256_hex(std::string_view(reinterpret_cast<const char*>(packed.data()),
                                                packed.size() * sizeof(float)));
    ASSERT_EQ(buffer.checksum(i), expected);
    ASSERT_EQ(pack_transition(buffer.at(i), buffer.layout()), packed);
  }
  auto batch = buffer.sample(64, rng);
  EXPECT_EQ(batch.size(), 64);
  EXPECT_EQ(batch.obs.size(1), buffer.layout().obs_dim);
}

TEST(ReplayTest, EvictsOldestWholeEpisode) {
  auto spec = CondSpec::goal_task(1);
  auto e0 = random_episode(TaskId::kPickPlace, 1, 0);
  ReplayBuffer buffer(layout_for(e0, spec), 100, 50);
  std::vector<std::vector<Transition>> blocks;
  for (std::uint64_t s = 0; s < 3; ++s) {
    blocks.push_back(episode_transitions(random_episode(TaskId::kPickPlace, 1, s), spec));
    buffer.add(blocks.back());
  }
  EXPECT_EQ(buffer.size(), 100);
  EXPECT_EQ(pack_transition(buffer.at(0), buffer.layout()),
            pack_transition(blocks[1][0], buffer.layout()));
  EXPECT_EQ(pack_transition(buffer.at(99), buffer.layout()),
            pack_transition(blocks[2][49], buffer.layout()));
  EXPECT_THROW(buffer.add(std::vector<Transition>(blocks[0].begin(), blocks[0].begin() + 3)),
               ValidationError);
}

TEST(MultitaskTest, Shares) {
  EXPECT_EQ(multitask_shares({true, true, true, true}, 256), (std::vector<int>{64, 64, 64, 64}));
  EXPECT_EQ(multitask_shares({true, true, true}, 256), (std::vector<int>{86, 85, 85}));
  EXPECT_EQ(multitask_shares({true, false, true, true}, 256), (std::vector<int>{86, 0, 85, 85}));
  EXPECT_THROW(multitask_shares({false, false}, 256), ValidationError);
}

TEST(MultitaskTest, SampleAttachesTaskIndex) {
  const int k = 4;
  auto spec = CondSpec::goal_task(k);
  std::vector<ReplayBuffer> buffers;
  std::mt19937_64 rng(1);
  for (int j = 0; j < k; ++j) {
    auto e = random_episode(TaskId::kPickPlace, 1, static_cast<std::uint64_t>(j), kHorizon, j, k);
    buffers.emplace_back(layout_for(e, spec), 1000, 50);
    if (j != 2) buffers.back().add(episode_transitions(e, spec));
  }
  std::vector<const ReplayBuffer*> ptrs;
  for (auto& b : buffers) ptrs.push_back(&b);
  auto out = multitask_sample(ptrs, 256, rng);
  EXPECT_EQ(out.batch.size(), 256);
  EXPECT_EQ(out.warnings.size(), 1u);
  EXPECT_EQ((out.batch.task == 2).sum().item<int64_t>(), 0);
  EXPECT_EQ((out.batch.task == 0).sum().item<int64_t>(), 86);
  // Task one-hot sits after the goal in the conditioning vector.
  for (int64_t i = 0; i < 256; i += 17) {
    const auto t = out.batch.task[i].item<int64_t>();
    EXPECT_EQ(out.batch.cond[i][3 + t].item<float>(), 1.f);
  }
}

TEST(CriticTest, InputScaleLeavesActionsUnscaled) {
  torch::manual_seed(6);
  Critic a(5, 2, 16, 2, 10.0);
  Critic b(5, 2, 16, 2, 1.0);
  nn::from_bytes(*b, nn::to_bytes(*a));
  auto feature = torch::randn({8, 5});
  auto cond = torch::randn({8, 2});
  auto action = torch::rand({8, kActionDim}) * 2 - 1;
  EXPECT_TRUE(torch::allclose(a->forward(feature, cond, action),
                              b->forward(feature * 10, cond * 10, action)));
}

TEST(TemperatureTest, AbsentTaskUnchanged) {
  TemperatureModel temp(4, 0.1, 1e-2);
  auto task = torch::full({32}, 2, torch::kLong);
  for (int i = 0; i < 10; ++i) temp.update(torch::full({32}, 1.0f), task, -4.0);
  auto a = temp.alphas();
  EXPECT_DOUBLE_EQ(a[0], a[1]);
  EXPECT_DOUBLE_EQ(a[0], a[3]);
  EXPECT_NEAR(a[0], 0.1, 1e-7);
  EXPECT_NE(a[2], a[0]);
}

TEST(TemperatureTest, DualDirection) {
  TemperatureModel temp(1, 0.1, 1e-2);
  auto task = torch::zeros({8}, torch::kLong);
  // log_prob -10 means entropy 10, above the target of -4.
  temp.update(torch::full({8}, -10.0f), task, -4.0);
  EXPECT_LT(temp.alpha(0), 0.1);
  TemperatureModel other(1, 0.1, 1e-2);
  other.update(torch::full({8}, 10.0f), task, -4.0);
  EXPECT_GT(other.alpha(0), 0.1);
}

TEST(TemperatureTest, DistinctTrajectories) {
  TemperatureModel temp(4, 0.1, 1e-3);
  std::vector<float> gaps = {-3.f, -1.f, 0.5f, 2.f};
  std::vector<int64_t> tasks;
  std::vector<float> lp;
  for (int j = 0; j < 4; ++j) {
    for (int r = 0; r < 16; ++r) {
      tasks.push_back(j);
      lp.push_back(4.f + gaps[static_cast<std::size_t>(j)] * (1.f + 0.01f * static_cast<float>(r)));
    }
  }
  for (int i = 0; i < 100; ++i) temp.update(torch::tensor(lp), torch::tensor(tasks), -4.0);
  auto a = temp.alphas();
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) EXPECT_NE(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
  }
  TemperatureModel restored(4, 1.0, 1e-3);
  restored.from_bytes(temp.to_bytes());
  EXPECT_EQ(restored.alphas(), a);
}

class AgentFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    torch::manual_seed(0);
    episode_ = random_episode(TaskId::kPickPlace, 1, 2);
    spec_ = CondSpec::goal_task(1);
    layout_ = LayoutManifest::make(1);
    buffer_ = std::make_unique<ReplayBuffer>(layout_for(episode_, spec_), 10000, 250);
    std::mt19937_64 rng(0);
    for (std::uint64_t s = 0; s < 4; ++s) {
      buffer_->add(her_relabel(random_episode(TaskId::kPickPlace, 1, s), HerStrategy::kFuture,
                               4, rng, spec_));
    }
  }

  std::unique_ptr<SacAgent> make_agent(std::uint64_t seed, SacConfig cfg = {}) {
    torch::manual_seed(seed);
    PolicyConfig pc;
    pc.hidden = 32;
    cfg.critic_hidden = 32;
    McpPolicy policy(layout_.total, spec_, pc);
    return std::make_unique<SacAgent>(policy, nullptr, false, layout_, 1, cfg);
  }

  Episode episode_;
  CondSpec spec_;
  LayoutManifest layout_;
  std::unique_ptr<ReplayBuffer> buffer_;
};

TEST_F(AgentFixture, ZeroDiscountTargetIsReward) {
  SacConfig cfg;
  cfg.gamma = 0.0;
  auto agent = make_agent(1, cfg);
  auto batch = buffer_->gather(torch::tensor(std::vector<int64_t>{7}));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(0);
  auto target = agent->critic_targets(batch, gen);
  EXPECT_EQ(target.item<float>(), batch.reward.item<float>());
}

TEST_F(AgentFixture, TargetsStayBounded) {
  SacConfig cfg;
  auto agent = make_agent(2, cfg);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(1);
  std::mt19937_64 rng(3);
  const double alpha = cfg.init_alpha;
  // Bound on |log pi| per action dimension: |eps| < 6 noise, composed std in
  // [e^-5 / N, e^2 / w_floor], squash correction at most -log(1 - (1-1e-6)^2).
  const double n = 8;
  const double per_dim = 18.0 + 0.92 + std::log(n) + 5.0 + 2.0 - std::log(kWeightFloor) + 13.2;
  const double c_h = kActionDim * per_dim;
  for (int i = 0; i < 20; ++i) {
    auto batch = buffer_->sample(256, rng);
    auto target = agent->critic_targets(batch, gen);
    auto q_bound = torch::min(agent->critics()->q1_target->forward(batch.next_obs, batch.cond,
                                                                   batch.action),
                              torch::zeros({}));
    EXPECT_GE(target.min().item<double>(), -alpha * c_h + cfg.gamma * q_bound.min().item<double>() - 1.0);
    EXPECT_LE(target.max().item<double>(), 1.0 / (1.0 - cfg.gamma) + alpha * c_h);
  }
}

TEST_F(AgentFixture, UpdatesAreDeterministicAndRespectFreezing) {
  auto run = [this](bool freeze) {
    auto agent = make_agent(3);
    if (freeze) {
      agent->policy()->freeze_primitives();
      agent = std::make_unique<SacAgent>(agent->policy(), nullptr, false, layout_, 1, SacConfig{});
    }
    const auto prim = agent->policy()->primitives()->checksum();
    auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
    std::mt19937_64 rng(6);
    std::vector<double> losses;
    for (int i = 0; i < 20; ++i) {
      auto rec = agent->update(buffer_->sample(64, rng), gen);
      losses.push_back(rec.critic_loss);
      losses.push_back(rec.actor_loss);
      losses.push_back(rec.alpha_loss);
    }
    return std::make_tuple(losses, prim, agent->policy()->primitives()->checksum());
  };
  auto [a, p0, p1] = run(false);
  auto [b, q0, q1] = run(false);
  EXPECT_EQ(a, b);
  EXPECT_NE(p0, p1);
  auto [c, f0, f1] = run(true);
  EXPECT_EQ(f0, f1);
  for (double v : a) EXPECT_TRUE(std::isfinite(v));
}

TEST_F(AgentFixture, EncoderFeaturesFeedCritics) {
  torch::manual_seed(4);
  EncoderConfig ec;
  ec.model_width = 16;
  ec.mlp_width = 16;
  SetEncoder enc(ec);
  PolicyConfig pc;
  pc.hidden = 16;
  McpPolicy policy(16, spec_, pc);
  auto e = random_episode(TaskId::kPickPlace, 3, 1);
  ReplayBuffer buffer(layout_for(e, spec_), 1000, 50);
  buffer.add(episode_transitions(e, spec_));
  SacAgent agent(policy, enc, true, LayoutManifest::make(3), 1, SacConfig{});
  const auto before = nn::checksum(enc->parameters());
  auto gen = at::make_generator<at::CPUGeneratorImpl>(2);
  std::mt19937_64 rng(2);
  agent.update(buffer.sample(32, rng), gen);
  EXPECT_NE(nn::checksum(enc->parameters()), before);
  EXPECT_THROW(SacAgent(McpPolicy(17, spec_, pc), enc, true, LayoutManifest::make(3), 1,
                        SacConfig{}),
               ConfigError);
}

TEST(PhaseTest, Names) {
  EXPECT_EQ(parse_phase("mtrl"), Phase::kMtrl);
  EXPECT_THROW(parse_phase("x"), ConfigError);
  EXPECT_THROW(parse_her_strategy("episode"), ConfigError);
}

}  // namespace
}  // namespace skilldisc
