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

#include "skilldisc/env.h"

#include <gtest/gtest.h>

#include <random>

namespace skilldisc {
namespace {

TaskSpec pick_place(int n = 1) { return TaskSpec::make(TaskId::kPickPlace, n); }

WorldState state_with_object(const Vec3& gripper, const Vec3& object) {
  auto [s, obs] = reset(pick_place(), 0);
  s.gripper_pos = gripper;
  s.objects[0].pos = object;
  return s;
}

TEST(ResetTest, SameSeedIsBitIdentical) {
  auto [a, oa] = reset(pick_place(), 7);
  auto [b, ob] = reset(pick_place(), 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(oa.flat(), ob.flat());
  EXPECT_EQ(a.gripper_pos, home_position());
  EXPECT_EQ(a.step_count, 0);
}

TEST(ResetTest, FourObjectsGiveFourBlocks) {
  auto [s, obs] = reset(pick_place(4), 7);
  EXPECT_EQ(obs.object_blocks.size(), 4u);
  ASSERT_EQ(obs.indicator_blocks.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(one_hot_index(obs.indicator_blocks[static_cast<std::size_t>(i)]), i);
  }
  EXPECT_EQ(static_cast<int>(obs.flat().size()), obs.layout.total);
}

TEST(ResetTest, NineObjectsIsConfigError) {
  EXPECT_THROW(reset(pick_place(9), 7), ConfigError);
  EXPECT_THROW(reset(pick_place(0), 7), ConfigError);
}

TEST(ResetTest, ObjectsSpawnInsideSpawnRegion) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto [s, obs] = reset(pick_place(8), seed);
    for (const auto& o : s.objects) EXPECT_TRUE(spawn_region(8).contains(o.pos));
    auto [one, obs1] = reset(pick_place(1), seed);
    EXPECT_TRUE(spawn_region(1).contains(one.objects[0].pos));
  }
}

TEST(StepTest, ZeroActionIsIdentityOnPoseAndGrasp) {
  auto [s, obs] = reset(pick_place(), 3);
  auto [next, next_obs] = step(s, {0, 0, 0, 0});
  EXPECT_EQ(next.gripper_pos, s.gripper_pos);
  EXPECT_EQ(next.aperture, s.aperture);
  EXPECT_EQ(next.objects[0].held, s.objects[0].held);
  EXPECT_EQ(next.step_count, 1);
}

TEST(StepTest, GraspWithinRadiusSnapsObjectToGripper) {
  // 1 cm away, inside the 3 cm grasp radius.
  auto s = state_with_object({0.05, 0.05, 0.01}, {0.05, 0.05, 0.0});
  auto [next, obs] = step(s, {0, 0, 0, -1});
  EXPECT_TRUE(next.objects[0].held);
  EXPECT_EQ(next.objects[0].pos, next.gripper_pos);
  EXPECT_EQ(next.aperture, 0.0);
}

TEST(StepTest, GraspOutsideRadiusDoesNothing) {
  auto s = state_with_object({0.05, 0.05, 0.04}, {0.05, 0.05, 0.0});
  auto [next, obs] = step(s, {0, 0, 0, -1});
  EXPECT_FALSE(next.objects[0].held);
}

TEST(StepTest, ReleaseSettlesOnTable) {
  auto s = state_with_object({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0});
  std::tie(s, std::ignore) = step(s, {0, 0, 0, -1});
  ASSERT_TRUE(s.objects[0].held);
  for (int i = 0; i < 4; ++i) std::tie(s, std::ignore) = step(s, {0, 0, 1, -1});
  EXPECT_DOUBLE_EQ(s.gripper_pos[2], 0.1);
  EXPECT_EQ(s.objects[0].pos, s.gripper_pos);
  auto [released, obs] = step(s, {0, 0, 0, 1});
  EXPECT_FALSE(released.objects[0].held);
  EXPECT_EQ(released.objects[0].pos[2], kTableZ);
  EXPECT_EQ(released.objects[0].pos[0], s.gripper_pos[0]);
}

TEST(StepTest, NonFiniteActionIsSanitized) {
  auto [s, obs] = reset(pick_place(), 1);
  auto [next, o] = step(s, {std::nan(""), 5.0, -5.0, 0});
  EXPECT_EQ(next.gripper_pos[0], s.gripper_pos[0]);
  EXPECT_DOUBLE_EQ(next.gripper_pos[1], s.gripper_pos[1] + kMaxStep);
  EXPECT_DOUBLE_EQ(next.gripper_pos[2], s.gripper_pos[2] - kMaxStep);
}

TEST(StepTest, ObstacleBlocksGripper) {
  auto [s, obs] = reset(TaskSpec::make(TaskId::kPickPlaceObstacle), 1);
  s.gripper_pos = {0.0, 0.1, 0.02};
  for (int i = 0; i < 5; ++i) std::tie(s, std::ignore) = step(s, {0, 1, 0, 0});
  EXPECT_FALSE(obstacle_box().contains(s.gripper_pos));
  EXPECT_LT(s.gripper_pos[1], obstacle_box().lo[1]);
}

TEST(StepTest, DrawerFollowsAttachedGripper) {
  auto [s, obs] = reset(TaskSpec::make(TaskId::kDrawerOpen), 0);
  s.gripper_pos = s.objects[0].pos;
  std::tie(s, std::ignore) = step(s, {0, 0, 0, -1});
  ASSERT_TRUE(s.objects[0].held);
  for (int i = 0; i < 4; ++i) std::tie(s, std::ignore) = step(s, {0, -1, 0, -1});
  EXPECT_NEAR(achieved_goal(s, std::nullopt)[0], 0.1, 1e-12);
  EXPECT_EQ(s.gripper_pos, s.objects[0].pos);
}

TEST(StepTest, DoorOpensAlongTangent) {
  auto [s, obs] = reset(TaskSpec::make(TaskId::kDoorOpen), 0);
  s.gripper_pos = s.objects[0].pos;
  std::tie(s, std::ignore) = step(s, {0, 0, 0, -1});
  ASSERT_TRUE(s.objects[0].held);
  for (int i = 0; i < 20; ++i) std::tie(s, std::ignore) = step(s, {-1, -1, 0, -1});
  EXPECT_GT(s.articulations.door, 1.0);
}

TEST(StepTest, ButtonPressedByProximity) {
  auto [s, obs] = reset(TaskSpec::make(TaskId::kButtonPress), 0);
  s.gripper_pos = s.objects[0].pos + Vec3{0, 0, 0.04};
  std::tie(s, std::ignore) = step(s, {0, 0, -1, 0});
  EXPECT_TRUE(s.articulations.button);
  EXPECT_EQ(achieved_goal(s, std::nullopt)[0], 1.0);
}

TEST(StepTest, PushMovesObjectWithoutHolding) {
  auto [s, obs] = reset(TaskSpec::make(TaskId::kPush), 0);
  s.objects[0].pos = {0.0, 0.0, 0.0};
  s.gripper_pos = {-0.02, 0.0, 0.01};
  std::tie(s, std::ignore) = step(s, {1, 0, 0, 1});
  EXPECT_FALSE(s.objects[0].held);
  EXPECT_EQ(s.aperture, 0.0);
  EXPECT_NEAR(s.objects[0].pos[0], kMaxStep, 1e-12);
}

TEST(AchievedGoalTest, Projections) {
  auto s = state_with_object({0, 0, 0.1}, {0.1, 0.2, 0.0});
  EXPECT_EQ(achieved_goal(s, std::nullopt), (Vec3{0.1, 0.2, 0.0}));
  auto [multi, obs] = reset(pick_place(4), 2);
  EXPECT_EQ(achieved_goal(multi, 3), multi.objects[3].pos);
  EXPECT_THROW(achieved_goal(multi, 4), IndexError);
  auto [drawer, dobs] = reset(TaskSpec::make(TaskId::kDrawerOpen), 0);
  drawer.articulations.drawer = 0.12;
  EXPECT_EQ(achieved_goal(drawer, std::nullopt)[0], 0.12);
}

TEST(OneHotTest, Validation) {
  std::vector<float> ok = {0, 1, 0, 0};
  EXPECT_EQ(one_hot_index(ok), 1);
  std::vector<float> two = {1, 1, 0, 0};
  std::vector<float> none = {0, 0, 0, 0};
  std::vector<float> frac = {0.5, 0.5, 0, 0};
  EXPECT_THROW(one_hot_index(two), ValidationError);
  EXPECT_THROW(one_hot_index(none), ValidationError);
  EXPECT_THROW(one_hot_index(frac), ValidationError);
}

TEST(SparseRewardTest, BoundaryInclusive) {
  Vec3 g{0.1, 0.1, 0.1};
  EXPECT_EQ(sparse_reward(g, g, 0.05), 1.0);
  EXPECT_EQ(sparse_reward(Vec3{0.0, 0.0, 0.0}, Vec3{0.0, 0.0, 0.5}, 0.5), 1.0);
  EXPECT_EQ(sparse_reward(Vec3{0.0, 0.0, 0.0}, Vec3{0.0, 0.0, 0.1}, 0.05), 0.0);
  std::vector<double> a = {0, 0}, b = {0, 0, 0};
  EXPECT_THROW(sparse_reward(a, b, 0.05), ValidationError);
}

TEST(SampleGoalTest, BoundedReproducibleDegenerate) {
  auto task = pick_place();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_TRUE(task.goal_space.contains(sample_goal(task, rng)));
  }
  std::mt19937_64 r1(5), r2(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_goal(task, r1), sample_goal(task, r2));
  task.goal_space = {{0.1, 0.2, 0.05}, {0.1, 0.2, 0.05}};
  EXPECT_EQ(sample_goal(task, rng), (Vec3{0.1, 0.2, 0.05}));
}

// Random rollouts over every task: clamping, single holder, held tracking,
// push never grasps, layout stable, determinism from (task, seed, actions).
TEST(EnvPropertyTest, InvariantsHoldOnRandomEpisodes) {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (TaskId t : {TaskId::kPickPlace, TaskId::kPickPlaceObstacle, TaskId::kPush,
                   TaskId::kDrawerOpen, TaskId::kDrawerClose, TaskId::kDoorOpen,
                   TaskId::kDoorClose, TaskId::kButtonPress}) {
    for (int ep = 0; ep < 40; ++ep) {
      const int n = is_articulated(t) ? 1 : 1 + ep % kMaxObjects;
      auto task = TaskSpec::make(t, n);
      auto [s, obs] = reset(task, static_cast<std::uint64_t>(ep));
      auto replay = s;
      const auto layout = obs.layout;
      std::vector<Action> actions;
      for (int k = 0; k < kHorizon; ++k) {
        Action a{u(rng), u(rng), u(rng), u(rng)};
        actions.push_back(a);
        std::tie(s, obs) = step(s, a);
        ASSERT_TRUE(workspace().contains(s.gripper_pos));
        int held = 0;
        for (const auto& o : s.objects) {
          ASSERT_TRUE(workspace().contains(o.pos));
          if (o.held) {
            ++held;
            ASSERT_EQ(o.pos, s.gripper_pos);
          }
        }
        ASSERT_LE(held, 1);
        if (t == TaskId::kPush) ASSERT_EQ(held, 0);
        if (t == TaskId::kPickPlaceObstacle) {
          ASSERT_FALSE(obstacle_box().contains(s.gripper_pos));
        }
        ASSERT_EQ(obs.layout, layout);
      }
      for (const auto& a : actions) std::tie(replay, std::ignore) = step(replay, a);
      ASSERT_EQ(replay, s);
    }
  }
}

TEST(LayoutTest, EqualAcrossTasksWithEqualObjectCount) {
  auto [a, oa] = reset(pick_place(1), 1);
  auto [b, ob] = reset(TaskSpec::make(TaskId::kDoorOpen), 1);
  EXPECT_EQ(oa.layout, ob.layout);
}

}  // namespace
}  // namespace skilldisc
