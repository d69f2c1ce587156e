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

#ifndef SKILLDISC_ENV_H_
#define SKILLDISC_ENV_H_

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skilldisc/common.h"

namespace skilldisc {

// Desk-scale kinematic manipulation world. Distances are meters, the table
// surface is z = 0 and one control step moves the gripper at most kMaxStep
// along each axis.
inline constexpr double kTableZ = 0.0;
inline constexpr double kMaxStep = 0.025;
inline constexpr double kGraspRadius = 0.03;
inline constexpr double kDefaultSuccessRadius = 0.05;
inline constexpr int kMaxObjects = 8;
inline constexpr int kHorizon = 50;
inline constexpr int kActionDim = 4;
inline constexpr int kRobotBlockWidth = 7;   // pos, vel, aperture
inline constexpr int kObjectBlockWidth = 6;  // pos, vel
inline constexpr int kGoalDim = 3;

using Action = std::array<double, kActionDim>;

struct Box {
  Vec3 lo{};
  Vec3 hi{};

  bool contains(const Vec3& p) const;
  Vec3 clamp(const Vec3& p) const;
};

const Box& workspace();
const Vec3& home_position();
// Object spawn area on the table. A lone object spawns in a small patch;
// several objects share a larger one so they can keep apart.
inline constexpr double kSingleSpawnHalfWidth = 0.02;
const Box& spawn_region(int n_objects);

enum class TaskId {
  kPickPlace,
  kPickPlaceObstacle,
  kPush,
  kDrawerOpen,
  kDrawerClose,
  kDoorOpen,
  kDoorClose,
  kButtonPress,
};

std::string_view task_name(TaskId task);
TaskId parse_task(std::string_view name);  // throws ConfigError
bool is_articulated(TaskId task);

struct TaskSpec {
  TaskId task = TaskId::kPickPlace;
  int n_objects = 1;
  Box goal_space{};
  double success_radius = kDefaultSuccessRadius;
  int max_objects = kMaxObjects;

  // Goal space and radius defaults for a task.
  static TaskSpec make(TaskId task, int n_objects = 1);
  void validate() const;  // throws ConfigError
};

// Movable objects for object tasks. In articulated tasks the single entry is
// the handle (drawer, door) or the button; `held` means the gripper is
// attached to the handle.
struct ObjectState {
  Vec3 pos{};
  Vec3 vel{};
  bool held = false;

  bool operator==(const ObjectState&) const = default;
};

struct Articulations {
  double drawer = 0.0;  // extension, m
  double door = 0.0;    // angle, rad
  bool button = false;  // depressed

  bool operator==(const Articulations&) const = default;
};

struct WorldState {
  TaskSpec task;
  Vec3 gripper_pos{};
  Vec3 gripper_vel{};
  double aperture = 1.0;  // 0 = closed
  std::vector<ObjectState> objects;
  Articulations articulations;
  int step_count = 0;

  bool operator==(const WorldState& other) const;
  int held_index() const;  // -1 when nothing is held
};

struct LayoutManifest {
  int robot_offset = 0;
  int robot_width = kRobotBlockWidth;
  int objects_offset = kRobotBlockWidth;
  int object_width = kObjectBlockWidth;
  int n_objects = 1;
  int indicators_offset = 0;
  int indicator_width = kMaxObjects;
  int total = 0;

  static LayoutManifest make(int n_objects, int max_objects = kMaxObjects);
  bool operator==(const LayoutManifest&) const = default;
};

struct Observation {
  std::vector<float> robot_block;
  std::vector<std::vector<float>> object_blocks;
  std::vector<std::vector<float>> indicator_blocks;
  LayoutManifest layout;

  // robot_block ++ object_blocks ++ indicator_blocks, per the layout.
  std::vector<float> flat() const;
};

Observation observe(const WorldState& state);

std::pair<WorldState, Observation> reset(const TaskSpec& task,
                                         std::uint64_t seed);

// Actions are sanitized: non-finite components become 0, then clamped to
// [-1, 1]. Components are (dx, dy, dz, grip).
std::pair<WorldState, Observation> step(const WorldState& state,
                                        const Action& action);

// Goal-space projection of the intended element. Object tasks return the
// object position, articulated tasks (joint value, 0, 0). Single-object
// tasks ignore `intention`.
Vec3 achieved_goal(const WorldState& state, std::optional<int> intention);

// Index of the hot entry of a one-hot vector; throws ValidationError.
int one_hot_index(std::span<const float> one_hot);

Vec3 sample_goal(const TaskSpec& task, std::mt19937_64& rng);

// 1 iff ||achieved - desired|| <= radius. Throws ValidationError on
// dimension mismatch.
double sparse_reward(std::span<const double> achieved,
                     std::span<const double> desired, double radius);
double sparse_reward(const Vec3& achieved, const Vec3& desired, double radius);

// Static obstacle of the pick_place_obstacle task.
const Box& obstacle_box();

}  // namespace skilldisc

#endif  // SKILLDISC_ENV_H_
