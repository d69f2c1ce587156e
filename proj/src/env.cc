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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace skilldisc {
namespace {

constexpr double kPushHeight = 0.04;
constexpr double kButtonRadius = 0.03;
constexpr int kSpawnAttempts = 1000;

// Drawer handle slides along -y from its closed position.
constexpr Vec3 kDrawerClosed = {0.0, 0.2, 0.05};
constexpr Vec3 kDrawerAxis = {0.0, -1.0, 0.0};
constexpr double kDrawerMax = 0.15;

// Door handle swings about a vertical hinge.
constexpr Vec3 kDoorHinge = {-0.1, 0.2, 0.05};
constexpr double kDoorRadius = 0.1;
constexpr double kDoorMax = std::numbers::pi / 2.0;

constexpr Vec3 kButtonPos = {0.1, 0.15, 0.0};

Vec3 drawer_handle(double extension) {
  return kDrawerClosed + extension * kDrawerAxis;
}

Vec3 door_handle(double angle) {
  return kDoorHinge +
         Vec3{kDoorRadius * std::cos(angle), -kDoorRadius * std::sin(angle),
              0.0};
}

Vec3 door_tangent(double angle) {
  return {-std::sin(angle), -std::cos(angle), 0.0};
}

Vec3 uniform_in(const Box& box, std::mt19937_64& rng) {
  Vec3 p{};
  for (int k = 0; k < 3; ++k) {
    if (box.lo[k] == box.hi[k]) {
      p[k] = box.lo[k];
    } else {
      std::uniform_real_distribution<double> dist(box.lo[k], box.hi[k]);
      p[k] = dist(rng);
    }
  }
  return p;
}

// Moves one axis at a time and reverts any axis whose move would enter the
// obstacle.
Vec3 move_gripper(const WorldState& state, const Vec3& delta) {
  Vec3 target = workspace().clamp(state.gripper_pos + delta);
  if (state.task.task != TaskId::kPickPlaceObstacle) return target;
  Vec3 pos = state.gripper_pos;
  for (int k = 0; k < 3; ++k) {
    Vec3 trial = pos;
    trial[k] = target[k];
    if (!obstacle_box().contains(trial)) pos = trial;
  }
  return pos;
}

void validate_intention(const WorldState& state, std::optional<int> w) {
  if (!w) return;
  if (*w < 0 || *w >= state.task.n_objects) {
    throw IndexError("intention index " + std::to_string(*w) +
                     " out of range for " +
                     std::to_string(state.task.n_objects) + " objects");
  }
}

}  // namespace

bool Box::contains(const Vec3& p) const {
  for (int k = 0; k < 3; ++k) {
    if (p[k] < lo[k] || p[k] > hi[k]) return false;
  }
  return true;
}

Vec3 Box::clamp(const Vec3& p) const {
  return {std::clamp(p[0], lo[0], hi[0]), std::clamp(p[1], lo[1], hi[1]),
          std::clamp(p[2], lo[2], hi[2])};
}

const Box& workspace() {
  static const Box box{{-0.3, -0.3, kTableZ}, {0.3, 0.3, kTableZ + 0.3}};
  return box;
}

const Vec3& home_position() {
  static const Vec3 home{0.0, 0.0, kTableZ + 0.1};
  return home;
}

const Box& spawn_region(int n_objects) {
  static const Box single{{-kSingleSpawnHalfWidth, -kSingleSpawnHalfWidth, kTableZ},
                          {kSingleSpawnHalfWidth, kSingleSpawnHalfWidth, kTableZ}};
  static const Box multi{{-0.1, -0.1, kTableZ}, {0.1, 0.1, kTableZ}};
  return n_objects > 1 ? multi : single;
}

const Box& obstacle_box() {
  static const Box box{{-0.1, 0.11, kTableZ}, {0.1, 0.13, kTableZ + 0.08}};
  return box;
}

std::string_view task_name(TaskId task) {
  switch (task) {
    case TaskId::kPickPlace: return "pick_place";
    case TaskId::kPickPlaceObstacle: return "pick_place_obstacle";
    case TaskId::kPush: return "push";
    case TaskId::kDrawerOpen: return "drawer_open";
    case TaskId::kDrawerClose: return "drawer_close";
    case TaskId::kDoorOpen: return "door_open";
    case TaskId::kDoorClose: return "door_close";
    case TaskId::kButtonPress: return "button_press";
  }
  return "unknown";
}

TaskId parse_task(std::string_view name) {
  for (TaskId t : {TaskId::kPickPlace, TaskId::kPickPlaceObstacle,
                   TaskId::kPush, TaskId::kDrawerOpen, TaskId::kDrawerClose,
                   TaskId::kDoorOpen, TaskId::kDoorClose,
                   TaskId::kButtonPress}) {
    if (task_name(t) == name) return t;
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

bool is_articulated(TaskId task) {
  return task == TaskId::kDrawerOpen || task == TaskId::kDrawerClose ||
         task == TaskId::kDoorOpen || task == TaskId::kDoorClose ||
         task == TaskId::kButtonPress;
}

TaskSpec TaskSpec::make(TaskId task, int n_objects) {
  TaskSpec spec;
  spec.task = task;
  spec.n_objects = n_objects;
  switch (task) {
    case TaskId::kPickPlace:
      spec.goal_space = {{-0.15, -0.15, kTableZ}, {0.15, 0.15, kTableZ + 0.15}};
      break;
    case TaskId::kPickPlaceObstacle:
      spec.goal_space = {{-0.15, 0.15, kTableZ}, {0.15, 0.25, kTableZ + 0.15}};
      break;
    case TaskId::kPush:
      spec.goal_space = {{-0.15, -0.15, kTableZ}, {0.15, 0.15, kTableZ}};
      break;
    case TaskId::kDrawerOpen:
      spec.goal_space = {{0.1, 0.0, 0.0}, {kDrawerMax, 0.0, 0.0}};
      spec.success_radius = 0.02;
      break;
    case TaskId::kDrawerClose:
      spec.goal_space = {{0.0, 0.0, 0.0}, {0.03, 0.0, 0.0}};
      spec.success_radius = 0.02;
      break;
    case TaskId::kDoorOpen:
      spec.goal_space = {{1.0, 0.0, 0.0}, {1.5, 0.0, 0.0}};
      spec.success_radius = 0.15;
      break;
    case TaskId::kDoorClose:
      spec.goal_space = {{0.0, 0.0, 0.0}, {0.2, 0.0, 0.0}};
      spec.success_radius = 0.15;
      break;
    case TaskId::kButtonPress:
      spec.goal_space = {{1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
      spec.success_radius = 0.5;
      break;
  }
  return spec;
}

void TaskSpec::validate() const {
  if (max_objects < 1 || max_objects > kMaxObjects) {
    throw ConfigError("max_objects must be in [1, " +
                      std::to_string(kMaxObjects) + "], got " +
                      std::to_string(max_objects));
  }
  if (n_objects < 1 || n_objects > max_objects) {
    throw ConfigError("n_objects must be in [1, " +
                      std::to_string(max_objects) + "], got " +
                      std::to_string(n_objects));
  }
  if (is_articulated(task) && n_objects != 1) {
    throw ConfigError(std::string(task_name(task)) +
                      " requires n_objects = 1");
  }
  if (!(success_radius > 0.0)) {
    throw ConfigError("success_radius must be > 0");
  }
  for (int k = 0; k < 3; ++k) {
    if (!(goal_space.lo[k] <= goal_space.hi[k])) {
      throw ConfigError("goal_space lower bound exceeds upper bound");
    }
  }
}

bool WorldState::operator==(const WorldState& other) const {
  return task.task == other.task.task &&
         task.n_objects == other.task.n_objects &&
         gripper_pos == other.gripper_pos &&
         gripper_vel == other.gripper_vel && aperture == other.aperture &&
         objects == other.objects && articulations == other.articulations &&
         step_count == other.step_count;
}

int WorldState::held_index() const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].held) return static_cast<int>(i);
  }
  return -1;
}

LayoutManifest LayoutManifest::make(int n_objects, int max_objects) {
  LayoutManifest m;
  m.n_objects = n_objects;
  m.indicator_width = max_objects;
  m.indicators_offset = m.objects_offset + n_objects * m.object_width;
  m.total = m.indicators_offset + n_objects * m.indicator_width;
  return m;
}

std::vector<float> Observation::flat() const {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(layout.total));
  out.insert(out.end(), robot_block.begin(), robot_block.end());
  for (const auto& b : object_blocks) out.insert(out.end(), b.begin(), b.end());
  for (const auto& b : indicator_blocks) {
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

Observation observe(const WorldState& state) {
  Observation obs;
  obs.layout = LayoutManifest::make(state.task.n_objects, state.task.max_objects);
  obs.robot_block = {static_cast<float>(state.gripper_pos[0]),
                     static_cast<float>(state.gripper_pos[1]),
                     static_cast<float>(state.gripper_pos[2]),
                     static_cast<float>(state.gripper_vel[0]),
                     static_cast<float>(state.gripper_vel[1]),
                     static_cast<float>(state.gripper_vel[2]),
                     static_cast<float>(state.aperture)};
  for (std::size_t i = 0; i < state.objects.size(); ++i) {
    const auto& o = state.objects[i];
    obs.object_blocks.push_back(
        {static_cast<float>(o.pos[0]), static_cast<float>(o.pos[1]),
         static_cast<float>(o.pos[2]), static_cast<float>(o.vel[0]),
         static_cast<float>(o.vel[1]), static_cast<float>(o.vel[2])});
    std::vector<float> ind(static_cast<std::size_t>(state.task.max_objects), 0.f);
    ind[i] = 1.f;
    obs.indicator_blocks.push_back(std::move(ind));
  }
  return obs;
}

std::pair<WorldState, Observation> reset(const TaskSpec& task,
                                         std::uint64_t seed) {
  task.validate();
  std::mt19937_64 rng(seed);
  WorldState s;
  s.task = task;
  s.gripper_pos = home_position();
  s.aperture = task.task == TaskId::kPush ? 0.0 : 1.0;

  switch (task.task) {
    case TaskId::kDrawerOpen:
      s.articulations.drawer = 0.0;
      s.objects.push_back({drawer_handle(0.0), {}, false});
      break;
    case TaskId::kDrawerClose:
      s.articulations.drawer = kDrawerMax;
      s.objects.push_back({drawer_handle(kDrawerMax), {}, false});
      break;
    case TaskId::kDoorOpen:
      s.articulations.door = 0.0;
      s.objects.push_back({door_handle(0.0), {}, false});
      break;
    case TaskId::kDoorClose:
      s.articulations.door = 1.4;
      s.objects.push_back({door_handle(1.4), {}, false});
      break;
    case TaskId::kButtonPress:
      s.objects.push_back({kButtonPos, {}, false});
      break;
    default: {
      // Rejection sampling keeps objects two grasp radii apart; after
      // kSpawnAttempts the last candidate is accepted.
      for (int i = 0; i < task.n_objects; ++i) {
        Vec3 p{};
        for (int attempt = 0; attempt < kSpawnAttempts; ++attempt) {
          p = uniform_in(spawn_region(task.n_objects), rng);
          bool ok = true;
          for (const auto& o : s.objects) {
            if (norm(o.pos - p) < 2.0 * kGraspRadius) ok = false;
          }
          if (ok) break;
        }
        s.objects.push_back({p, {}, false});
      }
    }
  }
  Observation obs = observe(s);
  return {std::move(s), std::move(obs)};
}

std::pair<WorldState, Observation> step(const WorldState& state,
                                        const Action& raw_action) {
  Action a{};
  for (int k = 0; k < kActionDim; ++k) {
    double v = std::isfinite(raw_action[k]) ? raw_action[k] : 0.0;
    a[k] = std::clamp(v, -1.0, 1.0);
  }
  const TaskId task = state.task.task;
  const bool push = task == TaskId::kPush;
  if (push) a[3] = -1.0;

  WorldState s = state;
  const Vec3 delta = kMaxStep * Vec3{a[0], a[1], a[2]};
  const Vec3 old_gripper = state.gripper_pos;
  std::vector<Vec3> old_objects;
  for (const auto& o : state.objects) old_objects.push_back(o.pos);

  const int held = s.held_index();
  if (held >= 0 && (task == TaskId::kDrawerOpen || task == TaskId::kDrawerClose)) {
    s.articulations.drawer = std::clamp(
        s.articulations.drawer + dot(delta, kDrawerAxis), 0.0, kDrawerMax);
    s.gripper_pos = drawer_handle(s.articulations.drawer);
  } else if (held >= 0 &&
             (task == TaskId::kDoorOpen || task == TaskId::kDoorClose)) {
    double d_angle = dot(delta, door_tangent(s.articulations.door)) / kDoorRadius;
    s.articulations.door =
        std::clamp(s.articulations.door + d_angle, 0.0, kDoorMax);
    s.gripper_pos = door_handle(s.articulations.door);
  } else {
    s.gripper_pos = move_gripper(s, delta);
  }

  // Handles follow their joints; held objects follow the gripper.
  if (task == TaskId::kDrawerOpen || task == TaskId::kDrawerClose) {
    s.objects[0].pos = drawer_handle(s.articulations.drawer);
  } else if (task == TaskId::kDoorOpen || task == TaskId::kDoorClose) {
    s.objects[0].pos = door_handle(s.articulations.door);
  } else if (held >= 0) {
    s.objects[static_cast<std::size_t>(held)].pos = s.gripper_pos;
  }

  if (push) {
    const Vec3 moved = s.gripper_pos - old_gripper;
    if (s.gripper_pos[2] <= kTableZ + kPushHeight) {
      for (auto& o : s.objects) {
        double dx = o.pos[0] - s.gripper_pos[0];
        double dy = o.pos[1] - s.gripper_pos[1];
        if (std::sqrt(dx * dx + dy * dy) <= kGraspRadius) {
          o.pos = workspace().clamp(o.pos + Vec3{moved[0], moved[1], 0.0});
        }
      }
    }
  }

  const double grip = a[3];
  if (grip < 0.0) {
    s.aperture = 0.0;
    const bool can_grasp = !push && task != TaskId::kButtonPress;
    if (can_grasp && s.held_index() < 0) {
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.objects.size(); ++i) {
        double d = norm(s.objects[i].pos - s.gripper_pos);
        if (d <= kGraspRadius && d < best_d) {
          best = static_cast<int>(i);
          best_d = d;
        }
      }
      if (best >= 0) {
        auto& o = s.objects[static_cast<std::size_t>(best)];
        o.held = true;
        if (is_articulated(task)) {
          s.gripper_pos = o.pos;
        } else {
          o.pos = s.gripper_pos;
        }
      }
    }
  } else if (grip > 0.0) {
    s.aperture = 1.0;
    const int h = s.held_index();
    if (h >= 0) {
      auto& o = s.objects[static_cast<std::size_t>(h)];
      o.held = false;
      if (!is_articulated(task)) o.pos[2] = kTableZ;
    }
  }

  if (task == TaskId::kButtonPress &&
      norm(s.gripper_pos - kButtonPos) <= kButtonRadius) {
    s.articulations.button = true;
  }

  s.gripper_vel = s.gripper_pos - old_gripper;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    s.objects[i].vel = s.objects[i].pos - old_objects[i];
  }
  s.step_count += 1;
  Observation obs = observe(s);
  return {std::move(s), std::move(obs)};
}

Vec3 achieved_goal(const WorldState& state, std::optional<int> intention) {
  switch (state.task.task) {
    case TaskId::kDrawerOpen:
    case TaskId::kDrawerClose:
      return {state.articulations.drawer, 0.0, 0.0};
    case TaskId::kDoorOpen:
    case TaskId::kDoorClose:
      return {state.articulations.door, 0.0, 0.0};
    case TaskId::kButtonPress:
      return {state.articulations.button ? 1.0 : 0.0, 0.0, 0.0};
    default:
      break;
  }
  if (state.task.n_objects == 1) return state.objects.front().pos;
  validate_intention(state, intention);
  return state.objects[static_cast<std::size_t>(intention.value_or(0))].pos;
}

int one_hot_index(std::span<const float> one_hot) {
  int index = -1;
  for (std::size_t i = 0; i < one_hot.size(); ++i) {
    if (one_hot[i] == 1.f) {
      if (index >= 0) throw ValidationError("vector has more than one hot entry");
      index = static_cast<int>(i);
    } else if (one_hot[i] != 0.f) {
      throw ValidationError("vector is not one-hot");
    }
  }
  if (index < 0) throw ValidationError("vector has no hot entry");
  return index;
}

Vec3 sample_goal(const TaskSpec& task, std::mt19937_64& rng) {
  return uniform_in(task.goal_space, rng);
}

double sparse_reward(std::span<const double> achieved,
                     std::span<const double> desired, double radius) {
  if (achieved.size() != desired.size()) {
    throw ValidationError("goal dimension mismatch: " +
                          std::to_string(achieved.size()) + " vs " +
                          std::to_string(desired.size()));
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < achieved.size(); ++k) {
    double d = achieved[k] - desired[k];
    sq += d * d;
  }
  return std::sqrt(sq) <= radius ? 1.0 : 0.0;
}

double sparse_reward(const Vec3& achieved, const Vec3& desired, double radius) {
  return sparse_reward(std::span<const double>(achieved),
                       std::span<const double>(desired), radius);
}

}  // namespace skilldisc
