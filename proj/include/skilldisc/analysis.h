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

#ifndef SKILLDISC_ANALYSIS_H_
#define SKILLDISC_ANALYSIS_H_

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "skilldisc/env.h"
#include "skilldisc/policy.h"

namespace skilldisc {

// State visited before `action` was taken.
struct TrajectoryStep {
  Vec3 gripper{};
  std::vector<Vec3> objects;
  Action action{};
  std::vector<float> cond;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  int intention = 0;  // index of the object of interest
};

struct TrajectorySet {
  std::vector<Trajectory> trajectories;

  int horizon() const;
  // Nonempty, uniform horizon, intention in range. Throws ValidationError.
  void validate() const;
  nlohmann::json to_json() const;
  static TrajectorySet from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrajectorySet load(const std::filesystem::path& path);
};

inline constexpr double kInteractionThreshold = 0.05;
inline constexpr double kInteractionFraction = 0.6;
inline constexpr int kEntropyBins = 10;
inline constexpr int kAfsSamples = 4096;

// Fraction of all states with ||gripper - intended object|| <= threshold.
double grasp_ratio(const TrajectorySet& trajs, double threshold = kInteractionThreshold);

// Histogram entropy of intended-object positions over bins_per_axis^3 cells
// of `bounds`, divided by log(bins_per_axis^3). Positions outside the bounds
// fall into the nearest edge cell. A single cell gives 0.
double state_entropy(const TrajectorySet& trajs, int bins_per_axis = kEntropyBins,
                     const Box& bounds = workspace());

// Fraction of trajectories whose within-threshold state count is strictly
// greater than frac * horizon.
double interaction_ratio(const TrajectorySet& trajs,
                         double threshold = kInteractionThreshold,
                         double frac = kInteractionFraction);

enum class AfsTarget { kGating, kPrimitiveMean };
AfsTarget parse_afs_target(const std::string& name);

struct AfsReport {
  AfsTarget target = AfsTarget::kGating;
  // AFS(i, m), [N, M], columns summing to 1.
  std::vector<std::vector<double>> matrix;
  std::vector<double> per_primitive;  // AFS(i) = sum_m AFS(i, m)
  double pseudo_entropy = 0.0;
  // Columns whose total Fisher was zero and were reported as uniform.
  std::vector<int> uniform_columns;
  bool per_feature_entropy = false;

  nlohmann::json to_json() const;
};

// Report from per-sample gradients of log pi with respect to the
// representations h^(i), [S, N, M]. The diagonal Fisher is the sample mean
// of squared gradients. The pseudo-entropy is taken over AFS(i) / M, or,
// with `per_feature_entropy`, averaged over the entropies of the columns.
AfsReport afs_from_gradients(const torch::Tensor& grads, AfsTarget target,
                             bool per_feature_entropy = false);

// Gradients of log pi(a) under the composition of (means, stds, weights)
// with respect to the target representation, [S, N, M].
torch::Tensor afs_gradients(const torch::Tensor& means, const torch::Tensor& stds,
                            const torch::Tensor& weights, const torch::Tensor& actions,
                            AfsTarget target);

AfsReport afs(McpPolicy policy, const torch::Tensor& features, const torch::Tensor& cond,
              const torch::Tensor& actions, AfsTarget target,
              bool per_feature_entropy = false);

struct Series {
  std::string key;
  std::vector<int64_t> steps;
  std::vector<double> values;
  std::vector<double> smoothed;  // trailing mean over `window` points
};

// Reads one JSON object per nonempty line. Throws ValidationError on parse
// errors, naming the line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

// Step-indexed series of `key` from records that carry it. Throws
// ValidationError on an empty stream or when no record has `key`.
Series metric_series(const std::vector<nlohmann::json>& records, const std::string& key,
                     int window = 1);
Series mi_curve(const std::vector<nlohmann::json>& records,
                const std::string& key = "jsd_bound", int window = 10);

}  // namespace skilldisc

#endif  // SKILLDISC_ANALYSIS_H_
