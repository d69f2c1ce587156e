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

#include "skilldisc/analysis.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace skilldisc {
namespace {

using nlohmann::json;

const Vec3& intended(const Trajectory& traj, const TrajectoryStep& step) {
  return step.objects.at(static_cast<std::size_t>(traj.intention));
}

int within_count(const Trajectory& traj, double threshold) {
  int count = 0;
  for (const auto& s : traj.steps) {
    if (norm(s.gripper - intended(traj, s)) <= threshold) ++count;
  }
  return count;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

json vec3_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

int TrajectorySet::horizon() const {
  return trajectories.empty() ? 0 : static_cast<int>(trajectories.front().steps.size());
}

void TrajectorySet::validate() const {
  if (trajectories.empty()) throw ValidationError("trajectory set is empty");
  const auto h = trajectories.front().steps.size();
  if (h == 0) throw ValidationError("trajectories are empty");
  for (const auto& t : trajectories) {
    if (t.steps.size() != h) throw ValidationError("trajectory horizons differ");
    for (const auto& s : t.steps) {
      if (t.intention < 0 || t.intention >= static_cast<int>(s.objects.size())) {
        throw ValidationError("trajectory intention out of range");
      }
    }
  }
}

json TrajectorySet::to_json() const {
  json out = json::array();
  for (const auto& t : trajectories) {
    json steps = json::array();
    for (const auto& s : t.steps) {
      json objects = json::array();
      for (const auto& o : s.objects) objects.push_back(vec3_json(o));
      steps.push_back({{"gripper", vec3_json(s.gripper)},
                       {"objects", objects},
                       {"action", s.action},
                       {"cond", s.cond}});
    }
    out.push_back({{"intention", t.intention}, {"steps", steps}});
  }
  return {{"trajectories", out}};
}

TrajectorySet TrajectorySet::from_json(const json& j) {
  TrajectorySet set;
  try {
    for (const auto& tj : j.at("trajectories")) {
      Trajectory t;
      t.intention = tj.at("intention").get<int>();
      for (const auto& sj : tj.at("steps")) {
        TrajectoryStep s;
        s.gripper = vec3_from(sj.at("gripper"));
        for (const auto& o : sj.at("objects")) s.objects.push_back(vec3_from(o));
        s.action = sj.at("action").get<Action>();
        s.cond = sj.at("cond").get<std::vector<float>>();
        t.steps.push_back(std::move(s));
      }
      set.trajectories.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed trajectory set: ") + e.what());
  }
  set.validate();
  return set;
}

void TrajectorySet::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_json().dump() << "\n";
}

TrajectorySet TrajectorySet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError(path.string() + " is not valid JSON");
  return from_json(j);
}

double grasp_ratio(const TrajectorySet& trajs, double threshold) {
  trajs.validate();
  if (!(threshold > 0)) throw DomainError("grasp threshold must be positive");
  int64_t within = 0;
  int64_t total = 0;
  for (const auto& t : trajs.trajectories) {
    within += within_count(t, threshold);
    total += static_cast<int64_t>(t.steps.size());
  }
  return static_cast<double>(within) / static_cast<double>(total);
}

double state_entropy(const TrajectorySet& trajs, int bins_per_axis, const Box& bounds) {
  trajs.validate();
  if (bins_per_axis < 1) throw DomainError("bins_per_axis must be at least 1");
  const int64_t b = bins_per_axis;
  std::map<int64_t, int64_t> counts;
  int64_t total = 0;
  for (const auto& t : trajs.trajectories) {
    for (const auto& s : t.steps) {
      const Vec3& p = intended(t, s);
      int64_t cell = 0;
      for (int k = 0; k < 3; ++k) {
        const double span = bounds.hi[k] - bounds.lo[k];
        int64_t idx = 0;
        if (span > 0) {
          idx = static_cast<int64_t>(std::floor((p[k] - bounds.lo[k]) / span * static_cast<double>(b)));
          idx = std::clamp<int64_t>(idx, 0, b - 1);
        }
        cell = cell * b + idx;
      }
      ++counts[cell];
      ++total;
    }
  }
  if (b == 1) return 0.0;
  std::vector<double> p;
  for (const auto& [cell, c] : counts) p.push_back(static_cast<double>(c) / static_cast<double>(total));
  const double h = entropy(p) / std::log(static_cast<double>(b * b * b));
  return std::clamp(h, 0.0, 1.0);
}

double interaction_ratio(const TrajectorySet& trajs, double threshold, double frac) {
  trajs.validate();
  if (!(frac > 0 && frac < 1)) throw DomainError("interaction fraction must be in (0, 1)");
  if (!(threshold > 0)) throw DomainError("interaction threshold must be positive");
  const double needed = frac * trajs.horizon();
  int counted = 0;
  for (const auto& t : trajs.trajectories) {
    if (static_cast<double>(within_count(t, threshold)) > needed) ++counted;
  }
  return static_cast<double>(counted) / static_cast<double>(trajs.trajectories.size());
}

AfsTarget parse_afs_target(const std::string& name) {
  if (name == "gating") return AfsTarget::kGating;
  if (name == "primitive_mean") return AfsTarget::kPrimitiveMean;
  throw ConfigError("unknown AFS target '" + name + "'");
}

json AfsReport::to_json() const {
  return {{"target", target == AfsTarget::kGating ? "gating" : "primitive_mean"},
          {"matrix", matrix},
          {"per_primitive", per_primitive},
          {"pseudo_entropy", pseudo_entropy},
          {"uniform_columns", uniform_columns},
          {"per_feature_entropy", per_feature_entropy}};
}

AfsReport afs_from_gradients(const torch::Tensor& grads, AfsTarget target,
                             bool per_feature_entropy) {
  if (grads.dim() != 3 || grads.size(0) == 0) {
    throw ValidationError("AFS gradients must be a nonempty [S, N, M] tensor");
  }
  auto fisher = grads.to(torch::kDouble).square().mean(0).contiguous();  // [N, M]
  const int64_t n = fisher.size(0);
  const int64_t m = fisher.size(1);
  auto acc = fisher.accessor<double, 2>();
  AfsReport report;
  report.target = target;
  report.per_feature_entropy = per_feature_entropy;
  report.matrix.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(m)));
  for (int64_t col = 0; col < m; ++col) {
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) total += acc[i][col];
    const bool degenerate = !(total > 0) || !std::isfinite(total);
    if (degenerate) report.uniform_columns.push_back(static_cast<int>(col));
    for (int64_t i = 0; i < n; ++i) {
      report.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)] =
          degenerate ? 1.0 / static_cast<double>(n) : acc[i][col] / total;
    }
  }
  report.per_primitive.assign(static_cast<std::size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t col = 0; col < m; ++col) {
      report.per_primitive[static_cast<std::size_t>(i)] +=
          report.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)];
    }
  }
  if (per_feature_entropy) {
    double sum = 0.0;
    for (int64_t col = 0; col < m; ++col) {
      std::vector<double> p;
      for (int64_t i = 0; i < n; ++i) {
        p.push_back(report.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)]);
      }
      sum += entropy(p);
    }
    report.pseudo_entropy = sum / static_cast<double>(m);
  } else {
    std::vector<double> p;
    for (double v : report.per_primitive) p.push_back(v / static_cast<double>(m));
    report.pseudo_entropy = entropy(p);
  }
  return report;
}

torch::Tensor afs_gradients(const torch::Tensor& means, const torch::Tensor& stds,
                            const torch::Tensor& weights, const torch::Tensor& actions,
                            AfsTarget target) {
  torch::Tensor h = target == AfsTarget::kGating ? weights : means;
  h = h.detach().clone().requires_grad_(true);
  auto m = target == AfsTarget::kGating ? means.detach() : h;
  auto w = target == AfsTarget::kGating ? h : weights.detach();
  // Sample rows are independent, so the gradient of the summed log density
  // holds each row's own gradient.
  auto dist = compose(m, stds.detach(), w, 0.0, 0.0);
  auto log_prob = squashed_log_prob(dist, actions.detach());
  auto grad = torch::autograd::grad({log_prob.sum()}, {h})[0];
  if (target == AfsTarget::kGating) grad = grad.unsqueeze(-1);
  return grad.detach();
}

AfsReport afs(McpPolicy policy, const torch::Tensor& features, const torch::Tensor& cond,
              const torch::Tensor& actions, AfsTarget target, bool per_feature_entropy) {
  PolicyComponents c;
  {
    torch::NoGradGuard no_grad;
    c = policy->components(features, cond);
  }
  return afs_from_gradients(afs_gradients(c.means, c.stds, c.weights, actions, target),
                            target, per_feature_entropy);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            " is not a JSON object");
    }
    out.push_back(std::move(j));
  }
  return out;
}

Series metric_series(const std::vector<json>& records, const std::string& key, int window) {
  if (records.empty()) throw ValidationError("metrics stream is empty");
  if (window < 1) throw DomainError("smoothing window must be at least 1");
  Series s;
  s.key = key;
  for (const auto& r : records) {
    auto it = r.find(key);
    if (it == r.end() || !it->is_number()) continue;
    s.steps.push_back(r.value("step", int64_t{0}));
    s.values.push_back(it->get<double>());
  }
  if (s.values.empty()) throw ValidationError("metrics stream has no '" + key + "' key");
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const std::size_t first = i + 1 >= w ? i + 1 - w : 0;
    double sum = 0.0;
    for (std::size_t k = first; k <= i; ++k) sum += s.values[k];
    s.smoothed.push_back(sum / static_cast<double>(i + 1 - first));
  }
  return s;
}

Series mi_curve(const std::vector<json>& records, const std::string& key, int window) {
  return metric_series(records, key, window);
}

}  // namespace skilldisc
