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

// Python bindings. Structured values cross the boundary as JSON text; the
// skilldisc package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "skilldisc/analysis.h"
#include "skilldisc/checkpoint.h"
#include "skilldisc/config.h"
#include "skilldisc/env.h"
#include "skilldisc/mi.h"
#include "skilldisc/pipelines.h"
#include "skilldisc/policy.h"

namespace py = pybind11;
namespace fs = std::filesystem;
using nlohmann::json;
using namespace skilldisc;

namespace {

using Matrix = std::vector<std::vector<double>>;

torch::Tensor to_tensor(const std::vector<Matrix>& rows) {
  if (rows.empty() || rows[0].empty() || rows[0][0].empty()) {
    throw ValidationError("expected a nonempty [B][N][A] array");
  }
  const auto b = static_cast<int64_t>(rows.size());
  const auto n = static_cast<int64_t>(rows[0].size());
  const auto a = static_cast<int64_t>(rows[0][0].size());
  auto t = torch::empty({b, n, a}, torch::kDouble);
  auto acc = t.accessor<double, 3>();
  for (int64_t i = 0; i < b; ++i) {
    if (static_cast<int64_t>(rows[i].size()) != n) throw ValidationError("ragged primitive axis");
    for (int64_t j = 0; j < n; ++j) {
      if (static_cast<int64_t>(rows[i][j].size()) != a) throw ValidationError("ragged action axis");
      for (int64_t k = 0; k < a; ++k) acc[i][j][k] = rows[i][j][k];
    }
  }
  return t;
}

torch::Tensor to_tensor(const Matrix& rows) {
  if (rows.empty() || rows[0].empty()) throw ValidationError("expected a nonempty [B][N] array");
  const auto b = static_cast<int64_t>(rows.size());
  const auto n = static_cast<int64_t>(rows[0].size());
  auto t = torch::empty({b, n}, torch::kDouble);
  auto acc = t.accessor<double, 2>();
  for (int64_t i = 0; i < b; ++i) {
    if (static_cast<int64_t>(rows[i].size()) != n) throw ValidationError("ragged weight rows");
    for (int64_t j = 0; j < n; ++j) acc[i][j] = rows[i][j];
  }
  return t;
}

Matrix to_matrix(const torch::Tensor& t) {
  auto c = t.to(torch::kDouble).contiguous();
  auto acc = c.accessor<double, 2>();
  Matrix out(static_cast<std::size_t>(c.size(0)));
  for (int64_t i = 0; i < c.size(0); ++i) {
    for (int64_t j = 0; j < c.size(1); ++j) out[static_cast<std::size_t>(i)].push_back(acc[i][j]);
  }
  return out;
}

std::pair<Matrix, Matrix> compose_py(const std::vector<Matrix>& means,
                                     const std::vector<Matrix>& stds, const Matrix& weights) {
  const auto g = compose(to_tensor(means), to_tensor(stds), to_tensor(weights));
  return {to_matrix(g.mean), to_matrix(g.std)};
}

ExperimentConfig config_from(const std::string& config_json) {
  return ExperimentConfig::from_json(json::parse(config_json));
}

std::string resolve_config_py(const std::optional<std::string>& file, const std::string& flags) {
  std::optional<fs::path> path;
  if (file) path = *file;
  return resolve_config(path, skilldisc_environment(), json::parse(flags)).to_json().dump();
}

std::string run_result(const RunResult& r) {
  return json{{"checkpoint", r.checkpoint.string()},
              {"steps", r.steps},
              {"updates", r.updates},
              {"last_record", r.last_record}}
      .dump();
}

std::string pretrain_py(const std::string& config_json, const std::string& out) {
  return run_result(pretrain(config_from(config_json), out));
}

std::string transfer_py(const std::string& config_json, const std::optional<std::string>& from,
                        const std::string& out) {
  std::optional<fs::path> ckpt;
  if (from) ckpt = *from;
  return run_result(transfer(config_from(config_json), ckpt, out));
}

double evaluate_py(const std::string& checkpoint, int episodes, std::uint64_t seed) {
  auto loaded = load_policy(fs::path(checkpoint));
  if (loaded.meta.cond.kind == CondKind::kSkill) {
    throw ConfigError("evaluate needs a goal-conditioned checkpoint");
  }
  PolicyController controller(loaded.policy, loaded.encoder, ActMode::kDeterministic);
  EvalOptions opt;
  opt.n_episodes = episodes;
  opt.seed = seed;
  opt.n_tasks = loaded.meta.n_tasks;
  opt.multi_object = loaded.meta.multi_object;
  auto spec = loaded.config.env.task_specs().front();
  spec.max_objects = loaded.config.encoder.max_objects;
  return evaluate(controller, spec, opt).success_rate;
}

double scripted_success_py(const std::string& task, int episodes, std::uint64_t seed) {
  ScriptedPickPlace oracle;
  EvalOptions opt;
  opt.n_episodes = episodes;
  opt.seed = seed;
  return evaluate(oracle, TaskSpec::make(parse_task(task)), opt).success_rate;
}

std::string random_trajectories_py(const std::string& task, int n, std::uint64_t seed) {
  return random_trajectories(TaskSpec::make(parse_task(task)), n, seed, false).to_json().dump();
}

std::string skill_trajectories_py(const std::string& checkpoint, int n, std::uint64_t seed,
                                  bool deterministic) {
  const auto loaded = load_policy(fs::path(checkpoint));
  return skill_trajectories(loaded, n, seed,
                            deterministic ? ActMode::kDeterministic : ActMode::kSample)
      .to_json()
      .dump();
}

TrajectorySet trajectories(const std::string& trajectories_json) {
  return TrajectorySet::from_json(json::parse(trajectories_json));
}

std::string afs_py(const std::string& checkpoint, const std::string& target, int samples,
                   std::uint64_t seed, bool per_feature) {
  const auto loaded = load_policy(fs::path(checkpoint));
  const auto sample = on_policy_sample(loaded, samples, seed);
  return afs(loaded.policy, sample.features, sample.cond, sample.actions,
             parse_afs_target(target), per_feature)
      .to_json()
      .dump();
}

std::string mi_curve_py(const std::string& metrics, const std::string& key, int window) {
  const auto s = mi_curve(read_jsonl(metrics), key, window);
  return json{{"key", s.key}, {"steps", s.steps}, {"values", s.values}, {"smoothed", s.smoothed}}
      .dump();
}

std::string manifest_py(const std::string& checkpoint) {
  const auto c = load_checkpoint(checkpoint);
  json blobs = json::array();
  for (const auto& [name, bytes] : c.blobs) blobs.push_back(name);
  return json{{"version", c.version},
              {"phase", std::string(phase_name(c.phase))},
              {"config_hash", c.config_hash},
              {"step", c.step},
              {"meta", c.meta},
              {"blobs", blobs}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_skilldisc, m) {
  m.doc() = "Skill discovery core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DegenerateGatingError>(m, "DegenerateGatingError", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());
  auto ckpt = py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<CorruptionError>(m, "CorruptionError", ckpt.ptr());
  py::register_exception<MigrationError>(m, "MigrationError", ckpt.ptr());
  py::register_exception<LoadError>(m, "LoadError", ckpt.ptr());

  m.def("compose", &compose_py, py::arg("means"), py::arg("stds"), py::arg("weights"),
        "Multiplicative composition of [B][N][A] primitive Gaussians; returns (mean, std).");
  m.def("jsd_witness_T", &jsd_witness_T, py::arg("raw"));
  m.def("jsd_conjugate_fstar", &jsd_conjugate_fstar, py::arg("t"));
  m.def("sparse_reward",
        py::overload_cast<const Vec3&, const Vec3&, double>(&sparse_reward),
        py::arg("achieved"), py::arg("desired"), py::arg("radius"));

  m.def("default_config", [] { return ExperimentConfig{}.to_json().dump(); });
  m.def("resolve_config", &resolve_config_py, py::arg("file") = std::nullopt,
        py::arg("flags") = "{}");
  m.def("config_hash", [](const std::string& c) { return config_from(c).hash(); });

  m.def("pretrain", &pretrain_py, py::call_guard<py::gil_scoped_release>(),
        py::arg("config"), py::arg("out"));
  m.def("transfer", &transfer_py, py::call_guard<py::gil_scoped_release>(),
        py::arg("config"), py::arg("checkpoint"), py::arg("out"));
  m.def("evaluate", &evaluate_py, py::call_guard<py::gil_scoped_release>(),
        py::arg("checkpoint"), py::arg("episodes") = 50,
        py::arg("seed") = 0);
  m.def("scripted_success", &scripted_success_py, py::call_guard<py::gil_scoped_release>(),
        py::arg("task") = "pick_place",
        py::arg("episodes") = 50, py::arg("seed") = 0);
  m.def("load_manifest", &manifest_py, py::arg("checkpoint"));

  m.def("random_trajectories", &random_trajectories_py, py::call_guard<py::gil_scoped_release>(),
        py::arg("task"), py::arg("n"),
        py::arg("seed") = 0);
  m.def("skill_trajectories", &skill_trajectories_py, py::call_guard<py::gil_scoped_release>(),
        py::arg("checkpoint"), py::arg("n"),
        py::arg("seed") = 0, py::arg("deterministic") = false);
  m.def("grasp_ratio",
        [](const std::string& t, double threshold) { return grasp_ratio(trajectories(t), threshold); },
        py::arg("trajectories"), py::arg("threshold") = kInteractionThreshold);
  m.def("state_entropy",
        [](const std::string& t, int bins) { return state_entropy(trajectories(t), bins); },
        py::arg("trajectories"), py::arg("bins_per_axis") = kEntropyBins);
  m.def("interaction_ratio",
        [](const std::string& t, double threshold, double frac) {
          return interaction_ratio(trajectories(t), threshold, frac);
        },
        py::arg("trajectories"), py::arg("threshold") = kInteractionThreshold,
        py::arg("frac") = kInteractionFraction);
  m.def("afs", &afs_py, py::call_guard<py::gil_scoped_release>(),
        py::arg("checkpoint"), py::arg("target") = "gating",
        py::arg("samples") = kAfsSamples, py::arg("seed") = 0, py::arg("per_feature") = false);
  m.def("mi_curve", &mi_curve_py, py::arg("metrics"), py::arg("key") = "jsd_bound",
        py::arg("window") = 10);
}
