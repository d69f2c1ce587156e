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

// Command-line front end: pretrain, transfer, evaluate, analyze, plot.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 checkpoint
// error, 4 runtime abort.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "skilldisc/analysis.h"
#include "skilldisc/config.h"
#include "skilldisc/pipelines.h"
#include "skilldisc/plot.h"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace skilldisc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitRuntime = 4;

// Raised for missing or unusable inputs; maps to the usage exit code.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int64_t> steps;
  std::string out;
};

void add_run_options(CLI::App* cmd, RunArgs& args) {
  cmd->add_option("--config", args.config, "JSON experiment config");
  cmd->add_option("--seed", args.seed, "Run seed (overrides run.seed)");
  cmd->add_option("--steps", args.steps, "Environment step budget (overrides run.steps)");
  cmd->add_option("--out", args.out, "Output directory")->required();
}

ExperimentConfig resolve(const RunArgs& args, const std::string& phase) {
  std::optional<fs::path> file;
  if (!args.config.empty()) file = args.config;
  json flags = json::object();
  flags["phase"] = phase;
  if (args.seed) flags["run"]["seed"] = *args.seed;
  if (args.steps) flags["run"]["steps"] = *args.steps;
  return resolve_config(file, skilldisc_environment(), flags);
}

void append_analysis(const fs::path& out, const ordered_json& record) {
  fs::create_directories(out);
  std::ofstream f(out / "analysis.jsonl", std::ios::app);
  if (!f) throw InputError("cannot write " + (out / "analysis.jsonl").string());
  f << record.dump() << "\n";
}

bool is_checkpoint(const fs::path& p) { return fs::is_directory(p) && fs::exists(p / "manifest.json"); }

struct AnalyzeArgs {
  std::string what;
  std::string from;
  std::string out;
  double threshold = kInteractionThreshold;
  double frac = kInteractionFraction;
  int bins = kEntropyBins;
  int episodes = 200;
  int samples = kAfsSamples;
  std::string target = "gating";
  bool per_feature = false;
  bool deterministic = false;
  int window = 10;
  std::string key = "jsd_bound";
  std::uint64_t seed = 0;
};

TrajectorySet trajectories_from(const AnalyzeArgs& a) {
  const fs::path from(a.from);
  if (is_checkpoint(from)) {
    auto loaded = load_policy(from);
    if (loaded.meta.cond.kind != CondKind::kSkill) {
      throw InputError("behavior metrics from a checkpoint need a pretraining checkpoint; "
                       "pass a trajectory dump instead");
    }
    return skill_trajectories(loaded, a.episodes, a.seed,
                              a.deterministic ? ActMode::kDeterministic : ActMode::kSample);
  }
  if (!fs::is_regular_file(from)) throw InputError("no trajectory file or checkpoint at " + a.from);
  return TrajectorySet::load(from);
}

int cmd_analyze(const AnalyzeArgs& a) {
  const fs::path out(a.out);
  ordered_json rec;
  rec["what"] = a.what;
  rec["from"] = a.from;
  if (a.what == "grasp" || a.what == "entropy" || a.what == "interaction") {
    const auto trajs = trajectories_from(a);
    double value = 0.0;
    std::string name;
    if (a.what == "grasp") {
      name = "grasp_ratio";
      value = grasp_ratio(trajs, a.threshold);
      rec["threshold"] = a.threshold;
    } else if (a.what == "entropy") {
      name = "state_entropy";
      value = state_entropy(trajs, a.bins);
      rec["bins_per_axis"] = a.bins;
    } else {
      name = "interaction_ratio";
      value = interaction_ratio(trajs, a.threshold, a.frac);
      rec["threshold"] = a.threshold;
      rec["frac"] = a.frac;
    }
    rec["n_trajectories"] = trajs.trajectories.size();
    rec[name] = value;
    append_analysis(out, rec);
    std::cout << name << " " << value << "\n";
    return kExitOk;
  }
  if (a.what == "afs") {
    if (!is_checkpoint(fs::path(a.from))) throw InputError("afs needs a checkpoint directory (--from)");
    auto loaded = load_policy(fs::path(a.from));
    const auto target = parse_afs_target(a.target);
    const auto sample = on_policy_sample(loaded, a.samples, a.seed);
    const auto report = afs(loaded.policy, sample.features, sample.cond, sample.actions, target,
                            a.per_feature);
    rec["afs"] = report.to_json();
    rec["n_samples"] = a.samples;
    append_analysis(out, rec);
    std::cout << "afs_pseudo_entropy " << report.pseudo_entropy << "\n";
    return kExitOk;
  }
  if (a.what == "mi") {
    if (!fs::is_regular_file(a.from)) throw InputError("no metrics file at " + a.from);
    const auto series = mi_curve(read_jsonl(a.from), a.key, a.window);
    fs::create_directories(out / "plots");
    const fs::path series_path = out / ("mi_series_" + a.key + ".json");
    std::ofstream f(series_path);
    f << json{{"key", series.key},
              {"window", a.window},
              {"steps", series.steps},
              {"values", series.values},
              {"smoothed", series.smoothed}}
             .dump()
      << "\n";
    std::ofstream svg(out / "plots" / ("mi_" + a.key + ".svg"));
    svg << line_chart_svg(a.key, {series});
    rec["key"] = a.key;
    rec["points"] = series.steps.size();
    rec["final"] = series.smoothed.back();
    rec["series_file"] = series_path.string();
    append_analysis(out, rec);
    std::cout << "mi " << a.key << " points " << series.steps.size() << " final "
              << series.smoothed.back() << "\n";
    return kExitOk;
  }
  throw InputError("unknown --what '" + a.what + "'");
}

std::vector<std::string> split_keys(const std::string& keys) {
  std::vector<std::string> out;
  std::stringstream ss(keys);
  std::string k;
  while (std::getline(ss, k, ',')) {
    if (!k.empty()) out.push_back(k);
  }
  return out;
}

int cmd_plot(const std::vector<std::string>& files, const std::string& keys_arg,
             const std::string& out_arg, int window) {
  std::vector<std::vector<json>> streams;
  std::set<std::string> available;
  for (const auto& f : files) {
    if (!fs::is_regular_file(f)) throw InputError("no metrics file at " + f);
    auto records = read_jsonl(f);
    if (records.empty()) throw InputError(f + " has no records");
    for (const auto& r : records) {
      for (const auto& [k, v] : r.items()) {
        if (v.is_number()) available.insert(k);
      }
    }
    streams.push_back(std::move(records));
  }
  const auto keys = split_keys(keys_arg);
  if (keys.empty()) throw InputError("--keys is empty");
  for (const auto& k : keys) {
    if (!available.count(k)) {
      std::string list;
      for (const auto& a : available) list += (list.empty() ? "" : ", ") + a;
      throw InputError("unknown key '" + k + "'; available keys: " + list);
    }
  }
  const fs::path out(out_arg);
  const bool single_file = keys.size() == 1 && out.extension() == ".svg";
  if (!single_file) fs::create_directories(out);
  for (const auto& k : keys) {
    std::vector<Series> runs;
    for (const auto& s : streams) {
      try {
        runs.push_back(metric_series(s, k, window));
      } catch (const ValidationError&) {
        // Runs without this key are left out of its chart.
      }
    }
    const fs::path path = single_file ? out : out / (k + ".svg");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f << line_chart_svg(k, runs);
    std::cout << "plot " << k << " runs " << runs.size() << " -> " << path.string() << "\n";
  }
  return kExitOk;
}

int run_main(int argc, char** argv) {
  CLI::App app{"Skill discovery, transfer and analysis toolkit"};
  app.require_subcommand(1);

  RunArgs pre_args;
  auto* pre = app.add_subcommand("pretrain", "Unsupervised skill pretraining");
  add_run_options(pre, pre_args);

  RunArgs tr_args;
  std::string mode;
  std::string from;
  bool scratch = false;
  auto* tr = app.add_subcommand("transfer", "Goal-conditioned or multi-task transfer");
  add_run_options(tr, tr_args);
  tr->add_option("--mode", mode, "gcrl or mtrl")->required()->check(CLI::IsMember({"gcrl", "mtrl"}));
  tr->add_option("--from", from, "Pretraining checkpoint directory");
  tr->add_flag("--scratch", scratch, "Train every parameter from scratch (no checkpoint)");

  std::string ev_from, ev_task, ev_out, ev_dump;
  int ev_episodes = 50;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("evaluate", "Deterministic success rate of a checkpoint");
  ev->add_option("--from", ev_from, "Checkpoint directory")->required();
  ev->add_option("--task", ev_task, "Task name (default: the checkpoint's first task)");
  ev->add_option("--episodes", ev_episodes, "Episodes");
  ev->add_option("--seed", ev_seed, "Evaluation seed");
  ev->add_option("--out", ev_out, "Output directory")->required();
  ev->add_option("--dump", ev_dump, "Write the trajectories to this JSON file");

  AnalyzeArgs an;
  auto* anc = app.add_subcommand("analyze", "Behavioral and structural diagnostics");
  anc->add_option("--what", an.what, "grasp|entropy|interaction|afs|mi")
      ->required()
      ->check(CLI::IsMember({"grasp", "entropy", "interaction", "afs", "mi"}));
  anc->add_option("--from", an.from, "Trajectory dump, checkpoint or metrics file")->required();
  anc->add_option("--out", an.out, "Output directory")->required();
  anc->add_option("--threshold", an.threshold, "Interaction distance (m)");
  anc->add_option("--frac", an.frac, "Interaction fraction");
  anc->add_option("--bins", an.bins, "Entropy bins per axis");
  anc->add_option("--episodes", an.episodes, "Trajectories drawn from a checkpoint");
  anc->add_option("--samples", an.samples, "AFS state-action samples");
  anc->add_option("--target", an.target, "AFS target: gating or primitive_mean");
  anc->add_flag("--per-feature", an.per_feature, "AFS pseudo-entropy per feature");
  anc->add_flag("--deterministic", an.deterministic, "Deterministic skill rollouts");
  anc->add_option("--window", an.window, "MI smoothing window");
  anc->add_option("--key", an.key, "MI metric key");
  anc->add_option("--seed", an.seed, "Sampling seed");

  std::vector<std::string> pl_metrics;
  std::string pl_keys, pl_out;
  int pl_window = 1;
  auto* pl = app.add_subcommand("plot", "SVG line charts from metrics JSONL files");
  pl->add_option("--metrics", pl_metrics, "Metrics files")->required();
  pl->add_option("--keys", pl_keys, "Comma-separated keys")->required();
  pl->add_option("--out", pl_out, "SVG file (one key) or directory")->required();
  pl->add_option("--window", pl_window, "Smoothing window");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*pre) {
      const auto config = resolve(pre_args, "pretrain");
      const auto result = pretrain(config, pre_args.out);
      std::cout << "pretrain done: " << result.steps << " steps, " << result.updates
                << " updates, checkpoint " << result.checkpoint.string() << "\n";
    } else if (*tr) {
      if (scratch == !from.empty()) {
        throw InputError("transfer needs exactly one of --from or --scratch");
      }
      const auto config = resolve(tr_args, mode);
      std::optional<fs::path> ckpt;
      if (!scratch) ckpt = from;
      const auto result = transfer(config, ckpt, tr_args.out);
      std::cout << "transfer done: " << result.steps << " steps, success "
                << result.last_record.value("success", 0.0) << ", checkpoint "
                << result.checkpoint.string() << "\n";
    } else if (*ev) {
      auto loaded = load_policy(fs::path(ev_from));
      const auto specs = loaded.config.env.task_specs();
      int task_index = 0;
      if (!ev_task.empty()) {
        const auto id = parse_task(ev_task);
        task_index = -1;
        for (std::size_t j = 0; j < specs.size(); ++j) {
          if (specs[j].task == id) task_index = static_cast<int>(j);
        }
        if (task_index < 0) throw InputError("checkpoint was not trained on task " + ev_task);
      }
      if (loaded.meta.cond.kind == CondKind::kSkill) {
        throw InputError("evaluate needs a goal-conditioned checkpoint");
      }
      PolicyController controller(loaded.policy, loaded.encoder, ActMode::kDeterministic);
      EvalOptions opt;
      opt.n_episodes = ev_episodes;
      opt.seed = ev_seed;
      opt.record = !ev_dump.empty();
      opt.task_index = task_index;
      opt.n_tasks = static_cast<int>(specs.size());
      opt.multi_object = loaded.meta.multi_object;
      auto spec = specs[static_cast<std::size_t>(task_index)];
      spec.max_objects = loaded.config.encoder.max_objects;
      const auto result = evaluate(controller, spec, opt);
      if (!ev_dump.empty()) {
        const fs::path dump(ev_dump);
        if (dump.has_parent_path()) fs::create_directories(dump.parent_path());
        result.trajectories.save(dump);
      }
      ordered_json rec;
      rec["what"] = "evaluate";
      rec["from"] = ev_from;
      rec["task"] = std::string(task_name(spec.task));
      rec["episodes"] = ev_episodes;
      rec["success_rate"] = result.success_rate;
      append_analysis(ev_out, rec);
      std::cout << "success_rate " << result.success_rate << "\n";
    } else if (*anc) {
      return cmd_analyze(an);
    } else if (*pl) {
      return cmd_plot(pl_metrics, pl_keys, pl_out, pl_window);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const ValidationError& e) {
    // Malformed analysis or plot inputs.
    if (*anc || *pl || *ev) {
      std::cerr << "input error: " << e.what() << "\n";
      return kExitUsage;
    }
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) { return run_main(argc, argv); }
