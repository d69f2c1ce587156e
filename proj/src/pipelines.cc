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

#include "skilldisc/pipelines.h"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "skilldisc/mi.h"
#include "skilldisc/nn.h"
#include "skilldisc/sac.h"

namespace skilldisc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// Seed streams derived from run.seed.
constexpr std::uint64_t kSamplerStream = 1;
constexpr std::uint64_t kTorchStream = 2;
constexpr std::uint64_t kEnvStream = 3;
constexpr std::uint64_t kEvalStream = 4;

std::vector<float> one_hot(int index, int width) {
  std::vector<float> v(static_cast<std::size_t>(width), 0.f);
  v.at(static_cast<std::size_t>(index)) = 1.f;
  return v;
}

torch::Tensor rows_tensor(const std::vector<std::vector<float>>& rows, int64_t width) {
  auto t = torch::empty({static_cast<int64_t>(rows.size()), width});
  auto acc = t.accessor<float, 2>();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int64_t>(rows[i].size()) != width) {
      throw ValidationError("row width mismatch while batching");
    }
    for (int64_t c = 0; c < width; ++c) acc[static_cast<int64_t>(i)][c] = rows[i][static_cast<std::size_t>(c)];
  }
  return t;
}

Action action_row(const torch::Tensor& actions, int64_t row) {
  Action a{};
  auto acc = actions.accessor<float, 2>();
  for (int k = 0; k < kActionDim; ++k) a[static_cast<std::size_t>(k)] = acc[row][k];
  return a;
}

Vec3 intended_position(const WorldState& s, int intention) {
  if (is_articulated(s.task.task)) return s.objects.front().pos;
  return s.objects.at(static_cast<std::size_t>(intention)).pos;
}

torch::Tensor intention_tensor(const std::vector<int>& intentions, int width, bool multi) {
  if (!multi) return torch::zeros({static_cast<int64_t>(intentions.size()), 0});
  std::vector<std::vector<float>> rows;
  for (int i : intentions) rows.push_back(one_hot(i, width));
  return rows_tensor(rows, width);
}

torch::Tensor policy_features(SetEncoder encoder, const torch::Tensor& flat,
                              const LayoutManifest& layout, const torch::Tensor& intention) {
  if (!encoder) return flat;
  return encoder->forward(tokenize_batch(flat, layout, intention));
}

std::string cond_kind_name(CondKind kind) {
  switch (kind) {
    case CondKind::kSkill: return "skill";
    case CondKind::kGoal: return "goal";
    case CondKind::kGoalTask: return "goal_task";
  }
  return "skill";
}

CondKind parse_cond_kind(const std::string& name) {
  if (name == "skill") return CondKind::kSkill;
  if (name == "goal") return CondKind::kGoal;
  if (name == "goal_task") return CondKind::kGoalTask;
  throw CorruptionError("unknown conditioning kind '" + name + "' in checkpoint");
}

bool all_finite(const ordered_json& j) {
  if (j.is_number_float()) return std::isfinite(j.get<double>());
  if (j.is_structured()) {
    for (const auto& v : j) {
      if (!all_finite(v)) return false;
    }
  }
  return true;
}

// Rows sized to hold every transition the run can produce, capped by the
// configured capacity.
int64_t buffer_rows(int64_t capacity, int64_t budget_rows, int64_t block) {
  const int64_t rows = std::max<int64_t>(block, std::min(capacity, budget_rows));
  return (rows + block - 1) / block * block;
}

class Run {
 public:
  Run(const ExperimentConfig& config, const fs::path& out, Phase phase)
      : config_(config),
        out_(out),
        phase_(phase),
        rng_(derive_seed(config.run.seed, kSamplerStream)),
        gen_(at::make_generator<at::CPUGeneratorImpl>(derive_seed(config.run.seed, kTorchStream))),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out / "checkpoints");
    std::ofstream resolved(out / "config.resolved");
    if (!resolved) throw ConfigError("cannot write " + (out / "config.resolved").string());
    resolved << config.to_json().dump(2) << "\n";
    torch::manual_seed(config.run.seed);
    metrics_ = std::make_unique<MetricsWriter>(out / "metrics.jsonl");
  }

  const ExperimentConfig& config() const { return config_; }
  std::mt19937_64& rng() { return rng_; }
  at::Generator& gen() { return gen_; }

  ordered_json record(int64_t step) const {
    ordered_json r;
    r["step"] = step;
    r["wall_time"] = config_.run.real_wall_time
                         ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()
                         : static_cast<double>(step) * kControlPeriod;
    r["phase"] = std::string(phase_name(phase_));
    return r;
  }

  void emit(const ordered_json& r) { metrics_->write(r); }

  fs::path checkpoint_dir(const std::string& name) const { return out_ / "checkpoints" / name; }

  Checkpoint checkpoint(int64_t step, const ModelMeta& meta, SacAgent& agent,
                        IntrinsicRewardModel* irm) {
    Checkpoint c;
    c.phase = phase_;
    c.config_hash = config_.hash();
    c.step = step;
    c.config = json(config_.to_json());
    c.meta = meta.to_json();
    c.meta["primitive_checksum"] = agent.policy()->primitives()->checksum();
    c.blobs["policy"] = nn::to_bytes(*agent.policy());
    if (agent.encoder()) c.blobs["encoder"] = nn::to_bytes(*agent.encoder());
    c.blobs["critics"] = nn::to_bytes(*agent.critics());
    c.blobs["temperature"] = agent.temperature().to_bytes();
    if (irm) {
      c.blobs["estimator_jsd"] = nn::to_bytes(*irm->jsd().witness());
      c.blobs["estimator_dynamics"] = nn::to_bytes(*irm->dynamics().net());
      if (irm->dv()) c.blobs["estimator_dv"] = nn::to_bytes(*irm->dv()->witness());
    }
    c.blobs["rng"] = rng_state(rng_, gen_);
    return c;
  }

 private:
  ExperimentConfig config_;
  fs::path out_;
  Phase phase_;
  std::mt19937_64 rng_;
  at::Generator gen_;
  std::chrono::steady_clock::time_point start_;
  std::unique_ptr<MetricsWriter> metrics_;
};

struct EpisodeInit {
  TaskSpec spec;
  std::uint64_t env_seed = 0;
  Conditioning cond;
  int task = 0;
  int intention = 0;
};

// Lockstep rollout of all episodes in sample mode.
std::vector<Episode> rollout(SacAgent& agent, Phase phase, const std::vector<EpisodeInit>& inits,
                             bool multi, at::Generator& gen) {
  torch::NoGradGuard no_grad;
  const std::size_t n = inits.size();
  std::vector<WorldState> states;
  std::vector<std::vector<float>> flats(n);
  std::vector<std::vector<float>> conds;
  std::vector<int> intentions;
  std::vector<Episode> eps(n);
  const CondSpec spec = agent.policy()->cond_spec();
  LayoutManifest layout;
  for (std::size_t e = 0; e < n; ++e) {
    const auto& init = inits[e];
    auto [s, o] = reset(init.spec, init.env_seed);
    layout = o.layout;
    auto& ep = eps[e];
    ep.phase = phase;
    ep.task = init.task;
    ep.spec = init.spec;
    ep.cond = init.cond;
    if (multi) ep.intention = one_hot(init.intention, layout.indicator_width);
    flats[e] = o.flat();
    ep.obs.push_back(flats[e]);
    ep.gripper.push_back(s.gripper_pos);
    ep.object.push_back(intended_position(s, init.intention));
    ep.achieved.push_back(achieved_goal(s, init.intention));
    conds.push_back(encode_conditioning(init.cond, spec));
    intentions.push_back(init.intention);
    states.push_back(std::move(s));
  }
  const auto cond = rows_tensor(conds, spec.width());
  const auto intention = intention_tensor(intentions, layout.indicator_width, multi);
  for (int t = 0; t < kHorizon; ++t) {
    auto flat = rows_tensor(flats, layout.total);
    auto feature = agent.features(flat, intention);
    auto act = agent.policy()->act(feature, cond, ActMode::kSample, gen);
    auto actions = act.action.contiguous();
    for (std::size_t e = 0; e < n; ++e) {
      const Action a = action_row(actions, static_cast<int64_t>(e));
      auto [s, o] = step(states[e], a);
      auto& ep = eps[e];
      ep.actions.push_back(a);
      flats[e] = o.flat();
      ep.obs.push_back(flats[e]);
      ep.gripper.push_back(s.gripper_pos);
      ep.object.push_back(intended_position(s, inits[e].intention));
      ep.achieved.push_back(achieved_goal(s, inits[e].intention));
      states[e] = std::move(s);
    }
  }
  return eps;
}

// Rollout statistics over the states before each action.
TrajectorySet episode_trajectories(const std::vector<Episode>& eps) {
  TrajectorySet set;
  for (const auto& ep : eps) {
    Trajectory tr;
    for (int t = 0; t < ep.length(); ++t) {
      const auto ut = static_cast<std::size_t>(t);
      tr.steps.push_back({ep.gripper[ut], {ep.object[ut]}, ep.actions[ut], {}});
    }
    set.trajectories.push_back(std::move(tr));
  }
  return set;
}

struct Mean {
  double sum = 0.0;
  int64_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  double value() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

void put_losses(ordered_json& r, const std::vector<LossRecord>& losses) {
  Mean critic, actor, alpha, q, target, entropy;
  for (const auto& l : losses) {
    critic.add(l.critic_loss);
    actor.add(l.actor_loss);
    alpha.add(l.alpha_loss);
    q.add(l.q_mean);
    target.add(l.target_mean);
    entropy.add(l.entropy);
  }
  r["critic_loss"] = critic.value();
  r["actor_loss"] = actor.value();
  r["alpha_loss"] = alpha.value();
  r["q_mean"] = q.value();
  r["target_mean"] = target.value();
  r["entropy"] = entropy.value();
}

std::vector<TaskSpec> specs_for(const ExperimentConfig& config) {
  auto specs = config.env.task_specs();
  for (auto& s : specs) s.max_objects = config.encoder.max_objects;
  return specs;
}

void check_compatible(const ExperimentConfig& config, const LoadedPolicy& source,
                      int feature_dim) {
  const auto& a = source.config.policy;
  const auto& b = config.policy;
  auto fail = [](const std::string& what) {
    throw LoadError("checkpoint/config mismatch: " + what);
  };
  if (source.meta.multi_object != config.env.multi_object) fail("env.multi_object");
  if (a.n_primitives != b.n_primitives) {
    fail("policy.n_primitives " + std::to_string(a.n_primitives) + " vs " +
         std::to_string(b.n_primitives));
  }
  if (a.hidden != b.hidden || a.layers != b.layers) fail("policy hidden/layers");
  if (a.log_std_min != b.log_std_min || a.log_std_max != b.log_std_max) fail("policy std bounds");
  if (source.meta.feature_dim != feature_dim) {
    fail("feature width " + std::to_string(source.meta.feature_dim) + " vs " +
         std::to_string(feature_dim));
  }
  if (config.env.multi_object) {
    const auto& ea = source.config.encoder;
    const auto& eb = config.encoder;
    if (ea.n_layers != eb.n_layers || ea.n_heads != eb.n_heads ||
        ea.model_width != eb.model_width || ea.mlp_width != eb.mlp_width ||
        ea.max_objects != eb.max_objects) {
      fail("encoder shape");
    }
  }
}

}  // namespace

struct MetricsWriter::Impl {
  fs::path path;
  std::ofstream out;
};

MetricsWriter::MetricsWriter(const fs::path& path) : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  impl_->out.open(path, std::ios::trunc);
  if (!impl_->out) throw ValidationError("cannot open metrics file " + path.string());
}

MetricsWriter::~MetricsWriter() = default;

void MetricsWriter::write(const ordered_json& record) {
  for (const char* key : {"step", "wall_time", "phase"}) {
    if (!record.contains(key)) throw ValidationError(std::string("metrics record lacks '") + key + "'");
  }
  const auto step = record["step"].get<int64_t>();
  if (last_step_ && step <= *last_step_) {
    throw ValidationError("metrics step " + std::to_string(step) + " does not follow " +
                          std::to_string(*last_step_));
  }
  if (!all_finite(record)) {
    const auto dump_path = impl_->path.parent_path() / "abort_dump.json";
    std::ofstream dump(dump_path);
    dump << record.dump(2) << "\n";
    throw NonFiniteError("non-finite metric at step " + std::to_string(step) +
                         "; record dumped to " + dump_path.string());
  }
  last_step_ = step;
  impl_->out << record.dump() << "\n";
  impl_->out.flush();
  ++records_;
}

std::vector<Action> RandomController::act(const std::vector<ControlInput>& inputs) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Action> out(inputs.size());
  for (auto& a : out) {
    for (auto& v : a) v = u(rng_);
  }
  return out;
}

std::vector<Action> ScriptedPickPlace::act(const std::vector<ControlInput>& inputs) {
  std::vector<Action> out;
  for (const auto& in : inputs) {
    const WorldState& s = *in.state;
    const Vec3 goal = std::visit(
        [](const auto& c) -> Vec3 {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, SkillLatent>) {
            throw ValidationError("scripted pick-and-place needs a goal");
          } else {
            return c.goal;
          }
        },
        in.cond.value);
    const Vec3 g = s.gripper_pos;
    const Vec3 o = s.objects.at(static_cast<std::size_t>(in.intention)).pos;
    const bool holding = s.held_index() == in.intention;
    const Vec3 target = holding ? goal : o;
    Action a{};
    Vec3 predicted = g;
    for (int k = 0; k < 3; ++k) {
      const double v = std::clamp((target[k] - g[k]) / kMaxStep, -1.0, 1.0);
      a[static_cast<std::size_t>(k)] = v;
      predicted[k] = g[k] + kMaxStep * v;
    }
    if (holding) {
      a[3] = -1.0;
    } else {
      a[3] = norm(o - predicted) <= 0.5 * kGraspRadius ? -1.0 : 1.0;
    }
    out.push_back(a);
  }
  return out;
}

PolicyController::PolicyController(McpPolicy policy, SetEncoder encoder, ActMode mode,
                                   std::uint64_t seed)
    : policy_(std::move(policy)),
      encoder_(std::move(encoder)),
      mode_(mode),
      gen_(at::make_generator<at::CPUGeneratorImpl>(seed)) {}

std::vector<Action> PolicyController::act(const std::vector<ControlInput>& inputs) {
  torch::NoGradGuard no_grad;
  if (inputs.empty()) return {};
  const auto& layout = inputs.front().obs->layout;
  std::vector<std::vector<float>> flats, conds;
  std::vector<int> intentions;
  for (const auto& in : inputs) {
    flats.push_back(in.obs->flat());
    conds.push_back(encode_conditioning(in.cond, policy_->cond_spec()));
    intentions.push_back(in.intention);
  }
  auto flat = rows_tensor(flats, layout.total);
  auto intention = intention_tensor(intentions, layout.indicator_width, static_cast<bool>(encoder_));
  auto feature = policy_features(encoder_, flat, layout, intention);
  auto cond = rows_tensor(conds, policy_->cond_spec().width());
  auto res = mode_ == ActMode::kSample
                 ? policy_->act(feature, cond, mode_, gen_)
                 : policy_->act(feature, cond, mode_);
  last_features_ = feature;
  last_cond_ = cond;
  last_actions_ = res.action.contiguous();
  std::vector<Action> out;
  for (int64_t i = 0; i < last_actions_.size(0); ++i) out.push_back(action_row(last_actions_, i));
  return out;
}

EvalResult evaluate(Controller& controller, const TaskSpec& spec, const EvalOptions& options) {
  if (options.n_episodes < 1) throw ConfigError("evaluation needs at least one episode");
  spec.validate();
  const auto n = static_cast<std::size_t>(options.n_episodes);
  std::vector<WorldState> states;
  std::vector<Observation> obs;
  std::vector<ControlInput> inputs(n);
  std::vector<Vec3> goals(n);
  EvalResult result;
  result.successes.assign(n, 0);
  if (options.record) result.trajectories.trajectories.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    const auto seed = derive_seed(options.seed, e);
    std::mt19937_64 rng(seed);
    auto [s, o] = reset(spec, seed);
    int intention = 0;
    if (spec.n_objects > 1) {
      std::uniform_int_distribution<int> pick(0, spec.n_objects - 1);
      intention = pick(rng);
    }
    Conditioning cond;
    if (options.cond_kind == CondKind::kSkill) {
      std::uniform_real_distribution<float> u(-1.f, 1.f);
      SkillLatent z;
      for (int k = 0; k < kSkillDim; ++k) z.z.push_back(u(rng));
      cond.value = z;
    } else {
      goals[e] = sample_goal(spec, rng);
      if (options.cond_kind == CondKind::kGoal) {
        cond.value = GoalCond{goals[e]};
      } else {
        cond.value = GoalTaskCond{goals[e], options.task_index, options.n_tasks};
      }
    }
    if (options.multi_object || spec.n_objects > 1) cond.intention = intention;
    inputs[e].cond = cond;
    inputs[e].intention = intention;
    if (options.record) result.trajectories.trajectories[e].intention = intention;
    states.push_back(std::move(s));
    obs.push_back(std::move(o));
  }
  for (int t = 0; t < kHorizon; ++t) {
    for (std::size_t e = 0; e < n; ++e) {
      inputs[e].state = &states[e];
      inputs[e].obs = &obs[e];
    }
    const auto actions = controller.act(inputs);
    if (actions.size() != n) throw ValidationError("controller returned the wrong number of actions");
    for (std::size_t e = 0; e < n; ++e) {
      if (options.record) {
        TrajectoryStep st;
        st.gripper = states[e].gripper_pos;
        for (const auto& o : states[e].objects) st.objects.push_back(o.pos);
        st.action = actions[e];
        st.cond = inputs[e].cond.vector();
        result.trajectories.trajectories[e].steps.push_back(std::move(st));
      }
      auto [s, o] = step(states[e], actions[e]);
      states[e] = std::move(s);
      obs[e] = std::move(o);
      if (options.cond_kind != CondKind::kSkill &&
          sparse_reward(achieved_goal(states[e], inputs[e].intention), goals[e],
                        spec.success_radius) >= 1.0) {
        result.successes[e] = 1;
      }
    }
  }
  int total = 0;
  for (int v : result.successes) total += v;
  result.success_rate = static_cast<double>(total) / static_cast<double>(n);
  return result;
}

json ModelMeta::to_json() const {
  return {{"feature_dim", feature_dim},
          {"cond_kind", cond_kind_name(cond.kind)},
          {"skill_dim", cond.skill_dim},
          {"cond_tasks", cond.n_tasks},
          {"n_tasks", n_tasks},
          {"multi_object", multi_object}};
}

ModelMeta ModelMeta::from_json(const json& j) {
  ModelMeta m;
  try {
    m.feature_dim = j.at("feature_dim").get<int>();
    m.cond.kind = parse_cond_kind(j.at("cond_kind").get<std::string>());
    m.cond.skill_dim = j.at("skill_dim").get<int>();
    m.cond.n_tasks = j.at("cond_tasks").get<int>();
    m.n_tasks = j.at("n_tasks").get<int>();
    m.multi_object = j.at("multi_object").get<bool>();
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint meta: ") + e.what());
  }
  return m;
}

LoadedPolicy load_policy(const fs::path& dir) { return load_policy(load_checkpoint(dir)); }

LoadedPolicy load_policy(const Checkpoint& checkpoint) {
  LoadedPolicy out;
  out.checkpoint = checkpoint;
  try {
    out.config = ExperimentConfig::from_json(checkpoint.config);
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint config: ") + e.what());
  }
  out.meta = ModelMeta::from_json(checkpoint.meta);
  if (out.meta.multi_object) {
    out.encoder = SetEncoder(out.config.encoder);
    nn::from_bytes(*out.encoder, checkpoint.blob("encoder"));
  }
  out.policy = McpPolicy(out.meta.feature_dim, out.meta.cond, out.config.policy);
  nn::from_bytes(*out.policy, checkpoint.blob("policy"));
  return out;
}

RunResult pretrain(const ExperimentConfig& config, const fs::path& out) {
  config.validate();
  if (parse_phase(config.phase) != Phase::kPretrain) {
    throw ConfigError("phase: pretraining requires phase 'pretrain'");
  }
  const auto specs = specs_for(config);
  if (specs.size() != 1) throw ConfigError("env.tasks: pretraining uses a single environment");
  const TaskSpec spec = specs.front();
  const bool multi = config.env.multi_object;
  Run run(config, out, Phase::kPretrain);
  const auto layout = LayoutManifest::make(spec.n_objects, spec.max_objects);

  SetEncoder encoder{nullptr};
  int feature_dim = layout.total;
  if (multi) {
    encoder = SetEncoder(config.encoder);
    feature_dim = encoder->output_width();
  }
  const CondSpec cond_spec = CondSpec::skill();
  McpPolicy policy(feature_dim, cond_spec, config.policy);
  SacAgent agent(policy, encoder, true, layout, 1, config.sac);
  IntrinsicRewardModel irm(3, 3, kSkillDim, config.estimator);
  const ModelMeta meta{feature_dim, cond_spec, 1, multi};

  const ReplayLayout replay_layout{layout.total, cond_spec.width(),
                                   multi ? layout.indicator_width : 0};
  ReplayBuffer buffer(replay_layout,
                      buffer_rows(config.sac.buffer_capacity, config.run.steps, kHorizon),
                      kHorizon);

  const auto& rc = config.run;
  const std::uint64_t env_base = derive_seed(rc.seed, kEnvStream);
  int64_t step = 0;
  int64_t updates = 0;
  int64_t episodes = 0;
  double credit = 0.0;
  int64_t next_checkpoint = rc.checkpoint_every > 0 ? rc.checkpoint_every
                                                    : std::numeric_limits<int64_t>::max();
  RunResult result;
  std::uniform_real_distribution<float> uz(-1.f, 1.f);

  while (step < rc.steps) {
    std::vector<EpisodeInit> inits;
    for (int e = 0; e < rc.episodes_per_iter; ++e) {
      EpisodeInit init;
      init.spec = spec;
      init.env_seed = derive_seed(env_base, static_cast<std::uint64_t>(episodes + e));
      SkillLatent z;
      for (int k = 0; k < kSkillDim; ++k) z.z.push_back(uz(run.rng()));
      init.cond.value = z;
      if (multi) {
        std::uniform_int_distribution<int> pick(0, spec.n_objects - 1);
        init.intention = pick(run.rng());
        init.cond.intention = init.intention;
      }
      inits.push_back(std::move(init));
    }
    const auto eps = rollout(agent, Phase::kPretrain, inits, multi, run.gen());
    episodes += rc.episodes_per_iter;
    const int64_t env_steps = static_cast<int64_t>(rc.episodes_per_iter) * kHorizon;
    step += env_steps;
    for (const auto& ep : eps) buffer.add(episode_transitions(ep, cond_spec));

    std::vector<LossRecord> losses;
    Mean jsd, dv, nll, r1, r2, reward;
    if (step >= rc.warmup_steps) {
      credit += static_cast<double>(env_steps) * rc.updates_per_step;
      const auto n_updates = static_cast<int64_t>(std::floor(credit));
      credit -= static_cast<double>(n_updates);
      for (int64_t u = 0; u < n_updates; ++u) {
        Batch batch = buffer.sample(config.sac.batch_size, run.rng());
        const IntrinsicBatch ib{batch.s_o, batch.s_r, batch.cond, batch.s_o_next, batch.s_r_next};
        for (int k = 0; k < config.estimator.updates_per_step; ++k) {
          const auto stats = irm.update(ib, run.gen());
          jsd.add(stats.jsd_bound);
          nll.add(stats.dads_nll);
          if (stats.dv_bound) dv.add(*stats.dv_bound);
        }
        const auto rewards = irm.rewards(ib, run.gen());
        batch.reward = rewards.total.detach();
        r1.add(rewards.r1.mean().item<double>());
        r2.add(rewards.r2.mean().item<double>());
        reward.add(rewards.total.mean().item<double>());
        losses.push_back(agent.update(batch, run.gen()));
        ++updates;
      }
    }

    auto r = run.record(step);
    r["episodes"] = episodes;
    r["updates"] = updates;
    const auto trajs = episode_trajectories(eps);
    r["rollout_grasp_ratio"] = grasp_ratio(trajs);
    r["rollout_state_entropy"] = state_entropy(trajs);
    Mean distance, displacement;
    for (const auto& ep : eps) {
      for (int t = 0; t < ep.length(); ++t) {
        const auto ut = static_cast<std::size_t>(t);
        distance.add(norm(ep.gripper[ut] - ep.object[ut]));
      }
      displacement.add(norm(ep.object.back() - ep.object.front()));
    }
    r["rollout_mean_distance"] = distance.value();
    r["rollout_object_displacement"] = displacement.value();
    if (!losses.empty()) {
      if (jsd.n) r["jsd_bound"] = jsd.value();
      if (dv.n) r["dv_bound"] = dv.value();
      if (nll.n) r["dads_nll"] = nll.value();
      r["r1_mean"] = r1.value();
      r["r2_mean"] = r2.value();
      r["reward_mean"] = reward.value();
      put_losses(r, losses);
      r["alpha"] = agent.temperature().alpha(0);
    }
    run.emit(r);
    result.last_record = r;

    if (step >= next_checkpoint && step < rc.steps) {
      save_checkpoint(run.checkpoint(step, meta, agent, &irm),
                      run.checkpoint_dir("step_" + std::to_string(step)));
      while (next_checkpoint <= step) next_checkpoint += rc.checkpoint_every;
    }
  }

  result.checkpoint = run.checkpoint_dir("final");
  save_checkpoint(run.checkpoint(step, meta, agent, &irm), result.checkpoint);
  result.steps = step;
  result.updates = updates;
  return result;
}

RunResult transfer(const ExperimentConfig& config,
                   const std::optional<fs::path>& pretrain_checkpoint, const fs::path& out) {
  config.validate();
  const Phase phase = parse_phase(config.phase);
  if (phase == Phase::kPretrain) throw ConfigError("phase: transfer requires 'gcrl' or 'mtrl'");
  const auto specs = specs_for(config);
  const int n_tasks = static_cast<int>(specs.size());
  if (phase == Phase::kGcrl && n_tasks != 1) {
    throw ConfigError("env.tasks: gcrl trains exactly one task");
  }
  const bool multi = config.env.multi_object;
  const auto layout = LayoutManifest::make(specs.front().n_objects, specs.front().max_objects);
  for (const auto& s : specs) {
    if (!(LayoutManifest::make(s.n_objects, s.max_objects) == layout)) {
      throw ConfigError("env.tasks: all tasks must share one observation layout");
    }
  }
  const int feature_dim = multi ? config.encoder.model_width : layout.total;

  std::optional<LoadedPolicy> source;
  if (pretrain_checkpoint) {
    auto ckpt = load_checkpoint(*pretrain_checkpoint);
    require_phase(ckpt, Phase::kPretrain);
    source = load_policy(ckpt);
    check_compatible(config, *source, feature_dim);
  }

  Run run(config, out, phase);
  const CondSpec cond_spec = CondSpec::goal_task(n_tasks);
  McpPolicy policy{nullptr};
  SetEncoder encoder{nullptr};
  bool encoder_trainable = true;
  if (source) {
    policy = source->policy;
    policy->freeze_primitives();
    policy->reinit_gating(cond_spec, feature_dim);
    encoder = source->encoder;
    if (encoder) {
      for (auto& p : encoder->parameters()) p.set_requires_grad(false);
    }
    encoder_trainable = false;
  } else {
    if (multi) encoder = SetEncoder(config.encoder);
    policy = McpPolicy(feature_dim, cond_spec, config.policy);
  }
  SacAgent agent(policy, encoder, encoder_trainable, layout, n_tasks, config.sac);
  const ModelMeta meta{feature_dim, cond_spec, n_tasks, multi};
  const std::string primitive_checksum = policy->primitives()->checksum();

  const auto& rc = config.run;
  const int her_k = config.sac.her_k;
  const HerStrategy strategy = parse_her_strategy(config.sac.her_strategy);
  const int64_t block = static_cast<int64_t>(kHorizon) * (her_k + 1);
  const ReplayLayout replay_layout{layout.total, cond_spec.width(),
                                   multi ? layout.indicator_width : 0};
  std::vector<ReplayBuffer> buffers;
  for (int j = 0; j < n_tasks; ++j) {
    const int64_t per_task_steps = rc.steps / n_tasks + kHorizon;
    buffers.emplace_back(replay_layout,
                         buffer_rows(config.sac.buffer_capacity / n_tasks,
                                     per_task_steps * (her_k + 1), block),
                         block);
  }
  std::vector<const ReplayBuffer*> buffer_ptrs;
  for (const auto& b : buffers) buffer_ptrs.push_back(&b);

  const std::uint64_t env_base = derive_seed(rc.seed, kEnvStream);
  int64_t step = 0;
  int64_t updates = 0;
  int64_t episodes = 0;
  double credit = 0.0;
  int64_t next_eval = rc.eval_every > 0 ? rc.eval_every : std::numeric_limits<int64_t>::max();
  int64_t next_checkpoint = rc.checkpoint_every > 0 ? rc.checkpoint_every
                                                    : std::numeric_limits<int64_t>::max();
  RunResult result;

  auto run_eval = [&](ordered_json& r) {
    PolicyController controller(agent.policy(), agent.encoder(), ActMode::kDeterministic);
    std::vector<double> per_task;
    double sum = 0.0;
    for (int j = 0; j < n_tasks; ++j) {
      EvalOptions opt;
      opt.n_episodes = rc.eval_episodes;
      opt.seed = derive_seed(derive_seed(rc.seed, kEvalStream), static_cast<std::uint64_t>(j));
      opt.cond_kind = CondKind::kGoalTask;
      opt.task_index = j;
      opt.n_tasks = n_tasks;
      opt.multi_object = multi;
      const double rate = evaluate(controller, specs[static_cast<std::size_t>(j)], opt).success_rate;
      per_task.push_back(rate);
      sum += rate;
      r["success_" + std::string(task_name(specs[static_cast<std::size_t>(j)].task))] = rate;
    }
    r["success"] = sum / n_tasks;
    r["success_per_task"] = per_task;
  };

  while (step < rc.steps) {
    std::vector<EpisodeInit> inits;
    for (int e = 0; e < rc.episodes_per_iter; ++e) {
      EpisodeInit init;
      init.task = static_cast<int>((episodes + e) % n_tasks);
      init.spec = specs[static_cast<std::size_t>(init.task)];
      init.env_seed = derive_seed(env_base, static_cast<std::uint64_t>(episodes + e));
      const Vec3 goal = sample_goal(init.spec, run.rng());
      if (init.spec.n_objects > 1) {
        std::uniform_int_distribution<int> pick(0, init.spec.n_objects - 1);
        init.intention = pick(run.rng());
      }
      init.cond.value = GoalTaskCond{goal, init.task, n_tasks};
      if (multi) init.cond.intention = init.intention;
      inits.push_back(std::move(init));
    }
    const auto eps = rollout(agent, phase, inits, multi, run.gen());
    episodes += rc.episodes_per_iter;
    const int64_t env_steps = static_cast<int64_t>(rc.episodes_per_iter) * kHorizon;
    step += env_steps;
    Mean train_success;
    for (const auto& ep : eps) {
      auto transitions = her_relabel(ep, strategy, her_k, run.rng(), cond_spec);
      double hit = 0.0;
      for (std::size_t t = 0; t < transitions.size(); t += static_cast<std::size_t>(her_k + 1)) {
        hit = std::max(hit, transitions[t].reward);
      }
      train_success.add(hit);
      buffers[static_cast<std::size_t>(ep.task)].add(transitions);
    }

    std::vector<LossRecord> losses;
    if (step >= rc.warmup_steps) {
      credit += static_cast<double>(env_steps) * rc.updates_per_step;
      const auto n_updates = static_cast<int64_t>(std::floor(credit));
      credit -= static_cast<double>(n_updates);
      for (int64_t u = 0; u < n_updates; ++u) {
        auto sample = multitask_sample(buffer_ptrs, config.sac.batch_size, run.rng());
        losses.push_back(agent.update(sample.batch, run.gen()));
        ++updates;
      }
    }

    auto r = run.record(step);
    r["episodes"] = episodes;
    r["updates"] = updates;
    r["train_success"] = train_success.value();
    if (!losses.empty()) {
      put_losses(r, losses);
      const auto alphas = agent.temperature().alphas();
      double mean_alpha = 0.0;
      for (double a : alphas) mean_alpha += a;
      r["alpha"] = mean_alpha / static_cast<double>(alphas.size());
      r["alpha_per_task"] = alphas;
    }
    if (step >= next_eval || step >= rc.steps) {
      run_eval(r);
      while (next_eval <= step) next_eval += rc.eval_every;
    }
    run.emit(r);
    result.last_record = r;

    if (step >= next_checkpoint && step < rc.steps) {
      save_checkpoint(run.checkpoint(step, meta, agent, nullptr),
                      run.checkpoint_dir("step_" + std::to_string(step)));
      while (next_checkpoint <= step) next_checkpoint += rc.checkpoint_every;
    }
  }

  if (source && agent.policy()->primitives()->checksum() != primitive_checksum) {
    throw ValidationError("frozen primitives changed during transfer");
  }
  result.checkpoint = run.checkpoint_dir("final");
  save_checkpoint(run.checkpoint(step, meta, agent, nullptr), result.checkpoint);
  result.steps = step;
  result.updates = updates;
  return result;
}

RunResult transfer_gcrl(const ExperimentConfig& config,
                        const std::optional<fs::path>& pretrain_checkpoint, const fs::path& out) {
  if (parse_phase(config.phase) != Phase::kGcrl) throw ConfigError("phase: expected 'gcrl'");
  return transfer(config, pretrain_checkpoint, out);
}

RunResult transfer_mtrl(const ExperimentConfig& config,
                        const std::optional<fs::path>& pretrain_checkpoint, const fs::path& out) {
  if (parse_phase(config.phase) != Phase::kMtrl) throw ConfigError("phase: expected 'mtrl'");
  return transfer(config, pretrain_checkpoint, out);
}

TrajectorySet skill_trajectories(const LoadedPolicy& loaded, int n, std::uint64_t seed,
                                 ActMode mode) {
  const auto specs = specs_for(loaded.config);
  PolicyController controller(loaded.policy, loaded.encoder, mode, derive_seed(seed, 1));
  EvalOptions opt;
  opt.n_episodes = n;
  opt.seed = seed;
  opt.record = true;
  opt.cond_kind = CondKind::kSkill;
  opt.multi_object = loaded.meta.multi_object;
  return evaluate(controller, specs.front(), opt).trajectories;
}

TrajectorySet random_trajectories(const TaskSpec& spec, int n, std::uint64_t seed,
                                  bool multi_object) {
  RandomController controller(derive_seed(seed, 1));
  EvalOptions opt;
  opt.n_episodes = n;
  opt.seed = seed;
  opt.record = true;
  opt.cond_kind = CondKind::kSkill;
  opt.multi_object = multi_object;
  return evaluate(controller, spec, opt).trajectories;
}

PolicySample on_policy_sample(const LoadedPolicy& loaded, int n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) throw ConfigError("AFS needs at least one sample");
  const auto specs = specs_for(loaded.config);
  const int episodes = (n_pairs + kHorizon - 1) / kHorizon;
  const int n_tasks = static_cast<int>(specs.size());

  // Records every batch the policy sees.
  class Recorder : public PolicyController {
   public:
    using PolicyController::PolicyController;
    std::vector<Action> act(const std::vector<ControlInput>& inputs) override {
      auto out = PolicyController::act(inputs);
      features.push_back(last_features());
      cond.push_back(last_cond());
      actions.push_back(last_actions());
      return out;
    }
    std::vector<torch::Tensor> features, cond, actions;
  };

  Recorder recorder(loaded.policy, loaded.encoder, ActMode::kSample, derive_seed(seed, 1));
  for (int j = 0; j < n_tasks; ++j) {
    EvalOptions opt;
    opt.n_episodes = std::max(1, episodes / n_tasks + (j < episodes % n_tasks ? 1 : 0));
    opt.seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(j));
    opt.cond_kind = loaded.meta.cond.kind == CondKind::kSkill ? CondKind::kSkill
                                                              : CondKind::kGoalTask;
    opt.task_index = j;
    opt.n_tasks = n_tasks;
    opt.multi_object = loaded.meta.multi_object;
    evaluate(recorder, specs[static_cast<std::size_t>(j)], opt);
    if (loaded.meta.cond.kind == CondKind::kSkill) break;
  }
  PolicySample s;
  s.features = torch::cat(recorder.features).narrow(0, 0, n_pairs);
  s.cond = torch::cat(recorder.cond).narrow(0, 0, n_pairs);
  s.actions = torch::cat(recorder.actions).narrow(0, 0, n_pairs);
  return s;
}

std::optional<int64_t> first_step_reaching(const std::vector<json>& records,
                                           const std::string& key, double threshold) {
  for (const auto& r : records) {
    auto it = r.find(key);
    if (it != r.end() && it->is_number() && it->get<double>() >= threshold) {
      return r.at("step").get<int64_t>();
    }
  }
  return std::nullopt;
}

}  // namespace skilldisc
