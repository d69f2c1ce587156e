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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "skilldisc/nn.h"

namespace skilldisc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("skilldisc_pipe_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny(const std::string& phase) {
  ExperimentConfig c;
  c.phase = phase;
  c.policy.n_primitives = 4;
  c.policy.hidden = 32;
  c.encoder.model_width = 16;
  c.encoder.mlp_width = 32;
  c.estimator.hidden = 16;
  c.estimator.prior_samples = 8;
  c.sac.batch_size = 32;
  c.sac.critic_hidden = 32;
  c.run.steps = 600;
  c.run.episodes_per_iter = 4;
  c.run.warmup_steps = 200;
  c.run.updates_per_step = 0.05;
  c.run.eval_every = 400;
  c.run.eval_episodes = 4;
  return c;
}

// Shared single-object pretraining checkpoint.
const fs::path& pretrained() {
  static const fs::path ckpt = [] {
    const auto out = fresh_dir("shared_pretrain");
    return pretrain(tiny("pretrain"), out).checkpoint;
  }();
  return ckpt;
}

TEST(MetricsWriterTest, EnforcesMandatoryKeysAndMonotoneSteps) {
  const auto dir = fresh_dir("metrics");
  fs::create_directories(dir);
  MetricsWriter w(dir / "m.jsonl");
  w.write({{"step", 1}, {"wall_time", 0.0}, {"phase", "pretrain"}});
  EXPECT_THROW(w.write({{"step", 1}, {"wall_time", 0.0}, {"phase", "pretrain"}}),
               ValidationError);
  EXPECT_THROW(w.write({{"step", 2}, {"phase", "pretrain"}}), ValidationError);
  w.write({{"step", 2}, {"wall_time", 0.1}, {"phase", "pretrain"}});
  EXPECT_EQ(w.records(), 2);
}

TEST(MetricsWriterTest, NonFiniteAbortsWithDump) {
  const auto dir = fresh_dir("nonfinite");
  fs::create_directories(dir);
  MetricsWriter w(dir / "m.jsonl");
  nlohmann::ordered_json r{{"step", 3}, {"wall_time", 0.0}, {"phase", "gcrl"}};
  r["critic_loss"] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(w.write(r), NonFiniteError);
  EXPECT_TRUE(fs::exists(dir / "abort_dump.json"));
  EXPECT_EQ(w.records(), 0);
}

TEST(EvaluateTest, ScriptedOracleAlwaysSucceeds) {
  ScriptedPickPlace oracle;
  EvalOptions opt;
  opt.n_episodes = 50;
  opt.seed = 123;
  const auto spec = TaskSpec::make(TaskId::kPickPlace);
  EXPECT_EQ(evaluate(oracle, spec, opt).success_rate, 1.0);
}

TEST(EvaluateTest, RandomPolicyRarelySucceeds) {
  RandomController random(7);
  EvalOptions opt;
  opt.n_episodes = 400;
  opt.seed = 8;
  auto spec = TaskSpec::make(TaskId::kPickPlace);
  spec.goal_space.lo[2] = 0.06;  // in-air goals only
  EXPECT_LT(evaluate(random, spec, opt).success_rate, 0.05);
}

TEST(EvaluateTest, ZeroEpisodesIsError) {
  RandomController random(0);
  EvalOptions opt;
  opt.n_episodes = 0;
  EXPECT_THROW(evaluate(random, TaskSpec::make(TaskId::kPickPlace), opt), ConfigError);
}

TEST(EvaluateTest, RecordsStatesBeforeActions) {
  ScriptedPickPlace oracle;
  EvalOptions opt;
  opt.n_episodes = 3;
  opt.record = true;
  const auto res = evaluate(oracle, TaskSpec::make(TaskId::kPickPlace), opt);
  ASSERT_EQ(res.trajectories.trajectories.size(), 3u);
  EXPECT_EQ(res.trajectories.horizon(), kHorizon);
  EXPECT_EQ(res.trajectories.trajectories[0].steps[0].gripper, home_position());
}

TEST(EvaluateTest, PureAndDeterministic) {
  const auto loaded = load_policy(pretrained());
  auto policy = loaded.policy;
  policy->reinit_gating(CondSpec::goal_task(1), loaded.meta.feature_dim);
  const auto before = nn::to_bytes(*policy);
  PolicyController controller(policy, loaded.encoder, ActMode::kDeterministic);
  EvalOptions opt;
  opt.n_episodes = 6;
  opt.seed = 4;
  opt.record = true;
  const auto a = evaluate(controller, TaskSpec::make(TaskId::kPickPlace), opt);
  const auto b = evaluate(controller, TaskSpec::make(TaskId::kPickPlace), opt);
  EXPECT_EQ(nn::to_bytes(*policy), before);
  EXPECT_EQ(a.successes, b.successes);
  EXPECT_EQ(a.trajectories.to_json(), b.trajectories.to_json());
}

TEST(PretrainTest, ZeroBudgetCheckpointsInitialParameters) {
  auto c = tiny("pretrain");
  c.run.steps = 0;
  const auto out = fresh_dir("zero");
  const auto res = pretrain(c, out);
  EXPECT_EQ(res.steps, 0);
  EXPECT_EQ(res.updates, 0);
  EXPECT_TRUE(read_file(out / "metrics.jsonl").empty());
  const auto ckpt = load_checkpoint(res.checkpoint);
  EXPECT_EQ(ckpt.step, 0);
  for (const char* blob : {"policy", "critics", "temperature", "estimator_jsd",
                           "estimator_dynamics", "rng"}) {
    EXPECT_TRUE(ckpt.has_blob(blob)) << blob;
  }
  EXPECT_EQ(ckpt.config_hash, c.hash());

  const auto out2 = fresh_dir("zero2");
  pretrain(c, out2);
  EXPECT_EQ(load_checkpoint(out2 / "checkpoints" / "final").blob("policy"), ckpt.blob("policy"));
}

TEST(PretrainTest, FixedSeedGivesIdenticalMetricStreams) {
  const auto c = tiny("pretrain");
  const auto a = fresh_dir("det_a");
  const auto b = fresh_dir("det_b");
  pretrain(c, a);
  pretrain(c, b);
  const auto ma = read_file(a / "metrics.jsonl");
  EXPECT_FALSE(ma.empty());
  EXPECT_EQ(ma, read_file(b / "metrics.jsonl"));
  EXPECT_EQ(read_file(a / "checkpoints/final/manifest.json"),
            read_file(b / "checkpoints/final/manifest.json"));
  EXPECT_EQ(read_file(a / "config.resolved"), read_file(b / "config.resolved"));
}

TEST(PretrainTest, MetricStreamMonotoneWithMandatoryKeys) {
  const auto out = pretrained().parent_path().parent_path();
  const auto records = read_jsonl(out / "metrics.jsonl");
  ASSERT_FALSE(records.empty());
  int64_t last = -1;
  for (const auto& r : records) {
    EXPECT_GT(r.at("step").get<int64_t>(), last);
    last = r.at("step").get<int64_t>();
    EXPECT_TRUE(r.contains("wall_time"));
    EXPECT_EQ(r.at("phase"), "pretrain");
  }
  EXPECT_TRUE(records.back().contains("jsd_bound"));
  EXPECT_TRUE(records.back().contains("dads_nll"));
  EXPECT_TRUE(records.back().contains("critic_loss"));
}

TEST(PretrainTest, RejectsTransferPhase) {
  EXPECT_THROW(pretrain(tiny("gcrl"), fresh_dir("wrong_phase")), ConfigError);
}

TEST(TransferTest, PrimitivesFrozenAndBitIdentical) {
  auto c = tiny("gcrl");
  const auto out = fresh_dir("gcrl_frozen");
  const auto res = transfer_gcrl(c, pretrained(), out);
  const auto source = load_policy(pretrained());
  const auto target = load_policy(res.checkpoint);
  EXPECT_EQ(target.checkpoint.phase, Phase::kGcrl);
  EXPECT_EQ(source.policy->primitives()->checksum(), target.policy->primitives()->checksum());
  EXPECT_EQ(source.checkpoint.meta["primitive_checksum"],
            target.checkpoint.meta["primitive_checksum"]);
  torch::manual_seed(5);
  auto feature = torch::randn({8, source.meta.feature_dim});
  auto [m0, s0] = source.policy->primitives()->forward(feature);
  auto [m1, s1] = target.policy->primitives()->forward(feature);
  EXPECT_TRUE(torch::equal(m0, m1));
  EXPECT_TRUE(torch::equal(s0, s1));
  EXPECT_EQ(target.meta.cond.kind, CondKind::kGoalTask);

  const auto records = read_jsonl(out / "metrics.jsonl");
  ASSERT_FALSE(records.empty());
  EXPECT_TRUE(records.back().contains("success"));
}

TEST(TransferTest, RefusesNonPretrainCheckpoint) {
  auto c = tiny("gcrl");
  c.run.steps = 0;
  const auto first = transfer_gcrl(c, std::nullopt, fresh_dir("gcrl_src"));
  EXPECT_THROW(transfer_gcrl(c, first.checkpoint, fresh_dir("gcrl_wrong")), LoadError);
}

TEST(TransferTest, ShapeMismatchIsLoadError) {
  auto c = tiny("gcrl");
  c.policy.n_primitives = 6;
  EXPECT_THROW(transfer_gcrl(c, pretrained(), fresh_dir("gcrl_mismatch")), LoadError);
  c = tiny("gcrl");
  c.env.multi_object = true;
  EXPECT_THROW(transfer_gcrl(c, pretrained(), fresh_dir("gcrl_mismatch2")), LoadError);
}

TEST(TransferTest, FourObjectPretrainTransfersToSixObjects) {
  auto pc = tiny("pretrain");
  pc.env.n_objects = 4;
  pc.env.multi_object = true;
  pc.run.steps = 400;
  const auto pre = pretrain(pc, fresh_dir("multi4"));
  EXPECT_TRUE(load_checkpoint(pre.checkpoint).has_blob("encoder"));

  auto gc = tiny("gcrl");
  gc.env.n_objects = 6;
  gc.env.multi_object = true;
  const auto res = transfer_gcrl(gc, pre.checkpoint, fresh_dir("multi6"));
  EXPECT_GT(res.updates, 0);
  const auto a = load_policy(pre.checkpoint);
  const auto b = load_policy(res.checkpoint);
  const auto pa = a.encoder->parameters();
  const auto pb = b.encoder->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}

std::vector<json> loss_fields(const fs::path& metrics) {
  std::vector<json> out;
  for (auto r : read_jsonl(metrics)) {
    r.erase("phase");
    out.push_back(r);
  }
  return out;
}

TEST(TransferTest, SingleTaskMtrlMatchesGcrl) {
  const auto g = fresh_dir("k1_gcrl");
  const auto m = fresh_dir("k1_mtrl");
  transfer_gcrl(tiny("gcrl"), pretrained(), g);
  transfer_mtrl(tiny("mtrl"), pretrained(), m);
  const auto a = loss_fields(g / "metrics.jsonl");
  const auto b = loss_fields(m / "metrics.jsonl");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.back().contains("critic_loss"));
}

TEST(TransferTest, MultiTaskWithPushEmitsPerTaskSuccess) {
  auto c = tiny("mtrl");
  c.env.tasks = {"pick_place", "push"};
  const auto out = fresh_dir("mtrl_push");
  const auto res = transfer_mtrl(c, pretrained(), out);
  EXPECT_GT(res.updates, 0);
  int evals = 0;
  for (const auto& r : read_jsonl(out / "metrics.jsonl")) {
    if (!r.contains("success_per_task")) continue;
    ++evals;
    EXPECT_EQ(r["success_per_task"].size(), 2u);
    EXPECT_TRUE(r.contains("success_push"));
    EXPECT_TRUE(r.contains("success_pick_place"));
  }
  EXPECT_EQ(evals, 2);
  const auto loaded = load_policy(res.checkpoint);
  EXPECT_EQ(loaded.meta.n_tasks, 2);
  EXPECT_THROW(transfer_gcrl(c, pretrained(), fresh_dir("gcrl_two")), ConfigError);
}

TEST(TransferTest, ScratchTrainsEverything) {
  auto c = tiny("gcrl");
  const auto res = transfer_gcrl(c, std::nullopt, fresh_dir("scratch"));
  EXPECT_GT(res.updates, 0);
  const auto loaded = load_policy(res.checkpoint);
  EXPECT_FALSE(loaded.policy->primitives()->frozen());
}

TEST(HelpersTest, FirstStepReaching) {
  std::vector<json> recs{{{"step", 10}, {"success", 0.2}},
                         {{"step", 20}},
                         {{"step", 30}, {"success", 0.9}}};
  EXPECT_EQ(first_step_reaching(recs, "success", 0.5), 30);
  EXPECT_FALSE(first_step_reaching(recs, "success", 0.95).has_value());
}

TEST(HelpersTest, OnPolicySampleShapes) {
  const auto loaded = load_policy(pretrained());
  const auto s = on_policy_sample(loaded, 120, 3);
  EXPECT_EQ(s.features.size(0), 120);
  EXPECT_EQ(s.cond.size(1), 2);
  EXPECT_EQ(s.actions.size(1), kActionDim);
  const auto t = skill_trajectories(loaded, 3, 1, ActMode::kSample);
  EXPECT_EQ(t.trajectories.size(), 3u);
  EXPECT_NO_THROW(t.validate());
}

}  // namespace
}  // namespace skilldisc
