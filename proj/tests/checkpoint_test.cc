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

#include "skilldisc/checkpoint.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "skilldisc/nn.h"
#include "skilldisc/policy.h"

namespace skilldisc {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

McpPolicy small_policy() {
  PolicyConfig pc;
  pc.n_primitives = 3;
  pc.hidden = 16;
  return McpPolicy(7, CondSpec::skill(), pc);
}

Checkpoint policy_checkpoint(McpPolicy& policy) {
  Checkpoint c;
  c.phase = Phase::kPretrain;
  c.config_hash = "abc";
  c.step = 12;
  c.config = {{"phase", "pretrain"}};
  c.meta = {{"feature_dim", 7}};
  c.blobs["policy"] = nn::to_bytes(*policy);
  return c;
}

TEST(CheckpointTest, ForwardBitIdenticalAfterRoundTrip) {
  torch::manual_seed(0);
  auto policy = small_policy();
  const auto dir = fresh_dir("skilldisc_ckpt_forward");
  save_checkpoint(policy_checkpoint(policy), dir);

  torch::manual_seed(99);
  auto restored = small_policy();
  const auto c = load_checkpoint(dir);
  EXPECT_EQ(c.step, 12);
  EXPECT_EQ(c.phase, Phase::kPretrain);
  EXPECT_EQ(c.config_hash, "abc");
  nn::from_bytes(*restored, c.blob("policy"));

  auto feature = torch::randn({5, 7});
  auto cond = torch::rand({5, 2}) * 2 - 1;
  auto a = policy->distribution(feature, cond);
  auto b = restored->distribution(feature, cond);
  EXPECT_TRUE(torch::equal(a.mean, b.mean));
  EXPECT_TRUE(torch::equal(a.std, b.std));
  EXPECT_EQ(policy->primitives()->checksum(), restored->primitives()->checksum());
  fs::remove_all(dir);
}

TEST(CheckpointTest, RngStreamsRestored) {
  std::mt19937_64 rng(5);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(6);
  rng();
  torch::rand({3}, gen);
  const auto state = rng_state(rng, gen);

  Checkpoint c;
  c.blobs["rng"] = state;
  const auto dir = fresh_dir("skilldisc_ckpt_rng");
  save_checkpoint(c, dir);
  const auto expected_mt = rng();
  const auto expected_torch = torch::rand({4}, gen);

  std::mt19937_64 rng2;
  auto gen2 = at::make_generator<at::CPUGeneratorImpl>(0);
  restore_rng(load_checkpoint(dir).blob("rng"), rng2, gen2);
  EXPECT_EQ(rng2(), expected_mt);
  EXPECT_TRUE(torch::equal(torch::rand({4}, gen2), expected_torch));
  EXPECT_THROW(restore_rng("{}", rng2, gen2), CorruptionError);
  fs::remove_all(dir);
}

TEST(CheckpointTest, TruncatedBlobIsCorruption) {
  auto policy = small_policy();
  const auto dir = fresh_dir("skilldisc_ckpt_trunc");
  save_checkpoint(policy_checkpoint(policy), dir);
  const auto blob = dir / "policy.bin";
  fs::resize_file(blob, fs::file_size(blob) / 2);
  EXPECT_THROW(load_checkpoint(dir), CorruptionError);
  fs::remove_all(dir);
}

TEST(CheckpointTest, FlippedByteIsCorruption) {
  auto policy = small_policy();
  const auto dir = fresh_dir("skilldisc_ckpt_flip");
  save_checkpoint(policy_checkpoint(policy), dir);
  {
    std::fstream f(dir / "policy.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(10);
    char ch;
    f.get(ch);
    f.seekp(10);
    f.put(static_cast<char>(ch ^ 0x5a));
  }
  EXPECT_THROW(load_checkpoint(dir), CorruptionError);
  fs::remove(dir / "policy.bin");
  EXPECT_THROW(load_checkpoint(dir), CorruptionError);
  fs::remove_all(dir);
}

TEST(CheckpointTest, VersionMismatchIsMigration) {
  auto policy = small_policy();
  const auto dir = fresh_dir("skilldisc_ckpt_version");
  auto c = policy_checkpoint(policy);
  c.version = kCheckpointVersion + 1;
  save_checkpoint(c, dir);
  EXPECT_THROW(load_checkpoint(dir), MigrationError);
  fs::remove_all(dir);
}

TEST(CheckpointTest, MissingManifestIsLoadError) {
  const auto dir = fresh_dir("skilldisc_ckpt_missing");
  fs::create_directories(dir);
  EXPECT_THROW(load_checkpoint(dir), LoadError);
  std::ofstream(dir / "manifest.json") << "{broken";
  EXPECT_THROW(load_checkpoint(dir), CorruptionError);
  fs::remove_all(dir);
}

TEST(CheckpointTest, PhaseGate) {
  Checkpoint c;
  c.phase = Phase::kGcrl;
  EXPECT_THROW(require_phase(c, Phase::kPretrain), LoadError);
  EXPECT_NO_THROW(require_phase(c, Phase::kGcrl));
  EXPECT_THROW(c.blob("policy"), CorruptionError);
}

}  // namespace
}  // namespace skilldisc
