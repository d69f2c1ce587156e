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

#ifndef SKILLDISC_CHECKPOINT_H_
#define SKILLDISC_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "json.hpp"
#include "skilldisc/sac.h"

namespace skilldisc {

inline constexpr int kCheckpointVersion = 1;

// On disk: manifest.json plus one <name>.bin file per blob. The manifest
// records the SHA-256 and size of every blob.
struct Checkpoint {
  int version = kCheckpointVersion;
  Phase phase = Phase::kPretrain;
  std::string config_hash;
  int64_t step = 0;
  nlohmann::json config;  // resolved experiment config
  nlohmann::json meta;    // shapes needed to rebuild the modules
  std::map<std::string, std::string> blobs;

  bool has_blob(const std::string& name) const { return blobs.count(name) > 0; }
  // Throws CorruptionError when absent.
  const std::string& blob(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);

// Verifies every blob against the manifest. Missing or unreadable manifest:
// LoadError; hash or size mismatch: CorruptionError; other versions:
// MigrationError.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Serialized sampler and torch generator states, stored as the "rng" blob.
std::string rng_state(const std::mt19937_64& rng, const at::Generator& gen);
// Inverse of rng_state. Throws CorruptionError on malformed input.
void restore_rng(const std::string& state, std::mt19937_64& rng, at::Generator& gen);

// Throws LoadError unless the checkpoint was written by `expected`.
void require_phase(const Checkpoint& checkpoint, Phase expected);

}  // namespace skilldisc

#endif  // SKILLDISC_CHECKPOINT_H_
