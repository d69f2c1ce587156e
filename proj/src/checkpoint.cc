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

#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

namespace skilldisc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptionError("missing checkpoint file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

const std::string& Checkpoint::blob(const std::string& name) const {
  auto it = blobs.find(name);
  if (it == blobs.end()) throw CorruptionError("checkpoint has no '" + name + "' blob");
  return it->second;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["version"] = checkpoint.version;
  manifest["phase"] = std::string(phase_name(checkpoint.phase));
  manifest["config_hash"] = checkpoint.config_hash;
  manifest["step"] = checkpoint.step;
  manifest["meta"] = checkpoint.meta;
  manifest["config"] = checkpoint.config;
  json blobs = json::object();
  for (const auto& [name, bytes] : checkpoint.blobs) {
    write_file(dir / (name + ".bin"), bytes);
    blobs[name] = {{"sha256", sha256_hex(bytes)}, {"size", bytes.size()}};
  }
  manifest["blobs"] = blobs;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw LoadError("no checkpoint manifest at " + manifest_path.string());
  }
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptionError("unreadable manifest " + manifest_path.string() + ": " + e.what());
  }
  Checkpoint c;
  try {
    c.version = manifest.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw MigrationError("checkpoint version " + std::to_string(c.version) +
                           " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    try {
      c.phase = parse_phase(manifest.at("phase").get<std::string>());
    } catch (const ConfigError& e) {
      throw CorruptionError(std::string("manifest phase: ") + e.what());
    }
    c.config_hash = manifest.at("config_hash").get<std::string>();
    c.step = manifest.at("step").get<int64_t>();
    c.meta = manifest.at("meta");
    c.config = manifest.at("config");
    for (const auto& [name, entry] : manifest.at("blobs").items()) {
      std::string bytes = read_file(dir / (name + ".bin"));
      if (bytes.size() != entry.at("size").get<std::size_t>()) {
        throw CorruptionError("blob '" + name + "' has " + std::to_string(bytes.size()) +
                              " bytes, manifest says " +
                              std::to_string(entry.at("size").get<std::size_t>()));
      }
      if (sha256_hex(bytes) != entry.at("sha256").get<std::string>()) {
        throw CorruptionError("blob '" + name + "' fails its hash check");
      }
      c.blobs.emplace(name, std::move(bytes));
    }
  } catch (const json::exception& e) {
    throw CorruptionError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  return c;
}

void require_phase(const Checkpoint& checkpoint, Phase expected) {
  if (checkpoint.phase != expected) {
    throw LoadError("checkpoint phase is " + std::string(phase_name(checkpoint.phase)) +
                    ", expected " + std::string(phase_name(expected)));
  }
}

std::string rng_state(const std::mt19937_64& rng, const at::Generator& gen) {
  std::ostringstream mt;
  mt << rng;
  auto state = gen.get_state().contiguous();
  const auto* p = state.data_ptr<uint8_t>();
  std::vector<uint8_t> bytes(p, p + state.numel());
  return nlohmann::json{{"mt19937_64", mt.str()}, {"torch", bytes}}.dump();
}

void restore_rng(const std::string& state, std::mt19937_64& rng, at::Generator& gen) {
  std::vector<uint8_t> bytes;
  std::string mt_text;
  try {
    const auto j = nlohmann::json::parse(state);
    mt_text = j.at("mt19937_64").get<std::string>();
    bytes = j.at("torch").get<std::vector<uint8_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("rng state: ") + e.what());
  }
  std::istringstream in(mt_text);
  std::mt19937_64 restored;
  in >> restored;
  if (in.fail()) throw CorruptionError("rng state: malformed sampler state");
  auto t = torch::empty({static_cast<int64_t>(bytes.size())}, torch::kUInt8);
  std::copy(bytes.begin(), bytes.end(), t.data_ptr<uint8_t>());
  try {
    gen.set_state(t);
  } catch (const c10::Error& e) {
    throw CorruptionError(std::string("rng state: ") + e.what_without_backtrace());
  }
  rng = restored;
}

}  // namespace skilldisc
