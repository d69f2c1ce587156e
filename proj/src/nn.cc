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

#include "skilldisc/nn.h"

#include <sstream>

#include "skilldisc/common.h"

namespace skilldisc::nn {

torch::nn::Sequential mlp(int in, int hidden, int layers, int out) {
  torch::nn::Sequential net;
  int width = in;
  for (int i = 0; i < layers; ++i) {
    net->push_back(torch::nn::Linear(width, hidden));
    net->push_back(torch::nn::ReLU());
    width = hidden;
  }
  net->push_back(torch::nn::Linear(width, out));
  return net;
}

torch::nn::Linear last_linear(const torch::nn::Sequential& net) {
  auto impl = std::dynamic_pointer_cast<torch::nn::LinearImpl>(
      net->ptr(net->size() - 1));
  if (!impl) throw Error("last layer is not Linear");
  return torch::nn::Linear(impl);
}

std::string checksum(const std::vector<torch::Tensor>& tensors) {
  std::string bytes;
  for (const auto& t : tensors) {
    auto c = t.detach().contiguous().cpu();
    bytes.append(static_cast<const char*>(c.data_ptr()), c.nbytes());
  }
  return sha256_hex(bytes);
}

std::string to_bytes(torch::nn::Module& module) {
  torch::serialize::OutputArchive archive;
  module.save(archive);
  std::ostringstream out(std::ios::binary);
  archive.save_to(out);
  return out.str();
}

void from_bytes(torch::nn::Module& module, const std::string& bytes) {
  torch::serialize::InputArchive archive;
  std::istringstream in(bytes, std::ios::binary);
  try {
    archive.load_from(in);
    module.load(archive);
  } catch (const c10::Error& e) {
    throw CorruptionError(std::string("cannot deserialize parameters: ") +
                          e.what_without_backtrace());
  }
}

void polyak_update(torch::nn::Module& target, const torch::nn::Module& source,
                   double tau) {
  torch::NoGradGuard no_grad;
  auto tp = target.parameters();
  auto sp = source.parameters();
  for (std::size_t i = 0; i < tp.size(); ++i) {
    tp[i].mul_(1.0 - tau).add_(sp[i], tau);
  }
}

void hard_copy(torch::nn::Module& target, const torch::nn::Module& source) {
  torch::NoGradGuard no_grad;
  auto tp = target.parameters();
  auto sp = source.parameters();
  for (std::size_t i = 0; i < tp.size(); ++i) tp[i].copy_(sp[i]);
}

std::vector<torch::Tensor> trainable(const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> out;
  for (const auto& p : params) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

}  // namespace skilldisc::nn
