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

#ifndef SKILLDISC_NN_H_
#define SKILLDISC_NN_H_

#include <torch/torch.h>

#include <string>
#include <vector>

namespace skilldisc::nn {

// in -> [hidden]*layers -> out, ReLU between layers.
torch::nn::Sequential mlp(int in, int hidden, int layers, int out);

// Last Linear layer of a Sequential built by mlp().
torch::nn::Linear last_linear(const torch::nn::Sequential& net);

// SHA-256 over the raw bytes of the given tensors, in order.
std::string checksum(const std::vector<torch::Tensor>& tensors);

// Serialized module parameters and buffers.
std::string to_bytes(torch::nn::Module& module);
void from_bytes(torch::nn::Module& module, const std::string& bytes);

// target <- (1 - tau) * target + tau * source, parameter-wise.
void polyak_update(torch::nn::Module& target, const torch::nn::Module& source,
                   double tau);
void hard_copy(torch::nn::Module& target, const torch::nn::Module& source);

std::vector<torch::Tensor> trainable(const std::vector<torch::Tensor>& params);

}  // namespace skilldisc::nn

#endif  // SKILLDISC_NN_H_
