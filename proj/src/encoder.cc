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

#include "skilldisc/encoder.h"

#include <cmath>
#include <string>

namespace skilldisc {

void EncoderConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || model_width < 1 || mlp_width < 1) {
    throw ConfigError("encoder sizes must be positive");
  }
  if (model_width % n_heads != 0) {
    throw ConfigError("encoder model_width must be divisible by n_heads");
  }
  if (max_objects < 1 || max_objects > kMaxObjects) {
    throw ConfigError("encoder max_objects out of range");
  }
}

int token_width(int max_objects) {
  return kRobotBlockWidth + kObjectBlockWidth + 2 * max_objects;
}

torch::Tensor tokenize(const Observation& obs, std::span<const float> intention) {
  const auto& layout = obs.layout;
  if (static_cast<int>(intention.size()) != layout.indicator_width) {
    throw ValidationError("intention length " + std::to_string(intention.size()) +
                          " != max_objects " +
                          std::to_string(layout.indicator_width));
  }
  one_hot_index(intention);
  const int n = layout.n_objects;
  const int width = token_width(layout.indicator_width);
  auto tokens = torch::empty({n, width});
  auto acc = tokens.accessor<float, 2>();
  for (int i = 0; i < n; ++i) {
    int c = 0;
    for (float v : obs.robot_block) acc[i][c++] = v;
    for (float v : obs.object_blocks[static_cast<std::size_t>(i)]) acc[i][c++] = v;
    for (float v : obs.indicator_blocks[static_cast<std::size_t>(i)]) {
      acc[i][c++] = v;
    }
    for (float v : intention) acc[i][c++] = v;
  }
  return tokens;
}

torch::Tensor tokenize_batch(const torch::Tensor& flat,
                             const LayoutManifest& layout,
                             const torch::Tensor& intention) {
  const int64_t b = flat.size(0);
  const int n = layout.n_objects;
  auto robot = flat.narrow(1, layout.robot_offset, layout.robot_width)
                   .unsqueeze(1)
                   .expand({b, n, layout.robot_width});
  auto objects = flat.narrow(1, layout.objects_offset, n * layout.object_width)
                     .reshape({b, n, layout.object_width});
  auto indicators =
      flat.narrow(1, layout.indicators_offset, n * layout.indicator_width)
          .reshape({b, n, layout.indicator_width});
  auto w = intention.unsqueeze(1).expand({b, n, intention.size(1)});
  return torch::cat({robot, objects, indicators, w}, 2);
}

AttentionBlockImpl::AttentionBlockImpl(const EncoderConfig& config)
    : heads_(config.n_heads), width_(config.model_width) {
  const int d = config.model_width;
  attn_norm_ = register_module(
      "attn_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  mlp_norm_ = register_module(
      "mlp_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  qkv_ = register_module("qkv", torch::nn::Linear(d, 3 * d));
  out_ = register_module("out", torch::nn::Linear(d, d));
  mlp_ = register_module(
      "mlp", torch::nn::Sequential(torch::nn::Linear(d, config.mlp_width),
                                   torch::nn::ReLU(),
                                   torch::nn::Linear(config.mlp_width, d)));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x) {
  const int64_t b = x.size(0);
  const int64_t n = x.size(1);
  const int64_t head_width = width_ / heads_;
  auto qkv = qkv_->forward(attn_norm_->forward(x))
                 .reshape({b, n, 3, heads_, head_width})
                 .permute({2, 0, 3, 1, 4});  // [3, B, H, n, hw]
  auto q = qkv[0];
  auto k = qkv[1];
  auto v = qkv[2];
  auto scores = torch::matmul(q, k.transpose(-2, -1)) /
                std::sqrt(static_cast<double>(head_width));
  auto attended = torch::matmul(torch::softmax(scores, -1), v)
                      .permute({0, 2, 1, 3})
                      .reshape({b, n, width_});
  auto h = x + out_->forward(attended);
  return h + mlp_->forward(mlp_norm_->forward(h));
}

SetEncoderImpl::SetEncoderImpl(const EncoderConfig& config) : config_(config) {
  config.validate();
  embed_ = register_module(
      "embed", torch::nn::Linear(token_width(config.max_objects),
                                 config.model_width));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < config.n_layers; ++i) {
    blocks_->push_back(AttentionBlock(config));
  }
}

torch::Tensor SetEncoderImpl::token_outputs(const torch::Tensor& tokens) {
  auto x = tokens.dim() == 2 ? tokens.unsqueeze(0) : tokens;
  if (x.size(1) == 0) throw ValidationError("empty token set");
  x = embed_->forward(x);
  for (const auto& block : *blocks_) {
    x = block->as<AttentionBlock>()->forward(x);
  }
  return x;
}

torch::Tensor SetEncoderImpl::forward(const torch::Tensor& tokens) {
  auto pooled = token_outputs(tokens).mean(1);
  return tokens.dim() == 2 ? pooled.squeeze(0) : pooled;
}

torch::Tensor feature_for_policy(const Observation& obs,
                                 std::span<const float> intention,
                                 SetEncoder encoder) {
  if (!encoder) {
    auto flat = obs.flat();
    return torch::tensor(flat);
  }
  return encoder->forward(tokenize(obs, intention));
}

}  // namespace skilldisc
