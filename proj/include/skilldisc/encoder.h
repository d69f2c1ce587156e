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

#ifndef SKILLDISC_ENCODER_H_
#define SKILLDISC_ENCODER_H_

#include <torch/torch.h>

#include <span>

#include "skilldisc/env.h"

namespace skilldisc {

struct EncoderConfig {
  int n_layers = 2;
  int n_heads = 2;
  int model_width = 64;
  int mlp_width = 128;
  int max_objects = kMaxObjects;

  void validate() const;  // throws ConfigError
};

// robot block ++ object block ++ indicator ++ intention.
int token_width(int max_objects);

// One token per object, [n_objects, token_width]. No positional embedding.
// Throws ValidationError when `intention` is not one-hot of length
// layout.indicator_width.
torch::Tensor tokenize(const Observation& obs, std::span<const float> intention);

// Batched form over flat observations [B, layout.total] and one-hot
// intentions [B, max_objects]; returns [B, n_objects, token_width].
torch::Tensor tokenize_batch(const torch::Tensor& flat,
                             const LayoutManifest& layout,
                             const torch::Tensor& intention);

// Pre-normalization block: x + attn(ln(x)), then x + mlp(ln(x)).
class AttentionBlockImpl : public torch::nn::Module {
 public:
  explicit AttentionBlockImpl(const EncoderConfig& config);
  torch::Tensor forward(const torch::Tensor& x);  // [B, n, d]

 private:
  int heads_;
  int width_;
  torch::nn::LayerNorm attn_norm_{nullptr};
  torch::nn::LayerNorm mlp_norm_{nullptr};
  torch::nn::Linear qkv_{nullptr};
  torch::nn::Linear out_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(AttentionBlock);

// Maps a variable-size token set to a fixed-width feature by mean pooling
// the block outputs. Accepts [n, w] or [B, n, w].
class SetEncoderImpl : public torch::nn::Module {
 public:
  explicit SetEncoderImpl(const EncoderConfig& config);

  torch::Tensor forward(const torch::Tensor& tokens);
  // Per-token outputs before pooling, [B, n, d].
  torch::Tensor token_outputs(const torch::Tensor& tokens);

  const EncoderConfig& config() const { return config_; }
  int output_width() const { return config_.model_width; }

 private:
  EncoderConfig config_;
  torch::nn::Linear embed_{nullptr};
  torch::nn::ModuleList blocks_{nullptr};
};
TORCH_MODULE(SetEncoder);

// State feature consumed by primitives and gating: the flat observation in
// single-object mode (encoder empty), the pooled encoding otherwise.
torch::Tensor feature_for_policy(const Observation& obs,
                                 std::span<const float> intention,
                                 SetEncoder encoder);

}  // namespace skilldisc

#endif  // SKILLDISC_ENCODER_H_
