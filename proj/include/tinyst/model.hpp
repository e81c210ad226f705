/* tinyst - desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 tinyst contributors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tinyst/nn.hpp"
#include "tinyst/rng.hpp"
#include "tinyst/tensor.hpp"
#include "tinyst/vocab.hpp"

namespace tinyst {

enum class ModelKind { Speech, Text };
enum class TagMode { None, EncoderInput, DecoderInput };

// Architecture description. Parameter names and shapes are a pure
// function of this struct; two models with equal configs can exchange
// or average parameters tensor by tensor.
struct ModelConfig {
  ModelKind kind = ModelKind::Speech;
  long n_enc_layers = 2;
  long n_dec_layers = 2;
  long d_model = 16;
  long n_heads = 2;
  long d_ffn = 32;
  double dropout = 0.1;
  long conv_channels = 8;   // Speech only
  long n_features = 40;     // Speech only: mel bins of the input
  long vocab_size = 32;
  long ctc_layer = 0;       // 1-based encoder layer feeding CTC; 0 = no CTC head
  TagMode tag_mode = TagMode::None;
  // Tag embedding added before (true) or after (false) the positional
  // encoding when tag_mode == EncoderInput.
  bool tag_before_position = true;
  double distance_penalty_scale = 1.0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Flat named parameter collection; std::map keeps iteration order
// deterministic (sorted by name).
using ParamMap = std::map<std::string, Tensor>;

struct Checkpoint {
  ModelConfig config;
  ParamMap params;
  long step = 0;
  std::map<std::string, std::string> metadata;  // seed, loss, trained_with, ...
};

// (name, shape) for every parameter of the architecture, sorted by name.
std::vector<std::pair<std::string, std::vector<long>>> param_spec(
    const ModelConfig& config);

// Closed-form total parameter count; matches the param_spec enumeration.
long param_count(const ModelConfig& config);

// Deterministic initialization: each tensor is filled from a stream
// derived from `rng` and the parameter name, so values do not depend on
// enumeration order.
ParamMap init_params(const ModelConfig& config, const Rng& rng);

ParamMap zero_grads(const ModelConfig& config);

// Downsampled length after the two stride-2 convolutions.
long conv_output_length(long t);

// -scale * ln(1 + |i-j|) bias matrix for encoder self-attention.
Tensor distance_penalty_bias(long n, double scale);

// ---- forward / backward caches ----

struct EncLayerCache {
  nn::LayerNormCache ln1;
  nn::AttentionCache attn;
  nn::DropoutCache drop1;
  nn::LayerNormCache ln2;
  nn::FfnCache ffn;
  nn::DropoutCache drop2;
};

struct DecLayerCache {
  nn::LayerNormCache ln1;
  nn::AttentionCache self_attn;
  nn::DropoutCache drop1;
  nn::LayerNormCache ln2;
  nn::AttentionCache cross_attn;
  nn::DropoutCache drop2;
  nn::LayerNormCache ln3;
  nn::FfnCache ffn;
  nn::DropoutCache drop3;
};

struct SpeechEncoderCache {
  nn::ConvCache conv1, conv2;
  nn::LinearCache proj;
  nn::DropoutCache input_drop;
  std::vector<EncLayerCache> layers;
  nn::LayerNormCache final_ln;
  std::optional<Domain> tag;
  long t_in = 0;
};

struct TextEncoderCache {
  std::vector<int> tokens;
  nn::DropoutCache input_drop;
  std::vector<EncLayerCache> layers;
  nn::LayerNormCache final_ln;
};

struct DecoderCache {
  std::vector<int> tokens;
  nn::DropoutCache input_drop;
  std::vector<DecLayerCache> layers;
  nn::LayerNormCache final_ln;
  nn::LinearCache out;
  std::optional<Domain> tag;
  long memory_rows = 0;
};

struct CtcHeadCache {
  nn::LayerNormCache ln;
  nn::LinearCache proj;
};

struct SpeechEncodeOut {
  Tensor memory;      // [T', d_model]
  Tensor ctc_states;  // [T', d_model]; empty when config.ctc_layer == 0
};

// ---- forward passes ----

SpeechEncodeOut encode_speech(const Tensor& x, std::optional<Domain> tag,
                              const ParamMap& params, const ModelConfig& config,
                              Rng& rng, bool train_mode,
                              SpeechEncoderCache* cache = nullptr);

// Teacher-forced decoder pass: one logit row per input position.
Tensor decode_step(const std::vector<int>& prev_tokens, const Tensor& memory,
                   std::optional<Domain> tag, const ParamMap& params,
                   const ModelConfig& config, Rng& rng, bool train_mode,
                   DecoderCache* cache = nullptr);

Tensor encode_text(const std::vector<int>& tokens, const ParamMap& params,
                   const ModelConfig& config, Rng& rng, bool train_mode,
                   TextEncoderCache* cache = nullptr);

// CTC projection on the tapped encoder states; returns [T', vocab] logits.
Tensor ctc_head_forward(const Tensor& ctc_states, const ParamMap& params,
                        CtcHeadCache* cache = nullptr);

// ---- backward passes (accumulate into grads) ----

// d_ctc_states may be empty when no CTC branch contributed.
void speech_encoder_backward(const Tensor& d_memory, const Tensor& d_ctc_states,
                             const SpeechEncoderCache& cache, const ParamMap& params,
                             const ModelConfig& config, ParamMap& grads);

// Returns the gradient w.r.t. the encoder memory.
Tensor decoder_backward(const Tensor& d_logits, const DecoderCache& cache,
                        const ParamMap& params, const ModelConfig& config,
                        ParamMap& grads);

void text_encoder_backward(const Tensor& d_memory, const TextEncoderCache& cache,
                           const ParamMap& params, const ModelConfig& config,
                           ParamMap& grads);

Tensor ctc_head_backward(const Tensor& d_logits, const CtcHeadCache& cache,
                         const ParamMap& params, ParamMap& grads);

// ---- parameter transfer ----

// Copies the conv front-end, projection and encoder layers
// 1..asr_config.n_enc_layers from `asr_params` into a copy of
// `st_params`; everything else keeps its fresh initialization.
ParamMap init_from_asr(const ParamMap& st_params, const ParamMap& asr_params,
                       const ModelConfig& st_config, const ModelConfig& asr_config);

// Optional decoder transfer from a text (MT) model: decoder layers
// 1..n_dec_layers, final decoder norm, target embedding and output
// projection.
ParamMap transfer_decoder(const ParamMap& st_params, const ParamMap& mt_params,
                          const ModelConfig& st_config, const ModelConfig& mt_config);

// ---- checkpoint container ----

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tinyst
