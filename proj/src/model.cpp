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

#include "tinyst/model.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "tinyst/binio.hpp"
#include "tinyst/error.hpp"

namespace tinyst {

namespace {

const Tensor kNoBias;

const Tensor& P(const ParamMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw DataError("missing parameter: " + name);
  return it->second;
}

Tensor& G(ParamMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw DataError("missing gradient slot: " + name);
  return it->second;
}

nn::AttentionParams attn_params(const ParamMap& m, const std::string& prefix) {
  return {&P(m, prefix + "wq"), &P(m, prefix + "bq"), &P(m, prefix + "wk"),
          &P(m, prefix + "bk"), &P(m, prefix + "wv"), &P(m, prefix + "bv"),
          &P(m, prefix + "wo"), &P(m, prefix + "bo")};
}

nn::AttentionGrads attn_grads(ParamMap& m, const std::string& prefix) {
  return {&G(m, prefix + "wq"), &G(m, prefix + "bq"), &G(m, prefix + "wk"),
          &G(m, prefix + "bk"), &G(m, prefix + "wv"), &G(m, prefix + "bv"),
          &G(m, prefix + "wo"), &G(m, prefix + "bo")};
}

const std::vector<std::string>& attn_suffixes() {
  static const std::vector<std::string> s = {"wq", "bq", "wk", "bk",
                                             "wv", "bv", "wo", "bo"};
  return s;
}

std::vector<std::string> enc_layer_names(const std::string& prefix) {
  std::vector<std::string> names = {prefix + "ln1.g", prefix + "ln1.b",
                                    prefix + "ln2.g", prefix + "ln2.b",
                                    prefix + "ffn.w1", prefix + "ffn.b1",
                                    prefix + "ffn.w2", prefix + "ffn.b2"};
  for (const auto& s : attn_suffixes()) names.push_back(prefix + "attn." + s);
  return names;
}

std::vector<std::string> dec_layer_names(const std::string& prefix) {
  std::vector<std::string> names = {prefix + "ln1.g", prefix + "ln1.b",
                                    prefix + "ln2.g", prefix + "ln2.b",
                                    prefix + "ln3.g", prefix + "ln3.b",
                                    prefix + "ffn.w1", prefix + "ffn.b1",
                                    prefix + "ffn.w2", prefix + "ffn.b2"};
  for (const auto& s : attn_suffixes()) {
    names.push_back(prefix + "self." + s);
    names.push_back(prefix + "cross." + s);
  }
  return names;
}

void add_rows(Tensor& h, const Tensor& table, long row) {
  for (long i = 0; i < h.dim(0); ++i)
    for (long j = 0; j < h.dim(1); ++j) h.at(i, j) += table.at(row, j);
}

void accumulate_row(const Tensor& dh, Tensor& dtable, long row) {
  for (long i = 0; i < dh.dim(0); ++i)
    for (long j = 0; j < dh.dim(1); ++j) dtable.at(row, j) += dh.at(i, j);
}

void add_positions(Tensor& h) {
  Tensor pe = nn::sinusoidal_positions(h.dim(0), h.dim(1));
  h += pe;
}

Tensor enc_layer_forward(const Tensor& x, const std::string& prefix,
                         const ParamMap& p, const ModelConfig& cfg,
                         const Tensor& bias, Rng& rng, bool train,
                         EncLayerCache* c) {
  Tensor h = nn::layer_norm_forward(x, P(p, prefix + "ln1.g"),
                                    P(p, prefix + "ln1.b"), c ? &c->ln1 : nullptr);
  Tensor a = nn::attention_forward(h, h, attn_params(p, prefix + "attn."),
                                   cfg.n_heads, bias, false, c ? &c->attn : nullptr);
  a = nn::dropout_forward(a, cfg.dropout, train, rng, c ? &c->drop1 : nullptr);
  Tensor x1 = x;
  x1 += a;
  Tensor h2 = nn::layer_norm_forward(x1, P(p, prefix + "ln2.g"),
                                     P(p, prefix + "ln2.b"), c ? &c->ln2 : nullptr);
  Tensor f = nn::ffn_forward(h2, P(p, prefix + "ffn.w1"), P(p, prefix + "ffn.b1"),
                             P(p, prefix + "ffn.w2"), P(p, prefix + "ffn.b2"),
                             c ? &c->ffn : nullptr);
  f = nn::dropout_forward(f, cfg.dropout, train, rng, c ? &c->drop2 : nullptr);
  x1 += f;
  return x1;
}

Tensor enc_layer_backward(const Tensor& dy, const std::string& prefix,
                          const EncLayerCache& c, const ParamMap& p,
                          const ModelConfig& cfg, ParamMap& g) {
  Tensor t = nn::dropout_backward(dy, c.drop2);
  Tensor u = nn::ffn_backward(t, c.ffn, P(p, prefix + "ffn.w1"),
                              P(p, prefix + "ffn.w2"), G(g, prefix + "ffn.w1"),
                              G(g, prefix + "ffn.b1"), G(g, prefix + "ffn.w2"),
                              G(g, prefix + "ffn.b2"));
  Tensor dh = nn::layer_norm_backward(u, c.ln2, P(p, prefix + "ln2.g"),
                                      G(g, prefix + "ln2.g"), G(g, prefix + "ln2.b"));
  dh += dy;
  Tensor t2 = nn::dropout_backward(dh, c.drop1);
  Tensor dxq, dxkv;
  nn::attention_backward(t2, c.attn, attn_params(p, prefix + "attn."), cfg.n_heads,
                         attn_grads(g, prefix + "attn."), dxq, dxkv);
  dxq += dxkv;
  Tensor dx = nn::layer_norm_backward(dxq, c.ln1, P(p, prefix + "ln1.g"),
                                      G(g, prefix + "ln1.g"), G(g, prefix + "ln1.b"));
  dx += dh;
  return dx;
}

Tensor dec_layer_forward(const Tensor& x, const Tensor& memory,
                         const std::string& prefix, const ParamMap& p,
                         const ModelConfig& cfg, Rng& rng, bool train,
                         DecLayerCache* c) {
  Tensor h = nn::layer_norm_forward(x, P(p, prefix + "ln1.g"),
                                    P(p, prefix + "ln1.b"), c ? &c->ln1 : nullptr);
  Tensor a = nn::attention_forward(h, h, attn_params(p, prefix + "self."),
                                   cfg.n_heads, kNoBias, true,
                                   c ? &c->self_attn : nullptr);
  a = nn::dropout_forward(a, cfg.dropout, train, rng, c ? &c->drop1 : nullptr);
  Tensor x1 = x;
  x1 += a;
  Tensor h2 = nn::layer_norm_forward(x1, P(p, prefix + "ln2.g"),
                                     P(p, prefix + "ln2.b"), c ? &c->ln2 : nullptr);
  Tensor cr = nn::attention_forward(h2, memory, attn_params(p, prefix + "cross."),
                                    cfg.n_heads, kNoBias, false,
                                    c ? &c->cross_attn : nullptr);
  cr = nn::dropout_forward(cr, cfg.dropout, train, rng, c ? &c->drop2 : nullptr);
  x1 += cr;
  Tensor h3 = nn::layer_norm_forward(x1, P(p, prefix + "ln3.g"),
                                     P(p, prefix + "ln3.b"), c ? &c->ln3 : nullptr);
  Tensor f = nn::ffn_forward(h3, P(p, prefix + "ffn.w1"), P(p, prefix + "ffn.b1"),
                             P(p, prefix + "ffn.w2"), P(p, prefix + "ffn.b2"),
                             c ? &c->ffn : nullptr);
  f = nn::dropout_forward(f, cfg.dropout, train, rng, c ? &c->drop3 : nullptr);
  x1 += f;
  return x1;
}

Tensor dec_layer_backward(const Tensor& dy, const std::string& prefix,
                          const DecLayerCache& c, const ParamMap& p,
                          const ModelConfig& cfg, ParamMap& g, Tensor& d_memory) {
  Tensor t = nn::dropout_backward(dy, c.drop3);
  Tensor u = nn::ffn_backward(t, c.ffn, P(p, prefix + "ffn.w1"),
                              P(p, prefix + "ffn.w2"), G(g, prefix + "ffn.w1"),
                              G(g, prefix + "ffn.b1"), G(g, prefix + "ffn.w2"),
                              G(g, prefix + "ffn.b2"));
  Tensor dx2 = nn::layer_norm_backward(u, c.ln3, P(p, prefix + "ln3.g"),
                                       G(g, prefix + "ln3.g"), G(g, prefix + "ln3.b"));
  dx2 += dy;
  Tensor t2 = nn::dropout_backward(dx2, c.drop2);
  Tensor dxq, dxkv;
  nn::attention_backward(t2, c.cross_attn, attn_params(p, prefix + "cross."),
                         cfg.n_heads, attn_grads(g, prefix + "cross."), dxq, dxkv);
  d_memory += dxkv;
  Tensor dx1 = nn::layer_norm_backward(dxq, c.ln2, P(p, prefix + "ln2.g"),
                                       G(g, prefix + "ln2.g"), G(g, prefix + "ln2.b"));
  dx1 += dx2;
  Tensor t3 = nn::dropout_backward(dx1, c.drop1);
  Tensor dq, dkv;
  nn::attention_backward(t3, c.self_attn, attn_params(p, prefix + "self."),
                         cfg.n_heads, attn_grads(g, prefix + "self."), dq, dkv);
  dq += dkv;
  Tensor dx = nn::layer_norm_backward(dq, c.ln1, P(p, prefix + "ln1.g"),
                                      G(g, prefix + "ln1.g"), G(g, prefix + "ln1.b"));
  dx += dx1;
  return dx;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || d_ffn < 1 || n_enc_layers < 1 ||
      n_dec_layers < 1 || vocab_size < 1)
    throw ConfigError("model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model must be divisible by n_heads");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must be in [0, 1)");
  if (ctc_layer < 0 || ctc_layer > n_enc_layers)
    throw ConfigError("ctc_layer out of range");
  if (ctc_layer > 0 && kind != ModelKind::Speech)
    throw ConfigError("ctc head requires a speech model");
  if (kind == ModelKind::Speech) {
    if (conv_channels < 1) throw ConfigError("conv_channels must be positive");
    if (n_features < 4) throw ConfigError("n_features must be at least 4");
  }
  if (distance_penalty_scale < 0.0)
    throw ConfigError("distance_penalty_scale must be non-negative");
}

long conv_output_length(long t) {
  long t1 = (t + 1) / 2;
  return (t1 + 1) / 2;
}

Tensor distance_penalty_bias(long n, double scale) {
  Tensor bias({n, n});
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      bias.at(i, j) = -scale * std::log1p(static_cast<double>(std::labs(i - j)));
  return bias;
}

std::vector<std::pair<std::string, std::vector<long>>> param_spec(
    const ModelConfig& config) {
  config.validate();
  const long d = config.d_model, f = config.d_ffn, v = config.vocab_size;
  std::vector<std::pair<std::string, std::vector<long>>> spec;
  auto add = [&spec](const std::string& name, std::vector<long> shape) {
    spec.emplace_back(name, std::move(shape));
  };

  add("embed.tgt", {v, d});
  add("embed.tag", {3, d});
  add("out.w", {v, d});
  add("out.b", {v});
  add("enc.ln.g", {d});
  add("enc.ln.b", {d});
  add("dec.ln.g", {d});
  add("dec.ln.b", {d});

  if (config.kind == ModelKind::Text) add("embed.src", {v, d});

  if (config.kind == ModelKind::Speech) {
    const long c = config.conv_channels;
    const long fp = conv_output_length(config.n_features);
    add("conv1.w", {c, 1, 3, 3});
    add("conv1.b", {c});
    add("conv2.w", {c, c, 3, 3});
    add("conv2.b", {c});
    add("proj.w", {d, c * fp});
    add("proj.b", {d});
    if (config.ctc_layer > 0) {
      add("ctc.ln.g", {d});
      add("ctc.ln.b", {d});
      add("ctc.w", {v, d});
      add("ctc.b", {v});
    }
  }

  auto add_attn = [&](const std::string& prefix) {
    for (const auto& s : attn_suffixes())
      add(prefix + s, s[0] == 'w' ? std::vector<long>{d, d} : std::vector<long>{d});
  };
  for (long l = 1; l <= config.n_enc_layers; ++l) {
    std::string pre = "enc." + std::to_string(l) + ".";
    add(pre + "ln1.g", {d});
    add(pre + "ln1.b", {d});
    add_attn(pre + "attn.");
    add(pre + "ln2.g", {d});
    add(pre + "ln2.b", {d});
    add(pre + "ffn.w1", {f, d});
    add(pre + "ffn.b1", {f});
    add(pre + "ffn.w2", {d, f});
    add(pre + "ffn.b2", {d});
  }
  for (long l = 1; l <= config.n_dec_layers; ++l) {
    std::string pre = "dec." + std::to_string(l) + ".";
    add(pre + "ln1.g", {d});
    add(pre + "ln1.b", {d});
    add_attn(pre + "self.");
    add(pre + "ln2.g", {d});
    add(pre + "ln2.b", {d});
    add_attn(pre + "cross.");
    add(pre + "ln3.g", {d});
    add(pre + "ln3.b", {d});
    add(pre + "ffn.w1", {f, d});
    add(pre + "ffn.b1", {f});
    add(pre + "ffn.w2", {d, f});
    add(pre + "ffn.b2", {d});
  }

  std::sort(spec.begin(), spec.end());
  return spec;
}

long param_count(const ModelConfig& config) {
  config.validate();
  const long d = config.d_model, f = config.d_ffn, v = config.vocab_size;
  const long attn = 4 * d * d + 4 * d;
  const long enc_layer = 4 * d + attn + 2 * d * f + f + d;
  const long dec_layer = 6 * d + 2 * attn + 2 * d * f + f + d;
  long n = v * d + 3 * d       // embed.tgt, embed.tag
           + v * d + v         // out
           + 4 * d             // enc.ln, dec.ln
           + config.n_enc_layers * enc_layer + config.n_dec_layers * dec_layer;
  if (config.kind == ModelKind::Text) n += v * d;  // embed.src
  if (config.kind == ModelKind::Speech) {
    const long c = config.conv_channels;
    const long fp = conv_output_length(config.n_features);
    n += 9 * c + c + 9 * c * c + c + d * c * fp + d;
    if (config.ctc_layer > 0) n += 2 * d + v * d + v;
  }
  return n;
}

ParamMap init_params(const ModelConfig& config, const Rng& rng) {
  ParamMap params;
  const double embed_std = std::pow(static_cast<double>(config.d_model), -0.5);
  for (const auto& [name, shape] : param_spec(config)) {
    Tensor t(shape);
    Rng sub = rng.derive(name);
    if (name.rfind("embed.", 0) == 0) {
      for (long i = 0; i < t.size(); ++i) t[i] = sub.gaussian(0.0, embed_std);
    } else if (shape.size() == 1) {
      if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0)
        t.fill(1.0);
      // biases and layer-norm shifts stay zero
    } else {
      long fan_in = shape.back();
      for (std::size_t i = 1; i + 1 < shape.size(); ++i)
        fan_in *= shape[i];  // conv kernels: C_in * kh * kw
      double a = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (long i = 0; i < t.size(); ++i) t[i] = sub.uniform(-a, a);
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

ParamMap zero_grads(const ModelConfig& config) {
  ParamMap grads;
  for (const auto& [name, shape] : param_spec(config)) grads.emplace(name, Tensor(shape));
  return grads;
}

SpeechEncodeOut encode_speech(const Tensor& x, std::optional<Domain> tag,
                              const ParamMap& params, const ModelConfig& config,
                              Rng& rng, bool train_mode, SpeechEncoderCache* cache) {
  if (config.kind != ModelKind::Speech)
    throw ConfigError("encode_speech requires a speech model");
  if (x.ndim() != 2) throw DataError("feature matrix must be 2-D");
  const long t_in = x.dim(0), f_in = x.dim(1);
  if (f_in != config.n_features)
    throw DataError("feature dimension " + std::to_string(f_in) +
                    " does not match model n_features " +
                    std::to_string(config.n_features));
  if (t_in < 4) throw DataError("input too short");

  Tensor c0({1, t_in, f_in});
  for (long t = 0; t < t_in; ++t)
    for (long j = 0; j < f_in; ++j) c0.at(0, t, j) = x.at(t, j);

  Tensor y1 = nn::conv3x3s2_forward(c0, P(params, "conv1.w"), P(params, "conv1.b"),
                                    cache ? &cache->conv1 : nullptr);
  Tensor y2 = nn::conv3x3s2_forward(y1, P(params, "conv2.w"), P(params, "conv2.b"),
                                    cache ? &cache->conv2 : nullptr);
  const long ch = y2.dim(0), tp = y2.dim(1), fp = y2.dim(2);

  Tensor flat({tp, ch * fp});
  for (long t = 0; t < tp; ++t)
    for (long c = 0; c < ch; ++c)
      for (long j = 0; j < fp; ++j) flat.at(t, c * fp + j) = y2.at(c, t, j);

  Tensor h = nn::linear_forward(flat, P(params, "proj.w"), P(params, "proj.b"),
                                cache ? &cache->proj : nullptr);

  const bool add_tag = tag.has_value() && config.tag_mode == TagMode::EncoderInput;
  if (add_tag && config.tag_before_position)
    add_rows(h, P(params, "embed.tag"), static_cast<long>(*tag));
  add_positions(h);
  if (add_tag && !config.tag_before_position)
    add_rows(h, P(params, "embed.tag"), static_cast<long>(*tag));

  h = nn::dropout_forward(h, config.dropout, train_mode, rng,
                          cache ? &cache->input_drop : nullptr);

  Tensor bias = distance_penalty_bias(tp, config.distance_penalty_scale);
  if (cache) cache->layers.resize(static_cast<std::size_t>(config.n_enc_layers));

  SpeechEncodeOut out;
  for (long l = 1; l <= config.n_enc_layers; ++l) {
    std::string pre = "enc." + std::to_string(l) + ".";
    h = enc_layer_forward(h, pre, params, config, bias, rng, train_mode,
                          cache ? &cache->layers[static_cast<std::size_t>(l - 1)]
                                : nullptr);
    if (l == config.ctc_layer) out.ctc_states = h;
  }
  out.memory = nn::layer_norm_forward(h, P(params, "enc.ln.g"), P(params, "enc.ln.b"),
                                      cache ? &cache->final_ln : nullptr);
  if (cache) {
    cache->tag = add_tag ? tag : std::nullopt;
    cache->t_in = t_in;
  }
  return out;
}

void speech_encoder_backward(const Tensor& d_memory, const Tensor& d_ctc_states,
                             const SpeechEncoderCache& cache, const ParamMap& params,
                             const ModelConfig& config, ParamMap& grads) {
  Tensor dx = nn::layer_norm_backward(d_memory, cache.final_ln, P(params, "enc.ln.g"),
                                      G(grads, "enc.ln.g"), G(grads, "enc.ln.b"));
  for (long l = config.n_enc_layers; l >= 1; --l) {
    if (l == config.ctc_layer && !d_ctc_states.empty()) dx += d_ctc_states;
    std::string pre = "enc." + std::to_string(l) + ".";
    dx = enc_layer_backward(dx, pre, cache.layers[static_cast<std::size_t>(l - 1)],
                            params, config, grads);
  }
  dx = nn::dropout_backward(dx, cache.input_drop);
  if (cache.tag.has_value())
    accumulate_row(dx, G(grads, "embed.tag"), static_cast<long>(*cache.tag));

  Tensor dflat = nn::linear_backward(dx, cache.proj, P(params, "proj.w"),
                                     G(grads, "proj.w"), G(grads, "proj.b"));
  const long ch = config.conv_channels;
  const long tp = dflat.dim(0), fp = dflat.dim(1) / ch;
  Tensor dy2({ch, tp, fp});
  for (long t = 0; t < tp; ++t)
    for (long c = 0; c < ch; ++c)
      for (long j = 0; j < fp; ++j) dy2.at(c, t, j) = dflat.at(t, c * fp + j);
  Tensor dy1 = nn::conv3x3s2_backward(dy2, cache.conv2, P(params, "conv2.w"),
                                      G(grads, "conv2.w"), G(grads, "conv2.b"));
  nn::conv3x3s2_backward(dy1, cache.conv1, P(params, "conv1.w"), G(grads, "conv1.w"),
                         G(grads, "conv1.b"));
}

Tensor decode_step(const std::vector<int>& prev_tokens, const Tensor& memory,
                   std::optional<Domain> tag, const ParamMap& params,
                   const ModelConfig& config, Rng& rng, bool train_mode,
                   DecoderCache* cache) {
  if (prev_tokens.empty() || prev_tokens.front() != Vocabulary::kBos)
    throw DataError("decoder input must begin with <bos>");
  if (memory.ndim() != 2 || memory.dim(0) < 1) throw DataError("empty memory");
  for (int id : prev_tokens)
    if (id < 0 || id >= config.vocab_size)
      throw DataError("token id " + std::to_string(id) + " out of range");

  const double scale = std::sqrt(static_cast<double>(config.d_model));
  Tensor h = nn::embedding_forward(prev_tokens, P(params, "embed.tgt"));
  h *= scale;
  const bool add_tag = tag.has_value() && config.tag_mode == TagMode::DecoderInput;
  if (add_tag) add_rows(h, P(params, "embed.tag"), static_cast<long>(*tag));
  add_positions(h);
  h = nn::dropout_forward(h, config.dropout, train_mode, rng,
                          cache ? &cache->input_drop : nullptr);

  if (cache) cache->layers.resize(static_cast<std::size_t>(config.n_dec_layers));
  for (long l = 1; l <= config.n_dec_layers; ++l) {
    std::string pre = "dec." + std::to_string(l) + ".";
    h = dec_layer_forward(h, memory, pre, params, config, rng, train_mode,
                          cache ? &cache->layers[static_cast<std::size_t>(l - 1)]
                                : nullptr);
  }
  h = nn::layer_norm_forward(h, P(params, "dec.ln.g"), P(params, "dec.ln.b"),
                             cache ? &cache->final_ln : nullptr);
  Tensor logits = nn::linear_forward(h, P(params, "out.w"), P(params, "out.b"),
                                     cache ? &cache->out : nullptr);
  if (cache) {
    cache->tokens = prev_tokens;
    cache->tag = add_tag ? tag : std::nullopt;
    cache->memory_rows = memory.dim(0);
  }
  return logits;
}

Tensor decoder_backward(const Tensor& d_logits, const DecoderCache& cache,
                        const ParamMap& params, const ModelConfig& config,
                        ParamMap& grads) {
  Tensor dh = nn::linear_backward(d_logits, cache.out, P(params, "out.w"),
                                  G(grads, "out.w"), G(grads, "out.b"));
  Tensor dx = nn::layer_norm_backward(dh, cache.final_ln, P(params, "dec.ln.g"),
                                      G(grads, "dec.ln.g"), G(grads, "dec.ln.b"));
  Tensor d_memory({cache.memory_rows, config.d_model});
  for (long l = config.n_dec_layers; l >= 1; --l) {
    std::string pre = "dec." + std::to_string(l) + ".";
    dx = dec_layer_backward(dx, pre, cache.layers[static_cast<std::size_t>(l - 1)],
                            params, config, grads, d_memory);
  }
  dx = nn::dropout_backward(dx, cache.input_drop);
  if (cache.tag.has_value())
    accumulate_row(dx, G(grads, "embed.tag"), static_cast<long>(*cache.tag));
  dx *= std::sqrt(static_cast<double>(config.d_model));
  nn::embedding_backward(dx, cache.tokens, G(grads, "embed.tgt"));
  return d_memory;
}

Tensor encode_text(const std::vector<int>& tokens, const ParamMap& params,
                   const ModelConfig& config, Rng& rng, bool train_mode,
                   TextEncoderCache* cache) {
  if (config.kind != ModelKind::Text)
    throw ConfigError("encode_text requires a text model");
  if (tokens.empty()) throw DataError("empty source");
  for (int id : tokens)
    if (id < 0 || id >= config.vocab_size)
      throw DataError("token id " + std::to_string(id) + " out of range");

  Tensor h = nn::embedding_forward(tokens, P(params, "embed.src"));
  h *= std::sqrt(static_cast<double>(config.d_model));
  add_positions(h);
  h = nn::dropout_forward(h, config.dropout, train_mode, rng,
                          cache ? &cache->input_drop : nullptr);
  if (cache) cache->layers.resize(static_cast<std::size_t>(config.n_enc_layers));
  for (long l = 1; l <= config.n_enc_layers; ++l) {
    std::string pre = "enc." + std::to_string(l) + ".";
    h = enc_layer_forward(h, pre, params, config, kNoBias, rng, train_mode,
                          cache ? &cache->layers[static_cast<std::size_t>(l - 1)]
                                : nullptr);
  }
  Tensor memory = nn::layer_norm_forward(h, P(params, "enc.ln.g"),
                                         P(params, "enc.ln.b"),
                                         cache ? &cache->final_ln : nullptr);
  if (cache) cache->tokens = tokens;
  return memory;
}

void text_encoder_backward(const Tensor& d_memory, const TextEncoderCache& cache,
                           const ParamMap& params, const ModelConfig& config,
                           ParamMap& grads) {
  Tensor dx = nn::layer_norm_backward(d_memory, cache.final_ln, P(params, "enc.ln.g"),
                                      G(grads, "enc.ln.g"), G(grads, "enc.ln.b"));
  for (long l = config.n_enc_layers; l >= 1; --l) {
    std::string pre = "enc." + std::to_string(l) + ".";
    dx = enc_layer_backward(dx, pre, cache.layers[static_cast<std::size_t>(l - 1)],
                            params, config, grads);
  }
  dx = nn::dropout_backward(dx, cache.input_drop);
  dx *= std::sqrt(static_cast<double>(config.d_model));
  nn::embedding_backward(dx, cache.tokens, G(grads, "embed.src"));
}

Tensor ctc_head_forward(const Tensor& ctc_states, const ParamMap& params,
                        CtcHeadCache* cache) {
  Tensor h = nn::layer_norm_forward(ctc_states, P(params, "ctc.ln.g"),
                                    P(params, "ctc.ln.b"), cache ? &cache->ln : nullptr);
  return nn::linear_forward(h, P(params, "ctc.w"), P(params, "ctc.b"),
                            cache ? &cache->proj : nullptr);
}

Tensor ctc_head_backward(const Tensor& d_logits, const CtcHeadCache& cache,
                         const ParamMap& params, ParamMap& grads) {
  Tensor dh = nn::linear_backward(d_logits, cache.proj, P(params, "ctc.w"),
                                  G(grads, "ctc.w"), G(grads, "ctc.b"));
  return nn::layer_norm_backward(dh, cache.ln, P(params, "ctc.ln.g"),
                                 G(grads, "ctc.ln.g"), G(grads, "ctc.ln.b"));
}

namespace {

ParamMap copy_named(const ParamMap& dst, const ParamMap& src,
                    const std::vector<std::string>& names, const char* what) {
  ParamMap out = dst;
  for (const auto& name : names) {
    auto s = src.find(name);
    if (s == src.end())
      throw DataError(std::string(what) + ": source missing " + name);
    auto d = out.find(name);
    if (d == out.end())
      throw DataError(std::string(what) + ": destination missing " + name);
    if (!d->second.same_shape(s->second))
      throw ConfigError(std::string(what) + ": shape mismatch for " + name);
    d->second = s->second;
  }
  return out;
}

}  // namespace

ParamMap init_from_asr(const ParamMap& st_params, const ParamMap& asr_params,
                       const ModelConfig& st_config, const ModelConfig& asr_config) {
  st_config.validate();
  asr_config.validate();
  if (st_config.kind != ModelKind::Speech || asr_config.kind != ModelKind::Speech)
    throw ConfigError("init_from_asr requires speech models");
  if (st_config.n_enc_layers < asr_config.n_enc_layers)
    throw ConfigError("init_from_asr: target encoder has fewer layers than source");

  std::vector<std::string> names = {"conv1.w", "conv1.b", "conv2.w",
                                    "conv2.b", "proj.w",  "proj.b"};
  for (long l = 1; l <= asr_config.n_enc_layers; ++l) {
    auto layer = enc_layer_names("enc." + std::to_string(l) + ".");
    names.insert(names.end(), layer.begin(), layer.end());
  }
  return copy_named(st_params, asr_params, names, "init_from_asr");
}

ParamMap transfer_decoder(const ParamMap& st_params, const ParamMap& mt_params,
                          const ModelConfig& st_config, const ModelConfig& mt_config) {
  st_config.validate();
  mt_config.validate();
  if (st_config.n_dec_layers > mt_config.n_dec_layers)
    throw ConfigError("transfer_decoder: target decoder has more layers than source");

  std::vector<std::string> names = {"dec.ln.g", "dec.ln.b", "embed.tgt", "out.w",
                                    "out.b"};
  for (long l = 1; l <= st_config.n_dec_layers; ++l) {
    auto layer = dec_layer_names("dec." + std::to_string(l) + ".");
    names.insert(names.end(), layer.begin(), layer.end());
  }
  return copy_named(st_params, mt_params, names, "transfer_decoder");
}

namespace {

constexpr char kCkptMagic[4] = {'T', 'S', 'T', 'C'};
constexpr std::uint16_t kCkptVersion = 1;

void write_config(std::ostream& os, const ModelConfig& c) {
  binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(c.kind));
  binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(c.tag_mode));
  binio::write_le<std::uint8_t>(os, c.tag_before_position ? 1 : 0);
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.n_enc_layers));
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.n_dec_layers));
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.d_model));
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.n_heads));
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.d_ffn));
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.conv_channels));
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.n_features));
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.vocab_size));
  binio::write_le<std::int32_t>(os, static_cast<std::int32_t>(c.ctc_layer));
  binio::write_le<double>(os, c.dropout);
  binio::write_le<double>(os, c.distance_penalty_scale);
}

ModelConfig read_config(std::istream& is) {
  ModelConfig c;
  auto kind = binio::read_le<std::uint8_t>(is, "config");
  auto tag_mode = binio::read_le<std::uint8_t>(is, "config");
  if (kind > 1 || tag_mode > 2) throw DataError("corrupt checkpoint config");
  c.kind = static_cast<ModelKind>(kind);
  c.tag_mode = static_cast<TagMode>(tag_mode);
  c.tag_before_position = binio::read_le<std::uint8_t>(is, "config") != 0;
  c.n_enc_layers = binio::read_le<std::int32_t>(is, "config");
  c.n_dec_layers = binio::read_le<std::int32_t>(is, "config");
  c.d_model = binio::read_le<std::int32_t>(is, "config");
  c.n_heads = binio::read_le<std::int32_t>(is, "config");
  c.d_ffn = binio::read_le<std::int32_t>(is, "config");
  c.conv_channels = binio::read_le<std::int32_t>(is, "config");
  c.n_features = binio::read_le<std::int32_t>(is, "config");
  c.vocab_size = binio::read_le<std::int32_t>(is, "config");
  c.ctc_layer = binio::read_le<std::int32_t>(is, "config");
  c.dropout = binio::read_le<double>(is, "config");
  c.distance_penalty_scale = binio::read_le<double>(is, "config");
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.config.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  binio::write_bytes(os, kCkptMagic, 4);
  binio::write_le<std::uint16_t>(os, kCkptVersion);
  write_config(os, ckpt.config);
  binio::write_le<std::int64_t>(os, ckpt.step);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    binio::write_string(os, k);
    binio::write_string(os, v);
  }
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    binio::write_string(os, name);
    binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.ndim()));
    for (long i = 0; i < t.ndim(); ++i)
      binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim(i)));
    for (long i = 0; i < t.size(); ++i)
      binio::write_le<float>(os, static_cast<float>(t[i]));
  }
  if (!os) throw DataError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  binio::read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kCkptMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  auto version = binio::read_le<std::uint16_t>(is, "version");
  if (version != kCkptVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.config = read_config(is);
  ckpt.config.validate();
  ckpt.step = binio::read_le<std::int64_t>(is, "step");
  auto n_meta = binio::read_le<std::uint32_t>(is, "metadata");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = binio::read_string(is, "metadata key");
    std::string v = binio::read_string(is, "metadata value");
    ckpt.metadata.emplace(std::move(k), std::move(v));
  }
  auto n_params = binio::read_le<std::uint32_t>(is, "param count");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = binio::read_string(is, "param name");
    auto ndim = binio::read_le<std::uint8_t>(is, name);
    std::vector<long> shape;
    for (std::uint8_t j = 0; j < ndim; ++j)
      shape.push_back(binio::read_le<std::uint32_t>(is, name));
    Tensor t(shape);
    for (long j = 0; j < t.size(); ++j)
      t[j] = binio::read_le<float>(is, name);
    if (!t.all_finite()) throw DataError("non-finite parameter: " + name);
    ckpt.params.emplace(std::move(name), std::move(t));
  }

  for (const auto& [name, shape] : param_spec(ckpt.config)) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end())
      throw DataError("checkpoint missing parameter: " + name);
    if (it->second.shape() != shape)
      throw DataError("checkpoint shape mismatch for " + name);
  }
  if (ckpt.params.size() != param_spec(ckpt.config).size())
    throw DataError("checkpoint has unexpected extra parameters");
  return ckpt;
}

}  // namespace tinyst
