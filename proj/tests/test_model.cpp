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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"

#include "helpers.hpp"
#include "tinyst/losses.hpp"
#include "tinyst/model.hpp"

using namespace tinyst;
using testutil::random_tensor;
using testutil::TmpDir;

namespace {

ModelConfig micro_speech() {
  ModelConfig c;
  c.kind = ModelKind::Speech;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ffn = 12;
  c.dropout = 0.0;
  c.conv_channels = 2;
  c.n_features = 8;
  c.vocab_size = 12;
  c.ctc_layer = 1;
  return c;
}

}  // namespace

TEST_CASE("param spec is sorted, unique and sums to param_count") {
  std::vector<ModelConfig> configs;
  configs.push_back(micro_speech());
  {
    ModelConfig c = micro_speech();
    c.ctc_layer = 0;
    c.n_enc_layers = 3;
    configs.push_back(c);
  }
  {
    ModelConfig c;
    c.kind = ModelKind::Text;
    c.d_model = 16;
    c.n_heads = 4;
    c.vocab_size = 20;
    configs.push_back(c);
  }
  for (const auto& cfg : configs) {
    auto spec = param_spec(cfg);
    std::set<std::string> names;
    long total = 0;
    std::string prev;
    for (const auto& [name, shape] : spec) {
      CHECK(prev < name);
      prev = name;
      names.insert(name);
      long n = 1;
      for (long d : shape) n *= d;
      total += n;
    }
    CHECK(names.size() == spec.size());
    CHECK(total == param_count(cfg));
  }
}

TEST_CASE("speech and text specs differ in front-end parameters") {
  ModelConfig sp = micro_speech();
  ModelConfig tx = sp;
  tx.kind = ModelKind::Text;
  tx.ctc_layer = 0;
  auto has = [](const ModelConfig& c, const std::string& name) {
    for (const auto& [n, s] : param_spec(c))
      if (n == name) return true;
    return false;
  };
  CHECK(has(sp, "conv1.w"));
  CHECK(has(sp, "ctc.w"));
  CHECK_FALSE(has(sp, "embed.src"));
  CHECK(has(tx, "embed.src"));
  CHECK_FALSE(has(tx, "conv1.w"));
}

TEST_CASE("init is deterministic and keyed by parameter name") {
  ModelConfig a = micro_speech();
  Rng rng(42);
  ParamMap p1 = init_params(a, rng);
  ParamMap p2 = init_params(a, rng);
  CHECK(p1 == p2);

  // Changing an unrelated part of the architecture must not shift the
  // streams of parameters that keep the same name and shape.
  ModelConfig b = a;
  b.ctc_layer = 0;
  ParamMap p3 = init_params(b, rng);
  CHECK(p1.at("embed.tgt") == p3.at("embed.tgt"));
  CHECK(p1.at("enc.1.attn.wq") == p3.at("enc.1.attn.wq"));

  ParamMap p4 = init_params(a, Rng(43));
  CHECK(p4.at("embed.tgt").same_shape(p1.at("embed.tgt")));
  CHECK_FALSE(p4.at("embed.tgt") == p1.at("embed.tgt"));
}

TEST_CASE("conv_output_length matches the stacked conv shapes") {
  CHECK(conv_output_length(16) == 4);
  CHECK(conv_output_length(7) == 2);
  CHECK(conv_output_length(4) == 1);
  CHECK(conv_output_length(2000) == 500);
  ModelConfig cfg = micro_speech();
  ParamMap params = init_params(cfg, Rng(1));
  Rng rng(0);
  for (long t : {4L, 9L, 16L, 21L}) {
    Tensor x = random_tensor({t, cfg.n_features}, rng, 0.5);
    SpeechEncodeOut out = encode_speech(x, std::nullopt, params, cfg, rng, false);
    CHECK(out.memory.dim(0) == conv_output_length(t));
    CHECK(out.memory.dim(1) == cfg.d_model);
    CHECK(out.ctc_states.dim(0) == conv_output_length(t));
  }
}

TEST_CASE("ctc states are empty without a ctc head") {
  ModelConfig cfg = micro_speech();
  cfg.ctc_layer = 0;
  ParamMap params = init_params(cfg, Rng(1));
  Rng rng(0);
  Tensor x = random_tensor({8, cfg.n_features}, rng, 0.5);
  SpeechEncodeOut out = encode_speech(x, std::nullopt, params, cfg, rng, false);
  CHECK(out.ctc_states.empty());
}

TEST_CASE("distance penalty bias is a log-distance ramp") {
  Tensor b = distance_penalty_bias(4, 1.0);
  CHECK(b.at(0, 0) == 0.0);
  CHECK(b.at(0, 1) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(b.at(0, 3) == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
  CHECK(b.at(3, 0) == b.at(0, 3));
  // Strictly decreasing with distance.
  for (long j = 1; j < 4; ++j) CHECK(b.at(0, j) < b.at(0, j - 1));

  Tensor half = distance_penalty_bias(4, 0.5);
  CHECK(half.at(0, 3) == doctest::Approx(-0.5 * std::log(4.0)).epsilon(1e-12));
  Tensor off = distance_penalty_bias(3, 0.0);
  for (long i = 0; i < off.size(); ++i) CHECK(off[i] == 0.0);
}

TEST_CASE("encoder tag embedding shifts the output only when present") {
  ModelConfig cfg = micro_speech();
  cfg.tag_mode = TagMode::EncoderInput;
  ParamMap params = init_params(cfg, Rng(7));
  Rng rng(0);
  Tensor x = random_tensor({8, cfg.n_features}, rng, 0.5);

  SpeechEncodeOut none = encode_speech(x, std::nullopt, params, cfg, rng, false);
  SpeechEncodeOut tagged =
      encode_speech(x, Domain::SynthCased, params, cfg, rng, false);
  CHECK_FALSE(none.memory == tagged.memory);

  // Zeroing the tag table makes the tag a no-op.
  ParamMap zeroed = params;
  zeroed.at("embed.tag").fill(0.0);
  SpeechEncodeOut z1 = encode_speech(x, std::nullopt, zeroed, cfg, rng, false);
  SpeechEncodeOut z2 = encode_speech(x, Domain::SynthCased, zeroed, cfg, rng, false);
  CHECK(z1.memory == z2.memory);

  // With tag_mode None the tag argument is ignored entirely.
  ModelConfig plain = micro_speech();
  SpeechEncodeOut a = encode_speech(x, std::nullopt, params, plain, rng, false);
  SpeechEncodeOut b = encode_speech(x, Domain::SynthLower, params, plain, rng, false);
  CHECK(a.memory == b.memory);
}

TEST_CASE("decoder tag embedding applies only in DecoderInput mode") {
  ModelConfig cfg = micro_speech();
  cfg.tag_mode = TagMode::DecoderInput;
  ParamMap params = init_params(cfg, Rng(8));
  Rng rng(0);
  Tensor memory = random_tensor({3, cfg.d_model}, rng, 0.5);
  std::vector<int> prev = {Vocabulary::kBos, 6, 7};

  Tensor plain = decode_step(prev, memory, std::nullopt, params, cfg, rng, false);
  Tensor tagged =
      decode_step(prev, memory, Domain::GroundTruth, params, cfg, rng, false);
  CHECK_FALSE(plain == tagged);

  ModelConfig enc_mode = cfg;
  enc_mode.tag_mode = TagMode::EncoderInput;
  Tensor ignored =
      decode_step(prev, memory, Domain::GroundTruth, params, enc_mode, rng, false);
  CHECK(plain == ignored);
}

TEST_CASE("tag position toggle is an arithmetic no-op") {
  ModelConfig cfg = micro_speech();
  cfg.tag_mode = TagMode::EncoderInput;
  cfg.tag_before_position = true;
  ParamMap params = init_params(cfg, Rng(9));
  Rng rng(0);
  Tensor x = random_tensor({8, cfg.n_features}, rng, 0.5);
  SpeechEncodeOut before =
      encode_speech(x, Domain::SynthLower, params, cfg, rng, false);
  // Additive tag commutes with the additive position table; only the
  // summation order differs, so the results agree to rounding noise.
  cfg.tag_before_position = false;
  SpeechEncodeOut after = encode_speech(x, Domain::SynthLower, params, cfg, rng, false);
  CHECK(testutil::max_rel_err(before.memory, after.memory) < 1e-12);
}

TEST_CASE("decoder logits are causal in the token sequence") {
  ModelConfig cfg = micro_speech();
  ParamMap params = init_params(cfg, Rng(10));
  Rng rng(0);
  Tensor memory = random_tensor({4, cfg.d_model}, rng, 0.5);
  std::vector<int> a = {Vocabulary::kBos, 5, 6, 7};
  std::vector<int> b = {Vocabulary::kBos, 5, 9, 11};
  Tensor la = decode_step(a, memory, std::nullopt, params, cfg, rng, false);
  Tensor lb = decode_step(b, memory, std::nullopt, params, cfg, rng, false);
  for (long j = 0; j < cfg.vocab_size; ++j) {
    CHECK(la.at(0, j) == doctest::Approx(lb.at(0, j)).epsilon(1e-12));
    CHECK(la.at(1, j) == doctest::Approx(lb.at(1, j)).epsilon(1e-12));
  }
  bool differs = false;
  for (long j = 0; j < cfg.vocab_size; ++j)
    if (la.at(2, j) != lb.at(2, j)) differs = true;
  CHECK(differs);
}

TEST_CASE("decoder rejects inputs that do not start with bos") {
  ModelConfig cfg = micro_speech();
  ParamMap params = init_params(cfg, Rng(11));
  Rng rng(0);
  Tensor memory = random_tensor({2, cfg.d_model}, rng);
  CHECK_THROWS_WITH_AS(decode_step({5, 6}, memory, std::nullopt, params, cfg, rng, false),
                       doctest::Contains("bos"), DataError);
  CHECK_THROWS_AS(decode_step({Vocabulary::kBos, 99}, memory, std::nullopt, params,
                              cfg, rng, false),
                  DataError);
}

TEST_CASE("encode_speech validates input shape and kind") {
  ModelConfig cfg = micro_speech();
  ParamMap params = init_params(cfg, Rng(12));
  Rng rng(0);
  Tensor bad = random_tensor({8, cfg.n_features + 1}, rng);
  CHECK_THROWS_AS(encode_speech(bad, std::nullopt, params, cfg, rng, false), DataError);
  Tensor tiny = random_tensor({2, cfg.n_features}, rng);
  CHECK_THROWS_AS(encode_speech(tiny, std::nullopt, params, cfg, rng, false), DataError);
  ModelConfig text = cfg;
  text.kind = ModelKind::Text;
  text.ctc_layer = 0;
  Tensor x = random_tensor({8, cfg.n_features}, rng);
  CHECK_THROWS_AS(encode_speech(x, std::nullopt, params, text, rng, false), ConfigError);
  CHECK_THROWS_AS(encode_text({Vocabulary::kBos, 5}, params, cfg, rng, false),
                  ConfigError);
}

TEST_CASE("forward passes are deterministic with dropout off") {
  ModelConfig cfg = micro_speech();
  cfg.dropout = 0.3;  // must not matter outside train mode
  ParamMap params = init_params(cfg, Rng(13));
  Tensor x;
  {
    Rng rng(0);
    x = random_tensor({10, cfg.n_features}, rng, 0.5);
  }
  Rng r1(1), r2(999);
  SpeechEncodeOut a = encode_speech(x, std::nullopt, params, cfg, r1, false);
  SpeechEncodeOut b = encode_speech(x, std::nullopt, params, cfg, r2, false);
  CHECK(a.memory == b.memory);

  // In train mode the same seed reproduces the same dropout pattern.
  Rng t1(7), t2(7);
  SpeechEncodeOut c = encode_speech(x, std::nullopt, params, cfg, t1, true);
  SpeechEncodeOut d = encode_speech(x, std::nullopt, params, cfg, t2, true);
  CHECK(c.memory == d.memory);
}

TEST_CASE("checkpoint round trip is stable after one quantization") {
  ModelConfig cfg = micro_speech();
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = init_params(cfg, Rng(14));
  ckpt.step = 1234;
  ckpt.metadata["phase"] = "st";
  ckpt.metadata["trained_with"] = "word_kd";

  TmpDir tmp("ckpt");
  std::string path = tmp.file("model.bin");
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.config == cfg);
  CHECK(back.step == 1234);
  CHECK(back.metadata.at("phase") == "st");
  CHECK(back.metadata.at("trained_with") == "word_kd");
  CHECK(back.params.size() == ckpt.params.size());
  // Parameters are stored in 32-bit floats; after one round trip the
  // values are fixed points of the quantization.
  for (const auto& [name, t] : back.params) {
    const Tensor& orig = ckpt.params.at(name);
    for (long i = 0; i < t.size(); ++i)
      CHECK(t[i] == doctest::Approx(orig[i]).epsilon(1e-6));
  }
  std::string path2 = tmp.file("model2.bin");
  save_checkpoint(back, path2);
  Checkpoint again = load_checkpoint(path2);
  CHECK(again.params == back.params);

  CHECK_THROWS_AS(load_checkpoint(tmp.file("missing.bin")), DataError);
}

TEST_CASE("asr transfer copies the front-end and shared encoder layers") {
  ModelConfig asr = micro_speech();
  asr.n_enc_layers = 2;
  ModelConfig st = asr;
  st.n_enc_layers = 3;
  st.ctc_layer = 2;
  ParamMap asr_p = init_params(asr, Rng(15));
  ParamMap st_p = init_params(st, Rng(16));
  ParamMap out = init_from_asr(st_p, asr_p, st, asr);

  for (const char* name : {"conv1.w", "conv1.b", "conv2.w", "conv2.b", "proj.w",
                           "proj.b", "enc.1.attn.wq", "enc.2.ffn.w1"})
    CHECK(out.at(name) == asr_p.at(name));
  // The extra layer, final encoder norm, decoder and CTC head keep the
  // fresh initialization.
  for (const char* name : {"enc.3.attn.wq", "enc.ln.g", "dec.1.self.wq", "embed.tgt",
                           "out.w", "ctc.w"})
    CHECK(out.at(name) == st_p.at(name));

  ModelConfig shallow = st;
  shallow.n_enc_layers = 1;
  shallow.ctc_layer = 1;
  ParamMap shallow_p = init_params(shallow, Rng(17));
  CHECK_THROWS_AS(init_from_asr(shallow_p, asr_p, shallow, asr), ConfigError);
}

TEST_CASE("decoder transfer copies decoder, embeddings and output head") {
  ModelConfig mt;
  mt.kind = ModelKind::Text;
  mt.d_model = 8;
  mt.n_heads = 2;
  mt.d_ffn = 12;
  mt.vocab_size = 12;
  mt.n_enc_layers = 1;
  mt.n_dec_layers = 2;
  ModelConfig st = micro_speech();
  st.n_dec_layers = 2;
  ParamMap mt_p = init_params(mt, Rng(18));
  ParamMap st_p = init_params(st, Rng(19));
  ParamMap out = transfer_decoder(st_p, mt_p, st, mt);

  for (const char* name : {"dec.1.self.wq", "dec.2.cross.wo", "dec.ln.g", "embed.tgt",
                           "out.w", "out.b"})
    CHECK(out.at(name) == mt_p.at(name));
  for (const char* name : {"enc.1.attn.wq", "conv1.w", "enc.ln.g"})
    CHECK(out.at(name) == st_p.at(name));

  ModelConfig deep = st;
  deep.n_dec_layers = 3;
  ParamMap deep_p = init_params(deep, Rng(20));
  CHECK_THROWS_AS(transfer_decoder(deep_p, mt_p, deep, mt), ConfigError);
}

TEST_CASE("config validation rejects inconsistent settings") {
  ModelConfig c = micro_speech();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = micro_speech();
  c.ctc_layer = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = micro_speech();
  c.kind = ModelKind::Text;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // ctc head on a text model
  c = micro_speech();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = micro_speech();
  c.distance_penalty_scale = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("full model gradients match finite differences") {
  ModelConfig cfg = micro_speech();
  cfg.tag_mode = TagMode::EncoderInput;
  ParamMap params = init_params(cfg, Rng(21));
  Rng data_rng(22);
  Tensor x = random_tensor({12, cfg.n_features}, data_rng, 0.5);
  const auto tag = Domain::SynthCased;
  std::vector<int> prev = {Vocabulary::kBos, 8, 9};
  std::vector<int> targets = {8, 9, Vocabulary::kEos};
  std::vector<int> ctc_target = {8, 9};
  const int blank = Vocabulary::kBlank;

  auto loss_of = [&](const ParamMap& p) {
    Rng rng(0);
    SpeechEncodeOut enc = encode_speech(x, tag, p, cfg, rng, false);
    Tensor logits = decode_step(prev, enc.memory, tag, p, cfg, rng, false);
    LossOutput ce = label_smoothed_ce(logits, targets, Vocabulary::kPad, 0.1);
    Tensor ctc_logits = ctc_head_forward(enc.ctc_states, p);
    LossOutput ctc = ctc_loss(nn::log_softmax_rows(ctc_logits), ctc_target, blank);
    return 0.5 * ce.value + 0.5 * ctc.value;
  };

  // Analytic pass.
  ParamMap grads = zero_grads(cfg);
  Rng rng(0);
  SpeechEncoderCache enc_cache;
  DecoderCache dec_cache;
  CtcHeadCache ctc_cache;
  SpeechEncodeOut enc = encode_speech(x, tag, params, cfg, rng, false, &enc_cache);
  Tensor logits = decode_step(prev, enc.memory, tag, params, cfg, rng, false, &dec_cache);
  LossOutput ce = label_smoothed_ce(logits, targets, Vocabulary::kPad, 0.1);
  Tensor ctc_logits = ctc_head_forward(enc.ctc_states, params, &ctc_cache);
  Tensor ctc_lp = nn::log_softmax_rows(ctc_logits);
  LossOutput ctc = ctc_loss(ctc_lp, ctc_target, blank);

  ce.grad *= 0.5;
  Tensor d_memory = decoder_backward(ce.grad, dec_cache, params, cfg, grads);
  ctc.grad *= 0.5;
  Tensor d_ctc_logits = nn::log_softmax_backward(ctc.grad, ctc_lp);
  Tensor d_ctc_states = ctc_head_backward(d_ctc_logits, ctc_cache, params, grads);
  speech_encoder_backward(d_memory, d_ctc_states, enc_cache, params, cfg, grads);

  // Sampled entries of every parameter tensor against central
  // differences.
  const double h = 1e-5;
  for (const auto& [name, shape] : param_spec(cfg)) {
    const Tensor& g = grads.at(name);
    long hot = 0;
    for (long i = 1; i < g.size(); ++i)
      if (std::abs(g[i]) > std::abs(g[hot])) hot = i;
    std::vector<long> picks = {0, g.size() / 2, g.size() - 1, hot};
    std::sort(picks.begin(), picks.end());
    picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
    for (long idx : picks) {
      ParamMap probe = params;
      probe.at(name)[idx] += h;
      double up = loss_of(probe);
      probe.at(name)[idx] -= 2.0 * h;
      double down = loss_of(probe);
      double fd = (up - down) / (2.0 * h);
      double denom = std::max({1e-6, std::abs(fd), std::abs(g[idx])});
      CHECK_MESSAGE(std::abs(fd - g[idx]) / denom < 1e-4,
                    name, "[", idx, "]: analytic ", g[idx], " vs fd ", fd);
    }
  }
}
