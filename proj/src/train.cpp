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

#include "tinyst/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "tinyst/error.hpp"
#include "tinyst/losses.hpp"

namespace tinyst {

OptimState make_optim_state(const ModelConfig& config) {
  OptimState opt;
  opt.m = zero_grads(config);
  opt.v = zero_grads(config);
  return opt;
}

void adam_step(ParamMap& params, const ParamMap& grads, OptimState& opt, double lr) {
  opt.t += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw DataError("missing gradient for " + name);
    const Tensor& g = git->second;
    if (!g.same_shape(p)) throw ConfigError("gradient shape mismatch for " + name);
    if (!g.all_finite()) throw NumericalError("non-finite gradient for " + name);
    Tensor& m = opt.m.at(name);
    Tensor& v = opt.v.at(name);
    for (long i = 0; i < p.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.eps);
    }
  }
}

void LrSchedule::validate() const {
  if (lr_start <= 0.0 || lr_peak <= 0.0 || fixed_lr <= 0.0)
    throw ConfigError("learning rates must be positive");
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be at least 1");
}

double lr_at_step(const LrSchedule& sched, long t) {
  sched.validate();
  if (t < 0) throw ConfigError("step must be non-negative");
  if (sched.kind == LrKind::Fixed) return sched.fixed_lr;
  if (t <= sched.warmup_steps)
    return sched.lr_start + (sched.lr_peak - sched.lr_start) *
                                static_cast<double>(t) /
                                static_cast<double>(sched.warmup_steps);
  return sched.lr_peak * std::sqrt(static_cast<double>(sched.warmup_steps) /
                                   static_cast<double>(t));
}

void BatchPlan::validate() const {
  if (max_tokens < 1 || max_samples < 1 || accumulation < 1)
    throw ConfigError("batch plan limits must be positive");
  std::set<Domain> seen(domain_order.begin(), domain_order.end());
  if (seen.size() != domain_order.size())
    throw ConfigError("duplicate domain in rotation order");
}

void TrainPhaseConfig::validate() const {
  if (n_epochs < 1) throw ConfigError("n_epochs must be at least 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ConfigError("label_smoothing must be in [0, 1)");
  if (ctc_weight < 0.0 || ctc_weight > 1.0)
    throw ConfigError("ctc_weight must be in [0, 1]");
  schedule.validate();
  plan.validate();
  if (augment) {
    tinyst::validate(spec_augment);
    tinyst::validate(time_stretch);
  }
}

namespace {

// Batch cost under the 12K-token cap: feature frames for speech
// samples, target tokens for text-only ones.
long sample_cost(const EncodedSample& s) {
  if (s.n_frames > 0) return s.n_frames;
  return std::max<long>(1, static_cast<long>(s.target_ids.size()));
}

std::vector<std::vector<long>> pack_batches(const std::vector<long>& order,
                                            const std::vector<EncodedSample>& data,
                                            const BatchPlan& plan) {
  std::vector<std::vector<long>> batches;
  std::vector<long> cur;
  long cur_cost = 0;
  for (long idx : order) {
    long c = sample_cost(data[static_cast<std::size_t>(idx)]);
    if (!cur.empty() && (static_cast<long>(cur.size()) + 1 > plan.max_samples ||
                         cur_cost + c > plan.max_tokens)) {
      batches.push_back(std::move(cur));
      cur.clear();
      cur_cost = 0;
    }
    cur.push_back(idx);
    cur_cost += c;
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

// Split the fullest batches until the domain owns exactly `target`
// batches; only possible because every domain carries the same number
// of samples per epoch.
void equalize(std::vector<std::vector<long>>& batches, long target) {
  while (static_cast<long>(batches.size()) < target) {
    std::size_t pick = batches.size();
    std::size_t best_size = 1;
    for (std::size_t i = 0; i < batches.size(); ++i)
      if (batches[i].size() > best_size) {
        best_size = batches[i].size();
        pick = i;
      }
    if (pick == batches.size())
      throw DataError("cannot equalize per-domain batch counts");
    auto& b = batches[pick];
    std::size_t half = (b.size() + 1) / 2;
    std::vector<long> tail(b.begin() + static_cast<long>(half), b.end());
    b.resize(half);
    batches.insert(batches.begin() + static_cast<long>(pick) + 1, std::move(tail));
  }
}

}  // namespace

std::vector<UpdateGroup> multi_domain_batches(const std::vector<EncodedSample>& data,
                                              const BatchPlan& plan, Rng& rng) {
  plan.validate();
  if (data.empty()) throw DataError("no training samples");

  std::vector<Domain> order = plan.domain_order;
  if (order.empty()) {
    std::set<Domain> present;
    for (const auto& s : data) present.insert(s.domain);
    order.assign(present.begin(), present.end());
  }

  std::map<Domain, std::vector<long>> by_domain;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Domain d = data[i].domain;
    if (std::find(order.begin(), order.end(), d) == order.end())
      throw DataError("sample " + data[i].id + " belongs to domain " +
                      domain_name(d) + " outside the rotation order");
    by_domain[d].push_back(static_cast<long>(i));
  }
  long size_max = 0;
  for (Domain d : order) {
    auto it = by_domain.find(d);
    if (it == by_domain.end() || it->second.empty())
      throw DataError(std::string("domain ") + domain_name(d) + " has no samples");
    size_max = std::max(size_max, static_cast<long>(it->second.size()));
  }

  std::map<Domain, std::vector<std::vector<long>>> domain_batches;
  long n_batches = 0;
  for (Domain d : order) {
    const auto& idx = by_domain[d];
    const long n = static_cast<long>(idx.size());
    const long base = size_max / n, rem = size_max % n;
    std::vector<long> epoch;
    epoch.reserve(static_cast<std::size_t>(size_max));
    for (long b = 0; b < base; ++b) epoch.insert(epoch.end(), idx.begin(), idx.end());
    if (rem > 0) {
      std::vector<long> extras = idx;
      shuffle(extras, rng);
      epoch.insert(epoch.end(), extras.begin(), extras.begin() + rem);
    }
    shuffle(epoch, rng);
    auto batches = pack_batches(epoch, data, plan);
    n_batches = std::max(n_batches, static_cast<long>(batches.size()));
    domain_batches.emplace(d, std::move(batches));
  }
  for (Domain d : order) equalize(domain_batches[d], n_batches);

  std::vector<UpdateGroup> groups;
  groups.reserve(static_cast<std::size_t>(n_batches));
  for (long g = 0; g < n_batches; ++g) {
    UpdateGroup group;
    for (Domain d : order)
      group.push_back(Batch{d, domain_batches[d][static_cast<std::size_t>(g)]});
    groups.push_back(std::move(group));
  }
  return groups;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct SampleLoss {
  double value = 0.0;
  long n_tokens = 0;
};

std::vector<int> decoder_input(const std::vector<int>& target_ids) {
  std::vector<int> in = {Vocabulary::kBos};
  if (!target_ids.empty())
    in.insert(in.end(), target_ids.begin(), target_ids.end() - 1);
  return in;
}

LossOutput primary_loss(const Tensor& logits, const EncodedSample& s,
                        const TrainPhaseConfig& cfg, const KdStore* kd_store) {
  if (cfg.loss == PhaseLoss::WordKD) {
    const auto& rows = kd_store->rows_for(s.id);
    std::vector<char> mask(rows.size(), 0);
    return word_kd_loss(logits, rows, mask);
  }
  return label_smoothed_ce(logits, s.target_ids, Vocabulary::kPad,
                           cfg.label_smoothing);
}

// Forward + loss + backward for one sample; gradients are accumulated
// scaled by the sample's token count so the caller can divide by the
// total once per update.
SampleLoss train_sample(const EncodedSample& s, Checkpoint& model,
                        const TrainPhaseConfig& cfg, const KdStore* kd_store,
                        Rng& rng, ParamMap& grads, const TrainHooks& hooks,
                        TrainResult& res) {
  const ModelConfig& mc = model.config;
  std::vector<int> dec_in = decoder_input(s.target_ids);

  if (mc.kind == ModelKind::Text) {
    if (s.transcript_ids.empty())
      throw DataError("sample " + s.id + " has no transcript");
    TextEncoderCache enc_cache;
    Tensor memory =
        encode_text(s.transcript_ids, model.params, mc, rng, true, &enc_cache);
    DecoderCache dec_cache;
    Tensor logits =
        decode_step(dec_in, memory, std::nullopt, model.params, mc, rng, true,
                    &dec_cache);
    LossOutput loss = primary_loss(logits, s, cfg, kd_store);
    Tensor d_logits = loss.grad;
    d_logits *= static_cast<double>(loss.n_tokens);
    Tensor d_memory = decoder_backward(d_logits, dec_cache, model.params, mc, grads);
    text_encoder_backward(d_memory, enc_cache, model.params, mc, grads);
    return {loss.value, loss.n_tokens};
  }

  FeatureMatrix feats = s.features;
  if (cfg.augment) {
    feats = time_stretch(feats, cfg.time_stretch, rng);
    if (hooks.on_augment) hooks.on_augment("time_stretch");
    feats = spec_augment(feats, cfg.spec_augment, rng);
    if (hooks.on_augment) hooks.on_augment("spec_augment");
  }
  std::optional<Domain> tag;
  if (mc.tag_mode != TagMode::None) tag = s.domain;

  SpeechEncoderCache enc_cache;
  SpeechEncodeOut enc = encode_speech(feats, tag, model.params, mc, rng, true,
                                      &enc_cache);
  DecoderCache dec_cache;
  Tensor logits = decode_step(dec_in, enc.memory, tag, model.params, mc, rng, true,
                              &dec_cache);
  LossOutput primary = primary_loss(logits, s, cfg, kd_store);

  bool want_ctc = mc.ctc_layer > 0 && cfg.ctc_weight > 0.0 && !s.ctc_ids.empty();
  CtcHeadCache ctc_cache;
  Tensor ctc_log_probs;
  LossOutput ctc;
  if (want_ctc) {
    Tensor ctc_logits = ctc_head_forward(enc.ctc_states, model.params, &ctc_cache);
    ctc_log_probs = nn::log_softmax_rows(ctc_logits);
    try {
      ctc = ctc_loss(ctc_log_probs, s.ctc_ids, Vocabulary::kBlank);
    } catch (const UnalignableError&) {
      want_ctc = false;
      ++res.ctc_unalignable;
    }
  }

  const double w = static_cast<double>(primary.n_tokens);
  double value;
  Tensor d_logits;
  Tensor d_ctc_states;
  if (want_ctc) {
    MultitaskLossOutput mt = multitask_loss(primary, ctc, {cfg.ctc_weight});
    value = mt.value;
    d_logits = mt.primary_grad;
    d_logits *= w;
    Tensor d_lp = mt.ctc_grad;
    d_lp *= w;
    Tensor d_ctc_logits = nn::log_softmax_backward(d_lp, ctc_log_probs);
    d_ctc_states = ctc_head_backward(d_ctc_logits, ctc_cache, model.params, grads);
  } else {
    value = primary.value;
    d_logits = primary.grad;
    d_logits *= w;
  }

  Tensor d_memory = decoder_backward(d_logits, dec_cache, model.params, mc, grads);
  speech_encoder_backward(d_memory, d_ctc_states, enc_cache, model.params, mc, grads);
  return {value, primary.n_tokens};
}

// Perplexity of the phase's primary loss over a held-out set, dropout
// and augmentation off.
double validation_perplexity(const Checkpoint& model,
                             const std::vector<EncodedSample>& data,
                             const TrainPhaseConfig& cfg, const KdStore* kd_store) {
  const ModelConfig& mc = model.config;
  Rng rng(0);
  double sum = 0.0;
  long tokens = 0;
  for (const auto& s : data) {
    std::vector<int> dec_in = decoder_input(s.target_ids);
    Tensor logits;
    if (mc.kind == ModelKind::Text) {
      if (s.transcript_ids.empty())
        throw DataError("sample " + s.id + " has no transcript");
      Tensor memory = encode_text(s.transcript_ids, model.params, mc, rng, false);
      logits = decode_step(dec_in, memory, std::nullopt, model.params, mc, rng, false);
    } else {
      std::optional<Domain> tag;
      if (mc.tag_mode != TagMode::None) tag = s.domain;
      SpeechEncodeOut enc =
          encode_speech(s.features, tag, model.params, mc, rng, false);
      logits = decode_step(dec_in, enc.memory, tag, model.params, mc, rng, false);
    }
    LossOutput loss = primary_loss(logits, s, cfg, kd_store);
    sum += loss.value * static_cast<double>(loss.n_tokens);
    tokens += loss.n_tokens;
  }
  if (tokens == 0) throw DataError("validation set has no target tokens");
  return std::exp(sum / static_cast<double>(tokens));
}

}  // namespace

TrainResult train_phase(const Checkpoint& start,
                        const std::vector<EncodedSample>& train_data,
                        const std::vector<EncodedSample>& valid_data,
                        const TrainPhaseConfig& cfg, const KdStore* kd_store,
                        const TrainHooks& hooks) {
  cfg.validate();
  start.config.validate();
  if (cfg.loss == PhaseLoss::WordKD && kd_store == nullptr)
    throw ConfigError("word-kd phase requires a distillation store");
  if (train_data.empty()) throw DataError("no training samples");

  Checkpoint model = start;
  OptimState opt = make_optim_state(model.config);
  TrainResult res;
  const std::vector<EncodedSample>& valid =
      valid_data.empty() ? train_data : valid_data;

  double best_ppl = 0.0;
  for (long epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
    Rng rng = Rng(cfg.seed).derive("epoch:" + std::to_string(epoch));
    auto groups = multi_domain_batches(train_data, cfg.plan, rng);

    ParamMap grads = zero_grads(model.config);
    double acc_tokens = 0.0;
    long minibatches = 0;
    double epoch_sum = 0.0;
    long epoch_tokens = 0;

    auto flush = [&]() {
      if (acc_tokens <= 0.0) return;
      for (auto& [name, g] : grads) g *= 1.0 / acc_tokens;
      adam_step(model.params, grads, opt, lr_at_step(cfg.schedule, opt.t));
      ++res.updates;
      grads = zero_grads(model.config);
      acc_tokens = 0.0;
    };

    for (const auto& group : groups) {
      for (const auto& batch : group) {
        for (long idx : batch.indices) {
          const EncodedSample& s = train_data[static_cast<std::size_t>(idx)];
          if (hooks.on_sample) hooks.on_sample(s);
          SampleLoss sl =
              train_sample(s, model, cfg, kd_store, rng, grads, hooks, res);
          acc_tokens += static_cast<double>(sl.n_tokens);
          epoch_sum += sl.value * static_cast<double>(sl.n_tokens);
          epoch_tokens += sl.n_tokens;
        }
        ++minibatches;
        if (minibatches % cfg.plan.accumulation == 0) flush();
      }
    }
    flush();  // leftover partial accumulation window

    double train_loss =
        epoch_tokens > 0 ? epoch_sum / static_cast<double>(epoch_tokens) : 0.0;
    double val_ppl = validation_perplexity(model, valid, cfg, kd_store);

    model.step = opt.t;
    model.metadata["phase"] = cfg.name;
    model.metadata["epoch"] = std::to_string(epoch);
    model.metadata["seed"] = std::to_string(cfg.seed);
    model.metadata["loss"] = fmt_double(train_loss);
    model.metadata["val_ppl"] = fmt_double(val_ppl);
    model.metadata["trained_with"] =
        cfg.loss == PhaseLoss::WordKD ? "word_kd" : "label_smoothed_ce";

    res.epoch_losses.push_back(train_loss);
    res.val_perplexities.push_back(val_ppl);
    if (!cfg.checkpoint_dir.empty()) {
      std::string path =
          cfg.checkpoint_dir + "/ckpt_epoch" + std::to_string(epoch) + ".bin";
      save_checkpoint(model, path);
      res.checkpoint_paths.push_back(path);
    }
    if (res.best_epoch == 0 || val_ppl < best_ppl) {
      best_ppl = val_ppl;
      res.best_epoch = epoch;
      res.best_ckpt = model;
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, train_loss, val_ppl);
  }

  res.final_ckpt = model;
  if (!cfg.checkpoint_dir.empty()) {
    std::ofstream best(cfg.checkpoint_dir + "/best");
    best << "ckpt_epoch" << res.best_epoch << ".bin\n";
    if (!best) throw DataError("cannot write best pointer file");
  }
  return res;
}

std::vector<long> checkpoint_window(long best_epoch, long n_epochs, long window) {
  if (best_epoch < 1 || best_epoch > n_epochs)
    throw ConfigError("best epoch outside trained range");
  if (window < 1) throw ConfigError("window must be positive");
  long half = window / 2;
  long lo = best_epoch - half, hi = best_epoch + half;
  if (lo < 1) {
    hi += 1 - lo;
    lo = 1;
  }
  if (hi > n_epochs) {
    lo -= hi - n_epochs;
    hi = n_epochs;
  }
  lo = std::max<long>(1, lo);
  std::vector<long> epochs;
  for (long e = lo; e <= hi; ++e) epochs.push_back(e);
  return epochs;
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts) {
  if (ckpts.empty()) throw ConfigError("no checkpoints to average");
  for (const auto& c : ckpts)
    if (!(c.config == ckpts.front().config))
      throw ConfigError("checkpoint configs differ");

  Checkpoint out = ckpts.front();
  for (std::size_t i = 1; i < ckpts.size(); ++i) {
    for (auto& [name, t] : out.params) {
      auto it = ckpts[i].params.find(name);
      if (it == ckpts[i].params.end())
        throw DataError("checkpoint missing parameter: " + name);
      t += it->second;
    }
    out.step = std::max(out.step, ckpts[i].step);
  }
  const double inv = 1.0 / static_cast<double>(ckpts.size());
  for (auto& [name, t] : out.params) t *= inv;
  out.metadata["averaged_over"] = std::to_string(ckpts.size());
  return out;
}

Checkpoint average_checkpoints(const std::vector<std::string>& paths) {
  std::vector<Checkpoint> ckpts;
  ckpts.reserve(paths.size());
  for (const auto& p : paths) ckpts.push_back(load_checkpoint(p));
  Checkpoint out = average_checkpoints(ckpts);
  std::string joined;
  for (const auto& p : paths) {
    if (!joined.empty()) joined += ";";
    joined += p;
  }
  out.metadata["averaged_from"] = joined;
  return out;
}

}  // namespace tinyst
