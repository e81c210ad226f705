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

#include "tinyst/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tinyst/error.hpp"

namespace tinyst {

void DecodeConfig::validate() const {
  if (beam_size < 1) throw ConfigError("beam_size must be at least 1");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  if (temperature <= 0.0) throw ConfigError("temperature must be positive");
}

std::vector<double> apply_temperature(const Tensor& logits_row, double temperature) {
  if (temperature <= 0.0) throw ConfigError("temperature must be positive");
  if (logits_row.size() < 1) throw DataError("empty logits row");
  std::vector<double> p(static_cast<std::size_t>(logits_row.size()));
  double m = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < logits_row.size(); ++i)
    m = std::max(m, logits_row[i] / temperature);
  double sum = 0.0;
  for (long i = 0; i < logits_row.size(); ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(logits_row[i] / temperature - m);
    sum += p[static_cast<std::size_t>(i)];
  }
  for (double& x : p) x /= sum;
  return p;
}

double default_temperature(const Checkpoint& ckpt) {
  auto it = ckpt.metadata.find("trained_with");
  return (it != ckpt.metadata.end() && it->second == "word_kd") ? 1.3 : 1.0;
}

namespace {

void check_ensemble(const std::vector<const Checkpoint*>& models) {
  if (models.empty()) throw ConfigError("ensemble needs at least one model");
  for (const auto* m : models) {
    if (m == nullptr) throw ConfigError("null model in ensemble");
    if (m->config.vocab_size != models.front()->config.vocab_size)
      throw ConfigError("ensemble vocabulary mismatch");
  }
}

// Mean next-token distribution of the ensemble for one prefix.
std::vector<double> ensemble_step(const std::vector<const Checkpoint*>& models,
                                  const std::vector<Tensor>& memories,
                                  const std::vector<int>& prefix,
                                  std::optional<Domain> tag,
                                  const DecodeConfig& cfg) {
  const long v = models.front()->config.vocab_size;
  std::vector<double> acc(static_cast<std::size_t>(v), 0.0);
  Rng rng(0);  // inference only; dropout never draws
  for (std::size_t m = 0; m < models.size(); ++m) {
    Tensor logits = decode_step(prefix, memories[m], tag, models[m]->params,
                                models[m]->config, rng, false);
    Tensor last({v});
    for (long j = 0; j < v; ++j) last[j] = logits.at(logits.dim(0) - 1, j);
    std::vector<double> p = apply_temperature(last, cfg.temperature);
    if (cfg.log_space_ensemble) {
      for (long j = 0; j < v; ++j)
        acc[static_cast<std::size_t>(j)] +=
            p[static_cast<std::size_t>(j)] > 0.0
                ? std::log(p[static_cast<std::size_t>(j)])
                : -std::numeric_limits<double>::infinity();
    } else {
      for (long j = 0; j < v; ++j)
        acc[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(j)];
    }
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  if (cfg.log_space_ensemble) {
    double sum = 0.0;
    for (double& x : acc) {
      x = std::exp(x * inv);
      sum += x;
    }
    for (double& x : acc) x /= sum;
  } else {
    for (double& x : acc) x *= inv;
  }
  return acc;
}

double hyp_key(const Hypothesis& h, bool length_norm) {
  if (!length_norm) return h.score;
  return h.score / static_cast<double>(std::max<std::size_t>(1, h.tokens.size()));
}

// Deterministic order: better key first, then raw score, then
// lexicographically smaller token sequence.
bool hyp_better(const Hypothesis& a, const Hypothesis& b, bool length_norm) {
  double ka = hyp_key(a, length_norm), kb = hyp_key(b, length_norm);
  if (ka != kb) return ka > kb;
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

std::vector<Hypothesis> beam_search(const std::vector<const Checkpoint*>& models,
                                    const std::vector<Tensor>& memories,
                                    std::optional<Domain> tag,
                                    const DecodeConfig& cfg) {
  cfg.validate();
  check_ensemble(models);
  if (memories.size() != models.size())
    throw ConfigError("one memory per model required");

  std::vector<Hypothesis> active = {Hypothesis{}};
  std::vector<Hypothesis> finished;

  struct Cand {
    double score;
    int token;
    std::size_t parent;
  };

  for (long step = 0; step < cfg.max_len && !active.empty(); ++step) {
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < active.size(); ++i) {
      std::vector<int> prefix = {Vocabulary::kBos};
      prefix.insert(prefix.end(), active[i].tokens.begin(), active[i].tokens.end());
      std::vector<double> probs = ensemble_step(models, memories, prefix, tag, cfg);
      for (std::size_t t = 0; t < probs.size(); ++t) {
        if (probs[t] <= 0.0) continue;
        cands.push_back(
            {active[i].score + std::log(probs[t]), static_cast<int>(t), i});
      }
    }
    if (cands.empty()) break;
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });

    std::vector<Hypothesis> next;
    long taken = 0;
    for (const Cand& c : cands) {
      if (taken == cfg.beam_size) break;
      Hypothesis h = active[c.parent];
      h.tokens.push_back(c.token);
      h.score = c.score;
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
      ++taken;
    }
    active = std::move(next);
  }

  std::vector<Hypothesis> result = finished.empty() ? active : finished;
  if (result.empty()) result.push_back(Hypothesis{});
  std::sort(result.begin(), result.end(),
            [&cfg](const Hypothesis& a, const Hypothesis& b) {
              return hyp_better(a, b, cfg.length_norm);
            });
  return result;
}

namespace {

std::vector<int> strip_eos(std::vector<int> tokens) {
  if (!tokens.empty() && tokens.back() == Vocabulary::kEos) tokens.pop_back();
  return tokens;
}

}  // namespace

std::vector<int> generate(const std::vector<const Checkpoint*>& models,
                          const FeatureMatrix& features, std::optional<Domain> tag,
                          const DecodeConfig& cfg) {
  check_ensemble(models);
  for (const auto* m : models)
    if (m->config.kind != ModelKind::Speech)
      throw ConfigError("generate requires speech models");
  std::vector<Tensor> memories;
  memories.reserve(models.size());
  Rng rng(0);
  for (const auto* m : models)
    memories.push_back(
        encode_speech(features, tag, m->params, m->config, rng, false).memory);
  return strip_eos(beam_search(models, memories, tag, cfg).front().tokens);
}

std::vector<int> generate_text(const std::vector<const Checkpoint*>& models,
                               const std::vector<int>& source,
                               const DecodeConfig& cfg) {
  check_ensemble(models);
  for (const auto* m : models)
    if (m->config.kind != ModelKind::Text)
      throw ConfigError("generate_text requires text models");
  std::vector<Tensor> memories;
  memories.reserve(models.size());
  Rng rng(0);
  for (const auto* m : models)
    memories.push_back(encode_text(source, m->params, m->config, rng, false));
  return strip_eos(beam_search(models, memories, std::nullopt, cfg).front().tokens);
}

}  // namespace tinyst
