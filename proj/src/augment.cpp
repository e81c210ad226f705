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

#include "tinyst/augment.hpp"

#include <cmath>

#include "tinyst/error.hpp"

namespace tinyst {

void validate(const SpecAugmentConfig& cfg) {
  if (cfg.p < 0.0 || cfg.p > 1.0) throw ConfigError("spec_augment: p must be in [0,1]");
  if (cfg.freq_mask_par < 0 || cfg.time_mask_par < 0)
    throw ConfigError("spec_augment: mask pars must be >= 0");
  if (cfg.freq_mask_num < 0 || cfg.time_mask_num < 0)
    throw ConfigError("spec_augment: mask nums must be >= 0");
}

void validate(const TimeStretchConfig& cfg) {
  if (cfg.p < 0.0 || cfg.p > 1.0) throw ConfigError("time_stretch: p must be in [0,1]");
  if (cfg.s_low <= 0.0 || cfg.s_low > cfg.s_high)
    throw ConfigError("time_stretch: need 0 < s_low <= s_high");
  if (cfg.window_w < 1) throw ConfigError("time_stretch: window_w must be >= 1");
}

FeatureMatrix spec_augment(const FeatureMatrix& x, const SpecAugmentConfig& cfg,
                           Rng& rng) {
  validate(cfg);
  validate_features(x);
  if (!rng.bernoulli(cfg.p)) return x;

  const long t_len = x.dim(0), f_len = x.dim(1);
  FeatureMatrix y = x;

  // Frequency masks zero whole columns; time masks whole rows.
  for (long m = 0; m < cfg.freq_mask_num; ++m) {
    long par = std::min(cfg.freq_mask_par, f_len);
    long width = rng.uniform_int(0, par);
    long start = rng.uniform_int(0, f_len - width);
    for (long i = 0; i < t_len; ++i)
      for (long j = start; j < start + width; ++j) y.at(i, j) = 0.0;
  }
  for (long m = 0; m < cfg.time_mask_num; ++m) {
    long par = std::min(cfg.time_mask_par, t_len);
    long width = rng.uniform_int(0, par);
    long start = rng.uniform_int(0, t_len - width);
    for (long i = start; i < start + width; ++i)
      for (long j = 0; j < f_len; ++j) y.at(i, j) = 0.0;
  }
  return y;
}

namespace {

long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

}  // namespace

FeatureMatrix time_stretch(const FeatureMatrix& x, const TimeStretchConfig& cfg,
                           Rng& rng) {
  validate(cfg);
  validate_features(x);
  if (!rng.bernoulli(cfg.p)) return x;

  const long t_len = x.dim(0), f_len = x.dim(1);
  double s_low = cfg.s_low;
  if (t_len < cfg.short_input_threshold && s_low < 1.0) s_low = 1.0;

  std::vector<long> src_index;  // one entry per output frame
  for (long win_start = 0; win_start < t_len; win_start += cfg.window_w) {
    long w = std::min(cfg.window_w, t_len - win_start);
    double s = rng.uniform(s_low, cfg.s_high);
    if (cfg.invert_factor) s = 1.0 / s;
    long out_w = std::max<long>(1, round_half_up(static_cast<double>(w) * s));
    for (long j = 0; j < out_w; ++j) {
      long src = static_cast<long>(std::floor(static_cast<double>(j) / s));
      if (src > w - 1) src = w - 1;
      src_index.push_back(win_start + src);
    }
  }

  FeatureMatrix y({static_cast<long>(src_index.size()), f_len});
  for (std::size_t i = 0; i < src_index.size(); ++i)
    for (long j = 0; j < f_len; ++j)
      y.at(static_cast<long>(i), j) = x.at(src_index[i], j);
  return y;
}

namespace {

// Word spans of a token sequence: each word ends at a word-final token.
std::vector<std::pair<std::size_t, std::size_t>> word_token_spans(
    const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (vocab.is_word_final(ids[i])) {
      spans.emplace_back(begin, i + 1);
      begin = i + 1;
    }
  }
  if (begin < ids.size()) spans.emplace_back(begin, ids.size());
  return spans;
}

EncodedSample crop_sample(const EncodedSample& s, const Vocabulary& vocab,
                          long word_from, long word_to, const char* suffix) {
  const auto& align = *s.alignments;
  auto spans = word_token_spans(s.transcript_ids, vocab);

  EncodedSample out;
  out.id = s.id + suffix;
  out.domain = s.domain;

  long frame_from = align[static_cast<std::size_t>(word_from)].start_frame;
  long frame_to = align[static_cast<std::size_t>(word_to)].end_frame;
  out.features = FeatureMatrix({frame_to - frame_from, s.features.dim(1)});
  for (long i = 0; i < out.features.dim(0); ++i)
    for (long j = 0; j < s.features.dim(1); ++j)
      out.features.at(i, j) = s.features.at(frame_from + i, j);
  out.n_frames = out.features.dim(0);

  for (long w = word_from; w <= word_to; ++w) {
    auto [b, e] = spans[static_cast<std::size_t>(w)];
    for (std::size_t k = b; k < e; ++k) out.transcript_ids.push_back(s.transcript_ids[k]);
  }
  out.ctc_ids = out.transcript_ids;

  std::vector<Alignment> cropped;
  for (long w = word_from; w <= word_to; ++w) {
    Alignment a = align[static_cast<std::size_t>(w)];
    cropped.push_back({a.word - align[static_cast<std::size_t>(word_from)].word,
                       a.start_frame - frame_from, a.end_frame - frame_from});
  }
  out.alignments = std::move(cropped);
  // Target intentionally left empty; downstream translation fills it in.
  out.target_ids = {Vocabulary::kEos};
  return out;
}

}  // namespace

std::vector<EncodedSample> subsequence_sample(const EncodedSample& s,
                                              const Vocabulary& vocab, Rng& rng) {
  if (!s.alignments) throw DataError("alignments required");
  const long n = static_cast<long>(s.alignments->size());
  if (n < 4) throw DataError("too short for sub-sequence sampling");
  if (s.features.empty()) throw DataError("sample " + s.id + ": features not loaded");

  auto spans = word_token_spans(s.transcript_ids, vocab);
  if (static_cast<long>(spans.size()) != n)
    throw DataError("sample " + s.id + ": " + std::to_string(spans.size()) +
                    " transcript words vs " + std::to_string(n) + " alignments");

  const long half = n / 2;
  const long quarter = (n + 3) / 4;  // ceil(n/4)

  std::vector<EncodedSample> out;
  out.push_back(crop_sample(s, vocab, 0, rng.uniform_int(half, n - 1), ".sub1"));
  out.push_back(crop_sample(s, vocab, rng.uniform_int(0, half - 1), n - 1, ".sub2"));
  long from = rng.uniform_int(0, quarter - 1);
  long to = rng.uniform_int(n - quarter, n - 1);
  out.push_back(crop_sample(s, vocab, from, to, ".sub3"));
  return out;
}

}  // namespace tinyst
