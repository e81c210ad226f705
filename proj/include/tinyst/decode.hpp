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

#include <optional>
#include <vector>

#include "tinyst/features.hpp"
#include "tinyst/model.hpp"

namespace tinyst {

struct DecodeConfig {
  long beam_size = 5;  // 1 = greedy
  long max_len = 200;
  double temperature = 1.0;
  bool length_norm = true;
  // Average per-model log-probs instead of probabilities.
  bool log_space_ensemble = false;
  void validate() const;
};

struct Hypothesis {
  std::vector<int> tokens;  // generated ids; ends with eos iff finished
  double score = 0.0;       // cumulative log-prob
  bool finished = false;
};

// softmax(logits / T); argmax is invariant in T.
std::vector<double> apply_temperature(const Tensor& logits_row, double temperature);

// 1.3 when the checkpoint's final phase trained with word-level KD,
// else 1.0.
double default_temperature(const Checkpoint& ckpt);

// Beam search over an ensemble of speech models: per step each model's
// logits are divided by T and softmaxed, the probability vectors are
// averaged, and the mean is log-scored. Returns the generated ids
// without bos/eos.
std::vector<int> generate(const std::vector<const Checkpoint*>& models,
                          const FeatureMatrix& features, std::optional<Domain> tag,
                          const DecodeConfig& cfg);

// Same search over text models (the MT teacher).
std::vector<int> generate_text(const std::vector<const Checkpoint*>& models,
                               const std::vector<int>& source,
                               const DecodeConfig& cfg);

// Full search result (all finished hypotheses considered, best first);
// generate/generate_text return the tokens of the front entry.
std::vector<Hypothesis> beam_search(const std::vector<const Checkpoint*>& models,
                                    const std::vector<Tensor>& memories,
                                    std::optional<Domain> tag,
                                    const DecodeConfig& cfg);

}  // namespace tinyst
