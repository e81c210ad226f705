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

#include <array>
#include <string>
#include <vector>

namespace tinyst {

struct BleuReport {
  double bleu = 0.0;  // [0, 100]
  std::array<double, 4> precisions = {0.0, 0.0, 0.0, 0.0};
  double brevity_penalty = 0.0;
  long hyp_len = 0;
  long ref_len = 0;
};

struct WerReport {
  double wer = 0.0;
  long substitutions = 0;
  long insertions = 0;
  long deletions = 0;
  long n_ref_words = 0;
};

// Frozen BLEU tokenization: every ASCII punctuation byte becomes its
// own token, everything else splits on whitespace. Case is preserved.
std::vector<std::string> bleu_tokenize(const std::string& line);

// Case-sensitive corpus BLEU-4 with clipped n-gram counts and brevity
// penalty; no smoothing, so any zero n-gram precision zeroes the score.
BleuReport corpus_bleu(const std::vector<std::string>& hyps,
                       const std::vector<std::string>& refs);

// Word error rate of one hypothesis/reference pair: uniform-cost
// Levenshtein distance with a substitution/insertion/deletion
// breakdown. May exceed 1.
WerReport wer(const std::vector<std::string>& hyp_words,
              const std::vector<std::string>& ref_words);

// Corpus WER: edit counts summed over line pairs, divided by the total
// reference word count. Lines split on whitespace.
WerReport corpus_wer(const std::vector<std::string>& hyps,
                     const std::vector<std::string>& refs);

}  // namespace tinyst
