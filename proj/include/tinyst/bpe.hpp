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

#include <string>
#include <utility>
#include <vector>

namespace tinyst {

// Marker appended to the last subword of every word.
inline constexpr const char* kWordEnd = "</w>";

// Ordered list of learned merge rules. Merges are over raw symbols; the
// word-end marker is attached only after segmentation, so rules learned
// on one corpus apply to any text.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;

  bool operator==(const BpeModel&) const = default;
};

// Learn up to n_merges merge rules by iterated most-frequent-pair
// counting over the whitespace-tokenized corpus (both languages
// concatenated). Ties break on the lexicographically smallest pair.
// Stops early when no adjacent pair is left.
BpeModel learn_bpe(const std::vector<std::string>& corpus, long n_merges);

// Segment one word into subword symbols; the last symbol carries the
// word-end marker.
std::vector<std::string> apply_bpe_word(const std::string& word,
                                        const BpeModel& model);

// Segment a whitespace-tokenized sentence.
std::vector<std::string> apply_bpe(const std::string& sentence,
                                   const BpeModel& model);

// Inverse of apply_bpe: concatenate subwords and turn markers back into
// spaces.
std::string join_bpe(const std::vector<std::string>& tokens);

void save_bpe(const BpeModel& model, const std::string& path);
BpeModel load_bpe(const std::string& path);

// Split a UTF-8 string into codepoint-sized symbols. Invalid bytes pass
// through as single symbols.
std::vector<std::string> utf8_symbols(const std::string& s);

std::vector<std::string> split_words(const std::string& sentence);

}  // namespace tinyst
