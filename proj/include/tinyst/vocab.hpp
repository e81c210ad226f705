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
#include <string>
#include <unordered_map>
#include <vector>

namespace tinyst {

// The three data provenance classes used for tagged multi-domain
// training: real targets, targets generated from cased transcripts, and
// targets generated from lowercased uncased transcripts.
enum class Domain { GroundTruth = 0, SynthCased = 1, SynthLower = 2 };

const char* domain_name(Domain d);
std::optional<Domain> parse_domain(const std::string& s);

// Token <-> id bijection with a fixed reserved block: pad, bos, eos,
// unk, the CTC blank and one tag token per domain. Ids are contiguous
// from 0; text tokens start after the reserved block.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kBlank = 4;
  static constexpr int kTagBase = 5;  // kTagBase + static_cast<int>(domain)
  static constexpr int kNumReserved = 8;

  Vocabulary();

  // Adds the distinct tokens of a segmented corpus in sorted order.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus);

  int add(const std::string& token);

  int encode(const std::string& token) const;  // unk for OOV
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  const std::string& decode(int id) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  bool contains(const std::string& token) const;
  bool is_reserved(int id) const { return id >= 0 && id < kNumReserved; }
  int tag_id(Domain d) const { return kTagBase + static_cast<int>(d); }
  int size() const { return static_cast<int>(tokens_.size()); }

  // True when the token's surface form ends a word.
  bool is_word_final(int id) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercase ASCII letters and drop punctuation; the normalization
// applied to transcripts before they are used as recognition targets.
std::string normalize_transcript(const std::string& text);

}  // namespace tinyst
