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

#include "tinyst/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "tinyst/bpe.hpp"
#include "tinyst/error.hpp"

namespace tinyst {

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::GroundTruth: return "ground_truth";
    case Domain::SynthCased: return "synth_cased";
    case Domain::SynthLower: return "synth_lower";
  }
  return "?";
}

std::optional<Domain> parse_domain(const std::string& s) {
  if (s == "ground_truth") return Domain::GroundTruth;
  if (s == "synth_cased") return Domain::SynthCased;
  if (s == "synth_lower") return Domain::SynthLower;
  return std::nullopt;
}

namespace {
const char* kReservedNames[Vocabulary::kNumReserved] = {
    "<pad>", "<bos>", "<eos>", "<unk>",
    "<blank>", "<tag:ground_truth>", "<tag:synth_cased>", "<tag:synth_lower>"};
}

Vocabulary::Vocabulary() {
  for (const char* name : kReservedNames) {
    index_[name] = static_cast<int>(tokens_.size());
    tokens_.push_back(name);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus) {
  std::set<std::string> uniq;
  for (const auto& sent : corpus)
    for (const auto& tok : sent) uniq.insert(tok);
  Vocabulary v;
  for (const auto& tok : uniq) v.add(tok);
  return v;
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) {
    // A text token spelled like a reserved name must not alias the
    // reserved id; it stays out of the vocabulary and encodes as unk.
    if (it->second < kNumReserved) return kUnk;
    return it->second;
  }
  int id = static_cast<int>(tokens_.size());
  index_[token] = id;
  tokens_.push_back(token);
  return id;
}

int Vocabulary::encode(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end() || it->second < kNumReserved) return kUnk;
  return it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(encode(t));
  return ids;
}

const std::string& Vocabulary::decode(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(decode(id));
  return out;
}

bool Vocabulary::contains(const std::string& token) const {
  auto it = index_.find(token);
  return it != index_.end() && it->second >= kNumReserved;
}

bool Vocabulary::is_word_final(int id) const {
  const std::string& tok = decode(id);
  const std::string marker = kWordEnd;
  return tok.size() >= marker.size() &&
         tok.compare(tok.size() - marker.size(), marker.size(), marker) == 0;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary: " + path);
  for (const auto& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary: " + path);
  Vocabulary v;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= kNumReserved) {
      if (line != kReservedNames[lineno - 1])
        throw DataError("vocabulary " + path + ": line " + std::to_string(lineno) +
                        " must be the reserved token " + kReservedNames[lineno - 1]);
      continue;
    }
    if (line.empty()) continue;
    v.add(line);
  }
  return v;
}

std::string normalize_transcript(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

}  // namespace tinyst
