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

#include "tinyst/bpe.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "tinyst/error.hpp"

namespace tinyst {

std::vector<std::string> utf8_symbols(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > s.size()) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> split_words(const std::string& sentence) {
  std::vector<std::string> words;
  std::istringstream is(sentence);
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

namespace {

using Pair = std::pair<std::string, std::string>;

// Replace every adjacent (a,b) with the merged symbol, left to right.
void merge_in_word(std::vector<std::string>& syms, const Pair& rule) {
  const std::string merged = rule.first + rule.second;
  std::size_t w = 0;
  for (std::size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == rule.first && syms[r + 1] == rule.second) {
      syms[w++] = merged;
      r += 2;
    } else {
      if (w != r) syms[w] = std::move(syms[r]);
      ++w;
      r += 1;
    }
  }
  syms.resize(w);
}

}  // namespace

BpeModel learn_bpe(const std::vector<std::string>& corpus, long n_merges) {
  if (corpus.empty()) throw DataError("empty corpus");
  if (n_merges < 0) throw ConfigError("n_merges must be >= 0");

  // Word frequency table; each distinct word is processed once.
  std::unordered_map<std::string, long> word_count;
  bool any_word = false;
  for (const auto& sentence : corpus) {
    for (const auto& w : split_words(sentence)) {
      ++word_count[w];
      any_word = true;
    }
  }
  if (!any_word) throw DataError("empty corpus");

  std::vector<std::vector<std::string>> words;
  std::vector<long> counts;
  // std::map keeps iteration deterministic across runs.
  std::map<std::string, long> sorted(word_count.begin(), word_count.end());
  for (const auto& [w, c] : sorted) {
    words.push_back(utf8_symbols(w));
    counts.push_back(c);
  }

  BpeModel model;
  for (long step = 0; step < n_merges; ++step) {
    std::map<Pair, long> pair_count;
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
      const auto& syms = words[wi];
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        pair_count[{syms[i], syms[i + 1]}] += counts[wi];
    }
    if (pair_count.empty()) break;

    // Highest count wins; the map's ordering makes the lexicographically
    // smallest pair win ties.
    Pair best;
    long best_count = 0;
    for (const auto& [p, c] : pair_count) {
      if (c > best_count) {
        best = p;
        best_count = c;
      }
    }
    model.merges.push_back(best);
    for (auto& syms : words) merge_in_word(syms, best);
  }
  return model;
}

std::vector<std::string> apply_bpe_word(const std::string& word,
                                        const BpeModel& model) {
  std::vector<std::string> syms = utf8_symbols(word);
  if (syms.empty()) return {};
  for (const auto& rule : model.merges) {
    if (syms.size() < 2) break;
    merge_in_word(syms, rule);
  }
  syms.back() += kWordEnd;
  return syms;
}

std::vector<std::string> apply_bpe(const std::string& sentence,
                                   const BpeModel& model) {
  std::vector<std::string> out;
  for (const auto& w : split_words(sentence)) {
    auto syms = apply_bpe_word(w, model);
    out.insert(out.end(), syms.begin(), syms.end());
  }
  return out;
}

std::string join_bpe(const std::vector<std::string>& tokens) {
  std::string text;
  const std::string marker = kWordEnd;
  for (const auto& tok : tokens) {
    if (tok.size() >= marker.size() &&
        tok.compare(tok.size() - marker.size(), marker.size(), marker) == 0) {
      text += tok.substr(0, tok.size() - marker.size());
      text += ' ';
    } else {
      text += tok;
    }
  }
  if (!text.empty() && text.back() == ' ') text.pop_back();
  return text;
}

void save_bpe(const BpeModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write bpe model: " + path);
  for (const auto& [a, b] : model.merges) out << a << ' ' << b << '\n';
}

BpeModel load_bpe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read bpe model: " + path);
  BpeModel model;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size())
      throw DataError("bpe model " + path + ": malformed merge at line " +
                      std::to_string(lineno));
    model.merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return model;
}

}  // namespace tinyst
