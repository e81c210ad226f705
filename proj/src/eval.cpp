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

#include "tinyst/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "tinyst/bpe.hpp"  // split_words
#include "tinyst/error.hpp"

namespace tinyst {

std::vector<std::string> bleu_tokenize(const std::string& line) {
  std::string spaced;
  spaced.reserve(line.size() * 2);
  for (unsigned char c : line) {
    if (std::ispunct(c)) {
      spaced += ' ';
      spaced += static_cast<char>(c);
      spaced += ' ';
    } else {
      spaced += static_cast<char>(c);
    }
  }
  return split_words(spaced);
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                      tokens.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace

BleuReport corpus_bleu(const std::vector<std::string>& hyps,
                       const std::vector<std::string>& refs) {
  if (hyps.size() != refs.size())
    throw DataError("hypothesis/reference line counts differ: " +
                    std::to_string(hyps.size()) + " vs " +
                    std::to_string(refs.size()));

  std::array<long, 4> matched = {0, 0, 0, 0};
  std::array<long, 4> total = {0, 0, 0, 0};
  long hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    auto h = bleu_tokenize(hyps[i]);
    auto r = bleu_tokenize(refs[i]);
    hyp_len += static_cast<long>(h.size());
    ref_len += static_cast<long>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto hc = count_ngrams(h, n);
      auto rc = count_ngrams(r, n);
      for (const auto& [gram, c] : hc) {
        auto it = rc.find(gram);
        long clip = it == rc.end() ? 0 : std::min(c, it->second);
        matched[n - 1] += clip;
        total[n - 1] += c;
      }
    }
  }

  BleuReport rep;
  rep.hyp_len = hyp_len;
  rep.ref_len = ref_len;
  for (std::size_t n = 0; n < 4; ++n)
    rep.precisions[n] = total[n] > 0
                            ? static_cast<double>(matched[n]) /
                                  static_cast<double>(total[n])
                            : 0.0;
  rep.brevity_penalty =
      hyp_len == 0 ? 0.0
      : hyp_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) /
                               static_cast<double>(hyp_len));

  bool any_zero = false;
  double log_sum = 0.0;
  for (double p : rep.precisions) {
    if (p <= 0.0)
      any_zero = true;
    else
      log_sum += std::log(p);
  }
  rep.bleu = any_zero || hyp_len == 0
                 ? 0.0
                 : 100.0 * rep.brevity_penalty * std::exp(log_sum / 4.0);
  return rep;
}

WerReport wer(const std::vector<std::string>& hyp_words,
              const std::vector<std::string>& ref_words) {
  if (ref_words.empty()) throw DataError("empty reference");
  const std::size_t n = hyp_words.size(), m = ref_words.size();

  // dp[i][j]: edits to turn hyp[0..i) into ref[0..j).
  std::vector<std::vector<long>> dp(n + 1, std::vector<long>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      long sub = dp[i - 1][j - 1] + (hyp_words[i - 1] == ref_words[j - 1] ? 0 : 1);
      long ins = dp[i - 1][j] + 1;  // hyp has an extra word
      long del = dp[i][j - 1] + 1;  // hyp is missing a word
      dp[i][j] = std::min({sub, ins, del});
    }

  WerReport rep;
  rep.n_ref_words = static_cast<long>(m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp[i][j] == dp[i - 1][j - 1] +
                        (hyp_words[i - 1] == ref_words[j - 1] ? 0 : 1)) {
      if (hyp_words[i - 1] != ref_words[j - 1]) ++rep.substitutions;
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++rep.insertions;
      --i;
    } else {
      ++rep.deletions;
      --j;
    }
  }
  rep.wer = static_cast<double>(rep.substitutions + rep.insertions + rep.deletions) /
            static_cast<double>(rep.n_ref_words);
  return rep;
}

WerReport corpus_wer(const std::vector<std::string>& hyps,
                     const std::vector<std::string>& refs) {
  if (hyps.size() != refs.size())
    throw DataError("hypothesis/reference line counts differ: " +
                    std::to_string(hyps.size()) + " vs " +
                    std::to_string(refs.size()));
  WerReport total;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    WerReport line = wer(split_words(hyps[i]), split_words(refs[i]));
    total.substitutions += line.substitutions;
    total.insertions += line.insertions;
    total.deletions += line.deletions;
    total.n_ref_words += line.n_ref_words;
  }
  if (total.n_ref_words == 0) throw DataError("empty reference");
  total.wer =
      static_cast<double>(total.substitutions + total.insertions + total.deletions) /
      static_cast<double>(total.n_ref_words);
  return total;
}

}  // namespace tinyst
