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

#include "doctest.h"

#include "helpers.hpp"
#include "tinyst/bpe.hpp"
#include "tinyst/error.hpp"
#include "tinyst/vocab.hpp"

using namespace tinyst;

TEST_CASE("learn_bpe counts pairs and breaks ties lexicographically") {
  BpeModel m = learn_bpe({"low low lower"}, 2);
  REQUIRE(m.merges.size() == 2);
  // (l,o) and (o,w) both occur 3 times; the smaller pair merges first.
  CHECK(m.merges[0] == std::make_pair(std::string("l"), std::string("o")));
  CHECK(m.merges[1] == std::make_pair(std::string("lo"), std::string("w")));
}

TEST_CASE("learn_bpe with zero merges returns an empty model") {
  CHECK(learn_bpe({"some text here"}, 0).merges.empty());
}

TEST_CASE("learn_bpe stops when no pair repeats") {
  BpeModel m = learn_bpe({"ab"}, 5);
  CHECK(m.merges.size() <= 5);
  // "ab" has a single adjacent pair; afterwards nothing is left to merge.
  REQUIRE(m.merges.size() == 1);
  CHECK(m.merges[0] == std::make_pair(std::string("a"), std::string("b")));
}

TEST_CASE("learn_bpe rejects an empty corpus") {
  CHECK_THROWS_AS(learn_bpe({}, 3), DataError);
}

TEST_CASE("learn_bpe is deterministic") {
  std::vector<std::string> corpus = {"the cat sat on the mat", "the dog sat"};
  CHECK(learn_bpe(corpus, 10).merges == learn_bpe(corpus, 10).merges);
}

TEST_CASE("apply_bpe with no merges splits into marked symbols") {
  BpeModel empty;
  auto toks = apply_bpe("xyz", empty);
  CHECK(toks == std::vector<std::string>{"x", "y", "z</w>"});
}

TEST_CASE("apply_bpe merges in learned order") {
  BpeModel m;
  m.merges = {{"l", "o"}, {"lo", "w"}};
  CHECK(apply_bpe("low", m) == std::vector<std::string>{"low</w>"});
  // Rules carry over to unseen words sharing the prefix.
  CHECK(apply_bpe("lower", m) ==
        std::vector<std::string>{"low", "e", "r</w>"});
}

TEST_CASE("apply then join recovers the sentence") {
  BpeModel m = learn_bpe({"what goes around comes around"}, 6);
  for (const std::string& s :
       {"what goes around", "comes around again", "entirely new words"})
    CHECK(join_bpe(apply_bpe(s, m)) == s);
}

TEST_CASE("re-applying merges to segmented output changes nothing") {
  BpeModel m = learn_bpe({"banana bandana cabana"}, 8);
  auto once = apply_bpe("banana bandana cabana", m);
  // Run the rule list again over the produced symbol sequence: nothing
  // should merge further.
  auto again = once;
  for (const auto& rule : m.merges) {
    const std::string merged = rule.first + rule.second;
    for (std::size_t i = 0; i + 1 < again.size();) {
      if (again[i] == rule.first && again[i + 1] == rule.second) {
        again[i] = merged;
        again.erase(again.begin() + static_cast<long>(i) + 1);
      } else {
        ++i;
      }
    }
  }
  CHECK(once == again);
}

TEST_CASE("bpe model save/load round trip") {
  testutil::TmpDir tmp("bpe");
  BpeModel m = learn_bpe({"round trip round"}, 4);
  save_bpe(m, tmp.file("model.bpe"));
  CHECK(load_bpe(tmp.file("model.bpe")) == m);
}

TEST_CASE("utf8 symbols split by codepoint") {
  auto syms = utf8_symbols("a\xC3\xA9o");  // a é o
  REQUIRE(syms.size() == 3);
  CHECK(syms[1] == "\xC3\xA9");
}

TEST_CASE("vocabulary reserves the fixed id block") {
  Vocabulary v;
  CHECK(v.size() == Vocabulary::kNumReserved);
  CHECK(v.is_reserved(Vocabulary::kPad));
  CHECK(v.is_reserved(Vocabulary::kBlank));
  CHECK(!v.is_reserved(Vocabulary::kNumReserved));
  CHECK(v.tag_id(Domain::GroundTruth) == Vocabulary::kTagBase);
  CHECK(v.tag_id(Domain::SynthLower) == Vocabulary::kTagBase + 2);
}

TEST_CASE("vocabulary encode/decode bijection, unk for OOV") {
  Vocabulary v = Vocabulary::build({{"b</w>", "a</w>"}, {"c", "a</w>"}});
  for (int id = Vocabulary::kNumReserved; id < v.size(); ++id)
    CHECK(v.encode(v.decode(id)) == id);
  CHECK(v.encode("never_seen") == Vocabulary::kUnk);
  // Reserved surface forms cannot be injected from text.
  CHECK(v.encode(v.decode(Vocabulary::kPad)) == Vocabulary::kUnk);
  // build sorts the novel tokens.
  CHECK(v.decode(Vocabulary::kNumReserved) == "a</w>");
}

TEST_CASE("vocabulary save/load round trip") {
  testutil::TmpDir tmp("vocab");
  Vocabulary v = Vocabulary::build({{"x</w>", "yz", "y</w>"}});
  v.save(tmp.file("vocab.txt"));
  CHECK(Vocabulary::load(tmp.file("vocab.txt")) == v);
}

TEST_CASE("word-final detection follows the marker") {
  Vocabulary v = Vocabulary::build({{"ab", "c</w>"}});
  CHECK(v.is_word_final(v.encode("c</w>")));
  CHECK(!v.is_word_final(v.encode("ab")));
}

TEST_CASE("normalize_transcript lowercases and strips punctuation") {
  CHECK(normalize_transcript("Hello, World!") == "hello world");
  CHECK(normalize_transcript("it's MIXED-case.") == "its mixedcase");
  // Whitespace is left alone; tokenization collapses it later.
  CHECK(normalize_transcript("two  spaces") == "two  spaces");
}
