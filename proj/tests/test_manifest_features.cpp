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

#include <fstream>

#include "doctest.h"

#include "helpers.hpp"
#include "tinyst/error.hpp"
#include "tinyst/features.hpp"
#include "tinyst/manifest.hpp"

using namespace tinyst;

namespace {

FeatureMatrix make_features(long t, long f, double base = 0.0) {
  FeatureMatrix m({t, f});
  for (long i = 0; i < t; ++i)
    for (long j = 0; j < f; ++j) m.at(i, j) = base + static_cast<double>(i * f + j);
  return m;
}

Manifest tiny_manifest(const testutil::TmpDir& tmp, const std::vector<long>& frames) {
  Manifest m;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::string id = "s" + std::to_string(i);
    std::string feat = tmp.file(id + ".fbank");
    save_features(make_features(frames[i], 4), feat);
    ManifestRecord r;
    r.id = id;
    r.feature_path = feat;
    r.transcript = "hello there";
    r.target = "general kenobi";
    r.domain = i % 2 == 0 ? Domain::GroundTruth : Domain::SynthCased;
    m.records.push_back(r);
  }
  return m;
}

}  // namespace

TEST_CASE("feature file round trip preserves values to f32") {
  testutil::TmpDir tmp("feat");
  FeatureMatrix m = make_features(7, 5, 0.25);
  save_features(m, tmp.file("x.fbank"));
  FeatureMatrix back = load_features(tmp.file("x.fbank"));
  REQUIRE(back.shape() == m.shape());
  for (long i = 0; i < m.size(); ++i)
    CHECK(back[i] == doctest::Approx(m[i]).epsilon(1e-6));
  CHECK(feature_frame_count(tmp.file("x.fbank")) == 7);
}

TEST_CASE("manifest save/load round trip") {
  testutil::TmpDir tmp("man");
  Manifest m = tiny_manifest(tmp, {8, 12});
  m.metadata["lang"] = "en-de";
  m.records[0].alignments = std::vector<Alignment>{{0, 0, 3}, {1, 3, 8}};
  save_manifest(m, tmp.file("data.tsv"));
  Manifest back = load_manifest(tmp.file("data.tsv"));
  CHECK(back == m);
}

TEST_CASE("manifest with unknown domain tag fails naming it") {
  testutil::TmpDir tmp("man2");
  std::ofstream os(tmp.file("bad.tsv"));
  os << "s0\tf.fbank\thi\thallo\tbogus\n";
  os.close();
  CHECK_THROWS_WITH_AS(load_manifest(tmp.file("bad.tsv")),
                       doctest::Contains("bogus"), DataError);
}

TEST_CASE("malformed manifest line reports the line number") {
  testutil::TmpDir tmp("man3");
  std::ofstream os(tmp.file("bad.tsv"));
  os << "s0\tf.fbank\thi\thallo\tground_truth\n";
  os << "only_two\tfields\n";
  os.close();
  CHECK_THROWS_WITH_AS(load_manifest(tmp.file("bad.tsv")), doctest::Contains("2"),
                       DataError);
}

TEST_CASE("empty manifest file loads as empty manifest") {
  testutil::TmpDir tmp("man4");
  std::ofstream(tmp.file("empty.tsv")).close();
  Manifest m = load_manifest(tmp.file("empty.tsv"));
  CHECK(m.records.empty());
}

TEST_CASE("filter_long drops only samples beyond the frame cap") {
  testutil::TmpDir tmp("filt");
  Manifest m = tiny_manifest(tmp, {2000, 2001, 100});
  FilterResult r = filter_long(m, "", 2000);
  CHECK(r.removed == 1);
  REQUIRE(r.manifest.records.size() == 2);
  CHECK(r.manifest.records[0].id == "s0");  // exactly 2000 frames: retained
  CHECK(r.manifest.records[1].id == "s2");

  FilterResult all = filter_long(r.manifest, "", 2000);
  CHECK(all.removed == 0);
  CHECK(all.manifest == r.manifest);
}

TEST_CASE("encode_manifest produces ids, eos-terminated targets and ctc ids") {
  testutil::TmpDir tmp("enc");
  Manifest m = tiny_manifest(tmp, {9});
  m.records[0].transcript = "Ab cd!";
  m.records[0].target = "xy";
  BpeModel bpe;  // character split
  Vocabulary vocab = Vocabulary::build({apply_bpe("Ab cd!", bpe),
                                        apply_bpe("xy", bpe),
                                        apply_bpe("ab cd", bpe)});
  auto samples = encode_manifest(m, bpe, vocab, "", true);
  REQUIRE(samples.size() == 1);
  const auto& s = samples[0];
  CHECK(s.n_frames == 9);
  CHECK(s.features.dim(0) == 9);
  REQUIRE(!s.target_ids.empty());
  CHECK(s.target_ids.back() == Vocabulary::kEos);
  std::vector<int> expected = vocab.encode(std::vector<std::string>{"x", "y</w>"});
  expected.push_back(Vocabulary::kEos);
  CHECK(s.target_ids == expected);
  // CTC side is the normalized transcript.
  CHECK(s.ctc_ids == vocab.encode(apply_bpe("ab cd", bpe)));
}

TEST_CASE("duplicate sample ids are rejected at load") {
  testutil::TmpDir tmp("dup");
  Manifest m = tiny_manifest(tmp, {4, 4});
  m.records[1].id = m.records[0].id;
  save_manifest(m, tmp.file("dup.tsv"));
  CHECK_THROWS_WITH_AS(load_manifest(tmp.file("dup.tsv")),
                       doctest::Contains("duplicate"), DataError);
}
