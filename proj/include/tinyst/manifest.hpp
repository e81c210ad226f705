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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tinyst/bpe.hpp"
#include "tinyst/features.hpp"
#include "tinyst/vocab.hpp"

namespace tinyst {

// Frame span of one transcript word, used by sub-sequence sampling.
struct Alignment {
  long word = 0;
  long start_frame = 0;
  long end_frame = 0;
  bool operator==(const Alignment&) const = default;
};

// One line of a manifest file. Text fields hold raw (pre-BPE) token
// text; encoding to ids happens when a dataset is materialized.
struct ManifestRecord {
  std::string id;
  std::string feature_path;
  std::string transcript;
  std::string target;
  Domain domain = Domain::GroundTruth;
  std::optional<std::vector<Alignment>> alignments;
  bool operator==(const ManifestRecord&) const = default;
};

// Tab-separated, one record per line:
//   id  feature_path  transcript  target  domain  [alignments]
// where alignments are comma-separated word:start:end triples. Lines
// starting with '#' carry corpus metadata as "#key<TAB>value".
struct Manifest {
  std::map<std::string, std::string> metadata;
  std::vector<ManifestRecord> records;
  bool operator==(const Manifest&) const = default;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

struct FilterResult {
  Manifest manifest;
  long removed = 0;
};

// Drop every sample whose feature file has more than max_frames frames.
// feature_root prefixes relative feature paths.
FilterResult filter_long(const Manifest& m, const std::string& feature_root,
                         long max_frames = 2000);

std::string resolve_feature_path(const std::string& root, const std::string& path);

// A manifest record with text run through BPE and the vocabulary.
// target_ids carry a trailing eos so sequence end is supervised;
// ctc_ids are the normalized (lowercased, punctuation-free) transcript.
struct EncodedSample {
  std::string id;
  FeatureMatrix features;  // empty unless loaded
  std::vector<int> transcript_ids;
  std::vector<int> target_ids;
  std::vector<int> ctc_ids;
  Domain domain = Domain::GroundTruth;
  std::optional<std::vector<Alignment>> alignments;
  long n_frames = 0;
};

EncodedSample encode_sample(const ManifestRecord& rec, const BpeModel& bpe,
                            const Vocabulary& vocab, const std::string& feature_root,
                            bool load_feature_matrix);

// Materialize the whole manifest. Feature matrices are loaded when
// load_feature_matrix is set; frame counts are read either way.
std::vector<EncodedSample> encode_manifest(const Manifest& m, const BpeModel& bpe,
                                           const Vocabulary& vocab,
                                           const std::string& feature_root,
                                           bool load_feature_matrix);

}  // namespace tinyst
