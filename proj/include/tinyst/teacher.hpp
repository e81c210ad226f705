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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tinyst/manifest.hpp"
#include "tinyst/tensor.hpp"

namespace tinyst {

struct Checkpoint;  // model.hpp

// Top-K slice of a teacher output distribution for one target position.
// Probabilities are renormalized to sum to 1 and stored descending.
struct TeacherRow {
  std::vector<int> ids;
  std::vector<double> probs;
  bool operator==(const TeacherRow&) const = default;
};

// Precomputed teacher distributions: sample id -> one row per target
// token. Write once, then read-only during training.
struct KdStore {
  long k = 0;
  std::map<std::string, std::vector<TeacherRow>> rows;

  // Rows for one sample; missing ids are an error that names the id.
  const std::vector<TeacherRow>& rows_for(const std::string& sample_id) const;
  bool operator==(const KdStore&) const = default;
};

// Softmax the row, keep the k most probable entries (ties to the lower
// token id) and renormalize.
TeacherRow extract_topk(const Tensor& logits_row, long k);
TeacherRow extract_topk_from_probs(const std::vector<double>& probs, long k);

struct DistillStats {
  long distilled = 0;
  long skipped = 0;  // samples without a transcript
};

// Run the teacher in forced-decoding mode over every (transcript ->
// target) pair of the manifest and store the per-position top-K rows.
KdStore distill_corpus(const Checkpoint& teacher, const std::vector<EncodedSample>& data,
                       long k, DistillStats* stats = nullptr);

// Binary store: magic "KDST", u16 version, u32 K, then per sample a
// u32 row count followed by rows of K (u32 id, f32 prob) pairs. A
// plain-text sidecar index (path + ".idx") lists
// sample_id<TAB>offset<TAB>n_rows per line.
void save_store(const KdStore& store, const std::string& path);
KdStore load_store(const std::string& path);

}  // namespace tinyst
