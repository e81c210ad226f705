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

#include "tinyst/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tinyst/binio.hpp"
#include "tinyst/error.hpp"
#include "tinyst/model.hpp"
#include "tinyst/vocab.hpp"

namespace tinyst {

const std::vector<TeacherRow>& KdStore::rows_for(const std::string& sample_id) const {
  auto it = rows.find(sample_id);
  if (it == rows.end())
    throw DataError("no teacher rows for sample: " + sample_id);
  return it->second;
}

namespace {

// Shared core: pick the k most probable entries (ties to the lower id)
// and renormalize. `probs` need not sum to 1.
TeacherRow topk_core(const std::vector<double>& probs, long k) {
  if (k < 1) throw ConfigError("top-k requires k >= 1");
  const long v = static_cast<long>(probs.size());
  if (k > v)
    throw ConfigError("top-k k=" + std::to_string(k) + " exceeds distribution size " +
                      std::to_string(v));
  std::vector<long> order(static_cast<std::size_t>(v));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&probs](long a, long b) {
                      auto pa = probs[static_cast<std::size_t>(a)];
                      auto pb = probs[static_cast<std::size_t>(b)];
                      return pa > pb || (pa == pb && a < b);
                    });
  TeacherRow row;
  double sum = 0.0;
  for (long i = 0; i < k; ++i) sum += probs[static_cast<std::size_t>(order[i])];
  if (sum <= 0.0) throw DataError("top-k selection has zero total mass");
  for (long i = 0; i < k; ++i) {
    long id = order[static_cast<std::size_t>(i)];
    row.ids.push_back(static_cast<int>(id));
    row.probs.push_back(probs[static_cast<std::size_t>(id)] / sum);
  }
  return row;
}

std::vector<double> softmax_flat(const Tensor& logits) {
  std::vector<double> p(static_cast<std::size_t>(logits.size()));
  double m = logits[0];
  for (long i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
  double sum = 0.0;
  for (long i = 0; i < logits.size(); ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(logits[i] - m);
    sum += p[static_cast<std::size_t>(i)];
  }
  for (double& x : p) x /= sum;
  return p;
}

}  // namespace

TeacherRow extract_topk(const Tensor& logits_row, long k) {
  if (logits_row.size() < 1) throw DataError("empty logits row");
  return topk_core(softmax_flat(logits_row), k);
}

TeacherRow extract_topk_from_probs(const std::vector<double>& probs, long k) {
  if (probs.empty()) throw DataError("empty probability row");
  return topk_core(probs, k);
}

KdStore distill_corpus(const Checkpoint& teacher,
                       const std::vector<EncodedSample>& data, long k,
                       DistillStats* stats) {
  teacher.config.validate();
  if (teacher.config.kind != ModelKind::Text)
    throw ConfigError("distillation teacher must be a text model");
  if (k < 1 || k > teacher.config.vocab_size)
    throw ConfigError("distillation k out of range");

  KdStore store;
  store.k = k;
  DistillStats local;
  Rng rng(0);  // unused: all passes run with dropout off
  for (const auto& s : data) {
    if (s.transcript_ids.empty()) {
      ++local.skipped;
      continue;
    }
    Tensor memory =
        encode_text(s.transcript_ids, teacher.params, teacher.config, rng, false);
    std::vector<int> dec_in = {Vocabulary::kBos};
    dec_in.insert(dec_in.end(), s.target_ids.begin(), s.target_ids.end() - 1);
    Tensor logits = decode_step(dec_in, memory, std::nullopt, teacher.params,
                                teacher.config, rng, false);
    std::vector<TeacherRow> rows;
    rows.reserve(s.target_ids.size());
    std::vector<double> buf(static_cast<std::size_t>(logits.dim(1)));
    for (long i = 0; i < logits.dim(0); ++i) {
      Tensor row({logits.dim(1)});
      for (long j = 0; j < logits.dim(1); ++j) row[j] = logits.at(i, j);
      rows.push_back(extract_topk(row, k));
    }
    store.rows.emplace(s.id, std::move(rows));
    ++local.distilled;
  }
  if (stats) *stats = local;
  return store;
}

namespace {

constexpr char kStoreMagic[4] = {'K', 'D', 'S', 'T'};
constexpr std::uint16_t kStoreVersion = 1;

}  // namespace

void save_store(const KdStore& store, const std::string& path) {
  if (store.k < 1) throw ConfigError("store k must be at least 1");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write store: " + path);
  std::ofstream idx(path + ".idx");
  if (!idx) throw DataError("cannot write store index: " + path + ".idx");

  binio::write_bytes(os, kStoreMagic, 4);
  binio::write_le<std::uint16_t>(os, kStoreVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(store.k));
  for (const auto& [id, rows] : store.rows) {
    auto offset = static_cast<long long>(os.tellp());
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(rows.size()));
    for (const auto& row : rows) {
      if (static_cast<long>(row.ids.size()) != store.k ||
          row.probs.size() != row.ids.size())
        throw DataError("store row width mismatch for sample: " + id);
      for (std::size_t j = 0; j < row.ids.size(); ++j) {
        binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(row.ids[j]));
        binio::write_le<float>(os, static_cast<float>(row.probs[j]));
      }
    }
    idx << id << '\t' << offset << '\t' << rows.size() << '\n';
  }
  if (!os || !idx) throw DataError("write failed: " + path);
}

KdStore load_store(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open store: " + path);
  char magic[4];
  binio::read_bytes(is, magic, 4, "store magic");
  if (std::memcmp(magic, kStoreMagic, 4) != 0)
    throw DataError("not a distillation store: " + path);
  auto version = binio::read_le<std::uint16_t>(is, "store version");
  if (version != kStoreVersion)
    throw DataError("unsupported store version " + std::to_string(version));

  KdStore store;
  store.k = binio::read_le<std::uint32_t>(is, "store k");

  std::ifstream idx(path + ".idx");
  if (!idx) throw DataError("cannot open store index: " + path + ".idx");
  std::string line;
  long line_no = 0;
  while (std::getline(idx, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    long long offset = -1;
    long n_rows = -1;
    if (!std::getline(ls, id, '\t') || !(ls >> offset >> n_rows) || id.empty() ||
        offset < 0 || n_rows < 0)
      throw DataError(path + ".idx:" + std::to_string(line_no) +
                      ": malformed index line");
    is.seekg(offset);
    auto stored_rows = binio::read_le<std::uint32_t>(is, "row count for " + id);
    if (static_cast<long>(stored_rows) != n_rows)
      throw DataError("index row count disagrees with store for sample: " + id);
    std::vector<TeacherRow> rows;
    rows.reserve(stored_rows);
    for (std::uint32_t r = 0; r < stored_rows; ++r) {
      TeacherRow row;
      double sum = 0.0;
      for (long j = 0; j < store.k; ++j) {
        row.ids.push_back(
            static_cast<int>(binio::read_le<std::uint32_t>(is, "row id")));
        row.probs.push_back(binio::read_le<float>(is, "row prob"));
        sum += row.probs.back();
      }
      if (std::abs(sum - 1.0) > 1e-4)
        throw DataError("store row probabilities do not sum to 1 for sample: " + id);
      for (double& p : row.probs) p /= sum;  // absorb f32 rounding drift
      rows.push_back(std::move(row));
    }
    if (!store.rows.emplace(id, std::move(rows)).second)
      throw DataError("duplicate sample in store index: " + id);
  }
  return store;
}

}  // namespace tinyst
