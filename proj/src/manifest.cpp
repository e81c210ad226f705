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

#include "tinyst/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "tinyst/error.hpp"

namespace tinyst {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::vector<Alignment> parse_alignments(const std::string& field, long lineno,
                                        const std::string& path) {
  std::vector<Alignment> out;
  std::istringstream is(field);
  std::string triple;
  while (std::getline(is, triple, ',')) {
    Alignment a;
    char c1 = 0, c2 = 0;
    std::istringstream ts(triple);
    if (!(ts >> a.word >> c1 >> a.start_frame >> c2 >> a.end_frame) || c1 != ':' ||
        c2 != ':')
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": malformed alignment triple '" + triple + "'");
    if (a.start_frame < 0 || a.end_frame < a.start_frame)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": alignment frames must be nondecreasing and nonnegative");
    if (!out.empty() && a.start_frame < out.back().start_frame)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": alignment spans must be nondecreasing");
    out.push_back(a);
  }
  if (out.empty())
    throw DataError(path + ":" + std::to_string(lineno) + ": empty alignment field");
  return out;
}

std::string format_alignments(const std::vector<Alignment>& alignments) {
  std::ostringstream os;
  for (std::size_t i = 0; i < alignments.size(); ++i) {
    if (i) os << ',';
    os << alignments[i].word << ':' << alignments[i].start_frame << ':'
       << alignments[i].end_frame;
  }
  return os.str();
}

}  // namespace

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read manifest: " + path);
  Manifest m;
  std::set<std::string> seen_ids;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto tab = line.find('\t');
      if (tab != std::string::npos)
        m.metadata[line.substr(1, tab - 1)] = line.substr(tab + 1);
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() != 5 && fields.size() != 6)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 5 or 6 tab-separated fields, got " +
                      std::to_string(fields.size()));
    ManifestRecord rec;
    rec.id = fields[0];
    rec.feature_path = fields[1];
    rec.transcript = fields[2];
    rec.target = fields[3];
    auto dom = parse_domain(fields[4]);
    if (!dom)
      throw DataError(path + ":" + std::to_string(lineno) + ": unknown domain tag '" +
                      fields[4] + "'");
    rec.domain = *dom;
    if (fields.size() == 6)
      rec.alignments = parse_alignments(fields[5], lineno, path);
    if (rec.id.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": empty sample id");
    if (!seen_ids.insert(rec.id).second)
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate sample id '" +
                      rec.id + "'");
    m.records.push_back(std::move(rec));
  }
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path);
  for (const auto& [k, v] : m.metadata) out << '#' << k << '\t' << v << '\n';
  for (const auto& rec : m.records) {
    out << rec.id << '\t' << rec.feature_path << '\t' << rec.transcript << '\t'
        << rec.target << '\t' << domain_name(rec.domain);
    if (rec.alignments) out << '\t' << format_alignments(*rec.alignments);
    out << '\n';
  }
}

std::string resolve_feature_path(const std::string& root, const std::string& path) {
  if (root.empty() || (!path.empty() && path[0] == '/')) return path;
  return root + "/" + path;
}

FilterResult filter_long(const Manifest& m, const std::string& feature_root,
                         long max_frames) {
  FilterResult res;
  res.manifest.metadata = m.metadata;
  for (const auto& rec : m.records) {
    long t = feature_frame_count(resolve_feature_path(feature_root, rec.feature_path));
    if (t > max_frames) {
      ++res.removed;
    } else {
      res.manifest.records.push_back(rec);
    }
  }
  return res;
}

EncodedSample encode_sample(const ManifestRecord& rec, const BpeModel& bpe,
                            const Vocabulary& vocab, const std::string& feature_root,
                            bool load_feature_matrix) {
  EncodedSample s;
  s.id = rec.id;
  s.domain = rec.domain;
  s.alignments = rec.alignments;
  s.transcript_ids = vocab.encode(apply_bpe(rec.transcript, bpe));
  s.target_ids = vocab.encode(apply_bpe(rec.target, bpe));
  s.target_ids.push_back(Vocabulary::kEos);
  s.ctc_ids = vocab.encode(apply_bpe(normalize_transcript(rec.transcript), bpe));
  if (!rec.feature_path.empty()) {
    std::string full = resolve_feature_path(feature_root, rec.feature_path);
    if (load_feature_matrix) {
      s.features = load_features(full);
      s.n_frames = s.features.dim(0);
    } else {
      s.n_frames = feature_frame_count(full);
    }
    if (s.alignments) {
      for (const auto& a : *s.alignments)
        if (a.end_frame > s.n_frames)
          throw DataError("sample " + s.id + ": alignment span " +
                          std::to_string(a.end_frame) + " exceeds " +
                          std::to_string(s.n_frames) + " frames");
    }
  }
  return s;
}

std::vector<EncodedSample> encode_manifest(const Manifest& m, const BpeModel& bpe,
                                           const Vocabulary& vocab,
                                           const std::string& feature_root,
                                           bool load_feature_matrix) {
  std::vector<EncodedSample> out;
  out.reserve(m.records.size());
  for (const auto& rec : m.records)
    out.push_back(encode_sample(rec, bpe, vocab, feature_root, load_feature_matrix));
  return out;
}

}  // namespace tinyst
