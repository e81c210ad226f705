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

#include "tinyst/features.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "tinyst/error.hpp"

namespace tinyst {

namespace {

constexpr char kMagic[4] = {'F', 'B', 'N', 'K'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError("truncated feature file: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void read_magic(std::istream& in, const std::string& path) {
  char m[4];
  if (!in.read(m, 4) || std::memcmp(m, kMagic, 4) != 0)
    throw DataError("not a feature file (bad magic): " + path);
}

}  // namespace

void validate_features(const FeatureMatrix& m) {
  if (m.ndim() != 2 || m.dim(0) < 1 || m.dim(1) < 1)
    throw DataError("feature matrix must be T x F with T >= 1");
  if (!m.all_finite()) throw DataError("feature matrix contains non-finite values");
}

void save_features(const FeatureMatrix& m, const std::string& path) {
  validate_features(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file: " + path);
  out.write(kMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(m.dim(0)));
  write_u32(out, static_cast<std::uint32_t>(m.dim(1)));
  for (long i = 0; i < m.size(); ++i) {
    float f = static_cast<float>(m[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(out, bits);
  }
}

FeatureMatrix load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read feature file: " + path);
  read_magic(in, path);
  long t = read_u32(in, path);
  long f = read_u32(in, path);
  FeatureMatrix m({t, f});
  for (long i = 0; i < m.size(); ++i) {
    std::uint32_t bits = read_u32(in, path);
    float v;
    std::memcpy(&v, &bits, 4);
    m[i] = v;
  }
  validate_features(m);
  return m;
}

long feature_frame_count(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read feature file: " + path);
  read_magic(in, path);
  return read_u32(in, path);
}

}  // namespace tinyst
