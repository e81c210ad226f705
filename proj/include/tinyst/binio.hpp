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

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tinyst/error.hpp"

// Little-endian primitives for the binary file formats (checkpoints,
// feature files, distillation stores).
namespace tinyst::binio {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; add byte swapping for this host");

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n,
                       const std::string& what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw DataError("truncated file while reading " + what);
}

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  write_bytes(os, buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  unsigned char buf[sizeof(T)];
  read_bytes(is, buf, sizeof(T), what);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is, const std::string& what) {
  auto n = read_le<std::uint32_t>(is, what);
  std::string s(n, '\0');
  if (n > 0) read_bytes(is, s.data(), n, what);
  return s;
}

}  // namespace tinyst::binio
