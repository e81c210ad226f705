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

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace tinyst {

// Seeded pseudo-random stream. All sampling is implemented on top of the
// raw mt19937_64 output, so streams are bit-identical across platforms
// and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  long uniform_int(long lo, long hi) {
    if (hi <= lo) return lo;
    auto range = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(next_u64() % range);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, one value per call; the spare is discarded to keep the
  // draw count per sample predictable.
  double gaussian(double mean = 0.0, double stddev = 1.0) {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * z;
  }

  // Child stream for a named unit of work (e.g. one sample). Streams
  // derived from distinct keys are independent for practical purposes.
  Rng derive(const std::string& key) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : key) {
      h ^= c;
      h *= 1099511628211ull;
    }
    std::mt19937_64 snapshot = engine_;
    return Rng(h ^ snapshot());
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Fisher-Yates shuffle driven by our Rng, so permutations are
// reproducible across standard libraries (std::shuffle is not).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (long i = static_cast<long>(v.size()) - 1; i > 0; --i) {
    long j = rng.uniform_int(0, i);
    std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
  }
}

}  // namespace tinyst
