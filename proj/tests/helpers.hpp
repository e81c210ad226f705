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

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tinyst/rng.hpp"
#include "tinyst/tensor.hpp"

namespace testutil {

using tinyst::Rng;
using tinyst::Tensor;

inline Tensor random_tensor(std::vector<long> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t[i] = rng.gaussian(0.0, scale);
  return t;
}

// Central-difference gradient of a scalar function, entry by entry.
inline Tensor numeric_grad(const std::function<double(const Tensor&)>& f, Tensor x,
                           double h = 1e-5) {
  Tensor g(x.shape());
  for (long i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_rel_err(const Tensor& a, const Tensor& b, double floor_val = 1e-6) {
  double worst = 0.0;
  for (long i = 0; i < a.size(); ++i) {
    double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor_val});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Unique scratch directory, removed on destruction.
class TmpDir {
 public:
  explicit TmpDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("tinyst_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
