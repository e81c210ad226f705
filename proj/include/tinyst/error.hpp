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

#include <stdexcept>
#include <string>

namespace tinyst {

// Base class for all tinyst failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed or inconsistent data files / inputs (CLI exit code 2).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Non-finite losses or gradients (CLI exit code 3).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// CTC target that no frame alignment can produce. Carries the frame
// budget so callers can filter instead of aborting.
class UnalignableError : public DataError {
 public:
  UnalignableError(long frames, long required)
      : DataError("unalignable: " + std::to_string(frames) +
                  " frames < " + std::to_string(required) + " required"),
        frames_(frames),
        required_(required) {}
  long frames() const { return frames_; }
  long required() const { return required_; }

 private:
  long frames_;
  long required_;
};

}  // namespace tinyst
