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

#include <string>

#include "tinyst/tensor.hpp"

namespace tinyst {

// A log Mel filterbank matrix, frames x feature dim. This toolkit
// consumes precomputed features; waveform processing happens upstream.
using FeatureMatrix = Tensor;

// File layout: magic "FBNK", u32 frames, u32 dim, then frames*dim
// little-endian f32 values, row major.
void save_features(const FeatureMatrix& m, const std::string& path);
FeatureMatrix load_features(const std::string& path);

// Reads only the header; cheap length probe for filtering and batching.
long feature_frame_count(const std::string& path);

void validate_features(const FeatureMatrix& m);

}  // namespace tinyst
