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

#include "tinyst/features.hpp"
#include "tinyst/manifest.hpp"
#include "tinyst/rng.hpp"

namespace tinyst {

struct SpecAugmentConfig {
  double p = 0.5;
  long freq_mask_par = 13;
  long time_mask_par = 20;
  long freq_mask_num = 2;
  long time_mask_num = 2;
};

struct TimeStretchConfig {
  double p = 0.3;
  long window_w = 10;
  double s_low = 0.8;
  double s_high = 1.25;
  long short_input_threshold = 10;  // below this, s never shrinks
  // When set, a drawn factor s resamples by 1/s instead (s > 1 shortens).
  bool invert_factor = false;
};

void validate(const SpecAugmentConfig& cfg);
void validate(const TimeStretchConfig& cfg);

// With probability cfg.p, zero out freq_mask_num random frequency bands
// and time_mask_num random time bands. Draw order per mask: width in
// [0, par] first, then start over the valid range. Pars wider than the
// axis are clamped to the axis length. Shape is always preserved.
FeatureMatrix spec_augment(const FeatureMatrix& x, const SpecAugmentConfig& cfg,
                           Rng& rng);

// With probability cfg.p, split the input into windows of window_w
// frames and resample each by an independent factor s ~ U[s_low,
// s_high]. A window of w frames maps to max(1, round(w*s)) output
// frames (round half up); output frame j copies input frame
// floor(j/s). Inputs shorter than short_input_threshold never shrink.
FeatureMatrix time_stretch(const FeatureMatrix& x, const TimeStretchConfig& cfg,
                           Rng& rng);

// Three partial views of a sample, for training on audio that does not
// start or end at a sentence boundary:
//   1. sentence start to a random word in the second half,
//   2. a random word in the first half to the sentence end,
//   3. a random word in the first quarter to one in the last quarter.
// Features and transcript are cropped to the word span; the target is
// left empty so the text side can be regenerated downstream. Requires
// word alignments and at least 4 words.
std::vector<EncodedSample> subsequence_sample(const EncodedSample& s,
                                              const Vocabulary& vocab, Rng& rng);

}  // namespace tinyst
