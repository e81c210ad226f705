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

#include <vector>

#include "tinyst/teacher.hpp"
#include "tinyst/tensor.hpp"

namespace tinyst {

// Loss value plus the analytic gradient with respect to the inputs the
// loss was computed on. value is the mean over supervised tokens; grad
// already carries the 1/n_tokens factor, with zero rows at padding.
struct LossOutput {
  double value = 0.0;
  Tensor grad;
  long n_tokens = 0;
};

// Cross entropy against a smoothed target distribution: mass 1-epsilon
// on the gold token, epsilon/(V-1) on every other one. Positions whose
// target equals pad_id are excluded from mean and gradient.
LossOutput label_smoothed_ce(const Tensor& logits, const std::vector<int>& targets,
                             int pad_id, double epsilon = 0.1);

// KL divergence from the student softmax to a truncated teacher
// distribution, summed over the teacher's support and averaged over
// unmasked positions. mask[i] nonzero excludes position i.
LossOutput word_kd_loss(const Tensor& student_logits,
                        const std::vector<TeacherRow>& teacher,
                        const std::vector<char>& pad_mask);

// Alignment-free transcription loss: -ln of the total probability of
// all blank-augmented frame paths that collapse to the target, via the
// log-space forward recursion; gradient by forward-backward. value and
// grad are scaled by 1/max(1, target length). Throws UnalignableError
// when the frame budget cannot fit the target.
LossOutput ctc_loss(const Tensor& log_probs, const std::vector<int>& target,
                    int blank_id);

struct MultitaskWeights {
  double lambda_ctc = 0.5;
};

// Blend of the primary (decoder) loss and the CTC loss. The two
// gradients live on different tensors, so both are returned, scaled by
// their blend weights.
struct MultitaskLossOutput {
  double value = 0.0;
  Tensor primary_grad;
  Tensor ctc_grad;
  long n_tokens = 0;
};

MultitaskLossOutput multitask_loss(const LossOutput& primary, const LossOutput& ctc,
                                   const MultitaskWeights& w);

}  // namespace tinyst
