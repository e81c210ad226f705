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

#include <functional>
#include <string>
#include <vector>

#include "tinyst/augment.hpp"
#include "tinyst/manifest.hpp"
#include "tinyst/model.hpp"
#include "tinyst/teacher.hpp"

namespace tinyst {

// Adam with bias correction; moments keyed like the parameters.
struct OptimState {
  ParamMap m, v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

OptimState make_optim_state(const ModelConfig& config);

// One update. Gradients are validated for finiteness; the error names
// the offending parameter.
void adam_step(ParamMap& params, const ParamMap& grads, OptimState& opt, double lr);

enum class LrKind { WarmupInvSqrt, Fixed };

struct LrSchedule {
  LrKind kind = LrKind::WarmupInvSqrt;
  double lr_start = 3e-4;
  double lr_peak = 5e-4;
  long warmup_steps = 5000;
  double fixed_lr = 1e-4;
  void validate() const;
};

// Linear warmup lr_start -> lr_peak over warmup_steps, then
// lr_peak * sqrt(warmup/t); or a constant for fine-tuning.
double lr_at_step(const LrSchedule& sched, long t);

struct BatchPlan {
  long max_tokens = 12000;  // feature frames (speech) or target tokens (text)
  long max_samples = 8;
  long accumulation = 8;
  std::vector<Domain> domain_order;  // rotation order; empty = infer from data
  void validate() const;
};

struct Batch {
  Domain domain = Domain::GroundTruth;
  std::vector<long> indices;  // positions in the sample vector
};

// One batch per domain, processed back-to-back before an update.
using UpdateGroup = std::vector<Batch>;

// Balanced oversampling: per epoch every domain contributes as many
// samples as the largest one, smaller domains repeating entries with
// multiplicities that differ by at most one. Groups pair one batch per
// domain in a fixed rotation order.
std::vector<UpdateGroup> multi_domain_batches(const std::vector<EncodedSample>& data,
                                              const BatchPlan& plan, Rng& rng);

enum class PhaseLoss { LabelSmoothedCE, WordKD };

enum class TrainScheme { SeqKdFinetune, MultiDomain };

struct TrainPhaseConfig {
  std::string name = "phase";
  PhaseLoss loss = PhaseLoss::LabelSmoothedCE;
  long n_epochs = 1;
  LrSchedule schedule;
  BatchPlan plan;
  bool augment = false;
  SpecAugmentConfig spec_augment;
  TimeStretchConfig time_stretch;
  double label_smoothing = 0.1;
  double ctc_weight = 0.5;  // used only when the model has a CTC head
  std::uint64_t seed = 1;
  std::string checkpoint_dir;  // empty: keep checkpoints in memory only
  void validate() const;
};

struct TrainHooks {
  std::function<void(long epoch, double train_loss, double val_ppl)> on_epoch;
  std::function<void(const EncodedSample&)> on_sample;
  std::function<void(const char* kind)> on_augment;
};

struct TrainResult {
  Checkpoint final_ckpt;
  Checkpoint best_ckpt;
  long best_epoch = 0;  // 1-based
  std::vector<double> epoch_losses;
  std::vector<double> val_perplexities;
  std::vector<std::string> checkpoint_paths;  // empty without checkpoint_dir
  long updates = 0;
  long ctc_unalignable = 0;  // samples that fell back to the primary loss
};

// Runs one training phase over epochs of update-groups with gradient
// accumulation. Saves ckpt_epochN.bin per epoch plus a `best` pointer
// file when checkpoint_dir is set; tracks the best epoch by validation
// perplexity of the phase's primary loss.
TrainResult train_phase(const Checkpoint& start,
                        const std::vector<EncodedSample>& train_data,
                        const std::vector<EncodedSample>& valid_data,
                        const TrainPhaseConfig& cfg, const KdStore* kd_store = nullptr,
                        const TrainHooks& hooks = {});

// Epoch numbers (1-based) of the averaging window: the best epoch plus
// two neighbours on each side, clamped to the trained range.
std::vector<long> checkpoint_window(long best_epoch, long n_epochs, long window = 5);

Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts);
Checkpoint average_checkpoints(const std::vector<std::string>& paths);

}  // namespace tinyst
