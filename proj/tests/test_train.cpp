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

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "helpers.hpp"
#include "tinyst/train.hpp"

using namespace tinyst;
using testutil::random_tensor;
using testutil::TmpDir;

namespace {

ModelConfig micro_text_config() {
  ModelConfig cfg;
  cfg.kind = ModelKind::Text;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ffn = 16;
  cfg.dropout = 0.0;
  cfg.vocab_size = 12;
  return cfg;
}

ModelConfig micro_speech_config() {
  ModelConfig cfg = micro_text_config();
  cfg.kind = ModelKind::Speech;
  cfg.conv_channels = 2;
  cfg.n_features = 8;
  cfg.ctc_layer = 1;
  return cfg;
}

EncodedSample text_sample(const std::string& id, std::vector<int> src,
                          std::vector<int> tgt, Domain domain = Domain::GroundTruth) {
  EncodedSample s;
  s.id = id;
  s.domain = domain;
  s.transcript_ids = std::move(src);
  s.target_ids = std::move(tgt);
  s.target_ids.push_back(Vocabulary::kEos);
  return s;
}

EncodedSample speech_sample(const std::string& id, long t, std::vector<int> tgt,
                            std::vector<int> ctc, Rng& rng,
                            Domain domain = Domain::GroundTruth) {
  EncodedSample s;
  s.id = id;
  s.domain = domain;
  s.features = random_tensor({t, 8}, rng, 0.5);
  s.n_frames = t;
  s.target_ids = std::move(tgt);
  s.target_ids.push_back(Vocabulary::kEos);
  s.ctc_ids = std::move(ctc);
  return s;
}

// How often each sample index appears over all groups, per domain.
std::map<Domain, std::map<long, long>> occurrence_counts(
    const std::vector<UpdateGroup>& groups) {
  std::map<Domain, std::map<long, long>> counts;
  for (const auto& group : groups)
    for (const auto& batch : group)
      for (long idx : batch.indices) ++counts[batch.domain][idx];
  return counts;
}

}  // namespace

TEST_CASE("warmup schedule hits the documented anchor points exactly") {
  LrSchedule s;  // 3e-4 -> 5e-4 over 5000 steps
  CHECK(lr_at_step(s, 0) == 3e-4);
  CHECK(lr_at_step(s, 5000) == 5e-4);
  CHECK(lr_at_step(s, 20000) == 2.5e-4);
  CHECK(lr_at_step(s, 2500) == doctest::Approx(4e-4).epsilon(1e-15));
}

TEST_CASE("warmup schedule is monotone up then decaying") {
  LrSchedule s;
  for (long t = 1; t <= 5000; t += 250)
    CHECK(lr_at_step(s, t) >= lr_at_step(s, t - 1));
  double prev = lr_at_step(s, 5000);
  for (long t = 5001; t < 30000; t += 997) {
    double cur = lr_at_step(s, t);
    CHECK(cur < prev);
    prev = cur;
  }
  // No jump at the warmup boundary.
  CHECK(std::abs(lr_at_step(s, 5001) - lr_at_step(s, 5000)) < 1e-7);
}

TEST_CASE("fixed schedule ignores the step") {
  LrSchedule s;
  s.kind = LrKind::Fixed;
  s.fixed_lr = 1e-4;
  CHECK(lr_at_step(s, 0) == 1e-4);
  CHECK(lr_at_step(s, 123456) == 1e-4);
}

TEST_CASE("schedule validation rejects non-positive settings") {
  LrSchedule s;
  s.lr_peak = 0.0;
  CHECK_THROWS_AS(lr_at_step(s, 1), ConfigError);
  LrSchedule t;
  t.warmup_steps = 0;
  CHECK_THROWS_AS(lr_at_step(t, 1), ConfigError);
  CHECK_THROWS_AS(lr_at_step(LrSchedule{}, -1), ConfigError);
}

TEST_CASE("adam takes a near-lr first step and ignores zero gradients") {
  ModelConfig cfg = micro_text_config();
  ParamMap params = init_params(cfg, Rng(50));
  ParamMap before = params;
  OptimState opt = make_optim_state(cfg);

  ParamMap zero = zero_grads(cfg);
  adam_step(params, zero, opt, 0.1);
  CHECK(opt.t == 1);
  CHECK(params == before);

  // Bias correction makes the very first step -lr / (1 + eps).
  OptimState fresh = make_optim_state(cfg);
  ParamMap ones = zero_grads(cfg);
  for (auto& [name, g] : ones) g.fill(1.0);
  adam_step(params, ones, fresh, 0.1);
  CHECK(fresh.t == 1);
  double delta = params.at("embed.tgt")[0] - before.at("embed.tgt")[0];
  CHECK(delta == doctest::Approx(-0.1).epsilon(1e-7));
  for (const auto& [name, p] : params) {
    const Tensor& b = before.at(name);
    for (long i = 0; i < p.size(); ++i)
      CHECK(p[i] - b[i] == doctest::Approx(delta).epsilon(1e-12));
  }
}

TEST_CASE("adam validates gradients and names the offender") {
  ModelConfig cfg = micro_text_config();
  ParamMap params = init_params(cfg, Rng(51));
  OptimState opt = make_optim_state(cfg);

  ParamMap bad = zero_grads(cfg);
  bad.at("out.b")[0] = std::nan("");
  CHECK_THROWS_WITH_AS(adam_step(params, bad, opt, 0.1), doctest::Contains("out.b"),
                       NumericalError);

  ParamMap missing = zero_grads(cfg);
  missing.erase("out.b");
  CHECK_THROWS_AS(adam_step(params, missing, opt, 0.1), DataError);

  ParamMap wrong = zero_grads(cfg);
  wrong.at("out.b") = Tensor({3});
  CHECK_THROWS_AS(adam_step(params, wrong, opt, 0.1), ConfigError);
}

TEST_CASE("oversampling multiplicities for a 4/2/1 domain split") {
  std::vector<EncodedSample> data;
  for (int i = 0; i < 4; ++i)
    data.push_back(text_sample("g" + std::to_string(i), {5}, {6}));
  for (int i = 0; i < 2; ++i)
    data.push_back(
        text_sample("c" + std::to_string(i), {5}, {6}, Domain::SynthCased));
  data.push_back(text_sample("l0", {5}, {6}, Domain::SynthLower));

  BatchPlan plan;
  plan.max_samples = 3;
  Rng rng(60);
  auto groups = multi_domain_batches(data, plan, rng);
  auto counts = occurrence_counts(groups);

  for (long i = 0; i < 4; ++i) CHECK(counts[Domain::GroundTruth][i] == 1);
  CHECK(counts[Domain::SynthCased][4] == 2);
  CHECK(counts[Domain::SynthCased][5] == 2);
  CHECK(counts[Domain::SynthLower][6] == 4);
  for (const auto& group : groups) {
    REQUIRE(group.size() == 3);
    for (const auto& batch : group)
      CHECK(batch.indices.size() <= 3);
  }
}

TEST_CASE("oversampling balances 40/20/7 domains to 40 samples each") {
  std::vector<EncodedSample> data;
  for (int i = 0; i < 40; ++i)
    data.push_back(text_sample("g" + std::to_string(i), {5}, {6}));
  for (int i = 0; i < 20; ++i)
    data.push_back(
        text_sample("c" + std::to_string(i), {5}, {6}, Domain::SynthCased));
  for (int i = 0; i < 7; ++i)
    data.push_back(
        text_sample("l" + std::to_string(i), {5}, {6}, Domain::SynthLower));

  BatchPlan plan;
  plan.max_samples = 8;
  Rng rng(61);
  auto groups = multi_domain_batches(data, plan, rng);
  auto counts = occurrence_counts(groups);

  std::map<Domain, long> totals;
  for (const auto& [domain, per_sample] : counts)
    for (const auto& [idx, n] : per_sample) totals[domain] += n;
  CHECK(totals[Domain::GroundTruth] == 40);
  CHECK(totals[Domain::SynthCased] == 40);
  CHECK(totals[Domain::SynthLower] == 40);

  // 40 = 5*7 + 5: five samples appear six times, two appear five times.
  std::map<long, long> mult;
  for (const auto& [idx, n] : counts[Domain::SynthLower]) ++mult[n];
  CHECK(mult[6] == 5);
  CHECK(mult[5] == 2);
  for (const auto& [idx, n] : counts[Domain::SynthCased]) CHECK(n == 2);

  // Every update group carries one batch per domain, rotation order
  // fixed across groups.
  for (const auto& group : groups) {
    REQUIRE(group.size() == 3);
    CHECK(group[0].domain == groups[0][0].domain);
    CHECK(group[1].domain == groups[0][1].domain);
    CHECK(group[2].domain == groups[0][2].domain);
    std::set<Domain> domains;
    for (const auto& batch : group) {
      domains.insert(batch.domain);
      CHECK(batch.indices.size() <= 8);
      CHECK_FALSE(batch.indices.empty());
    }
    CHECK(domains.size() == 3);
  }
}

TEST_CASE("an explicit rotation order is honored") {
  std::vector<EncodedSample> data;
  data.push_back(text_sample("g0", {5}, {6}));
  data.push_back(text_sample("l0", {5}, {6}, Domain::SynthLower));
  BatchPlan plan;
  plan.domain_order = {Domain::SynthLower, Domain::GroundTruth};
  Rng rng(62);
  auto groups = multi_domain_batches(data, plan, rng);
  for (const auto& group : groups) {
    REQUIRE(group.size() == 2);
    CHECK(group[0].domain == Domain::SynthLower);
    CHECK(group[1].domain == Domain::GroundTruth);
  }
}

TEST_CASE("token budget splits batches and oversized samples ride alone") {
  std::vector<EncodedSample> data;
  Rng feat_rng(63);
  // Costs 30 each; budget 50 holds only one.
  for (int i = 0; i < 3; ++i)
    data.push_back(speech_sample("s" + std::to_string(i), 30, {6}, {}, feat_rng));
  data.push_back(speech_sample("huge", 120, {6}, {}, feat_rng));  // over budget
  BatchPlan plan;
  plan.max_tokens = 50;
  plan.max_samples = 8;
  Rng rng(64);
  auto groups = multi_domain_batches(data, plan, rng);
  for (const auto& group : groups)
    for (const auto& batch : group) {
      long cost = 0;
      for (long idx : batch.indices) cost += data[static_cast<std::size_t>(idx)].n_frames;
      if (batch.indices.size() > 1) CHECK(cost <= 50);
    }
  auto counts = occurrence_counts(groups);
  CHECK(counts[Domain::GroundTruth].size() == 4);
}

TEST_CASE("unequal per-domain batch counts are equalized by splitting") {
  std::vector<EncodedSample> data;
  Rng feat_rng(65);
  // Domain A: 4 samples of cost 30 -> 2 batches under a 60 budget.
  for (int i = 0; i < 4; ++i)
    data.push_back(speech_sample("a" + std::to_string(i), 30, {6}, {}, feat_rng));
  // Domain B: 4 samples of cost 1 -> 1 batch, must split to 2.
  for (int i = 0; i < 4; ++i)
    data.push_back(speech_sample("b" + std::to_string(i), 1, {6}, {}, feat_rng,
                                 Domain::SynthCased));
  BatchPlan plan;
  plan.max_tokens = 60;
  plan.max_samples = 8;
  Rng rng(66);
  auto groups = multi_domain_batches(data, plan, rng);
  for (const auto& group : groups) REQUIRE(group.size() == 2);
  auto counts = occurrence_counts(groups);
  CHECK(counts[Domain::GroundTruth].size() == 4);
  CHECK(counts[Domain::SynthCased].size() == 4);
}

TEST_CASE("batching rejects inconsistent inputs") {
  Rng rng(67);
  BatchPlan plan;
  CHECK_THROWS_AS(multi_domain_batches({}, plan, rng), DataError);

  std::vector<EncodedSample> data = {text_sample("g0", {5}, {6})};
  BatchPlan missing;
  missing.domain_order = {Domain::SynthCased};
  CHECK_THROWS_WITH_AS(multi_domain_batches(data, missing, rng),
                       doctest::Contains("outside the rotation"), DataError);

  BatchPlan empty_domain;
  empty_domain.domain_order = {Domain::GroundTruth, Domain::SynthLower};
  CHECK_THROWS_WITH_AS(multi_domain_batches(data, empty_domain, rng),
                       doctest::Contains("no samples"), DataError);

  BatchPlan dup;
  dup.domain_order = {Domain::GroundTruth, Domain::GroundTruth};
  CHECK_THROWS_AS(dup.validate(), ConfigError);
  BatchPlan bad;
  bad.max_samples = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("a short text phase reduces the training loss deterministically") {
  Checkpoint start;
  start.config = micro_text_config();
  start.params = init_params(start.config, Rng(70));

  std::vector<EncodedSample> data;
  for (int i = 0; i < 4; ++i)
    data.push_back(text_sample("c" + std::to_string(i), {5 + i}, {5 + i}));

  TrainPhaseConfig cfg;
  cfg.name = "mt";
  cfg.n_epochs = 10;
  cfg.schedule.kind = LrKind::Fixed;
  cfg.schedule.fixed_lr = 1e-2;
  cfg.plan.accumulation = 1;
  cfg.seed = 7;

  TrainResult a = train_phase(start, data, {}, cfg);
  CHECK(a.epoch_losses.size() == 10);
  CHECK(a.val_perplexities.size() == 10);
  CHECK(a.epoch_losses.back() < a.epoch_losses.front());
  CHECK(a.updates == 10);  // one batch per epoch
  CHECK(a.final_ckpt.metadata.at("phase") == "mt");
  CHECK(a.final_ckpt.metadata.at("epoch") == "10");
  CHECK(a.final_ckpt.metadata.at("seed") == "7");
  CHECK(a.final_ckpt.metadata.at("trained_with") == "label_smoothed_ce");
  CHECK(a.final_ckpt.step == a.updates);
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_ckpt.metadata.at("epoch") == std::to_string(a.best_epoch));

  TrainResult b = train_phase(start, data, {}, cfg);
  CHECK(b.final_ckpt.params == a.final_ckpt.params);
  CHECK(b.epoch_losses == a.epoch_losses);

  TrainPhaseConfig other = cfg;
  other.seed = 8;
  TrainResult c = train_phase(start, data, {}, other);
  CHECK_FALSE(c.final_ckpt.params == a.final_ckpt.params);
}

TEST_CASE("accumulation flushes every n minibatches plus the leftover") {
  Checkpoint start;
  start.config = micro_text_config();
  start.params = init_params(start.config, Rng(71));

  std::vector<EncodedSample> data;
  for (int i = 0; i < 6; ++i)
    data.push_back(text_sample("c" + std::to_string(i), {5}, {6}));

  TrainPhaseConfig cfg;
  cfg.n_epochs = 1;
  cfg.schedule.kind = LrKind::Fixed;
  cfg.plan.max_samples = 2;  // three minibatches of two
  cfg.plan.accumulation = 2;
  TrainResult res = train_phase(start, data, {}, cfg);
  CHECK(res.updates == 2);  // one full window of 2, one leftover flush

  cfg.plan.accumulation = 8;  // never fills: single flush at epoch end
  TrainResult one = train_phase(start, data, {}, cfg);
  CHECK(one.updates == 1);
}

TEST_CASE("hooks observe samples and augmentations") {
  Checkpoint start;
  start.config = micro_speech_config();
  start.params = init_params(start.config, Rng(72));

  Rng feat_rng(73);
  std::vector<EncodedSample> data;
  for (int i = 0; i < 3; ++i)
    data.push_back(speech_sample("s" + std::to_string(i), 12, {6}, {6}, feat_rng));

  TrainPhaseConfig cfg;
  cfg.n_epochs = 2;
  cfg.schedule.kind = LrKind::Fixed;
  cfg.schedule.fixed_lr = 1e-3;
  cfg.augment = true;
  cfg.spec_augment.p = 0.0;
  cfg.time_stretch.p = 0.0;

  long samples_seen = 0;
  std::map<std::string, long> augment_calls;
  TrainHooks hooks;
  hooks.on_sample = [&](const EncodedSample&) { ++samples_seen; };
  hooks.on_augment = [&](const char* kind) { ++augment_calls[kind]; };
  train_phase(start, data, {}, cfg, nullptr, hooks);
  CHECK(samples_seen == 6);  // 3 samples x 2 epochs
  CHECK(augment_calls["time_stretch"] == 6);
  CHECK(augment_calls["spec_augment"] == 6);

  // Fine-tuning style phase: augmentation off means zero augment calls.
  augment_calls.clear();
  cfg.augment = false;
  train_phase(start, data, {}, cfg, nullptr, hooks);
  CHECK(augment_calls.empty());
}

TEST_CASE("ctc-unalignable samples fall back to the primary loss") {
  Checkpoint start;
  start.config = micro_speech_config();  // ctc head on layer 1
  start.params = init_params(start.config, Rng(74));

  Rng feat_rng(75);
  std::vector<EncodedSample> data;
  // 8 frames -> 2 encoder states; a 2-token repeat needs 3.
  data.push_back(speech_sample("ok", 8, {6}, {6}, feat_rng));
  data.push_back(speech_sample("bad", 8, {6, 7}, {6, 6}, feat_rng));

  TrainPhaseConfig cfg;
  cfg.n_epochs = 1;
  cfg.schedule.kind = LrKind::Fixed;
  cfg.schedule.fixed_lr = 1e-3;
  TrainResult res = train_phase(start, data, {}, cfg);
  CHECK(res.ctc_unalignable == 1);

  // Samples without ctc ids never engage the branch.
  data[1].ctc_ids.clear();
  TrainResult clean = train_phase(start, data, {}, cfg);
  CHECK(clean.ctc_unalignable == 0);
}

TEST_CASE("a word-kd phase requires a store and trains against it") {
  Checkpoint teacher;
  teacher.config = micro_text_config();
  teacher.params = init_params(teacher.config, Rng(76));

  std::vector<EncodedSample> data;
  for (int i = 0; i < 3; ++i)
    data.push_back(text_sample("k" + std::to_string(i), {5 + i}, {6}));
  KdStore store = distill_corpus(teacher, data, 4);

  Checkpoint start;
  start.config = micro_text_config();
  start.params = init_params(start.config, Rng(77));

  TrainPhaseConfig cfg;
  cfg.loss = PhaseLoss::WordKD;
  cfg.n_epochs = 4;
  cfg.schedule.kind = LrKind::Fixed;
  cfg.schedule.fixed_lr = 5e-3;
  CHECK_THROWS_AS(train_phase(start, data, {}, cfg, nullptr), ConfigError);

  TrainResult res = train_phase(start, data, {}, cfg, &store);
  CHECK(res.final_ckpt.metadata.at("trained_with") == "word_kd");
  CHECK(res.epoch_losses.back() < res.epoch_losses.front());
}

TEST_CASE("per-epoch checkpoints and the best pointer land on disk") {
  Checkpoint start;
  start.config = micro_text_config();
  start.params = init_params(start.config, Rng(78));

  std::vector<EncodedSample> data = {text_sample("c0", {5}, {6}),
                                     text_sample("c1", {6}, {7})};
  TmpDir tmp("ckpts");
  TrainPhaseConfig cfg;
  cfg.n_epochs = 3;
  cfg.schedule.kind = LrKind::Fixed;
  cfg.checkpoint_dir = tmp.str();

  std::vector<long> epochs_seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](long e, double, double) { epochs_seen.push_back(e); };
  TrainResult res = train_phase(start, data, {}, cfg, nullptr, hooks);
  CHECK(epochs_seen == std::vector<long>{1, 2, 3});
  REQUIRE(res.checkpoint_paths.size() == 3);
  for (long e = 1; e <= 3; ++e) {
    Checkpoint back = load_checkpoint(tmp.str() + "/ckpt_epoch" + std::to_string(e) +
                                      ".bin");
    CHECK(back.metadata.at("epoch") == std::to_string(e));
  }
  std::ifstream best(tmp.str() + "/best");
  REQUIRE(best.good());
  std::string line;
  std::getline(best, line);
  CHECK(line == "ckpt_epoch" + std::to_string(res.best_epoch) + ".bin");
}

TEST_CASE("checkpoint window centers on the best epoch and clamps") {
  CHECK(checkpoint_window(3, 5) == std::vector<long>{1, 2, 3, 4, 5});
  CHECK(checkpoint_window(1, 3) == std::vector<long>{1, 2, 3});
  CHECK(checkpoint_window(9, 10) == std::vector<long>{6, 7, 8, 9, 10});
  CHECK(checkpoint_window(1, 10) == std::vector<long>{1, 2, 3, 4, 5});
  CHECK(checkpoint_window(2, 2) == std::vector<long>{1, 2});
  CHECK(checkpoint_window(4, 9, 1) == std::vector<long>{4});
  CHECK(checkpoint_window(4, 9, 3) == std::vector<long>{3, 4, 5});
  CHECK_THROWS_AS(checkpoint_window(0, 5), ConfigError);
  CHECK_THROWS_AS(checkpoint_window(6, 5), ConfigError);
  CHECK_THROWS_AS(checkpoint_window(1, 5, 0), ConfigError);
}

TEST_CASE("averaging five copies of a saved checkpoint returns it exactly") {
  ModelConfig cfg = micro_text_config();
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = init_params(cfg, Rng(79));
  ckpt.step = 42;

  TmpDir tmp("avg");
  std::string path = tmp.file("m.bin");
  save_checkpoint(ckpt, path);
  Checkpoint loaded = load_checkpoint(path);

  Checkpoint avg = average_checkpoints(std::vector<std::string>(5, path));
  CHECK(avg.params == loaded.params);
  CHECK(avg.step == 42);
  CHECK(avg.metadata.at("averaged_over") == "5");
  CHECK(avg.metadata.at("averaged_from").find("m.bin") != std::string::npos);
}

TEST_CASE("averaging blends parameters entry-wise") {
  ModelConfig cfg = micro_text_config();
  Checkpoint a, b;
  a.config = b.config = cfg;
  a.params = init_params(cfg, Rng(80));
  b.params = init_params(cfg, Rng(81));
  a.step = 10;
  b.step = 20;

  Checkpoint avg = average_checkpoints(std::vector<Checkpoint>{a, b});
  CHECK(avg.step == 20);
  for (const auto& [name, t] : avg.params) {
    const Tensor& ta = a.params.at(name);
    const Tensor& tb = b.params.at(name);
    for (long i = 0; i < t.size(); ++i)
      CHECK(t[i] == doctest::Approx((ta[i] + tb[i]) / 2.0).epsilon(1e-15));
  }

  Checkpoint other = a;
  other.config.d_ffn = 24;
  CHECK_THROWS_AS(average_checkpoints(std::vector<Checkpoint>{a, other}), ConfigError);
  CHECK_THROWS_AS(average_checkpoints(std::vector<Checkpoint>{}), ConfigError);
}
