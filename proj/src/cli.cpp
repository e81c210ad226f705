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

#include "tinyst/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "tinyst/augment.hpp"
#include "tinyst/bpe.hpp"
#include "tinyst/decode.hpp"
#include "tinyst/error.hpp"
#include "tinyst/eval.hpp"
#include "tinyst/hash.hpp"
#include "tinyst/manifest.hpp"
#include "tinyst/model.hpp"
#include "tinyst/teacher.hpp"
#include "tinyst/train.hpp"
#include "tinyst/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tinyst::cli {

namespace {

// ---- config plumbing ----

const json* find_path(const json& root, const std::string& dotted) {
  const json* cur = &root;
  std::istringstream is(dotted);
  std::string part;
  while (std::getline(is, part, '.')) {
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &(*cur)[part];
  }
  return cur;
}

template <typename T>
T get_or(const json& root, const std::string& dotted, T fallback) {
  const json* v = find_path(root, dotted);
  if (v == nullptr || v->is_null()) return fallback;
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key " + dotted + " has the wrong type");
  }
}

template <typename T>
T require(const json& root, const std::string& dotted) {
  const json* v = find_path(root, dotted);
  if (v == nullptr || v->is_null())
    throw ConfigError("missing config key: " + dotted);
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key " + dotted + " has the wrong type");
  }
}

std::string require_path(const json& root, const std::string& dotted) {
  auto p = require<std::string>(root, dotted);
  if (p.empty()) throw ConfigError("config key " + dotted + " is empty");
  return p;
}

// ---- run manifests: inputs, outputs and their hashes ----

struct RunLog {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  void in(const std::string& path) { inputs.push_back(path); }
  void out(const std::string& path) { outputs.push_back(path); }
};

void write_run_manifest(const RunLog& log, const std::string& out_dir) {
  json j;
  j["command"] = log.command;
  j["config_hash"] = log.config_hash;
  j["seed"] = log.seed;
  json in = json::object(), out = json::object();
  for (const auto& p : log.inputs) in[p] = hash_file(p);
  for (const auto& p : log.outputs) out[p] = hash_file(p);
  j["inputs"] = in;
  j["outputs"] = out;
  fs::create_directories(out_dir);
  std::string path = out_dir + "/run_" + log.command + ".json";
  std::ofstream os(path);
  if (!os) throw DataError("cannot write run manifest: " + path);
  os << j.dump(2) << "\n";
}

// ---- shared loaders ----

struct TextPipeline {
  BpeModel bpe;
  Vocabulary vocab;
};

TextPipeline load_pipeline(const json& cfg, RunLog& log) {
  std::string merges = require_path(cfg, "bpe.merges");
  std::string vocab_path = require_path(cfg, "bpe.vocab");
  log.in(merges);
  log.in(vocab_path);
  return {load_bpe(merges), Vocabulary::load(vocab_path)};
}

std::vector<EncodedSample> load_samples(const json& cfg, const std::string& manifest_key,
                                        const TextPipeline& tp, bool with_features,
                                        RunLog& log, bool optional = false) {
  std::string path = optional ? get_or<std::string>(cfg, manifest_key, "")
                              : require_path(cfg, manifest_key);
  if (path.empty()) return {};
  log.in(path);
  Manifest m = load_manifest(path);
  std::string root = get_or<std::string>(cfg, "feature_root", "");

  auto wanted = get_or<std::vector<std::string>>(cfg, "data.domains", {});
  if (!wanted.empty()) {
    std::set<Domain> keep;
    for (const auto& name : wanted) {
      auto d = parse_domain(name);
      if (!d) throw ConfigError("unknown domain in data.domains: " + name);
      keep.insert(*d);
    }
    std::vector<ManifestRecord> kept;
    for (auto& r : m.records)
      if (keep.count(r.domain)) kept.push_back(std::move(r));
    m.records = std::move(kept);
  }
  return encode_manifest(m, tp.bpe, tp.vocab, root, with_features);
}

// ASR training predicts the normalized transcript, so the decoder
// target is rewritten to the CTC label sequence.
void retarget_to_transcript(std::vector<EncodedSample>& samples) {
  for (auto& s : samples) {
    s.target_ids = s.ctc_ids;
    s.target_ids.push_back(Vocabulary::kEos);
  }
}

// ---- config section parsers ----

ModelConfig parse_model(const json& cfg) {
  ModelConfig mc;
  std::string kind = get_or<std::string>(cfg, "model.kind", "speech");
  if (kind == "speech")
    mc.kind = ModelKind::Speech;
  else if (kind == "text")
    mc.kind = ModelKind::Text;
  else
    throw ConfigError("model.kind must be \"speech\" or \"text\"");
  mc.n_enc_layers = get_or<long>(cfg, "model.n_enc_layers", 2);
  mc.n_dec_layers = get_or<long>(cfg, "model.n_dec_layers", 2);
  mc.d_model = get_or<long>(cfg, "model.d_model", 64);
  mc.n_heads = get_or<long>(cfg, "model.n_heads", 4);
  mc.d_ffn = get_or<long>(cfg, "model.d_ffn", 128);
  mc.dropout = get_or<double>(cfg, "model.dropout", 0.1);
  mc.conv_channels = get_or<long>(cfg, "model.conv_channels", 16);
  mc.n_features = get_or<long>(cfg, "model.n_features", 40);
  mc.vocab_size = get_or<long>(cfg, "model.vocab_size", 0);  // 0: from vocab file
  mc.ctc_layer = get_or<long>(cfg, "model.ctc_layer", 0);
  std::string tag = get_or<std::string>(cfg, "model.tag_mode", "none");
  if (tag == "none")
    mc.tag_mode = TagMode::None;
  else if (tag == "encoder_input")
    mc.tag_mode = TagMode::EncoderInput;
  else if (tag == "decoder_input")
    mc.tag_mode = TagMode::DecoderInput;
  else
    throw ConfigError(
        "model.tag_mode must be \"none\", \"encoder_input\" or \"decoder_input\"");
  mc.tag_before_position = get_or<bool>(cfg, "model.tag_before_position", true);
  mc.distance_penalty_scale =
      get_or<double>(cfg, "model.distance_penalty_scale", 1.0);
  return mc;
}

LrSchedule parse_schedule(const json& cfg) {
  LrSchedule s;
  std::string kind =
      get_or<std::string>(cfg, "train.schedule.kind", "warmup_invsqrt");
  if (kind == "warmup_invsqrt")
    s.kind = LrKind::WarmupInvSqrt;
  else if (kind == "fixed")
    s.kind = LrKind::Fixed;
  else
    throw ConfigError("train.schedule.kind must be \"warmup_invsqrt\" or \"fixed\"");
  s.lr_start = get_or<double>(cfg, "train.schedule.lr_start", 3e-4);
  s.lr_peak = get_or<double>(cfg, "train.schedule.lr_peak", 5e-4);
  s.warmup_steps = get_or<long>(cfg, "train.schedule.warmup_steps", 5000);
  s.fixed_lr = get_or<double>(cfg, "train.schedule.fixed_lr", 1e-4);
  return s;
}

SpecAugmentConfig parse_spec_augment(const json& cfg) {
  SpecAugmentConfig c;
  c.p = get_or<double>(cfg, "spec_augment.p", c.p);
  c.freq_mask_par = get_or<long>(cfg, "spec_augment.freq_mask_par", c.freq_mask_par);
  c.time_mask_par = get_or<long>(cfg, "spec_augment.time_mask_par", c.time_mask_par);
  c.freq_mask_num = get_or<long>(cfg, "spec_augment.freq_mask_num", c.freq_mask_num);
  c.time_mask_num = get_or<long>(cfg, "spec_augment.time_mask_num", c.time_mask_num);
  return c;
}

TimeStretchConfig parse_time_stretch(const json& cfg) {
  TimeStretchConfig c;
  c.p = get_or<double>(cfg, "time_stretch.p", c.p);
  c.window_w = get_or<long>(cfg, "time_stretch.window_w", c.window_w);
  c.s_low = get_or<double>(cfg, "time_stretch.s_low", c.s_low);
  c.s_high = get_or<double>(cfg, "time_stretch.s_high", c.s_high);
  c.short_input_threshold =
      get_or<long>(cfg, "time_stretch.short_input_threshold", c.short_input_threshold);
  c.invert_factor = get_or<bool>(cfg, "time_stretch.invert_factor", c.invert_factor);
  return c;
}

TrainPhaseConfig parse_phase(const json& cfg, const std::string& name) {
  TrainPhaseConfig pc;
  pc.name = name;
  std::string loss = get_or<std::string>(cfg, "train.loss", "label_smoothed_ce");
  if (loss == "label_smoothed_ce")
    pc.loss = PhaseLoss::LabelSmoothedCE;
  else if (loss == "word_kd")
    pc.loss = PhaseLoss::WordKD;
  else
    throw ConfigError("train.loss must be \"label_smoothed_ce\" or \"word_kd\"");
  pc.n_epochs = get_or<long>(cfg, "train.n_epochs", 1);
  pc.label_smoothing = get_or<double>(cfg, "train.label_smoothing", 0.1);
  pc.ctc_weight = get_or<double>(cfg, "train.ctc_weight", 0.5);
  pc.augment = get_or<bool>(cfg, "train.augment", false);
  pc.schedule = parse_schedule(cfg);
  pc.plan.max_tokens = get_or<long>(cfg, "train.plan.max_tokens", 12000);
  pc.plan.max_samples = get_or<long>(cfg, "train.plan.max_samples", 8);
  pc.plan.accumulation = get_or<long>(cfg, "train.plan.accumulation", 8);
  pc.spec_augment = parse_spec_augment(cfg);
  pc.time_stretch = parse_time_stretch(cfg);
  pc.seed = get_or<std::uint64_t>(cfg, "seed", 1);
  return pc;
}

// ---- training driver shared by the four training commands ----

void run_training(Checkpoint start, const std::vector<EncodedSample>& train_data,
                  const std::vector<EncodedSample>& valid_data,
                  TrainPhaseConfig pc, const KdStore* kd, const std::string& out_dir,
                  RunLog& log) {
  pc.checkpoint_dir = out_dir;
  fs::create_directories(pc.checkpoint_dir);

  TrainHooks hooks;
  hooks.on_epoch = [](long epoch, double loss, double ppl) {
    std::cout << "epoch " << epoch << " loss " << loss << " val_ppl " << ppl << "\n";
  };
  TrainResult res = train_phase(start, train_data, valid_data, pc, kd, hooks);

  std::string final_path = out_dir + "/final.bin";
  std::string best_path = out_dir + "/best.bin";
  save_checkpoint(res.final_ckpt, final_path);
  save_checkpoint(res.best_ckpt, best_path);
  for (const auto& p : res.checkpoint_paths) log.out(p);
  log.out(final_path);
  log.out(best_path);
  std::cout << "best epoch " << res.best_epoch << " (val_ppl "
            << res.val_perplexities[static_cast<std::size_t>(res.best_epoch - 1)]
            << "), " << res.updates << " updates\n";
  if (res.ctc_unalignable > 0)
    std::cout << res.ctc_unalignable
              << " sample passes skipped the CTC branch (unalignable)\n";
}

Checkpoint starting_point(const json& cfg, const Vocabulary& vocab, RunLog& log,
                          ModelKind expected_kind) {
  std::string init = get_or<std::string>(cfg, "train.init_checkpoint", "");
  Checkpoint start;
  if (!init.empty()) {
    log.in(init);
    start = load_checkpoint(init);
  } else {
    start.config = parse_model(cfg);
    if (start.config.vocab_size == 0) start.config.vocab_size = vocab.size();
    Rng rng(get_or<std::uint64_t>(cfg, "seed", 1));
    start.params = init_params(start.config, rng);
  }
  if (start.config.kind != expected_kind)
    throw ConfigError("model kind does not fit this command");
  if (start.config.vocab_size != vocab.size())
    throw ConfigError("model vocab_size " + std::to_string(start.config.vocab_size) +
                      " does not match vocabulary size " +
                      std::to_string(vocab.size()));

  std::string asr = get_or<std::string>(cfg, "train.init_from_asr", "");
  if (!asr.empty()) {
    log.in(asr);
    Checkpoint a = load_checkpoint(asr);
    start.params = init_from_asr(start.params, a.params, start.config, a.config);
  }
  std::string dec = get_or<std::string>(cfg, "train.init_decoder_from", "");
  if (!dec.empty()) {
    log.in(dec);
    Checkpoint d = load_checkpoint(dec);
    start.params = transfer_decoder(start.params, d.params, start.config, d.config);
  }
  return start;
}

// ---- commands ----

void cmd_prepare(const json& cfg, const std::string& out_dir, RunLog& log) {
  std::string train_path = require_path(cfg, "data.train_manifest");
  log.in(train_path);
  Manifest train = load_manifest(train_path);
  std::string root = get_or<std::string>(cfg, "feature_root", "");
  long max_frames = get_or<long>(cfg, "data.max_frames", 2000);

  std::vector<std::string> corpus;
  std::vector<std::vector<std::string>> segmented;
  for (const auto& r : train.records) {
    corpus.push_back(r.transcript);
    corpus.push_back(r.target);
    corpus.push_back(normalize_transcript(r.transcript));
  }
  long n_merges = get_or<long>(cfg, "bpe.n_merges", 100);
  BpeModel bpe = learn_bpe(corpus, n_merges);
  for (const auto& line : corpus) segmented.push_back(apply_bpe(line, bpe));
  Vocabulary vocab = Vocabulary::build(segmented);

  fs::create_directories(out_dir);
  std::string merges_path = get_or<std::string>(cfg, "bpe.merges", out_dir + "/bpe.merges");
  std::string vocab_path = get_or<std::string>(cfg, "bpe.vocab", out_dir + "/vocab.txt");
  save_bpe(bpe, merges_path);
  vocab.save(vocab_path);
  log.out(merges_path);
  log.out(vocab_path);

  FilterResult ft = filter_long(train, root, max_frames);
  std::string train_out = out_dir + "/train_filtered.tsv";
  save_manifest(ft.manifest, train_out);
  log.out(train_out);
  std::cout << "bpe merges: " << bpe.merges.size() << ", vocab: " << vocab.size()
            << ", train samples: " << ft.manifest.records.size() << " ("
            << ft.removed << " removed as too long)\n";

  std::string valid_path = get_or<std::string>(cfg, "data.valid_manifest", "");
  if (!valid_path.empty()) {
    log.in(valid_path);
    FilterResult fv = filter_long(load_manifest(valid_path), root, max_frames);
    std::string valid_out = out_dir + "/valid_filtered.tsv";
    save_manifest(fv.manifest, valid_out);
    log.out(valid_out);
    std::cout << "valid samples: " << fv.manifest.records.size() << " (" << fv.removed
              << " removed)\n";
  }
}

void cmd_train_asr(const json& cfg, const std::string& out_dir, RunLog& log) {
  TextPipeline tp = load_pipeline(cfg, log);
  auto train_data = load_samples(cfg, "data.train_manifest", tp, true, log);
  auto valid_data = load_samples(cfg, "data.valid_manifest", tp, true, log, true);
  retarget_to_transcript(train_data);
  retarget_to_transcript(valid_data);
  Checkpoint start = starting_point(cfg, tp.vocab, log, ModelKind::Speech);
  run_training(std::move(start), train_data, valid_data, parse_phase(cfg, "asr"),
               nullptr, out_dir, log);
}

void cmd_train_mt(const json& cfg, const std::string& out_dir, RunLog& log) {
  TextPipeline tp = load_pipeline(cfg, log);
  auto train_data = load_samples(cfg, "data.train_manifest", tp, false, log);
  auto valid_data = load_samples(cfg, "data.valid_manifest", tp, false, log, true);
  Checkpoint start = starting_point(cfg, tp.vocab, log, ModelKind::Text);
  run_training(std::move(start), train_data, valid_data, parse_phase(cfg, "mt"),
               nullptr, out_dir, log);
}

void cmd_distill(const json& cfg, const std::string& out_dir, RunLog& log) {
  TextPipeline tp = load_pipeline(cfg, log);
  std::string teacher_path = require_path(cfg, "distill.teacher");
  log.in(teacher_path);
  Checkpoint teacher = load_checkpoint(teacher_path);
  auto data = load_samples(cfg, "data.train_manifest", tp, false, log);
  long k = get_or<long>(cfg, "distill.k", 8);

  DistillStats stats;
  KdStore store = distill_corpus(teacher, data, k, &stats);
  fs::create_directories(out_dir);
  std::string store_path = get_or<std::string>(cfg, "distill.store", out_dir + "/kd.bin");
  save_store(store, store_path);
  log.out(store_path);
  log.out(store_path + ".idx");
  std::cout << "distilled " << stats.distilled << " samples (k=" << k << "), skipped "
            << stats.skipped << " without transcript\n";
}

void cmd_train_st(const json& cfg, const std::string& out_dir, RunLog& log) {
  TextPipeline tp = load_pipeline(cfg, log);
  auto train_data = load_samples(cfg, "data.train_manifest", tp, true, log);
  auto valid_data = load_samples(cfg, "data.valid_manifest", tp, true, log, true);
  Checkpoint start = starting_point(cfg, tp.vocab, log, ModelKind::Speech);
  TrainPhaseConfig pc = parse_phase(cfg, "st");

  KdStore store;
  const KdStore* kd = nullptr;
  if (pc.loss == PhaseLoss::WordKD) {
    std::string store_path = require_path(cfg, "train.kd_store");
    log.in(store_path);
    log.in(store_path + ".idx");
    store = load_store(store_path);
    kd = &store;
  }
  run_training(std::move(start), train_data, valid_data, std::move(pc), kd, out_dir,
               log);
}

void cmd_finetune(const json& cfg, const std::string& out_dir, RunLog& log) {
  TextPipeline tp = load_pipeline(cfg, log);
  json cfg2 = cfg;
  if (find_path(cfg2, "data.domains") == nullptr ||
      cfg2["data"]["domains"].empty())
    cfg2["data"]["domains"] = json::array({"ground_truth"});
  auto train_data = load_samples(cfg2, "data.train_manifest", tp, true, log);
  auto valid_data = load_samples(cfg2, "data.valid_manifest", tp, true, log, true);

  if (get_or<std::string>(cfg, "train.init_checkpoint", "").empty())
    throw ConfigError("finetune requires train.init_checkpoint");
  Checkpoint start = starting_point(cfg, tp.vocab, log, ModelKind::Speech);

  TrainPhaseConfig pc = parse_phase(cfg, "finetune");
  pc.augment = false;  // fine-tuning never augments
  if (find_path(cfg, "train.schedule.kind") == nullptr)
    pc.schedule.kind = LrKind::Fixed;
  run_training(std::move(start), train_data, valid_data, std::move(pc), nullptr,
               out_dir, log);
}

void cmd_average(const json& cfg, const std::string& out_dir, RunLog& log) {
  auto paths = require<std::vector<std::string>>(cfg, "average.checkpoints");
  if (paths.empty()) throw ConfigError("average.checkpoints is empty");
  for (const auto& p : paths) log.in(p);
  Checkpoint avg = average_checkpoints(paths);
  fs::create_directories(out_dir);
  std::string out_path = get_or<std::string>(cfg, "average.output", out_dir + "/avg.bin");
  save_checkpoint(avg, out_path);
  log.out(out_path);
  std::cout << "averaged " << paths.size() << " checkpoints -> " << out_path << "\n";
}

DecodeConfig parse_decode(const json& cfg, const std::vector<Checkpoint>& models) {
  DecodeConfig dc;
  dc.beam_size = get_or<long>(cfg, "decode.beam_size", 5);
  dc.max_len = get_or<long>(cfg, "decode.max_len", 200);
  dc.temperature = get_or<double>(cfg, "decode.temperature", 0.0);
  dc.length_norm = get_or<bool>(cfg, "decode.length_norm", true);
  dc.log_space_ensemble = get_or<bool>(cfg, "decode.log_space_ensemble", false);
  if (dc.temperature == 0.0 && !models.empty())
    dc.temperature = default_temperature(models.front());
  return dc;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (int id : ids) {
    if (id == Vocabulary::kUnk) {
      tokens.push_back(vocab.decode(id));
      continue;
    }
    if (vocab.is_reserved(id)) continue;
    tokens.push_back(vocab.decode(id));
  }
  return join_bpe(tokens);
}

void cmd_translate(const json& cfg, const std::string& out_dir, RunLog& log) {
  TextPipeline tp = load_pipeline(cfg, log);
  auto model_paths = require<std::vector<std::string>>(cfg, "decode.models");
  if (model_paths.empty()) throw ConfigError("decode.models is empty");
  std::vector<Checkpoint> models;
  for (const auto& p : model_paths) {
    log.in(p);
    models.push_back(load_checkpoint(p));
  }
  std::vector<const Checkpoint*> refs;
  for (const auto& m : models) refs.push_back(&m);

  DecodeConfig dc = parse_decode(cfg, models);
  std::string tag_name = get_or<std::string>(cfg, "decode.tag", "ground_truth");
  std::optional<Domain> tag;
  if (tag_name != "none") {
    auto d = parse_domain(tag_name);
    if (!d) throw ConfigError("decode.tag must name a domain or \"none\"");
    tag = *d;
  }

  std::string in_path = require_path(cfg, "decode.input_manifest");
  log.in(in_path);
  Manifest m = load_manifest(in_path);
  std::string root = get_or<std::string>(cfg, "feature_root", "");

  fs::create_directories(out_dir);
  std::string out_path = get_or<std::string>(cfg, "decode.output", out_dir + "/hyp.txt");
  std::ofstream os(out_path);
  if (!os) throw DataError("cannot write translations: " + out_path);
  for (const auto& r : m.records) {
    FeatureMatrix feats = load_features(resolve_feature_path(root, r.feature_path));
    std::vector<int> ids = generate(refs, feats, tag, dc);
    os << detokenize(ids, tp.vocab) << "\n";
  }
  if (!os) throw DataError("write failed: " + out_path);
  log.out(out_path);
  std::cout << "translated " << m.records.size() << " samples (T=" << dc.temperature
            << ", beam=" << dc.beam_size << ") -> " << out_path << "\n";
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

void cmd_score(const json& cfg, const std::string& out_dir, RunLog& log) {
  (void)out_dir;
  std::string hyp_path = require_path(cfg, "score.hyp");
  std::string ref_path = require_path(cfg, "score.ref");
  log.in(hyp_path);
  log.in(ref_path);
  auto hyps = read_lines(hyp_path);
  auto refs = read_lines(ref_path);
  std::string metric = get_or<std::string>(cfg, "score.metric", "both");

  json report;
  if (metric == "bleu" || metric == "both") {
    BleuReport b = corpus_bleu(hyps, refs);
    report["bleu"] = b.bleu;
    report["precisions"] = b.precisions;
    report["brevity_penalty"] = b.brevity_penalty;
    report["hyp_len"] = b.hyp_len;
    report["ref_len"] = b.ref_len;
  }
  if (metric == "wer" || metric == "both") {
    WerReport w = corpus_wer(hyps, refs);
    report["wer"] = w.wer;
    report["substitutions"] = w.substitutions;
    report["insertions"] = w.insertions;
    report["deletions"] = w.deletions;
    report["ref_words"] = w.n_ref_words;
  }
  if (report.empty())
    throw ConfigError("score.metric must be \"bleu\", \"wer\" or \"both\"");

  std::cout << report.dump() << "\n";
  if (report.contains("bleu"))
    std::cout << "BLEU " << report["bleu"].get<double>() << " (P "
              << report["precisions"][0].get<double>() << "/"
              << report["precisions"][1].get<double>() << "/"
              << report["precisions"][2].get<double>() << "/"
              << report["precisions"][3].get<double>() << ", BP "
              << report["brevity_penalty"].get<double>() << ")\n";
  if (report.contains("wer"))
    std::cout << "WER " << report["wer"].get<double>() << " (S "
              << report["substitutions"].get<long>() << ", I "
              << report["insertions"].get<long>() << ", D "
              << report["deletions"].get<long>() << ")\n";
}

void cmd_synth_data(const json& cfg, const std::string& out_dir, RunLog& log) {
  TextPipeline tp = load_pipeline(cfg, log);
  std::string mt_path = require_path(cfg, "synth.mt_checkpoint");
  log.in(mt_path);
  Checkpoint mt = load_checkpoint(mt_path);
  std::vector<const Checkpoint*> refs = {&mt};

  std::string in_path = require_path(cfg, "data.train_manifest");
  log.in(in_path);
  Manifest m = load_manifest(in_path);
  std::string root = get_or<std::string>(cfg, "feature_root", "");

  std::string casing = get_or<std::string>(cfg, "synth.casing", "cased");
  Domain domain;
  bool lower;
  if (casing == "cased") {
    domain = Domain::SynthCased;
    lower = false;
  } else if (casing == "lower") {
    domain = Domain::SynthLower;
    lower = true;
  } else {
    throw ConfigError("synth.casing must be \"cased\" or \"lower\"");
  }
  bool subseq = get_or<bool>(cfg, "synth.subsequence", false);

  DecodeConfig dc = parse_decode(cfg, {});
  if (dc.temperature == 0.0) dc.temperature = default_temperature(mt);

  fs::create_directories(out_dir);
  std::string feat_dir = out_dir + "/features";
  if (subseq) fs::create_directories(feat_dir);
  Rng rng(get_or<std::uint64_t>(cfg, "seed", 1));

  Manifest out;
  out.metadata = m.metadata;
  long skipped = 0;
  for (const auto& r : m.records) {
    if (r.transcript.empty()) {
      ++skipped;
      continue;
    }
    ManifestRecord rec = r;
    if (lower) rec.transcript = normalize_transcript(rec.transcript);
    std::vector<int> src = tp.vocab.encode(apply_bpe(rec.transcript, tp.bpe));
    rec.target = detokenize(generate_text(refs, src, dc), tp.vocab);
    rec.domain = domain;
    out.records.push_back(rec);

    if (!subseq) continue;
    EncodedSample enc = encode_sample(r, tp.bpe, tp.vocab, root, true);
    if (!enc.alignments || enc.alignments->size() < 4) continue;
    for (const auto& crop : subsequence_sample(enc, tp.vocab, rng)) {
      std::string feat_path = feat_dir + "/" + crop.id + ".fbank";
      save_features(crop.features, feat_path);
      ManifestRecord cr;
      cr.id = crop.id;
      cr.feature_path = fs::absolute(feat_path).string();
      cr.transcript = detokenize(crop.transcript_ids, tp.vocab);
      if (lower) cr.transcript = normalize_transcript(cr.transcript);
      std::vector<int> crop_src = tp.vocab.encode(apply_bpe(cr.transcript, tp.bpe));
      cr.target = detokenize(generate_text(refs, crop_src, dc), tp.vocab);
      cr.domain = domain;
      out.records.push_back(std::move(cr));
    }
  }

  std::string out_path =
      get_or<std::string>(cfg, "synth.output_manifest", out_dir + "/synth.tsv");
  save_manifest(out, out_path);
  log.out(out_path);
  std::cout << "wrote " << out.records.size() << " synthetic samples ("
            << domain_name(domain) << "), skipped " << skipped
            << " without transcript -> " << out_path << "\n";
}

}  // namespace

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

void apply_override(json& config, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  json* cur = &config;
  std::istringstream is(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(is, part, '.')) {
    if (part.empty())
      throw ConfigError("override has an empty path segment: " + assignment);
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) cur = &(*cur)[parts[i]];
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  (*cur)[parts.back()] = parsed;
}

std::string config_reference() {
  return R"(Config keys (JSON; any key can be overridden with --set key.path=value):
  seed                      master seed for init, batching, dropout, augmentation
  out_dir                   directory for artifacts and run manifests
  feature_root              prefix for relative feature paths in manifests
  bpe.n_merges              merge operations learned by `prepare`
  bpe.merges / bpe.vocab    merge table and vocabulary files
  data.train_manifest       tab-separated corpus (id, feature, transcript, target, domain[, alignments])
  data.valid_manifest       held-out manifest for perplexity tracking (optional)
  data.max_frames           `prepare` drops samples with more feature frames
  data.domains              restrict training to these domains (finetune default: ground_truth)
  model.kind                "speech" or "text"
  model.n_enc_layers        encoder depth   (reference speech setup: 8 ASR / 11 ST)
  model.n_dec_layers        decoder depth   (reference: 6 ASR / 4 ST)
  model.d_model             model width     (reference: 512)
  model.n_heads             attention heads (reference: 8)
  model.d_ffn               feed-forward width (reference: 2048)
  model.dropout             dropout rate
  model.conv_channels       channels of the two stride-2 input convolutions
  model.n_features          mel bins of the input filterbanks
  model.vocab_size          0 = take from the vocabulary file
  model.ctc_layer           1-based encoder layer feeding the CTC head; 0 disables
  model.tag_mode            "none", "encoder_input" or "decoder_input" domain tags
  model.tag_before_position add the tag before (true) or after the positional encoding
  model.distance_penalty_scale  scale of the -ln(1+|i-j|) attention bias
  train.loss                "label_smoothed_ce" or "word_kd"
  train.n_epochs            epochs for this phase
  train.label_smoothing     epsilon of the smoothed cross entropy
  train.ctc_weight          lambda blending CTC with the primary loss
  train.augment             enable SpecAugment + time stretch (ignored by finetune)
  train.init_checkpoint     start from this checkpoint instead of fresh init
  train.init_from_asr       copy conv front-end + encoder layers from this checkpoint
  train.init_decoder_from   copy decoder + embeddings from this text checkpoint
  train.kd_store            distillation store for word_kd phases
  train.schedule.kind       "warmup_invsqrt" (default) or "fixed"
  train.schedule.lr_start   warmup start LR       (default 3e-4)
  train.schedule.lr_peak    LR after warmup       (default 5e-4)
  train.schedule.warmup_steps  linear warmup length (default 5000)
  train.schedule.fixed_lr   LR of the fixed schedule (default 1e-4, fine-tuning)
  train.plan.max_tokens     per-batch cap on frames (speech) / target tokens (text)
  train.plan.max_samples    per-batch sample cap  (default 8)
  train.plan.accumulation   mini-batches per optimizer update (default 8)
  spec_augment.p            application probability (default 0.5)
  spec_augment.freq_mask_par / freq_mask_num   max width / count of frequency masks
  spec_augment.time_mask_par / time_mask_num   max width / count of time masks
  time_stretch.p            application probability
  time_stretch.window_w     window length in frames (default 10)
  time_stretch.s_low / s_high  stretch factor range (default 0.8..1.25)
  time_stretch.short_input_threshold  inputs below this never shrink
  distill.teacher           text-model checkpoint used as the teacher
  distill.k                 teacher tokens kept per position (default 8)
  distill.store             output distillation store
  average.checkpoints       checkpoint paths to average
  average.output            averaged checkpoint path
  decode.models             checkpoints decoded as an ensemble
  decode.input_manifest     samples to translate
  decode.beam_size          1 = greedy (default 5)
  decode.max_len            generation cap
  decode.temperature        0 = auto (1.3 for word_kd checkpoints, else 1.0)
  decode.length_norm        divide scores by hypothesis length
  decode.log_space_ensemble average log-probs instead of probabilities
  decode.tag                domain tag used at generation ("ground_truth" default)
  decode.output             hypothesis file
  score.hyp / score.ref     text files compared by `score`
  score.metric              "bleu", "wer" or "both"
  synth.mt_checkpoint       text model generating synthetic targets
  synth.casing              "cased" or "lower" source text (sets the domain)
  synth.subsequence         also emit sub-sequence crops (needs alignments)
  synth.output_manifest     synthetic manifest path)";
}

void run_command(const std::string& command, json config,
                 const std::string& config_path) {
  RunLog log;
  log.command = command;
  log.config_hash = hex64(fnv1a(config.dump()));
  log.seed = get_or<std::uint64_t>(config, "seed", 1);
  (void)config_path;
  std::string out_dir = get_or<std::string>(config, "out_dir", "out");

  if (command == "prepare")
    cmd_prepare(config, out_dir, log);
  else if (command == "train_asr")
    cmd_train_asr(config, out_dir + "/asr", log);
  else if (command == "train_mt")
    cmd_train_mt(config, out_dir + "/mt", log);
  else if (command == "distill")
    cmd_distill(config, out_dir, log);
  else if (command == "train_st")
    cmd_train_st(config, out_dir + "/st", log);
  else if (command == "finetune")
    cmd_finetune(config, out_dir + "/finetune", log);
  else if (command == "average")
    cmd_average(config, out_dir, log);
  else if (command == "translate")
    cmd_translate(config, out_dir, log);
  else if (command == "score")
    cmd_score(config, out_dir, log);
  else if (command == "synth_data")
    cmd_synth_data(config, out_dir, log);
  else
    throw ConfigError("unknown command: " + command);

  write_run_manifest(log, out_dir);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"tinyst - desk-scale end-to-end speech translation"};
  app.footer(config_reference());

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file")->required();
  app.add_option("--set", overrides, "override a config key: key.path=value");
  app.require_subcommand(1);

  static const char* kCommands[][2] = {
      {"prepare", "learn BPE + vocabulary, filter overlong samples"},
      {"train_asr", "train the speech recognizer (encoder pretraining)"},
      {"train_mt", "train the text translation teacher"},
      {"distill", "precompute top-K teacher distributions"},
      {"train_st", "train the speech translator"},
      {"finetune", "fine-tune a checkpoint on ground-truth data"},
      {"average", "average checkpoints"},
      {"translate", "decode a manifest with an ensemble"},
      {"score", "BLEU / WER between two text files"},
      {"synth_data", "generate synthetic targets with the teacher"},
  };
  for (const auto& c : kCommands) app.add_subcommand(c[0], c[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    json config = load_config(config_path);
    for (const auto& o : overrides) apply_override(config, o);
    run_command(app.get_subcommands().front()->get_name(), std::move(config),
                config_path);
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace tinyst::cli
