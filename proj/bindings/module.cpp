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

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <sstream>

#include "tinyst/augment.hpp"
#include "tinyst/bpe.hpp"
#include "tinyst/decode.hpp"
#include "tinyst/error.hpp"
#include "tinyst/eval.hpp"
#include "tinyst/features.hpp"
#include "tinyst/losses.hpp"
#include "tinyst/manifest.hpp"
#include "tinyst/model.hpp"
#include "tinyst/teacher.hpp"
#include "tinyst/tensor.hpp"
#include "tinyst/train.hpp"
#include "tinyst/vocab.hpp"

namespace py = pybind11;
using namespace tinyst;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DoubleArray& a) {
  if (a.ndim() < 1 || a.ndim() > 4) {
    throw ConfigError("tensors must have 1 to 4 dimensions");
  }
  std::vector<long> shape(static_cast<std::size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = a.shape(i);
  Tensor t(shape);
  if (t.size() > 0) std::memcpy(t.data(), a.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  return t;
}

py::buffer_info tensor_buffer(Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  std::vector<py::ssize_t> strides(shape.size());
  py::ssize_t step = static_cast<py::ssize_t>(sizeof(double));
  for (long i = t.ndim() - 1; i >= 0; --i) {
    strides[static_cast<std::size_t>(i)] = step;
    step *= shape[static_cast<std::size_t>(i)];
  }
  return py::buffer_info(t.data(), sizeof(double), py::format_descriptor<double>::format(),
                         static_cast<py::ssize_t>(shape.size()), shape, strides);
}

py::array tensor_to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  if (t.size() > 0) {
    std::memcpy(out.mutable_data(), t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  }
  return out;
}

std::vector<const Checkpoint*> as_model_ptrs(const std::vector<Checkpoint*>& models) {
  if (models.empty()) throw ConfigError("model list is empty");
  return std::vector<const Checkpoint*>(models.begin(), models.end());
}

std::string shape_string(const Tensor& t) {
  std::ostringstream os;
  os << "(";
  for (long i = 0; i < t.ndim(); ++i) os << (i ? ", " : "") << t.dim(i);
  os << ")";
  return os.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core speech translation operations";

  py::register_exception<Error>(m, "TinystError", PyExc_RuntimeError);
  // Leaf exception classes chain to TinystError so Python callers can
  // catch the whole family or one failure kind.
  static py::exception<ConfigError> config_error(m, "ConfigurationError", m.attr("TinystError"));
  static py::exception<DataError> data_error(m, "DataFormatError", m.attr("TinystError"));
  static py::exception<NumericalError> numerical_error(m, "NumericsError", m.attr("TinystError"));
  static py::exception<UnalignableError> unalignable_error(m, "UnalignableTargetError", data_error);
  py::register_exception_translator([](std::exception_ptr p) {
    if (!p) return;
    try {
      std::rethrow_exception(p);
    } catch (const UnalignableError& e) {
      py::set_error(unalignable_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    }
  });

  // ---- tensors ----

  py::class_<Tensor>(m, "Tensor", py::buffer_protocol())
      .def(py::init<>())
      .def(py::init([](const DoubleArray& a) { return tensor_from_array(a); }), py::arg("array"))
      .def(py::init([](const std::vector<long>& shape, double fill) { return Tensor(shape, fill); }),
           py::arg("shape"), py::arg("fill") = 0.0)
      .def_buffer(&tensor_buffer)
      .def_property_readonly("shape", [](const Tensor& t) { return t.shape(); })
      .def_property_readonly("ndim", &Tensor::ndim)
      .def("size", &Tensor::size)
      .def("numpy", &tensor_to_array)
      .def("__eq__", [](const Tensor& a, const Tensor& b) { return a == b; })
      .def("__repr__", [](const Tensor& t) { return "Tensor" + shape_string(t); });
  py::implicitly_convertible<py::array, Tensor>();

  // ---- vocabulary and domains ----

  py::enum_<Domain>(m, "Domain")
      .value("GROUND_TRUTH", Domain::GroundTruth)
      .value("SYNTH_CASED", Domain::SynthCased)
      .value("SYNTH_LOWER", Domain::SynthLower);
  m.def("domain_name", [](Domain d) { return std::string(domain_name(d)); }, py::arg("domain"));
  m.def("parse_domain", &parse_domain, py::arg("name"));

  py::class_<Vocabulary> vocab(m, "Vocabulary");
  vocab.def(py::init<>())
      .def_readonly_static("PAD", &Vocabulary::kPad)
      .def_readonly_static("BOS", &Vocabulary::kBos)
      .def_readonly_static("EOS", &Vocabulary::kEos)
      .def_readonly_static("UNK", &Vocabulary::kUnk)
      .def_readonly_static("BLANK", &Vocabulary::kBlank)
      .def_readonly_static("TAG_BASE", &Vocabulary::kTagBase)
      .def_readonly_static("NUM_RESERVED", &Vocabulary::kNumReserved)
      .def_static("build", &Vocabulary::build, py::arg("corpus"))
      .def("add", &Vocabulary::add, py::arg("token"))
      .def("encode", py::overload_cast<const std::string&>(&Vocabulary::encode, py::const_),
           py::arg("token"))
      .def("encode",
           py::overload_cast<const std::vector<std::string>&>(&Vocabulary::encode, py::const_),
           py::arg("tokens"))
      .def("decode", py::overload_cast<int>(&Vocabulary::decode, py::const_), py::arg("id"))
      .def("decode", py::overload_cast<const std::vector<int>&>(&Vocabulary::decode, py::const_),
           py::arg("ids"))
      .def("contains", &Vocabulary::contains, py::arg("token"))
      .def("is_reserved", &Vocabulary::is_reserved, py::arg("id"))
      .def("is_word_final", &Vocabulary::is_word_final, py::arg("id"))
      .def("tag_id", &Vocabulary::tag_id, py::arg("domain"))
      .def("save", &Vocabulary::save, py::arg("path"))
      .def_static("load", &Vocabulary::load, py::arg("path"))
      .def("__len__", &Vocabulary::size)
      .def("__contains__", &Vocabulary::contains)
      .def("__eq__", [](const Vocabulary& a, const Vocabulary& b) { return a == b; });
  m.def("normalize_transcript", &normalize_transcript, py::arg("text"));

  // ---- subword segmentation ----

  py::class_<BpeModel>(m, "BpeModel")
      .def(py::init<>())
      .def_readwrite("merges", &BpeModel::merges)
      .def("__eq__", [](const BpeModel& a, const BpeModel& b) { return a == b; })
      .def("__len__", [](const BpeModel& b) { return b.merges.size(); });
  m.def("learn_bpe", &learn_bpe, py::arg("corpus"), py::arg("n_merges"));
  m.def("apply_bpe", &apply_bpe, py::arg("sentence"), py::arg("model"));
  m.def("apply_bpe_word", &apply_bpe_word, py::arg("word"), py::arg("model"));
  m.def("join_bpe", &join_bpe, py::arg("tokens"));
  m.def("save_bpe", &save_bpe, py::arg("model"), py::arg("path"));
  m.def("load_bpe", &load_bpe, py::arg("path"));
  m.attr("WORD_END") = std::string(kWordEnd);

  // ---- features and manifests ----

  m.def("save_features", [](const Tensor& t, const std::string& path) { save_features(t, path); },
        py::arg("features"), py::arg("path"));
  m.def("load_features", [](const std::string& path) { return tensor_to_array(load_features(path)); },
        py::arg("path"));
  m.def("feature_frame_count", &feature_frame_count, py::arg("path"));

  py::class_<Alignment>(m, "Alignment")
      .def(py::init<>())
      .def_readwrite("word", &Alignment::word)
      .def_readwrite("start_frame", &Alignment::start_frame)
      .def_readwrite("end_frame", &Alignment::end_frame)
      .def("__eq__", [](const Alignment& a, const Alignment& b) { return a == b; });

  py::class_<ManifestRecord>(m, "ManifestRecord")
      .def(py::init<>())
      .def_readwrite("id", &ManifestRecord::id)
      .def_readwrite("feature_path", &ManifestRecord::feature_path)
      .def_readwrite("transcript", &ManifestRecord::transcript)
      .def_readwrite("target", &ManifestRecord::target)
      .def_readwrite("domain", &ManifestRecord::domain)
      .def_readwrite("alignments", &ManifestRecord::alignments)
      .def("__eq__", [](const ManifestRecord& a, const ManifestRecord& b) { return a == b; });

  py::class_<Manifest>(m, "Manifest")
      .def(py::init<>())
      .def_readwrite("metadata", &Manifest::metadata)
      .def_readwrite("records", &Manifest::records)
      .def("__len__", [](const Manifest& m_) { return m_.records.size(); })
      .def("__eq__", [](const Manifest& a, const Manifest& b) { return a == b; });
  m.def("load_manifest", &load_manifest, py::arg("path"));
  m.def("save_manifest", &save_manifest, py::arg("manifest"), py::arg("path"));

  py::class_<EncodedSample>(m, "EncodedSample")
      .def(py::init<>())
      .def_readwrite("id", &EncodedSample::id)
      .def_property(
          "features", [](const EncodedSample& s) { return tensor_to_array(s.features); },
          [](EncodedSample& s, const DoubleArray& a) {
            s.features = tensor_from_array(a);
            s.n_frames = s.features.dim(0);
          })
      .def_readwrite("transcript_ids", &EncodedSample::transcript_ids)
      .def_readwrite("target_ids", &EncodedSample::target_ids)
      .def_readwrite("ctc_ids", &EncodedSample::ctc_ids)
      .def_readwrite("domain", &EncodedSample::domain)
      .def_readwrite("alignments", &EncodedSample::alignments)
      .def_readwrite("n_frames", &EncodedSample::n_frames);
  m.def("encode_sample", &encode_sample, py::arg("record"), py::arg("bpe"), py::arg("vocab"),
        py::arg("feature_root"), py::arg("load_feature_matrix"));
  m.def("encode_manifest", &encode_manifest, py::arg("manifest"), py::arg("bpe"), py::arg("vocab"),
        py::arg("feature_root"), py::arg("load_feature_matrix"));

  // ---- random numbers and augmentation ----

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed") = 0)
      .def("uniform", py::overload_cast<>(&Rng::uniform))
      .def("uniform", py::overload_cast<double, double>(&Rng::uniform), py::arg("lo"), py::arg("hi"))
      .def("uniform_int", &Rng::uniform_int, py::arg("lo"), py::arg("hi"))
      .def("bernoulli", &Rng::bernoulli, py::arg("p"))
      .def("gaussian", &Rng::gaussian, py::arg("mean") = 0.0, py::arg("stddev") = 1.0)
      .def("derive", &Rng::derive, py::arg("key"));

  py::class_<SpecAugmentConfig>(m, "SpecAugmentConfig")
      .def(py::init<>())
      .def_readwrite("p", &SpecAugmentConfig::p)
      .def_readwrite("freq_mask_par", &SpecAugmentConfig::freq_mask_par)
      .def_readwrite("time_mask_par", &SpecAugmentConfig::time_mask_par)
      .def_readwrite("freq_mask_num", &SpecAugmentConfig::freq_mask_num)
      .def_readwrite("time_mask_num", &SpecAugmentConfig::time_mask_num);

  py::class_<TimeStretchConfig>(m, "TimeStretchConfig")
      .def(py::init<>())
      .def_readwrite("p", &TimeStretchConfig::p)
      .def_readwrite("window_w", &TimeStretchConfig::window_w)
      .def_readwrite("s_low", &TimeStretchConfig::s_low)
      .def_readwrite("s_high", &TimeStretchConfig::s_high)
      .def_readwrite("short_input_threshold", &TimeStretchConfig::short_input_threshold)
      .def_readwrite("invert_factor", &TimeStretchConfig::invert_factor);

  m.def(
      "spec_augment",
      [](const Tensor& x, const SpecAugmentConfig& cfg, Rng& rng) {
        return tensor_to_array(spec_augment(x, cfg, rng));
      },
      py::arg("features"), py::arg("config"), py::arg("rng"));
  m.def(
      "time_stretch",
      [](const Tensor& x, const TimeStretchConfig& cfg, Rng& rng) {
        return tensor_to_array(time_stretch(x, cfg, rng));
      },
      py::arg("features"), py::arg("config"), py::arg("rng"));
  m.def("subsequence_sample", &subsequence_sample, py::arg("sample"), py::arg("vocab"),
        py::arg("rng"));

  // ---- losses ----

  py::class_<LossOutput>(m, "LossOutput")
      .def_readonly("value", &LossOutput::value)
      .def_property_readonly("grad", [](const LossOutput& o) { return tensor_to_array(o.grad); })
      .def_readonly("n_tokens", &LossOutput::n_tokens);

  m.def("label_smoothed_ce", &label_smoothed_ce, py::arg("logits"), py::arg("targets"),
        py::arg("pad_id"), py::arg("epsilon") = 0.1);
  m.def(
      "word_kd_loss",
      [](const Tensor& logits, const std::vector<TeacherRow>& teacher,
         const std::vector<int>& pad_mask) {
        std::vector<char> mask(pad_mask.begin(), pad_mask.end());
        return word_kd_loss(logits, teacher, mask);
      },
      py::arg("student_logits"), py::arg("teacher_rows"), py::arg("pad_mask"));
  m.def("ctc_loss", &ctc_loss, py::arg("log_probs"), py::arg("target"), py::arg("blank_id"));

  py::class_<MultitaskWeights>(m, "MultitaskWeights")
      .def(py::init<>())
      .def_readwrite("lambda_ctc", &MultitaskWeights::lambda_ctc);
  py::class_<MultitaskLossOutput>(m, "MultitaskLossOutput")
      .def_readonly("value", &MultitaskLossOutput::value)
      .def_property_readonly("primary_grad",
                             [](const MultitaskLossOutput& o) { return tensor_to_array(o.primary_grad); })
      .def_property_readonly("ctc_grad",
                             [](const MultitaskLossOutput& o) { return tensor_to_array(o.ctc_grad); })
      .def_readonly("n_tokens", &MultitaskLossOutput::n_tokens);
  m.def("multitask_loss", &multitask_loss, py::arg("primary"), py::arg("ctc"), py::arg("weights"));

  // ---- model configuration and checkpoints ----

  py::enum_<ModelKind>(m, "ModelKind").value("SPEECH", ModelKind::Speech).value("TEXT", ModelKind::Text);
  py::enum_<TagMode>(m, "TagMode")
      .value("NONE", TagMode::None)
      .value("ENCODER_INPUT", TagMode::EncoderInput)
      .value("DECODER_INPUT", TagMode::DecoderInput);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("kind", &ModelConfig::kind)
      .def_readwrite("n_enc_layers", &ModelConfig::n_enc_layers)
      .def_readwrite("n_dec_layers", &ModelConfig::n_dec_layers)
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("d_ffn", &ModelConfig::d_ffn)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def_readwrite("conv_channels", &ModelConfig::conv_channels)
      .def_readwrite("n_features", &ModelConfig::n_features)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("ctc_layer", &ModelConfig::ctc_layer)
      .def_readwrite("tag_mode", &ModelConfig::tag_mode)
      .def_readwrite("tag_before_position", &ModelConfig::tag_before_position)
      .def_readwrite("distance_penalty_scale", &ModelConfig::distance_penalty_scale)
      .def("validate", &ModelConfig::validate)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

  m.def("param_spec", &param_spec, py::arg("config"));
  m.def("param_count", &param_count, py::arg("config"));
  m.def("init_params", &init_params, py::arg("config"), py::arg("rng"));
  m.def("conv_output_length", &conv_output_length, py::arg("t"));
  m.def(
      "distance_penalty_bias",
      [](long n, double scale) { return tensor_to_array(distance_penalty_bias(n, scale)); },
      py::arg("n"), py::arg("scale"));

  py::class_<Checkpoint>(m, "Checkpoint")
      .def(py::init<>())
      .def_readwrite("config", &Checkpoint::config)
      .def_readwrite("params", &Checkpoint::params)
      .def_readwrite("step", &Checkpoint::step)
      .def_readwrite("metadata", &Checkpoint::metadata);
  m.def("save_checkpoint", &save_checkpoint, py::arg("checkpoint"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("init_from_asr", &init_from_asr, py::arg("st_params"), py::arg("asr_params"),
        py::arg("st_config"), py::arg("asr_config"));
  m.def("transfer_decoder", &transfer_decoder, py::arg("st_params"), py::arg("mt_params"),
        py::arg("st_config"), py::arg("mt_config"));
  m.def("average_checkpoints",
        py::overload_cast<const std::vector<Checkpoint>&>(&average_checkpoints),
        py::arg("checkpoints"));
  m.def("average_checkpoints",
        py::overload_cast<const std::vector<std::string>&>(&average_checkpoints), py::arg("paths"));

  // ---- teacher distillation ----

  py::class_<TeacherRow>(m, "TeacherRow")
      .def(py::init<>())
      .def_readwrite("ids", &TeacherRow::ids)
      .def_readwrite("probs", &TeacherRow::probs)
      .def("__eq__", [](const TeacherRow& a, const TeacherRow& b) { return a == b; });
  m.def("extract_topk", &extract_topk, py::arg("logits_row"), py::arg("k"));
  m.def("extract_topk_from_probs", &extract_topk_from_probs, py::arg("probs"), py::arg("k"));

  py::class_<KdStore>(m, "KdStore")
      .def(py::init<>())
      .def_readwrite("k", &KdStore::k)
      .def_readwrite("rows", &KdStore::rows)
      .def("rows_for", &KdStore::rows_for, py::arg("sample_id"),
           py::return_value_policy::reference_internal)
      .def("__eq__", [](const KdStore& a, const KdStore& b) { return a == b; });
  py::class_<DistillStats>(m, "DistillStats")
      .def(py::init<>())
      .def_readwrite("distilled", &DistillStats::distilled)
      .def_readwrite("skipped", &DistillStats::skipped);
  m.def(
      "distill_corpus",
      [](const Checkpoint& teacher, const std::vector<EncodedSample>& data, long k) {
        DistillStats stats;
        KdStore store = distill_corpus(teacher, data, k, &stats);
        return py::make_tuple(store, stats);
      },
      py::arg("teacher"), py::arg("data"), py::arg("k"));
  m.def("save_store", &save_store, py::arg("store"), py::arg("path"));
  m.def("load_store", &load_store, py::arg("path"));

  // ---- training ----

  py::enum_<LrKind>(m, "LrKind")
      .value("WARMUP_INV_SQRT", LrKind::WarmupInvSqrt)
      .value("FIXED", LrKind::Fixed);
  py::class_<LrSchedule>(m, "LrSchedule")
      .def(py::init<>())
      .def_readwrite("kind", &LrSchedule::kind)
      .def_readwrite("lr_start", &LrSchedule::lr_start)
      .def_readwrite("lr_peak", &LrSchedule::lr_peak)
      .def_readwrite("warmup_steps", &LrSchedule::warmup_steps)
      .def_readwrite("fixed_lr", &LrSchedule::fixed_lr)
      .def("validate", &LrSchedule::validate);
  m.def("lr_at_step", &lr_at_step, py::arg("schedule"), py::arg("t"));

  py::class_<BatchPlan>(m, "BatchPlan")
      .def(py::init<>())
      .def_readwrite("max_tokens", &BatchPlan::max_tokens)
      .def_readwrite("max_samples", &BatchPlan::max_samples)
      .def_readwrite("accumulation", &BatchPlan::accumulation)
      .def_readwrite("domain_order", &BatchPlan::domain_order)
      .def("validate", &BatchPlan::validate);
  py::class_<Batch>(m, "Batch")
      .def_readonly("domain", &Batch::domain)
      .def_readonly("indices", &Batch::indices);
  m.def("multi_domain_batches", &multi_domain_batches, py::arg("data"), py::arg("plan"),
        py::arg("rng"));

  py::enum_<PhaseLoss>(m, "PhaseLoss")
      .value("LABEL_SMOOTHED_CE", PhaseLoss::LabelSmoothedCE)
      .value("WORD_KD", PhaseLoss::WordKD);
  py::class_<TrainPhaseConfig>(m, "TrainPhaseConfig")
      .def(py::init<>())
      .def_readwrite("name", &TrainPhaseConfig::name)
      .def_readwrite("loss", &TrainPhaseConfig::loss)
      .def_readwrite("n_epochs", &TrainPhaseConfig::n_epochs)
      .def_readwrite("schedule", &TrainPhaseConfig::schedule)
      .def_readwrite("plan", &TrainPhaseConfig::plan)
      .def_readwrite("augment", &TrainPhaseConfig::augment)
      .def_readwrite("spec_augment", &TrainPhaseConfig::spec_augment)
      .def_readwrite("time_stretch", &TrainPhaseConfig::time_stretch)
      .def_readwrite("label_smoothing", &TrainPhaseConfig::label_smoothing)
      .def_readwrite("ctc_weight", &TrainPhaseConfig::ctc_weight)
      .def_readwrite("seed", &TrainPhaseConfig::seed)
      .def_readwrite("checkpoint_dir", &TrainPhaseConfig::checkpoint_dir)
      .def("validate", &TrainPhaseConfig::validate);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("final_ckpt", &TrainResult::final_ckpt)
      .def_readonly("best_ckpt", &TrainResult::best_ckpt)
      .def_readonly("best_epoch", &TrainResult::best_epoch)
      .def_readonly("epoch_losses", &TrainResult::epoch_losses)
      .def_readonly("val_perplexities", &TrainResult::val_perplexities)
      .def_readonly("checkpoint_paths", &TrainResult::checkpoint_paths)
      .def_readonly("updates", &TrainResult::updates)
      .def_readonly("ctc_unalignable", &TrainResult::ctc_unalignable);
  m.def(
      "train_phase",
      [](const Checkpoint& start, const std::vector<EncodedSample>& train_data,
         const std::vector<EncodedSample>& valid_data, const TrainPhaseConfig& cfg,
         const KdStore* kd_store,
         const std::function<void(long, double, double)>& on_epoch) {
        TrainHooks hooks;
        if (on_epoch) hooks.on_epoch = on_epoch;
        return train_phase(start, train_data, valid_data, cfg, kd_store, hooks);
      },
      py::arg("start"), py::arg("train_data"), py::arg("valid_data"), py::arg("config"),
      py::arg("kd_store") = nullptr, py::arg("on_epoch") = nullptr);
  m.def("checkpoint_window", &checkpoint_window, py::arg("best_epoch"), py::arg("n_epochs"),
        py::arg("window") = 5);

  // ---- decoding ----

  py::class_<DecodeConfig>(m, "DecodeConfig")
      .def(py::init<>())
      .def_readwrite("beam_size", &DecodeConfig::beam_size)
      .def_readwrite("max_len", &DecodeConfig::max_len)
      .def_readwrite("temperature", &DecodeConfig::temperature)
      .def_readwrite("length_norm", &DecodeConfig::length_norm)
      .def_readwrite("log_space_ensemble", &DecodeConfig::log_space_ensemble)
      .def("validate", &DecodeConfig::validate);
  py::class_<Hypothesis>(m, "Hypothesis")
      .def_readonly("tokens", &Hypothesis::tokens)
      .def_readonly("score", &Hypothesis::score)
      .def_readonly("finished", &Hypothesis::finished);

  m.def("apply_temperature", &apply_temperature, py::arg("logits_row"), py::arg("temperature"));
  m.def("default_temperature", &default_temperature, py::arg("checkpoint"));
  m.def(
      "generate",
      [](const std::vector<Checkpoint*>& models, const Tensor& features,
         std::optional<Domain> tag, const DecodeConfig& cfg) {
        return generate(as_model_ptrs(models), features, tag, cfg);
      },
      py::arg("models"), py::arg("features"), py::arg("tag") = std::nullopt,
      py::arg("config") = DecodeConfig{});
  m.def(
      "generate_text",
      [](const std::vector<Checkpoint*>& models, const std::vector<int>& source,
         const DecodeConfig& cfg) { return generate_text(as_model_ptrs(models), source, cfg); },
      py::arg("models"), py::arg("source"), py::arg("config") = DecodeConfig{});

  // ---- evaluation ----

  py::class_<BleuReport>(m, "BleuReport")
      .def_readonly("bleu", &BleuReport::bleu)
      .def_readonly("precisions", &BleuReport::precisions)
      .def_readonly("brevity_penalty", &BleuReport::brevity_penalty)
      .def_readonly("hyp_len", &BleuReport::hyp_len)
      .def_readonly("ref_len", &BleuReport::ref_len);
  py::class_<WerReport>(m, "WerReport")
      .def_readonly("wer", &WerReport::wer)
      .def_readonly("substitutions", &WerReport::substitutions)
      .def_readonly("insertions", &WerReport::insertions)
      .def_readonly("deletions", &WerReport::deletions)
      .def_readonly("n_ref_words", &WerReport::n_ref_words);
  m.def("bleu_tokenize", &bleu_tokenize, py::arg("line"));
  m.def("corpus_bleu", &corpus_bleu, py::arg("hyps"), py::arg("refs"));
  m.def("wer", &wer, py::arg("hyp_words"), py::arg("ref_words"));
  m.def("corpus_wer", &corpus_wer, py::arg("hyps"), py::arg("refs"));
}
