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

#include "tinyst/losses.hpp"

#include <cmath>
#include <limits>

#include "tinyst/error.hpp"

namespace tinyst {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// softmax of one row, numerically stable; returns logZ.
double softmax_row(const double* z, long v, std::vector<double>& p) {
  double zmax = z[0];
  for (long i = 1; i < v; ++i) zmax = std::max(zmax, z[i]);
  double sum = 0.0;
  p.resize(static_cast<std::size_t>(v));
  for (long i = 0; i < v; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(z[i] - zmax);
    sum += p[static_cast<std::size_t>(i)];
  }
  for (long i = 0; i < v; ++i) p[static_cast<std::size_t>(i)] /= sum;
  return zmax + std::log(sum);
}

}  // namespace

LossOutput label_smoothed_ce(const Tensor& logits, const std::vector<int>& targets,
                             int pad_id, double epsilon) {
  if (logits.ndim() != 2) throw DataError("label_smoothed_ce: logits must be N x V");
  const long n = logits.dim(0), v = logits.dim(1);
  if (static_cast<long>(targets.size()) != n)
    throw DataError("label_smoothed_ce: got " + std::to_string(targets.size()) +
                    " targets for " + std::to_string(n) + " logit rows");
  if (epsilon < 0.0 || epsilon >= 1.0)
    throw ConfigError("label_smoothed_ce: epsilon must be in [0,1)");
  if (v < 2 && epsilon > 0.0)
    throw ConfigError("label_smoothed_ce: smoothing needs at least 2 classes");

  LossOutput out;
  out.grad = Tensor({n, v});
  double total = 0.0;
  std::vector<double> p;
  for (long i = 0; i < n; ++i) {
    int t = targets[static_cast<std::size_t>(i)];
    if (t == pad_id) continue;
    if (t < 0 || t >= v)
      throw DataError("label_smoothed_ce: target id " + std::to_string(t) +
                      " out of range");
    ++out.n_tokens;
    const double* z = logits.row(i);
    double log_z = softmax_row(z, v, p);
    double off = v > 1 ? epsilon / static_cast<double>(v - 1) : 0.0;
    double on = 1.0 - epsilon;
    // -sum_v q_v log p_v, with log p_v = z_v - logZ
    double loss = 0.0;
    for (long c = 0; c < v; ++c) {
      double q = (c == t) ? on : off;
      if (q != 0.0) loss -= q * (z[c] - log_z);
      out.grad.at(i, c) = p[static_cast<std::size_t>(c)] - q;
    }
    total += loss;
  }
  if (out.n_tokens > 0) {
    out.value = total / static_cast<double>(out.n_tokens);
    out.grad *= 1.0 / static_cast<double>(out.n_tokens);
  } else {
    out.grad.fill(0.0);
  }
  // Padded rows keep their zero gradient from initialization.
  for (long i = 0; i < n; ++i)
    if (targets[static_cast<std::size_t>(i)] == pad_id)
      for (long c = 0; c < v; ++c) out.grad.at(i, c) = 0.0;
  if (!std::isfinite(out.value)) throw NumericalError("label_smoothed_ce: non-finite loss");
  return out;
}

LossOutput word_kd_loss(const Tensor& student_logits,
                        const std::vector<TeacherRow>& teacher,
                        const std::vector<char>& pad_mask) {
  if (student_logits.ndim() != 2) throw DataError("word_kd_loss: logits must be N x V");
  const long n = student_logits.dim(0), v = student_logits.dim(1);
  if (static_cast<long>(teacher.size()) != n)
    throw DataError("word_kd_loss: got " + std::to_string(teacher.size()) +
                    " teacher rows for " + std::to_string(n) + " logit rows");
  if (!pad_mask.empty() && static_cast<long>(pad_mask.size()) != n)
    throw DataError("word_kd_loss: pad mask size mismatch");

  LossOutput out;
  out.grad = Tensor({n, v});
  double total = 0.0;
  std::vector<double> p;
  for (long i = 0; i < n; ++i) {
    if (!pad_mask.empty() && pad_mask[static_cast<std::size_t>(i)]) continue;
    const TeacherRow& row = teacher[static_cast<std::size_t>(i)];
    double qsum = 0.0;
    for (double q : row.probs) qsum += q;
    if (std::abs(qsum - 1.0) > 1e-6)
      throw DataError("word_kd_loss: teacher row " + std::to_string(i) +
                      " probabilities sum to " + std::to_string(qsum));
    ++out.n_tokens;
    const double* z = student_logits.row(i);
    softmax_row(z, v, p);
    double loss = 0.0;
    for (long c = 0; c < v; ++c) out.grad.at(i, c) = p[static_cast<std::size_t>(c)];
    for (std::size_t k = 0; k < row.ids.size(); ++k) {
      int id = row.ids[k];
      if (id < 0 || id >= v)
        throw DataError("word_kd_loss: teacher token id " + std::to_string(id) +
                        " out of range");
      double q = row.probs[k];
      if (q <= 0.0) continue;
      loss += q * (std::log(q) - std::log(p[static_cast<std::size_t>(id)]));
      out.grad.at(i, id) -= q;
    }
    total += loss;
  }
  if (out.n_tokens > 0) {
    out.value = total / static_cast<double>(out.n_tokens);
    out.grad *= 1.0 / static_cast<double>(out.n_tokens);
  }
  for (long i = 0; i < n; ++i)
    if (!pad_mask.empty() && pad_mask[static_cast<std::size_t>(i)])
      for (long c = 0; c < v; ++c) out.grad.at(i, c) = 0.0;
  if (!std::isfinite(out.value)) throw NumericalError("word_kd_loss: non-finite loss");
  return out;
}

LossOutput ctc_loss(const Tensor& log_probs, const std::vector<int>& target,
                    int blank_id) {
  if (log_probs.ndim() != 2) throw DataError("ctc_loss: log_probs must be T x W");
  const long t_len = log_probs.dim(0), w = log_probs.dim(1);
  if (blank_id < 0 || blank_id >= w) throw DataError("ctc_loss: blank id out of range");
  const long l = static_cast<long>(target.size());
  for (int y : target) {
    if (y < 0 || y >= w) throw DataError("ctc_loss: target id out of range");
    if (y == blank_id) throw DataError("ctc_loss: target must not contain the blank");
  }

  long repeats = 0;
  for (long i = 1; i < l; ++i)
    if (target[static_cast<std::size_t>(i)] == target[static_cast<std::size_t>(i - 1)])
      ++repeats;
  if (t_len < l + repeats) throw UnalignableError(t_len, l + repeats);

  // Extended label sequence: blank, y1, blank, y2, ..., yL, blank.
  const long s_len = 2 * l + 1;
  auto label_at = [&](long s) -> int {
    return (s % 2 == 0) ? blank_id : target[static_cast<std::size_t>(s / 2)];
  };
  auto skip_allowed = [&](long s) {
    // Entering state s from s-2 skips a blank; legal only between
    // distinct labels.
    return s >= 2 && s % 2 == 1 && (s == 1 || label_at(s) != label_at(s - 2));
  };

  Tensor alpha({t_len, s_len}, kNegInf);
  alpha.at(0, 0) = log_probs.at(0, label_at(0));
  if (s_len > 1) alpha.at(0, 1) = log_probs.at(0, label_at(1));
  for (long t = 1; t < t_len; ++t) {
    for (long s = 0; s < s_len; ++s) {
      double a = alpha.at(t - 1, s);
      if (s >= 1) a = log_sum_exp(a, alpha.at(t - 1, s - 1));
      if (skip_allowed(s)) a = log_sum_exp(a, alpha.at(t - 1, s - 2));
      alpha.at(t, s) = a + log_probs.at(t, label_at(s));
    }
  }
  double log_p = alpha.at(t_len - 1, s_len - 1);
  if (s_len > 1) log_p = log_sum_exp(log_p, alpha.at(t_len - 1, s_len - 2));
  if (log_p == kNegInf) throw UnalignableError(t_len, l + repeats);

  // beta excludes the emission at its own frame, so alpha + beta counts
  // every emission exactly once.
  Tensor beta({t_len, s_len}, kNegInf);
  beta.at(t_len - 1, s_len - 1) = 0.0;
  if (s_len > 1) beta.at(t_len - 1, s_len - 2) = 0.0;
  for (long t = t_len - 2; t >= 0; --t) {
    for (long s = 0; s < s_len; ++s) {
      double b = beta.at(t + 1, s) + log_probs.at(t + 1, label_at(s));
      if (s + 1 < s_len)
        b = log_sum_exp(b, beta.at(t + 1, s + 1) + log_probs.at(t + 1, label_at(s + 1)));
      if (s + 2 < s_len && skip_allowed(s + 2))
        b = log_sum_exp(b, beta.at(t + 1, s + 2) + log_probs.at(t + 1, label_at(s + 2)));
      beta.at(t, s) = b;
    }
  }

  const double norm = static_cast<double>(std::max<long>(1, l));
  LossOutput out;
  out.n_tokens = l;
  out.value = -log_p / norm;
  out.grad = Tensor({t_len, w});
  for (long t = 0; t < t_len; ++t) {
    for (long s = 0; s < s_len; ++s) {
      double joint = alpha.at(t, s) + beta.at(t, s);
      if (joint == kNegInf) continue;
      out.grad.at(t, label_at(s)) -= std::exp(joint - log_p) / norm;
    }
  }
  if (!std::isfinite(out.value)) throw NumericalError("ctc_loss: non-finite loss");
  return out;
}

MultitaskLossOutput multitask_loss(const LossOutput& primary, const LossOutput& ctc,
                                   const MultitaskWeights& w) {
  if (w.lambda_ctc < 0.0 || w.lambda_ctc > 1.0)
    throw ConfigError("multitask_loss: lambda_ctc must be in [0,1]");
  MultitaskLossOutput out;
  out.value = (1.0 - w.lambda_ctc) * primary.value + w.lambda_ctc * ctc.value;
  out.n_tokens = primary.n_tokens;
  out.primary_grad = primary.grad;
  out.primary_grad *= (1.0 - w.lambda_ctc);
  out.ctc_grad = ctc.grad;
  out.ctc_grad *= w.lambda_ctc;
  return out;
}

}  // namespace tinyst
