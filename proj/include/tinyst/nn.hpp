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

#include "tinyst/rng.hpp"
#include "tinyst/tensor.hpp"

// Layer primitives with explicit forward caches and hand-written
// backward passes. Every backward consumes the cache of the matching
// forward call and accumulates parameter gradients.
namespace tinyst::nn {

// y = x @ W^T + b, W: [out, in].
struct LinearCache {
  Tensor input;
};
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                      LinearCache* cache);
// Returns dx; accumulates dw, db.
Tensor linear_backward(const Tensor& dy, const LinearCache& cache, const Tensor& w,
                       Tensor& dw, Tensor& db);

struct LayerNormCache {
  Tensor input;
  std::vector<double> mean, rstd;
};
Tensor layer_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          LayerNormCache* cache);
Tensor layer_norm_backward(const Tensor& dy, const LayerNormCache& cache,
                           const Tensor& gamma, Tensor& dgamma, Tensor& dbeta);

// Inverted dropout; scaling happens at train time so inference is a
// no-op.
struct DropoutCache {
  Tensor mask;
  bool active = false;
};
Tensor dropout_forward(const Tensor& x, double rate, bool train, Rng& rng,
                       DropoutCache* cache);
Tensor dropout_backward(const Tensor& dy, const DropoutCache& cache);

// Multi-head scaled dot-product attention over already-embedded
// sequences. attn_bias, when non-empty, is added to every head's
// pre-softmax logits. causal masks out j > i.
struct AttentionParams {
  const Tensor *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
};
struct AttentionGrads {
  Tensor *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
};
struct AttentionCache {
  Tensor xq, xkv;
  Tensor q, k, v;      // projected, [T, d_model]
  Tensor probs;        // [n_heads, Tq, Tk]
  Tensor ctx;          // concatenated head outputs, [Tq, d_model]
};
Tensor attention_forward(const Tensor& xq, const Tensor& xkv,
                         const AttentionParams& p, long n_heads,
                         const Tensor& attn_bias, bool causal,
                         AttentionCache* cache);
// Returns (dxq, dxkv) via out-parameters; accumulates all weight grads.
void attention_backward(const Tensor& dy, const AttentionCache& cache,
                        const AttentionParams& p, long n_heads,
                        const AttentionGrads& g, Tensor& dxq, Tensor& dxkv);

// Two-layer position-wise feed-forward with ReLU.
struct FfnCache {
  LinearCache l1, l2;
  Tensor pre_relu;
};
Tensor ffn_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                   const Tensor& w2, const Tensor& b2, FfnCache* cache);
Tensor ffn_backward(const Tensor& dy, const FfnCache& cache, const Tensor& w1,
                    const Tensor& w2, Tensor& dw1, Tensor& db1, Tensor& dw2,
                    Tensor& db2);

// 3x3 conv, stride 2, zero padding 1, fused ReLU. x: [C_in, H, W],
// weight: [C_out, C_in, 3, 3]. Output H' = ceil(H/2), W' = ceil(W/2).
struct ConvCache {
  Tensor input;
  Tensor pre_relu;
};
Tensor conv3x3s2_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                         ConvCache* cache);
Tensor conv3x3s2_backward(const Tensor& dy, const ConvCache& cache, const Tensor& w,
                          Tensor& dw, Tensor& db);

// Row lookup; backward scatter-adds into the table gradient.
Tensor embedding_forward(const std::vector<int>& ids, const Tensor& table);
void embedding_backward(const Tensor& dy, const std::vector<int>& ids, Tensor& dtable);

// Fixed sinusoidal position table, [n, d].
Tensor sinusoidal_positions(long n, long d);

// log softmax over rows and its backward.
Tensor log_softmax_rows(const Tensor& z);
Tensor log_softmax_backward(const Tensor& dy, const Tensor& log_probs);

}  // namespace tinyst::nn
