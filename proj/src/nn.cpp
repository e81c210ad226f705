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

#include "tinyst/nn.hpp"

#include <cmath>

#include "tinyst/error.hpp"

namespace tinyst::nn {

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                      LinearCache* cache) {
  Tensor y = matmul_nt(x, w);
  for (long i = 0; i < y.dim(0); ++i)
    for (long j = 0; j < y.dim(1); ++j) y.at(i, j) += b[j];
  if (cache) cache->input = x;
  return y;
}

Tensor linear_backward(const Tensor& dy, const LinearCache& cache, const Tensor& w,
                       Tensor& dw, Tensor& db) {
  dw += matmul_tn(dy, cache.input);
  for (long i = 0; i < dy.dim(0); ++i)
    for (long j = 0; j < dy.dim(1); ++j) db[j] += dy.at(i, j);
  return matmul(dy, w);
}

Tensor layer_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          LayerNormCache* cache) {
  const long n = x.dim(0), d = x.dim(1);
  Tensor y({n, d});
  std::vector<double> means(static_cast<std::size_t>(n)),
      rstds(static_cast<std::size_t>(n));
  constexpr double kEps = 1e-5;
  for (long i = 0; i < n; ++i) {
    const double* xi = x.row(i);
    double mean = 0.0;
    for (long j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (long j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    double rstd = 1.0 / std::sqrt(var + kEps);
    means[static_cast<std::size_t>(i)] = mean;
    rstds[static_cast<std::size_t>(i)] = rstd;
    for (long j = 0; j < d; ++j)
      y.at(i, j) = (xi[j] - mean) * rstd * gamma[j] + beta[j];
  }
  if (cache) {
    cache->input = x;
    cache->mean = std::move(means);
    cache->rstd = std::move(rstds);
  }
  return y;
}

Tensor layer_norm_backward(const Tensor& dy, const LayerNormCache& cache,
                           const Tensor& gamma, Tensor& dgamma, Tensor& dbeta) {
  const Tensor& x = cache.input;
  const long n = x.dim(0), d = x.dim(1);
  Tensor dx({n, d});
  for (long i = 0; i < n; ++i) {
    double mean = cache.mean[static_cast<std::size_t>(i)];
    double rstd = cache.rstd[static_cast<std::size_t>(i)];
    const double* xi = x.row(i);
    const double* dyi = dy.row(i);
    double sum_dh = 0.0, sum_dh_xhat = 0.0;
    for (long j = 0; j < d; ++j) {
      double xhat = (xi[j] - mean) * rstd;
      double dh = dyi[j] * gamma[j];
      dgamma[j] += dyi[j] * xhat;
      dbeta[j] += dyi[j];
      sum_dh += dh;
      sum_dh_xhat += dh * xhat;
    }
    for (long j = 0; j < d; ++j) {
      double xhat = (xi[j] - mean) * rstd;
      double dh = dyi[j] * gamma[j];
      dx.at(i, j) =
          rstd * (dh - sum_dh / static_cast<double>(d) -
                  xhat * sum_dh_xhat / static_cast<double>(d));
    }
  }
  return dx;
}

Tensor dropout_forward(const Tensor& x, double rate, bool train, Rng& rng,
                       DropoutCache* cache) {
  if (!train || rate <= 0.0) {
    if (cache) cache->active = false;
    return x;
  }
  Tensor mask(x.shape());
  Tensor y(x.shape());
  const double keep = 1.0 - rate;
  for (long i = 0; i < x.size(); ++i) {
    double m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    mask[i] = m;
    y[i] = x[i] * m;
  }
  if (cache) {
    cache->mask = std::move(mask);
    cache->active = true;
  }
  return y;
}

Tensor dropout_backward(const Tensor& dy, const DropoutCache& cache) {
  if (!cache.active) return dy;
  Tensor dx = dy;
  for (long i = 0; i < dx.size(); ++i) dx[i] *= cache.mask[i];
  return dx;
}

namespace {

// Softmax over the last axis of a [Tq, Tk] logits matrix, in place.
void softmax_rows_inplace(Tensor& z) {
  for (long i = 0; i < z.dim(0); ++i) {
    double* row = z.row(i);
    double m = row[0];
    for (long j = 1; j < z.dim(1); ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (long j = 0; j < z.dim(1); ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    for (long j = 0; j < z.dim(1); ++j) row[j] /= sum;
  }
}

}  // namespace

Tensor attention_forward(const Tensor& xq, const Tensor& xkv,
                         const AttentionParams& p, long n_heads,
                         const Tensor& attn_bias, bool causal,
                         AttentionCache* cache) {
  const long tq = xq.dim(0), tk = xkv.dim(0), d = xq.dim(1);
  const long dk = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor q = matmul_nt(xq, *p.wq);
  Tensor k = matmul_nt(xkv, *p.wk);
  Tensor v = matmul_nt(xkv, *p.wv);
  for (long i = 0; i < tq; ++i)
    for (long j = 0; j < d; ++j) q.at(i, j) += (*p.bq)[j];
  for (long i = 0; i < tk; ++i)
    for (long j = 0; j < d; ++j) {
      k.at(i, j) += (*p.bk)[j];
      v.at(i, j) += (*p.bv)[j];
    }

  Tensor probs({n_heads, tq, tk});
  Tensor ctx({tq, d});
  for (long h = 0; h < n_heads; ++h) {
    const long off = h * dk;
    Tensor logits({tq, tk});
    for (long i = 0; i < tq; ++i) {
      for (long j = 0; j < tk; ++j) {
        double s = 0.0;
        for (long c = 0; c < dk; ++c) s += q.at(i, off + c) * k.at(j, off + c);
        s *= scale;
        if (!attn_bias.empty()) s += attn_bias.at(i, j);
        if (causal && j > i) s = -1e30;
        logits.at(i, j) = s;
      }
    }
    softmax_rows_inplace(logits);
    for (long i = 0; i < tq; ++i)
      for (long j = 0; j < tk; ++j) probs.at(h, i, j) = logits.at(i, j);
    for (long i = 0; i < tq; ++i)
      for (long j = 0; j < tk; ++j) {
        double pij = logits.at(i, j);
        if (pij == 0.0) continue;
        for (long c = 0; c < dk; ++c) ctx.at(i, off + c) += pij * v.at(j, off + c);
      }
  }

  Tensor out = matmul_nt(ctx, *p.wo);
  for (long i = 0; i < tq; ++i)
    for (long j = 0; j < d; ++j) out.at(i, j) += (*p.bo)[j];

  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->ctx = std::move(ctx);
  }
  return out;
}

void attention_backward(const Tensor& dy, const AttentionCache& cache,
                        const AttentionParams& p, long n_heads,
                        const AttentionGrads& g, Tensor& dxq, Tensor& dxkv) {
  const long tq = cache.xq.dim(0), tk = cache.xkv.dim(0), d = cache.xq.dim(1);
  const long dk = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  // Output projection.
  *g.wo += matmul_tn(dy, cache.ctx);
  for (long i = 0; i < tq; ++i)
    for (long j = 0; j < d; ++j) (*g.bo)[j] += dy.at(i, j);
  Tensor dctx = matmul(dy, *p.wo);

  Tensor dq({tq, d}), dkt({tk, d}), dv({tk, d});
  for (long h = 0; h < n_heads; ++h) {
    const long off = h * dk;
    // dprobs = dctx_h @ V_h^T ; dV_h = probs^T @ dctx_h
    Tensor dprobs({tq, tk});
    for (long i = 0; i < tq; ++i)
      for (long j = 0; j < tk; ++j) {
        double s = 0.0;
        for (long c = 0; c < dk; ++c) s += dctx.at(i, off + c) * cache.v.at(j, off + c);
        dprobs.at(i, j) = s;
      }
    for (long i = 0; i < tq; ++i)
      for (long j = 0; j < tk; ++j) {
        double pij = cache.probs.at(h, i, j);
        if (pij == 0.0) continue;
        for (long c = 0; c < dk; ++c) dv.at(j, off + c) += pij * dctx.at(i, off + c);
      }
    // Softmax backward per row.
    Tensor dlogits({tq, tk});
    for (long i = 0; i < tq; ++i) {
      double dot = 0.0;
      for (long j = 0; j < tk; ++j) dot += dprobs.at(i, j) * cache.probs.at(h, i, j);
      for (long j = 0; j < tk; ++j)
        dlogits.at(i, j) = cache.probs.at(h, i, j) * (dprobs.at(i, j) - dot);
    }
    for (long i = 0; i < tq; ++i)
      for (long j = 0; j < tk; ++j) {
        double dl = dlogits.at(i, j) * scale;
        if (dl == 0.0) continue;
        for (long c = 0; c < dk; ++c) {
          dq.at(i, off + c) += dl * cache.k.at(j, off + c);
          dkt.at(j, off + c) += dl * cache.q.at(i, off + c);
        }
      }
  }

  // Input projections.
  *g.wq += matmul_tn(dq, cache.xq);
  *g.wk += matmul_tn(dkt, cache.xkv);
  *g.wv += matmul_tn(dv, cache.xkv);
  for (long i = 0; i < tq; ++i)
    for (long j = 0; j < d; ++j) (*g.bq)[j] += dq.at(i, j);
  for (long i = 0; i < tk; ++i)
    for (long j = 0; j < d; ++j) {
      (*g.bk)[j] += dkt.at(i, j);
      (*g.bv)[j] += dv.at(i, j);
    }
  dxq = matmul(dq, *p.wq);
  dxkv = matmul(dkt, *p.wk);
  dxkv += matmul(dv, *p.wv);
}

Tensor ffn_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                   const Tensor& w2, const Tensor& b2, FfnCache* cache) {
  Tensor h = linear_forward(x, w1, b1, cache ? &cache->l1 : nullptr);
  if (cache) cache->pre_relu = h;
  for (long i = 0; i < h.size(); ++i) h[i] = h[i] > 0.0 ? h[i] : 0.0;
  return linear_forward(h, w2, b2, cache ? &cache->l2 : nullptr);
}

Tensor ffn_backward(const Tensor& dy, const FfnCache& cache, const Tensor& w1,
                    const Tensor& w2, Tensor& dw1, Tensor& db1, Tensor& dw2,
                    Tensor& db2) {
  Tensor dh = linear_backward(dy, cache.l2, w2, dw2, db2);
  for (long i = 0; i < dh.size(); ++i)
    if (cache.pre_relu[i] <= 0.0) dh[i] = 0.0;
  return linear_backward(dh, cache.l1, w1, dw1, db1);
}

Tensor conv3x3s2_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                         ConvCache* cache) {
  const long c_in = x.dim(0), h_in = x.dim(1), w_in = x.dim(2);
  const long c_out = w.dim(0);
  const long h_out = (h_in + 1) / 2, w_out = (w_in + 1) / 2;
  Tensor y({c_out, h_out, w_out});
  for (long o = 0; o < c_out; ++o)
    for (long i = 0; i < h_out; ++i)
      for (long j = 0; j < w_out; ++j) {
        double s = b[o];
        for (long c = 0; c < c_in; ++c)
          for (long di = 0; di < 3; ++di) {
            long si = 2 * i + di - 1;
            if (si < 0 || si >= h_in) continue;
            for (long dj = 0; dj < 3; ++dj) {
              long sj = 2 * j + dj - 1;
              if (sj < 0 || sj >= w_in) continue;
              s += w.at(o, c, di, dj) * x.at(c, si, sj);
            }
          }
        y.at(o, i, j) = s;
      }
  if (cache) {
    cache->input = x;
    cache->pre_relu = y;
  }
  for (long i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
  return y;
}

Tensor conv3x3s2_backward(const Tensor& dy, const ConvCache& cache, const Tensor& w,
                          Tensor& dw, Tensor& db) {
  const Tensor& x = cache.input;
  const long c_in = x.dim(0), h_in = x.dim(1), w_in = x.dim(2);
  const long c_out = dy.dim(0), h_out = dy.dim(1), w_out = dy.dim(2);
  Tensor dx({c_in, h_in, w_in});
  for (long o = 0; o < c_out; ++o)
    for (long i = 0; i < h_out; ++i)
      for (long j = 0; j < w_out; ++j) {
        double g = dy.at(o, i, j);
        if (cache.pre_relu.at(o, i, j) <= 0.0) continue;
        if (g == 0.0) continue;
        db[o] += g;
        for (long c = 0; c < c_in; ++c)
          for (long di = 0; di < 3; ++di) {
            long si = 2 * i + di - 1;
            if (si < 0 || si >= h_in) continue;
            for (long dj = 0; dj < 3; ++dj) {
              long sj = 2 * j + dj - 1;
              if (sj < 0 || sj >= w_in) continue;
              dw.at(o, c, di, dj) += g * x.at(c, si, sj);
              dx.at(c, si, sj) += g * w.at(o, c, di, dj);
            }
          }
      }
  return dx;
}

Tensor embedding_forward(const std::vector<int>& ids, const Tensor& table) {
  const long d = table.dim(1);
  Tensor y({static_cast<long>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (id < 0 || id >= table.dim(0))
      throw DataError("embedding: token id " + std::to_string(id) + " out of range");
    const double* row = table.row(id);
    for (long j = 0; j < d; ++j) y.at(static_cast<long>(i), j) = row[j];
  }
  return y;
}

void embedding_backward(const Tensor& dy, const std::vector<int>& ids, Tensor& dtable) {
  const long d = dtable.dim(1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double* row = dtable.row(ids[i]);
    for (long j = 0; j < d; ++j) row[j] += dy.at(static_cast<long>(i), j);
  }
}

Tensor sinusoidal_positions(long n, long d) {
  Tensor pe({n, d});
  for (long pos = 0; pos < n; ++pos)
    for (long i = 0; i < d; i += 2) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < d) pe.at(pos, i + 1) = std::cos(angle);
    }
  return pe;
}

Tensor log_softmax_rows(const Tensor& z) {
  Tensor y = z;
  for (long i = 0; i < z.dim(0); ++i) {
    double* row = y.row(i);
    double m = row[0];
    for (long j = 1; j < z.dim(1); ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (long j = 0; j < z.dim(1); ++j) sum += std::exp(row[j] - m);
    double log_z = m + std::log(sum);
    for (long j = 0; j < z.dim(1); ++j) row[j] -= log_z;
  }
  return y;
}

Tensor log_softmax_backward(const Tensor& dy, const Tensor& log_probs) {
  Tensor dz = dy;
  for (long i = 0; i < dy.dim(0); ++i) {
    double sum = 0.0;
    for (long j = 0; j < dy.dim(1); ++j) sum += dy.at(i, j);
    for (long j = 0; j < dy.dim(1); ++j)
      dz.at(i, j) -= std::exp(log_probs.at(i, j)) * sum;
  }
  return dz;
}

}  // namespace tinyst::nn
