/*
 * Copyright 2026 The distilrank Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "distilrank/infer.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "distilrank/errors.hpp"
#include "distilrank/fastmath.hpp"
#include "distilrank/gemm.hpp"
#include "distilrank/parallel.hpp"

namespace distilrank {

const char* precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

namespace {

template <class T>
struct LayerWeights {
  std::vector<T> wq, bq, wk, bk, wv, bv, wo, bo;
  std::vector<T> attn_gain, attn_bias;
  std::vector<T> w1, b1, w2, b2;
  std::vector<T> ff_gain, ff_bias;
};

template <class T>
void gemm_over(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  if constexpr (std::is_same_v<T, float>) gemm_f32(a, b, c, m, k, n, false);
  else gemm_f64(a, b, c, m, k, n, false);
}

template <class T>
void gemm_nt_over(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  if constexpr (std::is_same_v<T, float>) gemm_nt_f32(a, b, c, m, k, n, false);
  else gemm_nt_f64(a, b, c, m, k, n, false);
}

template <class T>
std::vector<T> convert(std::span<const double> src) {
  std::vector<T> out(src.size());
  for (size_t i = 0; i < src.size(); ++i) out[i] = static_cast<T>(src[i]);
  return out;
}

template <class T>
void layer_norm_rows_flat(T* x, const T* gain, const T* bias, int64_t rows, int64_t width) {
  parallel_for(rows, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      T* row = x + i * width;
      T mean = 0;
      for (int64_t j = 0; j < width; ++j) mean += row[j];
      mean /= static_cast<T>(width);
      T var = 0;
      for (int64_t j = 0; j < width; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= static_cast<T>(width);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(1e-12));
      for (int64_t j = 0; j < width; ++j) row[j] = gain[j] * ((row[j] - mean) * inv) + bias[j];
    }
  });
}

template <class T>
void add_bias_rows(T* x, const T* bias, int64_t rows, int64_t width) {
  parallel_for(rows, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      T* row = x + i * width;
      for (int64_t j = 0; j < width; ++j) row[j] += bias[j];
    }
  });
}

template <class T>
void gelu_inplace(T* x, int64_t n) {
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) x[i] = gelu_value(x[i]);
  });
}

template <class T>
void add_inplace(T* dst, const T* src, int64_t n) {
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) dst[i] += src[i];
  });
}

template <class T>
class Engine {
 public:
  Engine(const Checkpoint& model, Precision precision)
      : config_(model.config), precision_(precision) {
    if (!model.has_rank_head())
      throw StateError("inference engine: model has no ranking head");
    auto grab = [&](std::string_view name) { return convert<T>(model.param(name).data()); };
    tok_ = grab("embeddings.token");
    seg_ = grab("embeddings.segment");
    pos_ = grab("embeddings.position");
    emb_gain_ = grab("embeddings.ln.gain");
    emb_bias_ = grab("embeddings.ln.bias");
    layers_.resize(static_cast<size_t>(config_.num_layers));
    for (int64_t l = 0; l < config_.num_layers; ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      auto& lw = layers_[static_cast<size_t>(l)];
      lw.wq = grab(p + "attn.wq");
      lw.bq = grab(p + "attn.bq");
      lw.wk = grab(p + "attn.wk");
      lw.bk = grab(p + "attn.bk");
      lw.wv = grab(p + "attn.wv");
      lw.bv = grab(p + "attn.bv");
      lw.wo = grab(p + "attn.wo");
      lw.bo = grab(p + "attn.bo");
      lw.attn_gain = grab(p + "attn.ln.gain");
      lw.attn_bias = grab(p + "attn.ln.bias");
      lw.w1 = grab(p + "ff.w1");
      lw.b1 = grab(p + "ff.b1");
      lw.w2 = grab(p + "ff.w2");
      lw.b2 = grab(p + "ff.b2");
      lw.ff_gain = grab(p + "ff.ln.gain");
      lw.ff_bias = grab(p + "ff.ln.bias");
    }
    rank_w_ = grab("rank.w");
    rank_b_ = grab("rank.b");
  }

  void rank_scores(const BatchInput& in, std::span<double> out) const {
    const int64_t B = in.batch, S = in.seq;
    const int64_t hd = config_.hidden_dim, H = config_.num_heads, dh = hd / H,
                  F = config_.ff_dim;
    if (static_cast<int64_t>(out.size()) != B) throw ShapeError("rank_scores: output span size");
    const int64_t rows = B * S;

    scratch_.resize(6);
    auto grab = [&](size_t which, int64_t count) -> std::vector<T>& {
      auto& buf = scratch_[which];
      if (static_cast<int64_t>(buf.size()) < count) buf.resize(static_cast<size_t>(count));
      return buf;
    };
    std::vector<T>& x = grab(0, rows * hd);
    for (int64_t r = 0; r < rows; ++r) {
      const int64_t tok = in.tokens[static_cast<size_t>(r)];
      const int64_t seg = in.segments[static_cast<size_t>(r)];
      const int64_t p = r % S;
      if (tok < 0 || tok >= config_.vocab_size)
        throw VocabError("inference: token id out of range");
      if (seg < 0 || seg >= config_.num_segments)
        throw VocabError("inference: segment id out of range");
      T* row = x.data() + r * hd;
      const T* te = tok_.data() + tok * hd;
      const T* se = seg_.data() + seg * hd;
      const T* pe = pos_.data() + p * hd;
      for (int64_t j = 0; j < hd; ++j) row[j] = te[j] + se[j] + pe[j];
    }
    layer_norm_rows_flat(x.data(), emb_gain_.data(), emb_bias_.data(), rows, hd);

    std::vector<T>& q = grab(1, rows * hd);
    std::vector<T>& k = grab(2, rows * hd);
    std::vector<T>& v = grab(3, rows * hd);
    std::vector<T> ctx_tmp;  // ctx and tmp share lifetime within a layer
    std::vector<T>& ctx = grab(4, rows * hd + rows * hd);
    T* tmp = ctx.data() + rows * hd;
    std::vector<T>& ff = grab(5, rows * F);
    const T scaling = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    for (const auto& lw : layers_) {
      gemm_over(x.data(), lw.wq.data(), q.data(), rows, hd, hd);
      gemm_over(x.data(), lw.wk.data(), k.data(), rows, hd, hd);
      gemm_over(x.data(), lw.wv.data(), v.data(), rows, hd, hd);
      add_bias_rows(q.data(), lw.bq.data(), rows, hd);
      add_bias_rows(k.data(), lw.bk.data(), rows, hd);
      add_bias_rows(v.data(), lw.bv.data(), rows, hd);

      // Attention blocks run in parallel; every block owns its scratch.
      parallel_for(B * H, [&](int64_t lo, int64_t hi) {
        std::vector<T> qb(static_cast<size_t>(S * dh)), kb(qb.size()), vb(qb.size()),
            ob(qb.size());
        std::vector<T> scores(static_cast<size_t>(S * S));
        for (int64_t blk = lo; blk < hi; ++blk) {
          const int64_t b = blk / H, h = blk % H;
          for (int64_t s = 0; s < S; ++s) {
            std::memcpy(qb.data() + s * dh, q.data() + (b * S + s) * hd + h * dh,
                        sizeof(T) * static_cast<size_t>(dh));
            std::memcpy(kb.data() + s * dh, k.data() + (b * S + s) * hd + h * dh,
                        sizeof(T) * static_cast<size_t>(dh));
            std::memcpy(vb.data() + s * dh, v.data() + (b * S + s) * hd + h * dh,
                        sizeof(T) * static_cast<size_t>(dh));
          }
          gemm_nt_over(qb.data(), kb.data(), scores.data(), S, dh, S);
          const uint8_t* keep = in.mask.data() + b * S;
          for (int64_t i = 0; i < S; ++i) {
            T* srow = scores.data() + i * S;
            T mx = -std::numeric_limits<T>::infinity();
            for (int64_t j = 0; j < S; ++j) {
              srow[j] *= scaling;
              if (keep[j] && srow[j] > mx) mx = srow[j];
            }
            T denom = 0;
            for (int64_t j = 0; j < S; ++j) {
              srow[j] = keep[j] ? fast_exp(srow[j] - mx) : T(0);
              denom += srow[j];
            }
            const T inv = T(1) / denom;
            for (int64_t j = 0; j < S; ++j) srow[j] *= inv;
          }
          gemm_over(scores.data(), vb.data(), ob.data(), S, S, dh);
          for (int64_t s = 0; s < S; ++s)
            std::memcpy(ctx.data() + (b * S + s) * hd + h * dh, ob.data() + s * dh,
                        sizeof(T) * static_cast<size_t>(dh));
        }
      });

      gemm_over(ctx.data(), lw.wo.data(), tmp, rows, hd, hd);
      add_bias_rows(tmp, lw.bo.data(), rows, hd);
      add_inplace(x.data(), tmp, rows * hd);
      layer_norm_rows_flat(x.data(), lw.attn_gain.data(), lw.attn_bias.data(), rows, hd);

      gemm_over(x.data(), lw.w1.data(), ff.data(), rows, hd, F);
      add_bias_rows(ff.data(), lw.b1.data(), rows, F);
      gelu_inplace(ff.data(), rows * F);
      gemm_over(ff.data(), lw.w2.data(), tmp, rows, F, hd);
      add_bias_rows(tmp, lw.b2.data(), rows, hd);
      add_inplace(x.data(), tmp, rows * hd);
      layer_norm_rows_flat(x.data(), lw.ff_gain.data(), lw.ff_bias.data(), rows, hd);
    }

    for (int64_t b = 0; b < B; ++b) {
      const T* cls = x.data() + b * S * hd;
      T s = 0;
      for (int64_t j = 0; j < hd; ++j) s += cls[j] * rank_w_[static_cast<size_t>(j)];
      out[static_cast<size_t>(b)] = static_cast<double>(s + rank_b_[0]);
    }
  }

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  Precision precision_;
  std::vector<T> tok_, seg_, pos_, emb_gain_, emb_bias_;
  std::vector<LayerWeights<T>> layers_;
  std::vector<T> rank_w_, rank_b_;
  mutable std::vector<std::vector<T>> scratch_;
};

}  // namespace

struct InferenceEngine::Impl {
  Precision precision;
  std::unique_ptr<Engine<float>> f32;
  std::unique_ptr<Engine<double>> f64;
};

InferenceEngine::InferenceEngine(const Checkpoint& model, Precision precision)
    : impl_(std::make_unique<Impl>()) {
  impl_->precision = precision;
  if (precision == Precision::F32)
    impl_->f32 = std::make_unique<Engine<float>>(model, precision);
  else
    impl_->f64 = std::make_unique<Engine<double>>(model, precision);
}

InferenceEngine::~InferenceEngine() = default;
InferenceEngine::InferenceEngine(InferenceEngine&&) noexcept = default;
InferenceEngine& InferenceEngine::operator=(InferenceEngine&&) noexcept = default;

void InferenceEngine::rank_scores(const BatchInput& batch, std::span<double> out) const {
  if (impl_->f32) impl_->f32->rank_scores(batch, out);
  else impl_->f64->rank_scores(batch, out);
}

double InferenceEngine::score_pair(const PairInput& in) const {
  BatchInput b;
  b.add(in);
  double out = 0;
  rank_scores(b, std::span<double>(&out, 1));
  return out;
}

Precision InferenceEngine::precision() const { return impl_->precision; }

const EncoderConfig& InferenceEngine::config() const {
  return impl_->f32 ? impl_->f32->config() : impl_->f64->config();
}

}  // namespace distilrank
