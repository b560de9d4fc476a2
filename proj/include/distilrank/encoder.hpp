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

#ifndef DISTILRANK_ENCODER_HPP
#define DISTILRANK_ENCODER_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "distilrank/tensor.hpp"

namespace distilrank {

struct EncoderConfig {
  int64_t num_layers = 4;
  int64_t hidden_dim = 128;
  int64_t num_heads = 4;
  int64_t ff_dim = 512;  // conventionally 4 * hidden_dim
  int64_t vocab_size = 8192;
  int64_t max_seq_len = 128;
  int64_t num_segments = 2;

  void validate() const;  // throws ParamError
  bool operator==(const EncoderConfig&) const = default;
};

// Stage tags: initialized, pretrained, lm-distilled, finetuned, ranker-distilled.
struct TrainingMeta {
  int64_t examples_seen = 0;
  std::string stage = "initialized";
  std::string lineage = "initialized";  // '>'-joined stage history
  uint64_t seed = 0;
};

// An encoder's named parameters plus bookkeeping. Parameters are kept in
// manifest order so that serialization and iteration are deterministic.
// Every checkpoint carries the MLM head (its decoder is tied to the token
// embedding); the ranking head exists only once a ranking stage added it.
class Checkpoint {
 public:
  Checkpoint() = default;

  static Checkpoint init(const EncoderConfig& config, uint64_t seed);
  static std::vector<std::string> manifest(const EncoderConfig& config, bool with_rank_head);

  EncoderConfig config;
  TrainingMeta meta;

  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  Tensor& param(std::string_view name);
  const Tensor& param(std::string_view name) const;
  bool has_param(std::string_view name) const;
  bool has_rank_head() const { return has_param("rank.w"); }
  void add_rank_head(uint64_t seed);

  Checkpoint clone() const;               // deep copy of parameter data
  void set_requires_grad(bool v);
  std::vector<Tensor> trainable() const;  // all parameters, manifest order

  // Internal: used by init and the loader.
  void push_param(std::string name, Tensor t);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
};

// Checkpoint file format: a magic line carrying the byte length of a
// key-value header (config, training meta, parameter manifest), followed by
// the raw little-endian float64 parameter buffers in manifest order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

// One packed input sequence: [CLS] query [SEP] passage [SEP] padding.
struct PairInput {
  std::vector<int64_t> tokens;
  std::vector<int64_t> segments;
  std::vector<uint8_t> mask;  // 1 = real token, 0 = padding
};

// A fixed-width batch of packed sequences (row-major [batch, seq]).
struct BatchInput {
  int64_t batch = 0;
  int64_t seq = 0;
  std::vector<int64_t> tokens, segments;
  std::vector<uint8_t> mask;

  void add(const PairInput& p);  // all items must share one length
};

// Forward-pass observables. Tensors participate in the autograd graph when
// the model's parameters require gradients, which is what the distillation
// losses train against.
struct BatchTrace {
  int64_t batch = 0;
  int64_t seq = 0;
  std::vector<Tensor> hidden;  // num_layers+1 tensors of [batch*seq, hidden]
  std::vector<Tensor> attn;    // per layer, [batch*heads*seq, seq] attention rows
  Tensor cls;                  // [batch, hidden]
};

// Single-sequence view of a forward pass.
struct EncodeTrace {
  std::vector<Tensor> hidden_states;            // num_layers+1 of [seq, hidden]
  std::vector<std::vector<Tensor>> attentions;  // [layer][head] of [seq, seq]
  Tensor cls_vector;                            // [1, hidden]
};

BatchTrace encode_batch(const Checkpoint& model, const BatchInput& in);
EncodeTrace encode(const Checkpoint& model, const PairInput& in);

// Relevance logits ([batch, 1]) from a trace; requires the ranking head.
Tensor rank_logits(const Checkpoint& model, const BatchTrace& trace);
double rank_score(const Checkpoint& model, const PairInput& in);

// Vocabulary logits for the given flat row positions (b*seq + s) of a
// trace's final hidden state; one row per masked position.
Tensor mlm_logits(const Checkpoint& model, const BatchTrace& trace,
                  const std::vector<int64_t>& positions);

// Number of parameters the architecture declares (used to cross-check the
// enumerated manifest).
int64_t parameter_count(const Checkpoint& ckpt);

}  // namespace distilrank

#endif  // DISTILRANK_ENCODER_HPP
