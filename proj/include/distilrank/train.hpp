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

#ifndef DISTILRANK_TRAIN_HPP
#define DISTILRANK_TRAIN_HPP

#include <functional>
#include <string>
#include <vector>

#include "distilrank/encoder.hpp"
#include "distilrank/io.hpp"
#include "distilrank/text.hpp"

namespace distilrank {
namespace train {

struct TrainSchedule {
  double lr = 3e-4;  // desk-scale default; the full-scale setting is 2e-5
  double weight_decay = 0.01;
  int64_t batch_size = 32;
  int64_t max_examples = 20000;
  std::vector<int64_t> checkpoint_marks;  // strictly increasing, <= max_examples
  uint64_t seed = 7;

  void validate() const;  // throws ParamError
};

struct TrainLogRow {
  int64_t examples_seen = 0;
  double loss = 0.0;
  double wall_clock_seconds = 0.0;
};

// CSV: examples_seen,loss,wall_clock_seconds (one row per optimizer step).
struct TrainLog {
  std::vector<TrainLogRow> rows;
  int64_t skipped_short = 0;  // sequences below 2 tokens after truncation

  void write_csv(const std::string& path) const;
};

// Invoked with a deep-copied checkpoint whenever a checkpoint mark is
// crossed (between optimizer steps, examples_seen set to the mark).
using CheckpointSink = std::function<void(int64_t mark, const Checkpoint&)>;

// Masked-language-model pretraining from random initialization. Masking: 15%
// of real token positions, of which 80% become [MASK], 10% a random token,
// 10% stay; loss is cross-entropy on the masked positions. Adam with weight
// decay folded in. Deterministic for a fixed schedule seed.
Checkpoint pretrain_mlm(const EncoderConfig& config, const std::vector<DocRecord>& corpus,
                        const Vocabulary& vocab, const TrainSchedule& schedule,
                        TrainLog* log = nullptr, const CheckpointSink& sink = {});

// Pointwise sigmoid cross-entropy fine-tuning of the ranking head (AdamW):
// each triple contributes a positive and a negative (query, passage)
// example. The input must be a pretrained or lm-distilled checkpoint.
Checkpoint finetune_ranker(const Checkpoint& model, const std::vector<TrainTriple>& triples,
                           const Vocabulary& vocab, const TrainSchedule& schedule,
                           TrainLog* log = nullptr, const CheckpointSink& sink = {});

// Shared helper: appends `stage` to a lineage string.
std::string extend_lineage(const std::string& lineage, const std::string& stage);

}  // namespace train
}  // namespace distilrank

#endif  // DISTILRANK_TRAIN_HPP
