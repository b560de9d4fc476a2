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

#include "distilrank/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "distilrank/errors.hpp"
#include "distilrank/optim.hpp"
#include "distilrank/rng.hpp"

namespace distilrank {
namespace train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Emits checkpoints for every mark crossed by this step boundary.
void emit_marks(const Checkpoint& model, const std::vector<int64_t>& marks, size_t& next_mark,
                int64_t examples_seen, const CheckpointSink& sink) {
  while (next_mark < marks.size() && marks[next_mark] <= examples_seen) {
    if (sink) {
      Checkpoint snap = model.clone();
      snap.meta.examples_seen = marks[next_mark];
      sink(marks[next_mark], snap);
    }
    ++next_mark;
  }
}

}  // namespace

void TrainSchedule::validate() const {
  if (lr <= 0) throw ParamError("schedule: lr must be positive");
  if (weight_decay < 0) throw ParamError("schedule: weight_decay must be >= 0");
  if (batch_size < 1) throw ParamError("schedule: batch_size must be >= 1");
  if (max_examples < 0) throw ParamError("schedule: max_examples must be >= 0");
  for (size_t i = 0; i < checkpoint_marks.size(); ++i) {
    if (checkpoint_marks[i] <= 0 || checkpoint_marks[i] > max_examples)
      throw ParamError("schedule: checkpoint marks must lie in (0, max_examples]");
    if (i > 0 && checkpoint_marks[i] <= checkpoint_marks[i - 1])
      throw ParamError("schedule: checkpoint marks must be strictly increasing");
  }
}

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training log: " + path);
  out << "examples_seen,loss,wall_clock_seconds\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.8f,%.6f", static_cast<long long>(r.examples_seen),
                  r.loss, r.wall_clock_seconds);
    out << buf << "\n";
  }
  if (!out) throw IoError("failed writing training log: " + path);
}

std::string extend_lineage(const std::string& lineage, const std::string& stage) {
  return lineage.empty() ? stage : lineage + ">" + stage;
}

Checkpoint pretrain_mlm(const EncoderConfig& config, const std::vector<DocRecord>& corpus,
                        const Vocabulary& vocab, const TrainSchedule& schedule, TrainLog* log,
                        const CheckpointSink& sink) {
  schedule.validate();
  if (corpus.empty()) throw ParamError("pretrain_mlm: corpus is empty");
  config.validate();
  if (config.vocab_size < vocab.size())
    throw ParamError("pretrain_mlm: encoder vocab_size smaller than the vocabulary");

  Checkpoint model = Checkpoint::init(config, schedule.seed);
  model.meta.stage = "pretrained";
  model.meta.lineage = extend_lineage(model.meta.lineage, "pretrained");
  model.set_requires_grad(true);
  Optimizer opt({OptimizerKind::Adam, schedule.lr, schedule.weight_decay}, model.trainable());

  // Pre-tokenize once; sequences shorter than 2 tokens are skipped.
  std::vector<std::vector<int64_t>> docs;
  int64_t skipped = 0;
  for (const auto& d : corpus) {
    auto ids = tokenize(d.text, vocab, config.max_seq_len - 2);
    if (static_cast<int64_t>(ids.size()) < 2) {
      ++skipped;
      continue;
    }
    docs.push_back(std::move(ids));
  }
  if (log) log->skipped_short = skipped;
  if (docs.empty()) throw ParamError("pretrain_mlm: every sequence was below 2 tokens");

  Rng rng(schedule.seed);
  const auto t0 = Clock::now();
  int64_t seen = 0;
  size_t next_mark = 0;
  uint64_t epoch = 0;
  std::vector<size_t> order(docs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();  // forces an initial shuffle

  while (seen < schedule.max_examples) {
    BatchInput batch;
    std::vector<int64_t> positions;  // flat rows into [batch*seq]
    std::vector<int64_t> labels;
    const int64_t want = std::min<int64_t>(schedule.batch_size, schedule.max_examples - seen);
    for (int64_t b = 0; b < want; ++b) {
      if (cursor == order.size()) {
        Rng erng = rng.fork(++epoch);
        erng.shuffle(order);
        cursor = 0;
      }
      const auto& ids = docs[order[cursor++]];
      PairInput packed = build_single_input(ids, config.max_seq_len);
      const int64_t len = static_cast<int64_t>(ids.size());
      const int64_t n_mask = std::max<int64_t>(
          1, static_cast<int64_t>(std::llround(0.15 * static_cast<double>(len))));
      // Real tokens sit at positions 1..len ([CLS] at 0).
      std::vector<int64_t> cand(static_cast<size_t>(len));
      for (int64_t i = 0; i < len; ++i) cand[static_cast<size_t>(i)] = 1 + i;
      rng.shuffle(cand);
      const int64_t row0 = batch.batch * config.max_seq_len;
      for (int64_t i = 0; i < n_mask; ++i) {
        const int64_t pos = cand[static_cast<size_t>(i)];
        labels.push_back(packed.tokens[static_cast<size_t>(pos)]);
        positions.push_back(row0 + pos);
        const double roll = rng.next_double();
        if (roll < 0.8)
          packed.tokens[static_cast<size_t>(pos)] = Vocabulary::kMask;
        else if (roll < 0.9)
          packed.tokens[static_cast<size_t>(pos)] =
              Vocabulary::kNumReserved +
              static_cast<int64_t>(
                  rng.next_below(static_cast<uint64_t>(vocab.size() - Vocabulary::kNumReserved)));
        // else: keep the original token
      }
      batch.add(packed);
    }

    BatchTrace trace = encode_batch(model, batch);
    Tensor loss = cross_entropy_logits(mlm_logits(model, trace, positions), labels);
    opt.zero_grad();
    loss.backward();
    opt.step();
    seen += batch.batch;
    if (log) log->rows.push_back({seen, loss.item(), seconds_since(t0)});

    emit_marks(model, schedule.checkpoint_marks, next_mark, seen, sink);
  }

  model.set_requires_grad(false);
  model.meta.examples_seen = seen;
  model.meta.seed = schedule.seed;
  return model;
}

Checkpoint finetune_ranker(const Checkpoint& input, const std::vector<TrainTriple>& triples,
                           const Vocabulary& vocab, const TrainSchedule& schedule, TrainLog* log,
                           const CheckpointSink& sink) {
  schedule.validate();
  if (input.meta.stage != "pretrained" && input.meta.stage != "lm-distilled")
    throw StateError("finetune_ranker: expected a pretrained or lm-distilled model, got stage '" +
                     input.meta.stage + "'");

  Checkpoint model = input.clone();
  model.add_rank_head(schedule.seed);
  model.meta.stage = "finetuned";
  model.meta.lineage = extend_lineage(input.meta.lineage, "finetuned");
  model.set_requires_grad(true);
  Optimizer opt({OptimizerKind::AdamW, schedule.lr, schedule.weight_decay}, model.trainable());
  const EncoderConfig& config = model.config;

  // Each triple yields a positive and a negative pointwise example.
  struct Example {
    int32_t triple;
    uint8_t positive;
  };
  std::vector<Example> examples;
  examples.reserve(triples.size() * 2);
  for (size_t t = 0; t < triples.size(); ++t) {
    examples.push_back({static_cast<int32_t>(t), 1});
    examples.push_back({static_cast<int32_t>(t), 0});
  }
  if (examples.empty() && schedule.max_examples > 0)
    throw ParamError("finetune_ranker: no training triples");

  std::vector<std::vector<int64_t>> query_ids(triples.size()), pos_ids(triples.size()),
      neg_ids(triples.size());
  for (size_t t = 0; t < triples.size(); ++t) {
    query_ids[t] = tokenize(triples[t].query, vocab, config.max_seq_len);
    pos_ids[t] = tokenize(triples[t].positive, vocab, config.max_seq_len);
    neg_ids[t] = tokenize(triples[t].negative, vocab, config.max_seq_len);
  }

  Rng rng(schedule.seed);
  const auto t0 = Clock::now();
  int64_t seen = 0;
  size_t next_mark = 0;
  uint64_t epoch = 0;
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();

  while (seen < schedule.max_examples) {
    BatchInput batch;
    std::vector<double> labels;
    const int64_t want = std::min<int64_t>(schedule.batch_size, schedule.max_examples - seen);
    for (int64_t b = 0; b < want; ++b) {
      if (cursor == order.size()) {
        Rng erng = rng.fork(++epoch);
        erng.shuffle(order);
        cursor = 0;
      }
      const Example& ex = examples[order[cursor++]];
      const auto& passage = ex.positive ? pos_ids[static_cast<size_t>(ex.triple)]
                                        : neg_ids[static_cast<size_t>(ex.triple)];
      batch.add(
          build_pair_input(query_ids[static_cast<size_t>(ex.triple)], passage, config.max_seq_len));
      labels.push_back(ex.positive ? 1.0 : 0.0);
    }

    BatchTrace trace = encode_batch(model, batch);
    Tensor loss = bce_with_logits(rank_logits(model, trace), labels);
    opt.zero_grad();
    loss.backward();
    opt.step();
    seen += batch.batch;
    if (log) log->rows.push_back({seen, loss.item(), seconds_since(t0)});

    emit_marks(model, schedule.checkpoint_marks, next_mark, seen, sink);
  }

  model.set_requires_grad(false);
  model.meta.examples_seen = seen;
  return model;
}

}  // namespace train
}  // namespace distilrank
