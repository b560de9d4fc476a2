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

#ifndef DISTILRANK_BENCH_HPP
#define DISTILRANK_BENCH_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "distilrank/infer.hpp"
#include "distilrank/io.hpp"
#include "distilrank/metrics.hpp"
#include "distilrank/rerank.hpp"

namespace distilrank {
namespace bench {

// One query's pre-tokenized candidate sequences (tokenization is excluded
// from the timed region by construction).
struct QueryCandidates {
  std::vector<PairInput> candidates;
  std::vector<std::string> doc_ids;  // parallel to candidates
};

struct LatencyProtocol {
  std::vector<int64_t> batch_sizes = {64, 128, 256, 512};
  int64_t warmup_queries = 3;
  int64_t timed_queries = 20;
  Precision precision = Precision::F64;
  int threads = 1;  // timed region is single-threaded unless opted in
};

struct BatchMeasurement {
  int64_t batch_size = 0;
  double sec_per_query = 0.0;
};

struct LatencyReport {
  std::string model_id;
  int64_t depth = 0;
  int64_t seq_len = 0;
  std::string precision;
  int threads = 1;
  int64_t warmup_queries = 0;
  int64_t timed_queries = 0;
  std::string hardware;
  std::vector<BatchMeasurement> per_batch;
  int64_t best_batch_size = 0;
  double best_latency = 0.0;
  std::string baseline_id;  // empty until a baseline is applied
  double speedup = 0.0;
};

std::string hardware_descriptor();

// Times score+sort of `depth` candidates per query at every batch size.
// Queries cycle when fewer are supplied than warmup+timed.
LatencyReport measure_latency(const Checkpoint& model, const std::string& model_id,
                              const std::vector<QueryCandidates>& queries, int64_t depth,
                              const LatencyProtocol& protocol);

void apply_baseline(LatencyReport& report, const LatencyReport& baseline);

// CSV: model,depth,batch_size,sec_per_query rows, one best-row and one
// speedup-row per model, protocol echoed as comments.
void write_latency_csv(const std::vector<LatencyReport>& reports, const std::string& path);

// ---------------------------------------------------------------------------
// convergence tracking

struct ConvergencePoint {
  int64_t examples_seen = 0;
  double mrr_at_10 = 0.0;
  double wall_clock_seconds = 0.0;
  bool missing = false;  // checkpoint absent at this mark
};

struct ConvergenceCurve {
  std::string model_id;
  std::vector<ConvergencePoint> points;
};

struct ConvergenceInputs {
  std::string model_id;
  // Checkpoint per mark: `<prefix>.at<mark>.ckpt`.
  std::string ckpt_prefix;
  std::vector<int64_t> marks;
  // Stage log used to look up cumulative wall-clock at each mark (the last
  // row at or below the mark); `base_seconds` is added for earlier stages.
  std::string stage_log_csv;
  double base_seconds = 0.0;
  const RankedRun* first_stage = nullptr;
  const Qrels* qrels = nullptr;
  RerankContext rerank;
  int64_t depth = 100;
  Precision precision = Precision::F32;
};

// Missing checkpoints are recorded as gaps, never fatal.
ConvergenceCurve convergence_track(const ConvergenceInputs& inputs);

// CSV: examples_seen,mrr_at_10,wall_clock_training_seconds.
void write_convergence_csv(const ConvergenceCurve& curve, const std::string& path);
ConvergenceCurve load_convergence_csv(const std::string& model_id, const std::string& path);

// ---------------------------------------------------------------------------
// training-cost comparison

struct CostEntry {
  std::string pipeline;
  bool reached = false;
  int64_t first_mark = 0;
  double seconds_to_reach = 0.0;
  double sec_per_example = 0.0;  // final wall-clock / final examples
};

struct TrainingCostReport {
  double teacher_reference = 0.0;
  double tau = 0.05;  // relative closeness threshold
  std::vector<CostEntry> entries;
};

// First mark whose MRR@10 is within tau (relative) of the teacher reference;
// "not reached" is allowed and reported.
TrainingCostReport training_cost_report(const std::vector<ConvergenceCurve>& curves,
                                        double teacher_reference_mrr, double tau = 0.05);

void write_training_cost_csv(const TrainingCostReport& report, const std::string& path);

// Wall-clock seconds per example from a stage log (training or distill CSV).
double seconds_per_example_from_log(const std::string& csv_path);

}  // namespace bench
}  // namespace distilrank

#endif  // DISTILRANK_BENCH_HPP
