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

#ifndef DISTILRANK_DISTILL_HPP
#define DISTILRANK_DISTILL_HPP

#include <optional>
#include <string>
#include <vector>

#include "distilrank/encoder.hpp"
#include "distilrank/io.hpp"
#include "distilrank/text.hpp"
#include "distilrank/train.hpp"

namespace distilrank {
namespace distill {

struct LossWeights {
  double attention = 1.0;
  double hidden = 1.0;
  double output = 1.0;
};

// Student layer m (1-based) imitates teacher layer teacher_layer[m-1].
struct LayerMap {
  std::vector<int64_t> teacher_layer;

  int64_t student_layers() const { return static_cast<int64_t>(teacher_layer.size()); }
  void validate(int64_t student_layers, int64_t teacher_layers) const;
};

// m -> m*N/M; requires N divisible by M (give an explicit map otherwise).
LayerMap uniform_layer_map(int64_t student_layers, int64_t teacher_layers);

// Mean over mapped layers, heads, and unmasked rows of the MSE between
// student and teacher attention distributions. Head counts must match.
Tensor attention_distill_loss(const BatchTrace& student, const BatchTrace& teacher,
                              const LayerMap& map, const BatchInput& inputs, int64_t num_heads);

// Mean MSE between (projected) student hidden states and teacher hidden
// states over the embedding layer plus mapped layers, unmasked positions
// only. `projection` ([student_dim, teacher_dim]) is mandatory when the
// dims differ and must be absent when they match.
Tensor hidden_distill_loss(const BatchTrace& student, const BatchTrace& teacher,
                           const LayerMap& map, const BatchInput& inputs,
                           const std::optional<Tensor>& projection);

// KL(softmax(teacher/T) || softmax(student/T)) * T^2, averaged over rows.
// Single-logit inputs ([n,1]) use the two-class form over {relevant, not}.
Tensor output_distill_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                           double temperature);

struct DistillLogRow {
  std::string stage;
  int64_t examples_seen = 0;
  double attn_loss = 0.0;
  double hidden_loss = 0.0;
  double output_loss = 0.0;
  double total_loss = 0.0;
  double wall_clock_seconds = 0.0;
};

// CSV: stage,examples_seen,attn_loss,hidden_loss,output_loss,total_loss,
// wall_clock_seconds.
struct DistillLog {
  std::vector<DistillLogRow> rows;
  void write_csv(const std::string& path) const;
  void append_csv(const std::string& path) const;  // without rewriting other stages
};

struct DistillOptions {
  LossWeights weights;
  double temperature = 1.0;
  std::optional<LayerMap> layer_map;  // uniform when absent
  bool match_mlm_output = false;      // LM Distill: also match MLM predictions
};

// Stage 1: distill a pretrained LM into a fresh student (attention + hidden
// matching, optionally MLM output matching). The teacher is frozen
// throughout; the student starts from a seeded random initialization.
Checkpoint lm_distill(const Checkpoint& teacher, const EncoderConfig& student_config,
                      const std::vector<DocRecord>& corpus, const Vocabulary& vocab,
                      const train::TrainSchedule& schedule, const DistillOptions& options,
                      DistillLog* log = nullptr, const train::CheckpointSink& sink = {});

// Stage 2: distill a fine-tuned teacher ranker's behavior into the student.
// Supervision is purely the teacher's attention/hidden/output signals over
// the two passages of each triple; relevance labels are never read.
Checkpoint ranker_distill(const Checkpoint& teacher_ranker, const Checkpoint& student,
                          const std::vector<TrainTriple>& triples, const Vocabulary& vocab,
                          const train::TrainSchedule& schedule, const DistillOptions& options,
                          DistillLog* log = nullptr, const train::CheckpointSink& sink = {});

enum class Pipeline { RankerDistill, LMDistillFineTune, LMDistillRankerDistill };

const char* pipeline_name(Pipeline p);
Pipeline pipeline_from_name(const std::string& name);  // throws ParamError

struct DistillRecipe {
  Pipeline pipeline = Pipeline::LMDistillRankerDistill;
  EncoderConfig student_config;
  DistillOptions options;
  train::TrainSchedule lm_schedule;    // stage 1 (unused by RankerDistill)
  train::TrainSchedule rank_schedule;  // stage 2 / fine-tuning
};

struct PipelineData {
  const std::vector<DocRecord>* corpus = nullptr;
  const std::vector<TrainTriple>* triples = nullptr;
  const Vocabulary* vocab = nullptr;
};

struct PipelineResult {
  Checkpoint final_model;
  std::vector<std::pair<std::string, std::string>> stage_files;  // (stage, checkpoint path)
};

// Executes a recipe's stages in order. When out_prefix is non-empty, each
// stage writes `<prefix>.<stage>.ckpt`, mark checkpoints
// `<prefix>.<stage>.at<mark>.ckpt`, and a shared `<prefix>.log.csv`.
PipelineResult run_pipeline(const DistillRecipe& recipe, const Checkpoint* teacher_lm,
                            const Checkpoint* teacher_ranker, const PipelineData& data,
                            const std::string& out_prefix);

}  // namespace distill
}  // namespace distilrank

#endif  // DISTILRANK_DISTILL_HPP
