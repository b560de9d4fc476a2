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

/* C ABI of the distilrank core. Handles are opaque; every function returns a
 * dr_status, with a human-readable message available from dr_last_error()
 * (thread-local, valid until the next failing call on the same thread). */

#ifndef DISTILRANK_H
#define DISTILRANK_H

#include <stddef.h>
#include <stdint.h>

#if defined(__cplusplus)
extern "C" {
#endif

typedef enum dr_status {
  DR_OK = 0,
  DR_ERR_IO = 1,
  DR_ERR_FORMAT = 2,
  DR_ERR_PARAM = 3,
  DR_ERR_SHAPE = 4,
  DR_ERR_VOCAB = 5,
  DR_ERR_STATE = 6,
  DR_ERR_USAGE = 7,
  DR_ERR_LOOKUP = 8,
  DR_ERR_INTERNAL = 9
} dr_status;

const char* dr_status_name(dr_status status);
const char* dr_last_error(void);
const char* dr_version(void);

/* Worker threads used by the numeric kernels (results are identical for any
 * setting). 0 selects the hardware concurrency. */
void dr_set_threads(int threads);

/* ---------------------------------------------------------------- handles */

typedef struct dr_index dr_index;
typedef struct dr_model dr_model;
typedef struct dr_run dr_run;
typedef struct dr_qrels dr_qrels;

dr_status dr_index_open(const char* path, dr_index** out);
void dr_index_free(dr_index* index);
dr_status dr_model_open(const char* path, dr_model** out);
void dr_model_free(dr_model* model);
/* Writes the model's config and training metadata as `key = value` lines. */
dr_status dr_model_meta(const dr_model* model, char* buffer, size_t buffer_len);
dr_status dr_run_open(const char* path, dr_run** out);
void dr_run_free(dr_run* run);
dr_status dr_qrels_open(const char* path, dr_qrels** out);
void dr_qrels_free(dr_qrels* qrels);

/* ------------------------------------------------------------ data prep */

typedef struct dr_synth_params {
  uint64_t seed;
  int64_t num_docs;
  int64_t num_queries;
  int64_t num_heldout;
  int64_t vocab_words;
  int64_t triples_per_query;
  const char* collection_out;
  const char* train_queries_out;
  const char* heldout_queries_out;
  const char* qrels_out;
  const char* triples_out;
} dr_synth_params;

dr_status dr_synth(const dr_synth_params* params);

dr_status dr_vocab_build(const char* collection_tsv, int64_t max_size, const char* vocab_out);

/* --------------------------------------------------------------- retrieval */

dr_status dr_index_build(const char* collection_tsv, const char* index_out);
dr_status dr_retrieve(const dr_index* index, const char* queries_tsv, int64_t k, double k1,
                      double b, const char* run_tag, const char* run_out);

/* ---------------------------------------------------------------- training */

typedef struct dr_encoder_shape {
  int64_t num_layers;
  int64_t hidden_dim;
  int64_t num_heads;
  int64_t ff_dim;
  int64_t vocab_size;
  int64_t max_seq_len;
} dr_encoder_shape;

typedef struct dr_schedule {
  double lr;
  double weight_decay;
  int64_t batch_size;
  int64_t max_examples;
  const int64_t* marks; /* optional checkpoint marks, strictly increasing */
  size_t num_marks;
  uint64_t seed;
} dr_schedule;

typedef struct dr_pretrain_params {
  dr_encoder_shape shape;
  dr_schedule schedule;
  const char* collection_tsv;
  const char* vocab_path;
  const char* ckpt_out;
  const char* log_out;     /* optional */
  const char* mark_prefix; /* optional: writes <prefix>.at<mark>.ckpt */
} dr_pretrain_params;

dr_status dr_pretrain(const dr_pretrain_params* params);

typedef struct dr_finetune_params {
  dr_schedule schedule;
  const char* model_in;
  const char* triples_tsv;
  const char* vocab_path;
  const char* ckpt_out;
  const char* log_out;
  const char* mark_prefix;
} dr_finetune_params;

dr_status dr_finetune(const dr_finetune_params* params);

/* -------------------------------------------------------------- distillation */

typedef struct dr_distill_options {
  double attention_weight;
  double hidden_weight;
  double output_weight;
  double temperature;
  int match_mlm_output;     /* LM distill: also match MLM predictions */
  const int64_t* layer_map; /* optional explicit map (1-based teacher layers) */
  size_t layer_map_len;
} dr_distill_options;

typedef struct dr_lm_distill_params {
  dr_encoder_shape student_shape;
  dr_schedule schedule;
  dr_distill_options options;
  const char* teacher_ckpt;
  const char* collection_tsv;
  const char* vocab_path;
  const char* ckpt_out;
  const char* log_out;
  const char* mark_prefix;
} dr_lm_distill_params;

dr_status dr_lm_distill(const dr_lm_distill_params* params);

typedef struct dr_ranker_distill_params {
  dr_schedule schedule;
  dr_distill_options options;
  const char* teacher_ckpt;
  const char* student_ckpt;      /* NULL: random init from student_shape */
  dr_encoder_shape student_shape; /* consulted only when student_ckpt is NULL */
  const char* triples_tsv;
  const char* vocab_path;
  const char* ckpt_out;
  const char* log_out;
  const char* mark_prefix;
} dr_ranker_distill_params;

dr_status dr_ranker_distill(const dr_ranker_distill_params* params);

typedef struct dr_pipeline_params {
  /* ranker-distill | lm-distill+finetune | lm-distill+ranker-distill */
  const char* recipe;
  dr_encoder_shape student_shape;
  dr_schedule lm_schedule;
  dr_schedule rank_schedule;
  dr_distill_options options;
  const char* teacher_lm_ckpt;     /* pipelines with an LM stage */
  const char* teacher_ranker_ckpt; /* pipelines with a ranker-distill stage */
  const char* collection_tsv;
  const char* triples_tsv;
  const char* vocab_path;
  const char* out_prefix; /* stage checkpoints and logs land here */
} dr_pipeline_params;

dr_status dr_pipeline(const dr_pipeline_params* params);

/* -------------------------------------------------------------- evaluation */

typedef struct dr_rerank_params {
  const char* queries_tsv;
  const char* collection_tsv;
  const char* vocab_path;
  int64_t depth;
  int use_f32;        /* 32-bit inference mode, flagged via the run tag */
  int64_t batch_size; /* scoring batch, default 64 when 0 */
  const char* run_tag;
  const char* run_out;
} dr_rerank_params;

dr_status dr_rerank(const dr_model* model, const dr_run* first_stage,
                    const dr_rerank_params* params);

/* Writes per-query and aggregate rows for mrr@10, mrr, ndcg@10, map@1000. */
dr_status dr_eval(const dr_run* run, const dr_qrels* qrels, const char* metrics_csv_out);
/* metric: "mrr@10" | "mrr" | "ndcg@10" | "map@1000" */
dr_status dr_eval_metric(const dr_run* run, const dr_qrels* qrels, const char* metric,
                         double* value_out);

typedef struct dr_compare_result {
  int non_inferior;
  double ci_lower;
  double delta;
  double statistic;
} dr_compare_result;

/* One-sided paired non-inferiority test of candidate vs baseline on the
 * given metric; margin is relative to the baseline mean unless
 * relative_margin == 0. Optionally writes the one-line decision record. */
dr_status dr_compare(const dr_run* baseline, const dr_run* candidate, const dr_qrels* qrels,
                     const char* metric, double margin, int relative_margin,
                     dr_compare_result* out, const char* record_out);

/* ------------------------------------------------------------------ bench */

typedef struct dr_bench_model {
  const char* label;
  const char* ckpt_path;          /* may be NULL ... */
  const dr_encoder_shape* shape;  /* ... then weights are seeded random */
} dr_bench_model;

typedef struct dr_bench_params {
  const dr_bench_model* models; /* first entry is the speedup baseline */
  size_t num_models;
  int64_t depth;
  const int64_t* batch_sizes;
  size_t num_batch_sizes;
  int64_t warmup_queries;
  int64_t timed_queries;
  int use_f32;
  int threads;
  uint64_t seed; /* synthetic candidate token stream */
  const char* csv_out;
} dr_bench_params;

dr_status dr_bench(const dr_bench_params* params);

typedef struct dr_convergence_params {
  const char* model_id;
  const char* ckpt_prefix; /* expects <prefix>.at<mark>.ckpt */
  const int64_t* marks;
  size_t num_marks;
  const char* stage_log_csv; /* optional wall-clock source */
  double base_seconds;       /* wall-clock of earlier pipeline stages */
  const char* run_path;
  const char* qrels_path;
  const char* queries_tsv;
  const char* collection_tsv;
  const char* vocab_path;
  int64_t depth;
  int use_f32;
  const char* csv_out;
} dr_convergence_params;

dr_status dr_report_convergence(const dr_convergence_params* params);

typedef struct dr_cost_params {
  const char* const* curve_labels;
  const char* const* curve_csvs;
  size_t num_curves;
  double teacher_reference_mrr;
  double tau;
  const char* csv_out;
} dr_cost_params;

dr_status dr_report_training_cost(const dr_cost_params* params);

#if defined(__cplusplus)
} /* extern "C" */
#endif

#endif /* DISTILRANK_H */
