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

#include "distilrank/distilrank.h"

#include <cstring>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "distilrank/bench.hpp"
#include "distilrank/bm25.hpp"
#include "distilrank/distill.hpp"
#include "distilrank/encoder.hpp"
#include "distilrank/errors.hpp"
#include "distilrank/infer.hpp"
#include "distilrank/io.hpp"
#include "distilrank/kv.hpp"
#include "distilrank/metrics.hpp"
#include "distilrank/parallel.hpp"
#include "distilrank/rerank.hpp"
#include "distilrank/rng.hpp"
#include "distilrank/synth.hpp"
#include "distilrank/text.hpp"
#include "distilrank/train.hpp"

using namespace distilrank;

extern "C" {

struct dr_index {
  bm25::InvertedIndex index;
};
struct dr_model {
  Checkpoint model;
};
struct dr_run {
  RankedRun run;
};
struct dr_qrels {
  Qrels qrels;
};

}  // extern "C"

namespace {

thread_local std::string tl_error;

dr_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return DR_ERR_IO;
    case ErrorCode::Format: return DR_ERR_FORMAT;
    case ErrorCode::Param: return DR_ERR_PARAM;
    case ErrorCode::Shape: return DR_ERR_SHAPE;
    case ErrorCode::Vocab: return DR_ERR_VOCAB;
    case ErrorCode::State: return DR_ERR_STATE;
    case ErrorCode::Usage: return DR_ERR_USAGE;
    case ErrorCode::Lookup: return DR_ERR_LOOKUP;
    case ErrorCode::Internal: return DR_ERR_INTERNAL;
  }
  return DR_ERR_INTERNAL;
}

template <class Fn>
dr_status guarded(Fn fn) {
  try {
    fn();
    return DR_OK;
  } catch (const Error& e) {
    tl_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    tl_error = e.what();
    return DR_ERR_INTERNAL;
  } catch (...) {
    tl_error = "unknown error";
    return DR_ERR_INTERNAL;
  }
}

dr_status fail_param(const char* msg) {
  tl_error = msg;
  return DR_ERR_PARAM;
}

EncoderConfig to_config(const dr_encoder_shape& s) {
  EncoderConfig c;
  c.num_layers = s.num_layers;
  c.hidden_dim = s.hidden_dim;
  c.num_heads = s.num_heads;
  c.ff_dim = s.ff_dim > 0 ? s.ff_dim : 4 * s.hidden_dim;
  c.vocab_size = s.vocab_size;
  c.max_seq_len = s.max_seq_len;
  return c;
}

train::TrainSchedule to_schedule(const dr_schedule& s) {
  train::TrainSchedule out;
  out.lr = s.lr;
  out.weight_decay = s.weight_decay;
  out.batch_size = s.batch_size;
  out.max_examples = s.max_examples;
  if (s.marks && s.num_marks) out.checkpoint_marks.assign(s.marks, s.marks + s.num_marks);
  out.seed = s.seed;
  return out;
}

distill::DistillOptions to_options(const dr_distill_options& o) {
  distill::DistillOptions out;
  out.weights = {o.attention_weight, o.hidden_weight, o.output_weight};
  out.temperature = o.temperature > 0 ? o.temperature : 1.0;
  out.match_mlm_output = o.match_mlm_output != 0;
  if (o.layer_map && o.layer_map_len) {
    distill::LayerMap map;
    map.teacher_layer.assign(o.layer_map, o.layer_map + o.layer_map_len);
    out.layer_map = std::move(map);
  }
  return out;
}

train::CheckpointSink mark_sink(const char* prefix) {
  if (!prefix || !*prefix) return {};
  const std::string p = prefix;
  return [p](int64_t mark, const Checkpoint& snap) {
    save_checkpoint(snap, p + ".at" + std::to_string(mark) + ".ckpt");
  };
}

metrics::MetricReport eval_one(const RankedRun& run, const Qrels& qrels,
                               const std::string& metric) {
  if (metric == "mrr@10") return metrics::mrr_at_k(run, qrels, 10);
  if (metric == "mrr") return metrics::mrr(run, qrels);
  if (metric == "ndcg@10") return metrics::ndcg_at_10(run, qrels);
  if (metric == "map@1000") return metrics::map_at_1000(run, qrels);
  throw ParamError("unknown metric '" + metric +
                   "' (expected mrr@10 | mrr | ndcg@10 | map@1000)");
}

}  // namespace

extern "C" {

const char* dr_status_name(dr_status status) {
  switch (status) {
    case DR_OK: return "ok";
    case DR_ERR_IO: return "io";
    case DR_ERR_FORMAT: return "format";
    case DR_ERR_PARAM: return "param";
    case DR_ERR_SHAPE: return "shape";
    case DR_ERR_VOCAB: return "vocab";
    case DR_ERR_STATE: return "state";
    case DR_ERR_USAGE: return "usage";
    case DR_ERR_LOOKUP: return "lookup";
    case DR_ERR_INTERNAL: return "internal";
  }
  return "?";
}

const char* dr_last_error(void) { return tl_error.c_str(); }

const char* dr_version(void) { return "distilrank 0.1.0"; }

void dr_set_threads(int threads) {
  set_threads(threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency()));
}

/* ------------------------------------------------------------------ handles */

dr_status dr_index_open(const char* path, dr_index** out) {
  if (!path || !out) return fail_param("dr_index_open: null argument");
  return guarded([&] { *out = new dr_index{bm25::InvertedIndex::load(path)}; });
}

void dr_index_free(dr_index* index) { delete index; }

dr_status dr_model_open(const char* path, dr_model** out) {
  if (!path || !out) return fail_param("dr_model_open: null argument");
  return guarded([&] { *out = new dr_model{load_checkpoint(path)}; });
}

void dr_model_free(dr_model* model) { delete model; }

dr_status dr_model_meta(const dr_model* model, char* buffer, size_t buffer_len) {
  if (!model || !buffer || buffer_len == 0) return fail_param("dr_model_meta: null argument");
  return guarded([&] {
    KvDoc doc;
    doc.set("stage", model->model.meta.stage);
    doc.set("lineage", model->model.meta.lineage);
    doc.set_int("examples_seen", model->model.meta.examples_seen);
    doc.set_int("seed", static_cast<int64_t>(model->model.meta.seed));
    doc.set_int("num_layers", model->model.config.num_layers);
    doc.set_int("hidden_dim", model->model.config.hidden_dim);
    doc.set_int("num_heads", model->model.config.num_heads);
    doc.set_int("ff_dim", model->model.config.ff_dim);
    doc.set_int("vocab_size", model->model.config.vocab_size);
    doc.set_int("max_seq_len", model->model.config.max_seq_len);
    doc.set("rank_head", model->model.has_rank_head() ? "present" : "absent");
    doc.set_int("parameters", parameter_count(model->model));
    const std::string text = doc.serialize();
    if (text.size() + 1 > buffer_len)
      throw ParamError("dr_model_meta: buffer too small, need " +
                       std::to_string(text.size() + 1) + " bytes");
    std::memcpy(buffer, text.c_str(), text.size() + 1);
  });
}

dr_status dr_run_open(const char* path, dr_run** out) {
  if (!path || !out) return fail_param("dr_run_open: null argument");
  return guarded([&] { *out = new dr_run{load_run(path)}; });
}

void dr_run_free(dr_run* run) { delete run; }

dr_status dr_qrels_open(const char* path, dr_qrels** out) {
  if (!path || !out) return fail_param("dr_qrels_open: null argument");
  return guarded([&] { *out = new dr_qrels{load_qrels(path)}; });
}

void dr_qrels_free(dr_qrels* qrels) { delete qrels; }

/* ---------------------------------------------------------------- data prep */

dr_status dr_synth(const dr_synth_params* p) {
  if (!p || !p->collection_out || !p->train_queries_out || !p->heldout_queries_out ||
      !p->qrels_out || !p->triples_out)
    return fail_param("dr_synth: null argument");
  return guarded([&] {
    SynthParams sp;
    sp.seed = p->seed;
    sp.num_docs = p->num_docs;
    sp.num_queries = p->num_queries;
    sp.num_heldout = p->num_heldout;
    sp.vocab_words = p->vocab_words;
    sp.triples_per_query = p->triples_per_query;
    SynthData data = generate_synthetic(sp);
    write_synth(data, {p->collection_out, p->train_queries_out, p->heldout_queries_out,
                       p->qrels_out, p->triples_out});
  });
}

dr_status dr_vocab_build(const char* collection_tsv, int64_t max_size, const char* vocab_out) {
  if (!collection_tsv || !vocab_out) return fail_param("dr_vocab_build: null argument");
  return guarded([&] {
    auto counts = count_collection_words(collection_tsv);
    Vocabulary::build(counts, max_size).save(vocab_out);
  });
}

/* --------------------------------------------------------------- retrieval */

dr_status dr_index_build(const char* collection_tsv, const char* index_out) {
  if (!collection_tsv || !index_out) return fail_param("dr_index_build: null argument");
  return guarded([&] { bm25::InvertedIndex::build_from_file(collection_tsv).save(index_out); });
}

dr_status dr_retrieve(const dr_index* index, const char* queries_tsv, int64_t k, double k1,
                      double b, const char* run_tag, const char* run_out) {
  if (!index || !queries_tsv || !run_out) return fail_param("dr_retrieve: null argument");
  return guarded([&] {
    auto queries = load_queries(queries_tsv);
    bm25::Params params;
    if (k1 > 0) params.k1 = k1;
    if (b >= 0) params.b = b;
    RankedRun run = bm25::retrieve_run(index->index, queries, k, params,
                                       run_tag && *run_tag ? run_tag : "bm25");
    write_run(run, run_out);
  });
}

/* ---------------------------------------------------------------- training */

dr_status dr_pretrain(const dr_pretrain_params* p) {
  if (!p || !p->collection_tsv || !p->vocab_path || !p->ckpt_out)
    return fail_param("dr_pretrain: null argument");
  return guarded([&] {
    auto corpus = load_collection(p->collection_tsv);
    Vocabulary vocab = Vocabulary::load(p->vocab_path);
    train::TrainLog log;
    Checkpoint ckpt = train::pretrain_mlm(to_config(p->shape), corpus, vocab,
                                          to_schedule(p->schedule), &log,
                                          mark_sink(p->mark_prefix));
    save_checkpoint(ckpt, p->ckpt_out);
    if (p->log_out && *p->log_out) log.write_csv(p->log_out);
  });
}

dr_status dr_finetune(const dr_finetune_params* p) {
  if (!p || !p->model_in || !p->triples_tsv || !p->vocab_path || !p->ckpt_out)
    return fail_param("dr_finetune: null argument");
  return guarded([&] {
    Checkpoint model = load_checkpoint(p->model_in);
    auto triples = load_triples(p->triples_tsv);
    Vocabulary vocab = Vocabulary::load(p->vocab_path);
    train::TrainLog log;
    Checkpoint ckpt = train::finetune_ranker(model, triples, vocab, to_schedule(p->schedule),
                                             &log, mark_sink(p->mark_prefix));
    save_checkpoint(ckpt, p->ckpt_out);
    if (p->log_out && *p->log_out) log.write_csv(p->log_out);
  });
}

/* ------------------------------------------------------------- distillation */

dr_status dr_lm_distill(const dr_lm_distill_params* p) {
  if (!p || !p->teacher_ckpt || !p->collection_tsv || !p->vocab_path || !p->ckpt_out)
    return fail_param("dr_lm_distill: null argument");
  return guarded([&] {
    Checkpoint teacher = load_checkpoint(p->teacher_ckpt);
    auto corpus = load_collection(p->collection_tsv);
    Vocabulary vocab = Vocabulary::load(p->vocab_path);
    distill::DistillLog log;
    Checkpoint student =
        distill::lm_distill(teacher, to_config(p->student_shape), corpus, vocab,
                            to_schedule(p->schedule), to_options(p->options), &log,
                            mark_sink(p->mark_prefix));
    save_checkpoint(student, p->ckpt_out);
    if (p->log_out && *p->log_out) log.write_csv(p->log_out);
  });
}

dr_status dr_ranker_distill(const dr_ranker_distill_params* p) {
  if (!p || !p->teacher_ckpt || !p->triples_tsv || !p->vocab_path || !p->ckpt_out)
    return fail_param("dr_ranker_distill: null argument");
  return guarded([&] {
    Checkpoint teacher = load_checkpoint(p->teacher_ckpt);
    Checkpoint student = p->student_ckpt && *p->student_ckpt
                             ? load_checkpoint(p->student_ckpt)
                             : Checkpoint::init(to_config(p->student_shape), p->schedule.seed);
    auto triples = load_triples(p->triples_tsv);
    Vocabulary vocab = Vocabulary::load(p->vocab_path);
    distill::DistillLog log;
    Checkpoint out = distill::ranker_distill(teacher, student, triples, vocab,
                                             to_schedule(p->schedule), to_options(p->options),
                                             &log, mark_sink(p->mark_prefix));
    save_checkpoint(out, p->ckpt_out);
    if (p->log_out && *p->log_out) log.write_csv(p->log_out);
  });
}

dr_status dr_pipeline(const dr_pipeline_params* p) {
  if (!p || !p->recipe || !p->triples_tsv || !p->vocab_path || !p->out_prefix)
    return fail_param("dr_pipeline: null argument");
  return guarded([&] {
    distill::DistillRecipe recipe;
    recipe.pipeline = distill::pipeline_from_name(p->recipe);
    recipe.student_config = to_config(p->student_shape);
    recipe.options = to_options(p->options);
    recipe.lm_schedule = to_schedule(p->lm_schedule);
    recipe.rank_schedule = to_schedule(p->rank_schedule);

    Checkpoint teacher_lm, teacher_ranker;
    const Checkpoint* lm_ptr = nullptr;
    const Checkpoint* rk_ptr = nullptr;
    if (p->teacher_lm_ckpt && *p->teacher_lm_ckpt) {
      teacher_lm = load_checkpoint(p->teacher_lm_ckpt);
      lm_ptr = &teacher_lm;
    }
    if (p->teacher_ranker_ckpt && *p->teacher_ranker_ckpt) {
      teacher_ranker = load_checkpoint(p->teacher_ranker_ckpt);
      rk_ptr = &teacher_ranker;
    }
    std::vector<DocRecord> corpus;
    if (p->collection_tsv && *p->collection_tsv) corpus = load_collection(p->collection_tsv);
    auto triples = load_triples(p->triples_tsv);
    Vocabulary vocab = Vocabulary::load(p->vocab_path);

    distill::PipelineData data;
    data.corpus = &corpus;
    data.triples = &triples;
    data.vocab = &vocab;
    (void)distill::run_pipeline(recipe, lm_ptr, rk_ptr, data, p->out_prefix);
  });
}

/* --------------------------------------------------------------- evaluation */

dr_status dr_rerank(const dr_model* model, const dr_run* first_stage,
                    const dr_rerank_params* p) {
  if (!model || !first_stage || !p || !p->queries_tsv || !p->collection_tsv || !p->vocab_path ||
      !p->run_out)
    return fail_param("dr_rerank: null argument");
  return guarded([&] {
    Vocabulary vocab = Vocabulary::load(p->vocab_path);
    auto queries = load_queries(p->queries_tsv);
    auto docs = load_collection(p->collection_tsv);
    auto qmap = text_map_queries(queries);
    auto dmap = text_map_docs(docs);
    RerankContext ctx;
    ctx.vocab = &vocab;
    ctx.query_texts = &qmap;
    ctx.doc_texts = &dmap;
    ctx.batch_size = p->batch_size > 0 ? p->batch_size : 64;
    InferenceEngine engine(model->model, p->use_f32 ? Precision::F32 : Precision::F64);
    std::string tag = p->run_tag && *p->run_tag ? p->run_tag : "distilrank";
    tag += std::string("-") + precision_name(engine.precision());
    RankedRun out = rerank_with_model(engine, first_stage->run, p->depth, ctx, tag);
    write_run(out, p->run_out);
  });
}

dr_status dr_eval(const dr_run* run, const dr_qrels* qrels, const char* metrics_csv_out) {
  if (!run || !qrels || !metrics_csv_out) return fail_param("dr_eval: null argument");
  return guarded([&] {
    std::vector<metrics::MetricReport> reports;
    for (const char* m : {"mrr@10", "mrr", "ndcg@10", "map@1000"})
      reports.push_back(eval_one(run->run, qrels->qrels, m));
    metrics::write_metric_csv(reports, metrics_csv_out);
  });
}

dr_status dr_eval_metric(const dr_run* run, const dr_qrels* qrels, const char* metric,
                         double* value_out) {
  if (!run || !qrels || !metric || !value_out) return fail_param("dr_eval_metric: null argument");
  return guarded([&] { *value_out = eval_one(run->run, qrels->qrels, metric).aggregate; });
}

dr_status dr_compare(const dr_run* baseline, const dr_run* candidate, const dr_qrels* qrels,
                     const char* metric, double margin, int relative_margin,
                     dr_compare_result* out, const char* record_out) {
  if (!baseline || !candidate || !qrels || !metric || !out)
    return fail_param("dr_compare: null argument");
  return guarded([&] {
    auto base_report = eval_one(baseline->run, qrels->qrels, metric);
    auto cand_report = eval_one(candidate->run, qrels->qrels, metric);
    if (base_report.per_query.size() != cand_report.per_query.size())
      throw ParamError("dr_compare: runs cover different judged query sets");
    std::vector<double> a, b;
    for (size_t i = 0; i < base_report.per_query.size(); ++i) {
      if (base_report.per_query[i].first != cand_report.per_query[i].first)
        throw ParamError("dr_compare: query sets differ at '" +
                         base_report.per_query[i].first + "'");
      a.push_back(base_report.per_query[i].second);
      b.push_back(cand_report.per_query[i].second);
    }
    auto result = metrics::non_inferiority_test(
        a, b, margin, 0.05,
        relative_margin ? metrics::MarginMode::Relative : metrics::MarginMode::Absolute);
    out->non_inferior = result.non_inferior ? 1 : 0;
    out->ci_lower = result.ci_lower;
    out->delta = result.delta;
    out->statistic = result.statistic;
    if (record_out && *record_out) {
      std::ofstream rec(record_out, std::ios::trunc);
      if (!rec) throw IoError(std::string("cannot write decision record: ") + record_out);
      rec << metrics::format_decision(result) << "\n";
    }
  });
}

/* -------------------------------------------------------------------- bench */

dr_status dr_bench(const dr_bench_params* p) {
  if (!p || !p->models || p->num_models == 0 || !p->csv_out)
    return fail_param("dr_bench: null argument");
  return guarded([&] {
    bench::LatencyProtocol protocol;
    if (p->batch_sizes && p->num_batch_sizes)
      protocol.batch_sizes.assign(p->batch_sizes, p->batch_sizes + p->num_batch_sizes);
    if (p->warmup_queries >= 0) protocol.warmup_queries = p->warmup_queries;
    if (p->timed_queries > 0) protocol.timed_queries = p->timed_queries;
    protocol.precision = p->use_f32 ? Precision::F32 : Precision::F64;
    protocol.threads = p->threads > 0 ? p->threads : 1;

    std::vector<bench::LatencyReport> reports;
    for (size_t m = 0; m < p->num_models; ++m) {
      const dr_bench_model& bm = p->models[m];
      Checkpoint model;
      if (bm.ckpt_path && *bm.ckpt_path) {
        model = load_checkpoint(bm.ckpt_path);
      } else if (bm.shape) {
        model = Checkpoint::init(to_config(*bm.shape), p->seed ^ m);
        model.add_rank_head(p->seed ^ (m + 1));
      } else {
        throw ParamError("dr_bench: model needs a checkpoint path or a shape");
      }
      if (!model.has_rank_head()) throw StateError("dr_bench: model has no ranking head");

      // Synthetic pre-tokenized candidates at the model's sequence length
      // (latency depends on shapes, not weights or token values).
      const int64_t seq = model.config.max_seq_len;
      Rng rng(p->seed + 1000 * static_cast<uint64_t>(m));
      const int64_t n_queries = std::min<int64_t>(protocol.timed_queries, 4);
      std::vector<bench::QueryCandidates> queries(static_cast<size_t>(n_queries));
      for (auto& q : queries) {
        for (int64_t c = 0; c < p->depth; ++c) {
          PairInput in;
          in.tokens.resize(static_cast<size_t>(seq));
          in.segments.resize(static_cast<size_t>(seq));
          in.mask.assign(static_cast<size_t>(seq), 1);
          in.tokens[0] = 2;
          for (int64_t s = 1; s < seq; ++s) {
            in.tokens[static_cast<size_t>(s)] =
                5 + static_cast<int64_t>(
                        rng.next_below(static_cast<uint64_t>(model.config.vocab_size - 5)));
            in.segments[static_cast<size_t>(s)] = s > seq / 3 ? 1 : 0;
          }
          q.candidates.push_back(std::move(in));
          q.doc_ids.push_back("d" + std::to_string(c));
        }
      }
      bench::LatencyReport report = bench::measure_latency(
          model, bm.label && *bm.label ? bm.label : ("model" + std::to_string(m)), queries,
          p->depth, protocol);
      if (m > 0) bench::apply_baseline(report, reports.front());
      reports.push_back(std::move(report));
    }
    bench::apply_baseline(reports.front(), reports.front());  // self-speedup 1.0
    bench::write_latency_csv(reports, p->csv_out);
  });
}

dr_status dr_report_convergence(const dr_convergence_params* p) {
  if (!p || !p->model_id || !p->ckpt_prefix || !p->marks || !p->run_path || !p->qrels_path ||
      !p->queries_tsv || !p->collection_tsv || !p->vocab_path || !p->csv_out)
    return fail_param("dr_report_convergence: null argument");
  return guarded([&] {
    RankedRun run = load_run(p->run_path);
    Qrels qrels = load_qrels(p->qrels_path);
    Vocabulary vocab = Vocabulary::load(p->vocab_path);
    auto queries = load_queries(p->queries_tsv);
    auto docs = load_collection(p->collection_tsv);
    auto qmap = text_map_queries(queries);
    auto dmap = text_map_docs(docs);

    bench::ConvergenceInputs in;
    in.model_id = p->model_id;
    in.ckpt_prefix = p->ckpt_prefix;
    in.marks.assign(p->marks, p->marks + p->num_marks);
    in.stage_log_csv = p->stage_log_csv ? p->stage_log_csv : "";
    in.base_seconds = p->base_seconds;
    in.first_stage = &run;
    in.qrels = &qrels;
    in.rerank.vocab = &vocab;
    in.rerank.query_texts = &qmap;
    in.rerank.doc_texts = &dmap;
    in.depth = p->depth > 0 ? p->depth : 100;
    in.precision = p->use_f32 ? Precision::F32 : Precision::F64;
    bench::write_convergence_csv(bench::convergence_track(in), p->csv_out);
  });
}

dr_status dr_report_training_cost(const dr_cost_params* p) {
  if (!p || !p->curve_labels || !p->curve_csvs || p->num_curves == 0 || !p->csv_out)
    return fail_param("dr_report_training_cost: null argument");
  return guarded([&] {
    std::vector<bench::ConvergenceCurve> curves;
    for (size_t i = 0; i < p->num_curves; ++i)
      curves.push_back(bench::load_convergence_csv(p->curve_labels[i], p->curve_csvs[i]));
    auto report = bench::training_cost_report(curves, p->teacher_reference_mrr,
                                              p->tau > 0 ? p->tau : 0.05);
    bench::write_training_cost_csv(report, p->csv_out);
  });
}

}  // extern "C"
