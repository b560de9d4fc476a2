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

// Command-line front end. Everything goes through the C ABI in
// distilrank.h; this translation unit only parses flags, takes the
// per-output-dir lock, and shuttles paths into the library.

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distilrank/distilrank.h"

namespace {

struct ShapeFlags {
  int64_t layers = 4;
  int64_t hidden = 128;
  int64_t heads = 4;
  int64_t ff = 0;  // 0 -> 4 * hidden
  int64_t vocab = 8192;
  int64_t seq_len = 64;

  void attach(CLI::App* cmd, const std::string& prefix = "") {
    const std::string p = prefix.empty() ? "--" : "--" + prefix + "-";
    cmd->add_option(p + "layers", layers, "transformer layers");
    cmd->add_option(p + "hidden", hidden, "hidden dimension");
    cmd->add_option(p + "heads", heads, "attention heads");
    cmd->add_option(p + "ff", ff, "feed-forward dimension (default 4x hidden)");
    cmd->add_option(p + "vocab-size", vocab, "encoder vocabulary size");
    cmd->add_option(p + "seq-len", seq_len, "maximum sequence length");
  }
  dr_encoder_shape shape() const { return {layers, hidden, heads, ff, vocab, seq_len}; }
};

struct ScheduleFlags {
  double lr = 3e-4;
  double weight_decay = 0.01;
  int64_t batch = 32;
  int64_t examples = 20000;
  std::vector<int64_t> marks;
  uint64_t seed = 7;
  mutable std::vector<int64_t> effective_marks;

  void attach(CLI::App* cmd, const std::string& prefix = "") {
    const std::string p = prefix.empty() ? "--" : "--" + prefix + "-";
    cmd->add_option(p + "lr", lr, "learning rate");
    cmd->add_option(p + "weight-decay", weight_decay, "weight decay");
    cmd->add_option(p + "batch", batch, "batch size");
    cmd->add_option(p + "examples", examples, "training examples to consume");
    cmd->add_option(p + "marks", marks,
                    "checkpoint marks (default: the 1k/5k/20k/50k/100k ladder, clipped)");
    cmd->add_option(p + "seed", seed, "rng seed");
  }
  dr_schedule schedule() const {
    effective_marks = marks;
    if (effective_marks.empty()) {
      for (int64_t m : {1000, 5000, 20000, 50000, 100000})
        if (m <= examples) effective_marks.push_back(m);
    }
    return {lr,
            weight_decay,
            batch,
            examples,
            effective_marks.empty() ? nullptr : effective_marks.data(),
            effective_marks.size(),
            seed};
  }
};

struct DistillFlags {
  double w_attention = 1.0;
  double w_hidden = 1.0;
  double w_output = 1.0;
  double temperature = 1.0;
  bool match_mlm = false;
  std::vector<int64_t> layer_map;

  void attach(CLI::App* cmd) {
    cmd->add_option("--attention-weight", w_attention, "attention loss weight");
    cmd->add_option("--hidden-weight", w_hidden, "hidden-state loss weight");
    cmd->add_option("--output-weight", w_output, "output loss weight");
    cmd->add_option("--temperature", temperature, "output distillation temperature");
    cmd->add_flag("--match-mlm-output", match_mlm, "LM distill: also match MLM predictions");
    cmd->add_option("--layer-map", layer_map,
                    "explicit teacher layer per student layer (1-based)");
  }
  dr_distill_options options() const {
    return {w_attention, w_hidden,
            w_output,    temperature,
            match_mlm,   layer_map.empty() ? nullptr : layer_map.data(),
            layer_map.size()};
  }
};

// One process per output directory; released when the process exits.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    path_ = dir + "/.distilrank.lock";
    fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw std::runtime_error("error: io: cannot open lock file " + path_);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0)
      throw std::runtime_error(
          "error: state: output dir is locked by another distilrank process (" + path_ + ")");
  }
  ~DirLock() {
    if (fd_ >= 0) ::close(fd_);
  }

 private:
  std::string path_;
  int fd_ = -1;
};

int fail(dr_status status) {
  std::fprintf(stderr, "error: %s: %s\n", dr_status_name(status), dr_last_error());
  return static_cast<int>(status);
}

// Missing upstream artifacts point at the subcommand that produces them.
int fail_artifact(dr_status status, const char* producer) {
  std::fprintf(stderr, "error: %s: %s (produce it with the `%s` subcommand)\n",
               dr_status_name(status), dr_last_error(), producer);
  return static_cast<int>(status);
}

template <class T, void (*Free)(T*)>
struct HandleDeleter {
  void operator()(T* p) const { Free(p); }
};
using IndexHandle = std::unique_ptr<dr_index, HandleDeleter<dr_index, dr_index_free>>;
using ModelHandle = std::unique_ptr<dr_model, HandleDeleter<dr_model, dr_model_free>>;
using RunHandle = std::unique_ptr<dr_run, HandleDeleter<dr_run, dr_run_free>>;
using QrelsHandle = std::unique_ptr<dr_qrels, HandleDeleter<dr_qrels, dr_qrels_free>>;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distilrank: distilled transformer reranking workbench"};
  app.set_config("--config", "", "read options from a key=value config file");
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads for numeric kernels (0 = hardware concurrency)");
  std::string out_dir;
  app.add_option("--out-dir", out_dir,
                 "directory to lock for this run; the effective config is echoed there");

  // Subcommand callbacks only record an action; it runs after the lock is
  // taken and the thread pool is sized.
  int exit_code = 0;
  std::function<void()> action;
  auto defer = [&](std::function<dr_status()> fn) {
    action = [&, fn] {
      const dr_status s = fn();
      if (s != DR_OK) exit_code = fail(s);
    };
  };

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate the deterministic synthetic task");
  struct {
    uint64_t seed = 1;
    int64_t docs = 2400, queries = 250, heldout = 50, vocab_words = 1500, triples = 24;
    std::string collection = "collection.tsv", train_q = "queries-train.tsv",
                heldout_q = "queries-heldout.tsv", qrels = "qrels.txt",
                triples_out = "triples.tsv";
  } sy;
  synth->add_option("--seed", sy.seed);
  synth->add_option("--docs", sy.docs, "total documents");
  synth->add_option("--queries", sy.queries, "total queries (train + held-out)");
  synth->add_option("--heldout", sy.heldout, "held-out query count");
  synth->add_option("--vocab-words", sy.vocab_words, "distinct surface words");
  synth->add_option("--triples-per-query", sy.triples, "training triples per train query");
  synth->add_option("--collection", sy.collection);
  synth->add_option("--train-queries", sy.train_q);
  synth->add_option("--heldout-queries", sy.heldout_q);
  synth->add_option("--qrels", sy.qrels);
  synth->add_option("--triples", sy.triples_out);
  synth->callback([&] {
    defer([&]() -> dr_status {
      dr_synth_params p{sy.seed,
                        sy.docs,
                        sy.queries,
                        sy.heldout,
                        sy.vocab_words,
                        sy.triples,
                        sy.collection.c_str(),
                        sy.train_q.c_str(),
                        sy.heldout_q.c_str(),
                        sy.qrels.c_str(),
                        sy.triples_out.c_str()};
      return dr_synth(&p);
    });
  });

  // ---- build-vocab ----
  auto* bv = app.add_subcommand("build-vocab", "frequency vocabulary from a collection");
  struct {
    std::string collection, out = "vocab.txt";
    int64_t size = 8192;
  } vb;
  bv->add_option("--collection", vb.collection)->required();
  bv->add_option("--size", vb.size, "maximum vocabulary size (reserved ids included)");
  bv->add_option("--out", vb.out);
  bv->callback([&] {
    defer([&] { return dr_vocab_build(vb.collection.c_str(), vb.size, vb.out.c_str()); });
  });

  // ---- index ----
  auto* ix = app.add_subcommand("index", "build the BM25 inverted index");
  struct {
    std::string collection, out = "bm25.index";
  } ib;
  ix->add_option("--collection", ib.collection)->required();
  ix->add_option("--out", ib.out);
  ix->callback(
      [&] { defer([&] { return dr_index_build(ib.collection.c_str(), ib.out.c_str()); }); });

  // ---- retrieve ----
  auto* rt = app.add_subcommand("retrieve", "BM25 top-k first-stage retrieval");
  struct {
    std::string index, queries, out = "bm25.run", tag = "bm25";
    int64_t k = 1000;
    double k1 = 0.9, b = 0.4;
  } rv;
  rt->add_option("--index", rv.index)->required();
  rt->add_option("--queries", rv.queries)->required();
  rt->add_option("--k", rv.k, "candidates per query");
  rt->add_option("--k1", rv.k1, "BM25 k1");
  rt->add_option("--b", rv.b, "BM25 b");
  rt->add_option("--run-tag", rv.tag);
  rt->add_option("--out", rv.out);
  rt->callback([&] {
    defer([&]() -> dr_status {
      dr_index* index = nullptr;
      dr_status s = dr_index_open(rv.index.c_str(), &index);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "index");
        return DR_OK;
      }
      IndexHandle handle(index);
      return dr_retrieve(handle.get(), rv.queries.c_str(), rv.k, rv.k1, rv.b, rv.tag.c_str(),
                         rv.out.c_str());
    });
  });

  // ---- pretrain ----
  auto* pt = app.add_subcommand("pretrain", "masked-LM pretraining from scratch");
  struct {
    std::string collection, vocab, out = "teacher-lm.ckpt", log, mark_prefix;
  } pp;
  static ShapeFlags pt_shape;
  static ScheduleFlags pt_sched;
  pt->add_option("--collection", pp.collection)->required();
  pt->add_option("--vocab", pp.vocab)->required();
  pt->add_option("--out", pp.out);
  pt->add_option("--log", pp.log, "training log CSV");
  pt->add_option("--mark-prefix", pp.mark_prefix, "write <prefix>.at<mark>.ckpt");
  pt_shape.attach(pt);
  pt_sched.attach(pt);
  pt->callback([&] {
    defer([&]() -> dr_status {
      dr_pretrain_params p{pt_shape.shape(), pt_sched.schedule(), pp.collection.c_str(),
                           pp.vocab.c_str(), pp.out.c_str(),      pp.log.c_str(),
                           pp.mark_prefix.c_str()};
      return dr_pretrain(&p);
    });
  });

  // ---- finetune ----
  auto* ft = app.add_subcommand("finetune", "pointwise ranking fine-tuning (AdamW)");
  struct {
    std::string model, triples, vocab, out = "ranker.ckpt", log, mark_prefix;
  } fp;
  static ScheduleFlags ft_sched;
  ft->add_option("--model", fp.model)->required();
  ft->add_option("--triples", fp.triples)->required();
  ft->add_option("--vocab", fp.vocab)->required();
  ft->add_option("--out", fp.out);
  ft->add_option("--log", fp.log);
  ft->add_option("--mark-prefix", fp.mark_prefix);
  ft_sched.attach(ft);
  ft->callback([&] {
    defer([&]() -> dr_status {
      dr_finetune_params p{ft_sched.schedule(), fp.model.c_str(), fp.triples.c_str(),
                           fp.vocab.c_str(),    fp.out.c_str(),   fp.log.c_str(),
                           fp.mark_prefix.c_str()};
      return dr_finetune(&p);
    });
  });

  // ---- lm-distill ----
  auto* lm = app.add_subcommand("lm-distill", "distill a pretrained LM into a smaller encoder");
  struct {
    std::string teacher, collection, vocab, out = "student-lm.ckpt", log, mark_prefix;
  } lp;
  static ShapeFlags lm_shape;
  static ScheduleFlags lm_sched;
  static DistillFlags lm_opts;
  lm->add_option("--teacher", lp.teacher)->required();
  lm->add_option("--collection", lp.collection)->required();
  lm->add_option("--vocab", lp.vocab)->required();
  lm->add_option("--out", lp.out);
  lm->add_option("--log", lp.log);
  lm->add_option("--mark-prefix", lp.mark_prefix);
  lm_shape.attach(lm, "student");
  lm_sched.attach(lm);
  lm_opts.attach(lm);
  lm->callback([&] {
    defer([&]() -> dr_status {
      dr_lm_distill_params p{lm_shape.shape(),   lm_sched.schedule(),   lm_opts.options(),
                             lp.teacher.c_str(), lp.collection.c_str(), lp.vocab.c_str(),
                             lp.out.c_str(),     lp.log.c_str(),        lp.mark_prefix.c_str()};
      return dr_lm_distill(&p);
    });
  });

  // ---- ranker-distill ----
  auto* rd = app.add_subcommand("ranker-distill",
                                "distill a fine-tuned ranker's behavior into a student");
  struct {
    std::string teacher, student, triples, vocab, out = "student-ranker.ckpt", log, mark_prefix;
  } rp;
  static ShapeFlags rd_shape;
  static ScheduleFlags rd_sched;
  static DistillFlags rd_opts;
  rd->add_option("--teacher", rp.teacher)->required();
  rd->add_option("--student", rp.student, "student checkpoint (omit for random init)");
  rd->add_option("--triples", rp.triples)->required();
  rd->add_option("--vocab", rp.vocab)->required();
  rd->add_option("--out", rp.out);
  rd->add_option("--log", rp.log);
  rd->add_option("--mark-prefix", rp.mark_prefix);
  rd_shape.attach(rd, "student");
  rd_sched.attach(rd);
  rd_opts.attach(rd);
  rd->callback([&] {
    defer([&]() -> dr_status {
      dr_ranker_distill_params p{rd_sched.schedule(), rd_opts.options(), rp.teacher.c_str(),
                                 rp.student.c_str(),  rd_shape.shape(),  rp.triples.c_str(),
                                 rp.vocab.c_str(),    rp.out.c_str(),    rp.log.c_str(),
                                 rp.mark_prefix.c_str()};
      return dr_ranker_distill(&p);
    });
  });

  // ---- pipeline ----
  auto* pl = app.add_subcommand("pipeline",
                                "run a full recipe: ranker-distill | lm-distill+finetune | "
                                "lm-distill+ranker-distill");
  struct {
    std::string recipe, teacher_lm, teacher_ranker, collection, triples, vocab, out_prefix;
  } pq;
  static ShapeFlags pl_shape;
  static ScheduleFlags pl_lm_sched, pl_rank_sched;
  static DistillFlags pl_opts;
  pl->add_option("--recipe", pq.recipe)->required();
  pl->add_option("--teacher-lm", pq.teacher_lm, "pretrained LM checkpoint");
  pl->add_option("--teacher-ranker", pq.teacher_ranker, "fine-tuned ranker checkpoint");
  pl->add_option("--collection", pq.collection);
  pl->add_option("--triples", pq.triples)->required();
  pl->add_option("--vocab", pq.vocab)->required();
  pl->add_option("--out-prefix", pq.out_prefix)->required();
  pl_shape.attach(pl, "student");
  pl_lm_sched.attach(pl, "lm");
  pl_rank_sched.attach(pl, "rank");
  pl_opts.attach(pl);
  pl->callback([&] {
    defer([&]() -> dr_status {
      dr_pipeline_params p{pq.recipe.c_str(),
                           pl_shape.shape(),
                           pl_lm_sched.schedule(),
                           pl_rank_sched.schedule(),
                           pl_opts.options(),
                           pq.teacher_lm.c_str(),
                           pq.teacher_ranker.c_str(),
                           pq.collection.c_str(),
                           pq.triples.c_str(),
                           pq.vocab.c_str(),
                           pq.out_prefix.c_str()};
      return dr_pipeline(&p);
    });
  });

  // ---- rerank ----
  auto* rr = app.add_subcommand("rerank", "rescore a first-stage run with a model");
  struct {
    std::string model, input_run, queries, collection, vocab, out = "reranked.run",
                tag = "distilrank";
    int64_t depth = 1000, batch = 64;
    bool f32 = false;
  } rk;
  rr->add_option("--model", rk.model)->required();
  rr->add_option("--run", rk.input_run)->required();
  rr->add_option("--queries", rk.queries)->required();
  rr->add_option("--collection", rk.collection)->required();
  rr->add_option("--vocab", rk.vocab)->required();
  rr->add_option("--depth", rk.depth, "rerank depth");
  rr->add_option("--batch", rk.batch, "scoring batch size");
  rr->add_flag("--f32", rk.f32, "use the 32-bit inference path (flagged in the run tag)");
  rr->add_option("--run-tag", rk.tag);
  rr->add_option("--out", rk.out);
  rr->callback([&] {
    defer([&]() -> dr_status {
      dr_model* model = nullptr;
      dr_run* input = nullptr;
      dr_status s = dr_model_open(rk.model.c_str(), &model);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "pretrain/finetune/pipeline");
        return DR_OK;
      }
      ModelHandle mh(model);
      s = dr_run_open(rk.input_run.c_str(), &input);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "retrieve");
        return DR_OK;
      }
      RunHandle rh(input);
      dr_rerank_params p{rk.queries.c_str(), rk.collection.c_str(), rk.vocab.c_str(),
                         rk.depth,           rk.f32 ? 1 : 0,        rk.batch,
                         rk.tag.c_str(),     rk.out.c_str()};
      return dr_rerank(mh.get(), rh.get(), &p);
    });
  });

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "ranking metrics for a run against qrels");
  struct {
    std::string input_run, qrels, out = "metrics.csv";
  } ep;
  ev->add_option("--run", ep.input_run)->required();
  ev->add_option("--qrels", ep.qrels)->required();
  ev->add_option("--out", ep.out);
  ev->callback([&] {
    defer([&]() -> dr_status {
      dr_run* r = nullptr;
      dr_qrels* q = nullptr;
      dr_status s = dr_run_open(ep.input_run.c_str(), &r);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "retrieve/rerank");
        return DR_OK;
      }
      RunHandle rh(r);
      s = dr_qrels_open(ep.qrels.c_str(), &q);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "synth");
        return DR_OK;
      }
      QrelsHandle qh(q);
      return dr_eval(rh.get(), qh.get(), ep.out.c_str());
    });
  });

  // ---- compare ----
  auto* cp = app.add_subcommand("compare", "paired non-inferiority test of two runs");
  struct {
    std::string a, b, qrels, metric = "mrr@10", record;
    double margin = 0.03;
    bool absolute = false;
  } cc;
  cp->add_option("--a", cc.a, "baseline run")->required();
  cp->add_option("--b", cc.b, "candidate run")->required();
  cp->add_option("--qrels", cc.qrels)->required();
  cp->add_option("--metric", cc.metric, "mrr@10 | mrr | ndcg@10 | map@1000");
  cp->add_option("--margin", cc.margin, "non-inferiority margin (default 0.03)");
  cp->add_flag("--absolute", cc.absolute, "treat the margin as absolute, not relative");
  cp->add_option("--record", cc.record, "write the one-line decision record here");
  cp->callback([&] {
    defer([&]() -> dr_status {
      dr_run *a = nullptr, *b = nullptr;
      dr_qrels* q = nullptr;
      dr_status s = dr_run_open(cc.a.c_str(), &a);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "retrieve/rerank");
        return DR_OK;
      }
      RunHandle ah(a);
      s = dr_run_open(cc.b.c_str(), &b);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "retrieve/rerank");
        return DR_OK;
      }
      RunHandle bh(b);
      s = dr_qrels_open(cc.qrels.c_str(), &q);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "synth");
        return DR_OK;
      }
      QrelsHandle qh(q);
      dr_compare_result result{};
      s = dr_compare(ah.get(), bh.get(), qh.get(), cc.metric.c_str(), cc.margin,
                     cc.absolute ? 0 : 1, &result,
                     cc.record.empty() ? nullptr : cc.record.c_str());
      if (s != DR_OK) return s;
      std::printf("non_inferior=%s,ci_lower=%.10f,delta=%.10f,margin_mode=%s\n",
                  result.non_inferior ? "true" : "false", result.ci_lower, result.delta,
                  cc.absolute ? "absolute" : "relative");
      return DR_OK;
    });
  });

  // ---- bench ----
  auto* bn = app.add_subcommand("bench", "per-query reranking latency across batch sizes");
  struct {
    std::vector<std::string> models;
    int64_t depth = 1000;
    std::vector<int64_t> batch_sizes = {64, 128, 256, 512};
    int64_t warmup = 3, timed = 20, seq_len = 128, vocab = 8192;
    bool f32 = false;
    int bench_threads = 1;
    uint64_t seed = 123;
    std::string out = "latency.csv";
  } bb;
  bn->add_option("--model", bb.models,
                 "label=ckpt-path or label=LAYERSxHIDDEN[xHEADS[xFF]] (first = baseline)")
      ->required();
  bn->add_option("--depth", bb.depth);
  bn->add_option("--batch-sizes", bb.batch_sizes);
  bn->add_option("--warmup", bb.warmup, "warmup queries");
  bn->add_option("--timed", bb.timed, "timed queries per batch size");
  bn->add_option("--seq-len", bb.seq_len, "sequence length for shape-built models");
  bn->add_option("--model-vocab", bb.vocab, "vocab size for shape-built models");
  bn->add_flag("--f32", bb.f32, "time the 32-bit inference path (flagged in the report)");
  bn->add_option("--bench-threads", bb.bench_threads,
                 "workers inside the timed region (default 1; >1 is reported)");
  bn->add_option("--seed", bb.seed);
  bn->add_option("--out", bb.out);
  bn->callback([&] {
    defer([&]() -> dr_status {
      std::vector<std::string> labels, paths;
      std::vector<dr_encoder_shape> shapes;
      for (const auto& spec : bb.models) {
        const size_t eq = spec.find('=');
        if (eq == std::string::npos) {
          std::fprintf(stderr,
                       "error: param: --model expects label=ckpt or label=shape, got '%s'\n",
                       spec.c_str());
          return DR_ERR_PARAM;
        }
        labels.push_back(spec.substr(0, eq));
        const std::string rhs = spec.substr(eq + 1);
        long dims[4] = {0, 0, 0, 0};
        const int n = std::sscanf(rhs.c_str(), "%ldx%ldx%ldx%ld", &dims[0], &dims[1], &dims[2],
                                  &dims[3]);
        if (n >= 2) {
          shapes.push_back({dims[0], dims[1], n >= 3 ? dims[2] : 12, n >= 4 ? dims[3] : 0,
                            bb.vocab, bb.seq_len});
          paths.emplace_back("");
        } else {
          shapes.push_back({});
          paths.push_back(rhs);
        }
      }
      std::vector<dr_bench_model> models;
      for (size_t i = 0; i < labels.size(); ++i)
        models.push_back({labels[i].c_str(), paths[i].empty() ? nullptr : paths[i].c_str(),
                          paths[i].empty() ? &shapes[i] : nullptr});
      dr_bench_params p{models.data(),
                        models.size(),
                        bb.depth,
                        bb.batch_sizes.data(),
                        bb.batch_sizes.size(),
                        bb.warmup,
                        bb.timed,
                        bb.f32 ? 1 : 0,
                        bb.bench_threads,
                        bb.seed,
                        bb.out.c_str()};
      return dr_bench(&p);
    });
  });

  // ---- report ----
  auto* rpt = app.add_subcommand("report", "convergence curves, training cost, lineage");
  rpt->require_subcommand(1);

  auto* conv = rpt->add_subcommand("convergence", "MRR@10 per checkpoint mark");
  struct {
    std::string model_id = "model", ckpt_prefix, stage_log, run_path, qrels, queries, collection,
                vocab, out = "convergence.csv";
    std::vector<int64_t> marks;
    double base_seconds = 0;
    int64_t depth = 100;
    bool f32 = false;
  } cv;
  conv->add_option("--model-id", cv.model_id);
  conv->add_option("--ckpt-prefix", cv.ckpt_prefix, "expects <prefix>.at<mark>.ckpt")->required();
  conv->add_option("--marks", cv.marks)->required();
  conv->add_option("--stage-log", cv.stage_log, "stage log CSV for wall-clock lookup");
  conv->add_option("--base-seconds", cv.base_seconds, "wall-clock of earlier stages");
  conv->add_option("--run", cv.run_path)->required();
  conv->add_option("--qrels", cv.qrels)->required();
  conv->add_option("--queries", cv.queries)->required();
  conv->add_option("--collection", cv.collection)->required();
  conv->add_option("--vocab", cv.vocab)->required();
  conv->add_option("--depth", cv.depth, "rerank depth per evaluation");
  conv->add_flag("--f32", cv.f32);
  conv->add_option("--out", cv.out);
  conv->callback([&] {
    defer([&]() -> dr_status {
      dr_convergence_params p{cv.model_id.c_str(),
                              cv.ckpt_prefix.c_str(),
                              cv.marks.data(),
                              cv.marks.size(),
                              cv.stage_log.c_str(),
                              cv.base_seconds,
                              cv.run_path.c_str(),
                              cv.qrels.c_str(),
                              cv.queries.c_str(),
                              cv.collection.c_str(),
                              cv.vocab.c_str(),
                              cv.depth,
                              cv.f32 ? 1 : 0,
                              cv.out.c_str()};
      return dr_report_convergence(&p);
    });
  });

  auto* cost = rpt->add_subcommand("training-cost",
                                   "first mark within tau of the teacher, per-example cost");
  struct {
    std::vector<std::string> curves;
    double reference = 0, tau = 0.05;
    std::string out = "training-cost.csv";
  } tc;
  cost->add_option("--curve", tc.curves, "label=convergence.csv (repeatable)")->required();
  cost->add_option("--teacher-mrr", tc.reference, "teacher reference MRR@10")->required();
  cost->add_option("--tau", tc.tau, "relative closeness threshold");
  cost->add_option("--out", tc.out);
  cost->callback([&] {
    defer([&]() -> dr_status {
      std::vector<std::string> labels, files;
      for (const auto& spec : tc.curves) {
        const size_t eq = spec.find('=');
        if (eq == std::string::npos) {
          std::fprintf(stderr, "error: param: --curve expects label=csv, got '%s'\n",
                       spec.c_str());
          return DR_ERR_PARAM;
        }
        labels.push_back(spec.substr(0, eq));
        files.push_back(spec.substr(eq + 1));
      }
      std::vector<const char*> label_ptrs, file_ptrs;
      for (auto& l : labels) label_ptrs.push_back(l.c_str());
      for (auto& f : files) file_ptrs.push_back(f.c_str());
      dr_cost_params p{label_ptrs.data(), file_ptrs.data(), label_ptrs.size(),
                       tc.reference,      tc.tau,           tc.out.c_str()};
      return dr_report_training_cost(&p);
    });
  });

  auto* lineage = rpt->add_subcommand("lineage", "print a checkpoint's stage history");
  static std::string lineage_model;
  lineage->add_option("--model", lineage_model)->required();
  lineage->callback([&] {
    defer([&]() -> dr_status {
      dr_model* model = nullptr;
      dr_status s = dr_model_open(lineage_model.c_str(), &model);
      if (s != DR_OK) {
        exit_code = fail_artifact(s, "pretrain/finetune/pipeline");
        return DR_OK;
      }
      ModelHandle mh(model);
      char buffer[2048];
      s = dr_model_meta(mh.get(), buffer, sizeof(buffer));
      if (s != DR_OK) return s;
      std::fputs(buffer, stdout);
      return DR_OK;
    });
  });

  CLI11_PARSE(app, argc, argv);

  try {
    DirLock lock(out_dir);
    dr_set_threads(threads);
    if (!out_dir.empty()) {
      std::ofstream echo(out_dir + "/effective-config.ini", std::ios::trunc);
      echo << app.config_to_str(true, false);
    }
    if (action) action();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }
  return exit_code;
}
