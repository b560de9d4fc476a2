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

#include "distilrank/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "distilrank/errors.hpp"
#include "distilrank/optim.hpp"
#include "distilrank/rng.hpp"

namespace distilrank {
namespace distill {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Row-keep vector for attention tensors ([B*H*S, S]): row (b,h,s) counts
// only when position s of item b is unmasked.
std::vector<uint8_t> attention_row_keep(const BatchInput& in, int64_t heads) {
  std::vector<uint8_t> keep(static_cast<size_t>(in.batch * heads * in.seq));
  for (int64_t b = 0; b < in.batch; ++b)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t s = 0; s < in.seq; ++s)
        keep[static_cast<size_t>((b * heads + h) * in.seq + s)] =
            in.mask[static_cast<size_t>(b * in.seq + s)];
  return keep;
}

std::vector<uint8_t> hidden_row_keep(const BatchInput& in) {
  return in.mask;  // hidden states are [B*S, hid]; keep unmasked positions
}

Tensor scaled_sum(std::vector<Tensor> terms) {
  Tensor total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

void LayerMap::validate(int64_t student_layers, int64_t teacher_layers) const {
  if (static_cast<int64_t>(teacher_layer.size()) != student_layers)
    throw ParamError("layer map: expected one teacher layer per student layer");
  int64_t prev = 0;
  for (int64_t t : teacher_layer) {
    if (t <= prev || t > teacher_layers)
      throw ParamError("layer map: teacher indices must be strictly increasing within [1, " +
                       std::to_string(teacher_layers) + "]");
    prev = t;
  }
  if (!teacher_layer.empty() && teacher_layer.back() != teacher_layers)
    throw ParamError("layer map: the last student layer must map to the last teacher layer");
}

LayerMap uniform_layer_map(int64_t student_layers, int64_t teacher_layers) {
  if (student_layers < 1 || teacher_layers < 1)
    throw ParamError("uniform_layer_map: layer counts must be >= 1");
  if (student_layers > teacher_layers)
    throw ParamError("uniform_layer_map: student has more layers (" +
                     std::to_string(student_layers) + ") than teacher (" +
                     std::to_string(teacher_layers) + ")");
  if (teacher_layers % student_layers != 0)
    throw ParamError("uniform_layer_map: " + std::to_string(teacher_layers) +
                     " teacher layers not divisible by " + std::to_string(student_layers) +
                     " student layers; provide an explicit map");
  LayerMap map;
  const int64_t stride = teacher_layers / student_layers;
  for (int64_t m = 1; m <= student_layers; ++m) map.teacher_layer.push_back(m * stride);
  return map;
}

Tensor attention_distill_loss(const BatchTrace& student, const BatchTrace& teacher,
                              const LayerMap& map, const BatchInput& inputs, int64_t num_heads) {
  if (student.seq != teacher.seq)
    throw ShapeError("attention distill: sequence lengths differ");
  if (student.attn.empty() || teacher.attn.empty())
    throw ShapeError("attention distill: traces carry no attention");
  if (student.attn[0].shape() != teacher.attn[0].shape())
    throw ShapeError("attention distill: head counts differ between student " +
                     shape_str(student.attn[0].shape()) + " and teacher " +
                     shape_str(teacher.attn[0].shape()));
  map.validate(static_cast<int64_t>(student.attn.size()),
               static_cast<int64_t>(teacher.attn.size()));
  const auto keep = attention_row_keep(inputs, num_heads);
  std::vector<Tensor> terms;
  for (int64_t m = 0; m < map.student_layers(); ++m) {
    const int64_t t = map.teacher_layer[static_cast<size_t>(m)] - 1;
    terms.push_back(masked_row_mse(student.attn[static_cast<size_t>(m)],
                                   teacher.attn[static_cast<size_t>(t)], keep));
  }
  return scaled_sum(std::move(terms));
}

Tensor hidden_distill_loss(const BatchTrace& student, const BatchTrace& teacher,
                           const LayerMap& map, const BatchInput& inputs,
                           const std::optional<Tensor>& projection) {
  const int64_t sd = student.hidden[0].cols(), td = teacher.hidden[0].cols();
  if (sd != td && !projection.has_value())
    throw StateError("hidden distill: dimensions differ (" + std::to_string(sd) + " vs " +
                     std::to_string(td) + ") but no projection was configured");
  if (sd == td && projection.has_value())
    throw StateError("hidden distill: projection given although dimensions match");
  if (projection &&
      (projection->rows() != sd || projection->cols() != td))
    throw ShapeError("hidden distill: projection shape " + shape_str(projection->shape()) +
                     " does not map " + std::to_string(sd) + " -> " + std::to_string(td));
  map.validate(static_cast<int64_t>(student.hidden.size()) - 1,
               static_cast<int64_t>(teacher.hidden.size()) - 1);
  const auto keep = hidden_row_keep(inputs);
  auto project = [&](const Tensor& h) { return projection ? matmul(h, *projection) : h; };
  std::vector<Tensor> terms;
  terms.push_back(masked_row_mse(project(student.hidden[0]), teacher.hidden[0], keep));
  for (int64_t m = 1; m <= map.student_layers(); ++m) {
    const int64_t t = map.teacher_layer[static_cast<size_t>(m - 1)];
    terms.push_back(masked_row_mse(project(student.hidden[static_cast<size_t>(m)]),
                                   teacher.hidden[static_cast<size_t>(t)], keep));
  }
  return scaled_sum(std::move(terms));
}

Tensor output_distill_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                           double temperature) {
  if (temperature <= 0) throw ParamError("output distill: temperature must be positive");
  if (student_logits.shape() != teacher_logits.shape())
    throw ShapeError("output distill: logit shapes differ, " + shape_str(student_logits.shape()) +
                     " vs " + shape_str(teacher_logits.shape()));
  const double inv_t = 1.0 / temperature;
  Tensor p, q;
  if (student_logits.cols() == 1) {
    // Two-class distribution {relevant, not relevant} from a single logit.
    Tensor pt = sigmoid(scale(teacher_logits, inv_t));
    Tensor ps = sigmoid(scale(student_logits, inv_t));
    p = concat_cols(pt, affine(pt, -1.0, 1.0));
    q = concat_cols(ps, affine(ps, -1.0, 1.0));
  } else {
    p = softmax_rows(scale(teacher_logits, inv_t));
    q = softmax_rows(scale(student_logits, inv_t));
  }
  return scale(kl_div_rows(p, q), temperature * temperature);
}

void DistillLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write distill log: " + path);
  out << "stage,examples_seen,attn_loss,hidden_loss,output_loss,total_loss,wall_clock_seconds\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%.8f,%.8f,%.8f,%.8f,%.6f", r.stage.c_str(),
                  static_cast<long long>(r.examples_seen), r.attn_loss, r.hidden_loss,
                  r.output_loss, r.total_loss, r.wall_clock_seconds);
    out << buf << "\n";
  }
  if (!out) throw IoError("failed writing distill log: " + path);
}

void DistillLog::append_csv(const std::string& path) const {
  std::ifstream probe(path);
  const bool fresh = !probe.good();
  probe.close();
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append distill log: " + path);
  if (fresh)
    out << "stage,examples_seen,attn_loss,hidden_loss,output_loss,total_loss,wall_clock_seconds\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%.8f,%.8f,%.8f,%.8f,%.6f", r.stage.c_str(),
                  static_cast<long long>(r.examples_seen), r.attn_loss, r.hidden_loss,
                  r.output_loss, r.total_loss, r.wall_clock_seconds);
    out << buf << "\n";
  }
}

namespace {

void check_student_compat(const Checkpoint& teacher, const EncoderConfig& student) {
  student.validate();
  if (student.num_layers > teacher.config.num_layers)
    throw ParamError("distill: teacher (" + std::to_string(teacher.config.num_layers) +
                     " layers) is shallower than the student (" +
                     std::to_string(student.num_layers) + ")");
  if (student.num_heads != teacher.config.num_heads)
    throw ShapeError("distill: attention matching needs equal head counts (student " +
                     std::to_string(student.num_heads) + ", teacher " +
                     std::to_string(teacher.config.num_heads) + ")");
  if (student.vocab_size != teacher.config.vocab_size)
    throw ParamError("distill: student and teacher must share the vocabulary");
  if (student.max_seq_len != teacher.config.max_seq_len)
    throw ParamError("distill: student and teacher must share max_seq_len");
}

LayerMap resolve_map(const DistillOptions& options, int64_t student_layers,
                     int64_t teacher_layers) {
  if (options.layer_map) {
    options.layer_map->validate(student_layers, teacher_layers);
    return *options.layer_map;
  }
  return uniform_layer_map(student_layers, teacher_layers);
}

std::optional<Tensor> make_projection(const EncoderConfig& student, const EncoderConfig& teacher,
                                      uint64_t seed) {
  if (student.hidden_dim == teacher.hidden_dim) return std::nullopt;
  Rng rng(seed ^ 0x70726f6aull);
  Tensor p = Tensor::zeros({student.hidden_dim, teacher.hidden_dim}, /*requires_grad=*/true);
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(student.hidden_dim));
  for (double& v : p.mutable_data()) v = rng.next_normal() * std_dev;
  return p;
}

void check_weights(const LossWeights& w) {
  if (w.attention < 0 || w.hidden < 0 || w.output < 0)
    throw ParamError("distill: loss weights must be >= 0");
  if (w.attention == 0 && w.hidden == 0 && w.output == 0)
    throw ParamError("distill: at least one loss weight must be positive");
}

}  // namespace

Checkpoint lm_distill(const Checkpoint& teacher, const EncoderConfig& student_config,
                      const std::vector<DocRecord>& corpus, const Vocabulary& vocab,
                      const train::TrainSchedule& schedule, const DistillOptions& options,
                      DistillLog* log, const train::CheckpointSink& sink) {
  schedule.validate();
  check_weights(options.weights);
  if (teacher.meta.stage != "pretrained")
    throw StateError("lm_distill: teacher stage must be 'pretrained', got '" +
                     teacher.meta.stage + "'");
  if (corpus.empty()) throw ParamError("lm_distill: corpus is empty");
  check_student_compat(teacher, student_config);
  const LayerMap map =
      resolve_map(options, student_config.num_layers, teacher.config.num_layers);

  Checkpoint student = Checkpoint::init(student_config, schedule.seed);
  student.meta.stage = "lm-distilled";
  student.meta.lineage = train::extend_lineage(student.meta.lineage, "lm-distilled");
  student.set_requires_grad(true);
  std::optional<Tensor> projection =
      make_projection(student_config, teacher.config, schedule.seed);

  std::vector<Tensor> trainables = student.trainable();
  if (projection) trainables.push_back(*projection);
  Optimizer opt({OptimizerKind::Adam, schedule.lr, schedule.weight_decay}, trainables);

  std::vector<std::vector<int64_t>> docs;
  for (const auto& d : corpus) {
    auto ids = tokenize(d.text, vocab, student_config.max_seq_len - 2);
    if (static_cast<int64_t>(ids.size()) < 2) continue;
    docs.push_back(std::move(ids));
  }
  if (docs.empty()) throw ParamError("lm_distill: every corpus sequence was below 2 tokens");

  Rng rng(schedule.seed ^ 0x6c6dull);
  const auto t0 = Clock::now();
  int64_t seen = 0;
  size_t next_mark = 0;
  uint64_t epoch = 0;
  std::vector<size_t> order(docs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();

  while (seen < schedule.max_examples) {
    BatchInput batch;
    std::vector<int64_t> mlm_positions;
    const int64_t want = std::min<int64_t>(schedule.batch_size, schedule.max_examples - seen);
    for (int64_t b = 0; b < want; ++b) {
      if (cursor == order.size()) {
        Rng erng = rng.fork(++epoch);
        erng.shuffle(order);
        cursor = 0;
      }
      const auto& ids = docs[order[cursor++]];
      batch.add(build_single_input(ids, student_config.max_seq_len));
      if (options.match_mlm_output) {
        const int64_t len = static_cast<int64_t>(ids.size());
        const int64_t n = std::max<int64_t>(
            1, static_cast<int64_t>(std::llround(0.15 * static_cast<double>(len))));
        std::vector<int64_t> cand(static_cast<size_t>(len));
        for (int64_t i = 0; i < len; ++i) cand[static_cast<size_t>(i)] = 1 + i;
        rng.shuffle(cand);
        const int64_t row0 = (batch.batch - 1) * student_config.max_seq_len;
        for (int64_t i = 0; i < n; ++i) mlm_positions.push_back(row0 + cand[static_cast<size_t>(i)]);
      }
    }

    BatchTrace teacher_trace = encode_batch(teacher, batch);  // frozen, no graph
    BatchTrace student_trace = encode_batch(student, batch);
    Tensor attn = attention_distill_loss(student_trace, teacher_trace, map, batch,
                                         student_config.num_heads);
    Tensor hid = hidden_distill_loss(student_trace, teacher_trace, map, batch, projection);
    Tensor total = add(scale(attn, options.weights.attention), scale(hid, options.weights.hidden));
    double output_val = 0.0;
    if (options.match_mlm_output && options.weights.output > 0) {
      std::sort(mlm_positions.begin(), mlm_positions.end());
      Tensor t_logits = mlm_logits(teacher, teacher_trace, mlm_positions);
      Tensor s_logits = mlm_logits(student, student_trace, mlm_positions);
      Tensor out_loss = output_distill_loss(s_logits, t_logits, options.temperature);
      output_val = out_loss.item();
      total = add(total, scale(out_loss, options.weights.output));
    }
    opt.zero_grad();
    total.backward();
    opt.step();
    seen += batch.batch;
    if (log)
      log->rows.push_back({"lm-distill", seen, attn.item(), hid.item(), output_val, total.item(),
                           seconds_since(t0)});
    while (next_mark < schedule.checkpoint_marks.size() &&
           schedule.checkpoint_marks[next_mark] <= seen) {
      if (sink) {
        Checkpoint snap = student.clone();
        snap.meta.examples_seen = schedule.checkpoint_marks[next_mark];
        sink(schedule.checkpoint_marks[next_mark], snap);
      }
      ++next_mark;
    }
  }

  student.set_requires_grad(false);
  student.meta.examples_seen = seen;
  student.meta.seed = schedule.seed;
  return student;
}

Checkpoint ranker_distill(const Checkpoint& teacher_ranker, const Checkpoint& student_in,
                          const std::vector<TrainTriple>& triples, const Vocabulary& vocab,
                          const train::TrainSchedule& schedule, const DistillOptions& options,
                          DistillLog* log, const train::CheckpointSink& sink) {
  schedule.validate();
  check_weights(options.weights);
  if (teacher_ranker.meta.stage != "finetuned")
    throw StateError("ranker_distill: teacher stage must be 'finetuned', got '" +
                     teacher_ranker.meta.stage + "'");
  if (!teacher_ranker.has_rank_head())
    throw StateError("ranker_distill: teacher has no ranking head");
  if (student_in.meta.stage != "initialized" && student_in.meta.stage != "lm-distilled")
    throw StateError(
        "ranker_distill: student stage must be 'initialized' or 'lm-distilled', got '" +
        student_in.meta.stage + "'");
  check_student_compat(teacher_ranker, student_in.config);
  const LayerMap map =
      resolve_map(options, student_in.config.num_layers, teacher_ranker.config.num_layers);

  Checkpoint student = student_in.clone();
  student.add_rank_head(schedule.seed);
  student.meta.stage = "ranker-distilled";
  student.meta.lineage = train::extend_lineage(student_in.meta.lineage, "ranker-distilled");
  student.set_requires_grad(true);
  std::optional<Tensor> projection =
      make_projection(student.config, teacher_ranker.config, schedule.seed);

  std::vector<Tensor> trainables = student.trainable();
  if (projection) trainables.push_back(*projection);
  Optimizer opt({OptimizerKind::Adam, schedule.lr, schedule.weight_decay}, trainables);

  const EncoderConfig& config = student.config;
  std::vector<std::vector<int64_t>> query_ids(triples.size());
  std::vector<std::vector<int64_t>> passage_ids(triples.size() * 2);
  for (size_t t = 0; t < triples.size(); ++t) {
    query_ids[t] = tokenize(triples[t].query, vocab, config.max_seq_len);
    passage_ids[2 * t] = tokenize(triples[t].positive, vocab, config.max_seq_len);
    passage_ids[2 * t + 1] = tokenize(triples[t].negative, vocab, config.max_seq_len);
  }
  if (passage_ids.empty() && schedule.max_examples > 0)
    throw ParamError("ranker_distill: no triples given");

  Rng rng(schedule.seed ^ 0x726bull);
  const auto t0 = Clock::now();
  int64_t seen = 0;
  size_t next_mark = 0;
  uint64_t epoch = 0;
  std::vector<size_t> order(passage_ids.size());  // one example per (query, passage)
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();

  while (seen < schedule.max_examples) {
    BatchInput batch;
    const int64_t want = std::min<int64_t>(schedule.batch_size, schedule.max_examples - seen);
    for (int64_t b = 0; b < want; ++b) {
      if (cursor == order.size()) {
        Rng erng = rng.fork(++epoch);
        erng.shuffle(order);
        cursor = 0;
      }
      const size_t ex = order[cursor++];
      batch.add(build_pair_input(query_ids[ex / 2], passage_ids[ex], config.max_seq_len));
    }

    BatchTrace teacher_trace = encode_batch(teacher_ranker, batch);
    BatchTrace student_trace = encode_batch(student, batch);
    Tensor attn =
        attention_distill_loss(student_trace, teacher_trace, map, batch, config.num_heads);
    Tensor hid = hidden_distill_loss(student_trace, teacher_trace, map, batch, projection);
    Tensor out_loss = output_distill_loss(rank_logits(student, student_trace),
                                          rank_logits(teacher_ranker, teacher_trace),
                                          options.temperature);
    Tensor total = add(add(scale(attn, options.weights.attention),
                           scale(hid, options.weights.hidden)),
                       scale(out_loss, options.weights.output));
    opt.zero_grad();
    total.backward();
    opt.step();
    seen += batch.batch;
    if (log)
      log->rows.push_back({"ranker-distill", seen, attn.item(), hid.item(), out_loss.item(),
                           total.item(), seconds_since(t0)});
    while (next_mark < schedule.checkpoint_marks.size() &&
           schedule.checkpoint_marks[next_mark] <= seen) {
      if (sink) {
        Checkpoint snap = student.clone();
        snap.meta.examples_seen = schedule.checkpoint_marks[next_mark];
        sink(schedule.checkpoint_marks[next_mark], snap);
      }
      ++next_mark;
    }
  }

  student.set_requires_grad(false);
  student.meta.examples_seen = seen;
  return student;
}

const char* pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::RankerDistill: return "ranker-distill";
    case Pipeline::LMDistillFineTune: return "lm-distill+finetune";
    case Pipeline::LMDistillRankerDistill: return "lm-distill+ranker-distill";
  }
  return "?";
}

Pipeline pipeline_from_name(const std::string& name) {
  if (name == "ranker-distill") return Pipeline::RankerDistill;
  if (name == "lm-distill+finetune") return Pipeline::LMDistillFineTune;
  if (name == "lm-distill+ranker-distill") return Pipeline::LMDistillRankerDistill;
  throw ParamError("unknown pipeline '" + name +
                   "' (expected ranker-distill | lm-distill+finetune | "
                   "lm-distill+ranker-distill)");
}

PipelineResult run_pipeline(const DistillRecipe& recipe, const Checkpoint* teacher_lm,
                            const Checkpoint* teacher_ranker, const PipelineData& data,
                            const std::string& out_prefix) {
  if (!data.vocab) throw ParamError("run_pipeline: vocabulary required");
  const bool needs_lm = recipe.pipeline != Pipeline::RankerDistill;
  const bool needs_ranker = recipe.pipeline != Pipeline::LMDistillFineTune;
  if (needs_lm && (!teacher_lm || !data.corpus))
    throw ParamError("run_pipeline: pipeline needs a pretrained teacher LM and a corpus");
  if (needs_ranker && !teacher_ranker)
    throw ParamError("run_pipeline: pipeline needs a fine-tuned teacher ranker");
  if (!data.triples) throw ParamError("run_pipeline: training triples required");

  PipelineResult result;
  const std::string log_path = out_prefix.empty() ? "" : out_prefix + ".log.csv";

  auto save_stage = [&](const Checkpoint& ckpt, const std::string& stage) {
    if (out_prefix.empty()) return;
    const std::string path = out_prefix + "." + stage + ".ckpt";
    save_checkpoint(ckpt, path);
    result.stage_files.emplace_back(stage, path);
  };
  auto mark_sink = [&](const std::string& stage) -> train::CheckpointSink {
    if (out_prefix.empty()) return {};
    return [&, stage](int64_t mark, const Checkpoint& snap) {
      save_checkpoint(snap, out_prefix + "." + stage + ".at" + std::to_string(mark) + ".ckpt");
    };
  };
  auto run_stage = [&](const char* stage, auto fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.code(), std::string("pipeline stage '") + stage + "': " + e.what());
    }
  };

  switch (recipe.pipeline) {
    case Pipeline::RankerDistill: {
      DistillLog log;
      Checkpoint student = run_stage("ranker-distill", [&] {
        Checkpoint fresh = Checkpoint::init(recipe.student_config, recipe.rank_schedule.seed);
        return ranker_distill(*teacher_ranker, fresh, *data.triples, *data.vocab,
                              recipe.rank_schedule, recipe.options, &log,
                              mark_sink("ranker-distill"));
      });
      if (!log_path.empty()) log.append_csv(log_path);
      save_stage(student, "ranker-distill");
      result.final_model = std::move(student);
      break;
    }
    case Pipeline::LMDistillFineTune: {
      DistillLog lm_log;
      Checkpoint lm = run_stage("lm-distill", [&] {
        return lm_distill(*teacher_lm, recipe.student_config, *data.corpus, *data.vocab,
                          recipe.lm_schedule, recipe.options, &lm_log, mark_sink("lm-distill"));
      });
      if (!log_path.empty()) lm_log.append_csv(log_path);
      save_stage(lm, "lm-distill");
      train::TrainLog ft_log;
      Checkpoint tuned = run_stage("finetune", [&] {
        return train::finetune_ranker(lm, *data.triples, *data.vocab, recipe.rank_schedule,
                                      &ft_log, mark_sink("finetune"));
      });
      if (!out_prefix.empty()) ft_log.write_csv(out_prefix + ".finetune.log.csv");
      save_stage(tuned, "finetune");
      result.final_model = std::move(tuned);
      break;
    }
    case Pipeline::LMDistillRankerDistill: {
      DistillLog lm_log;
      Checkpoint lm = run_stage("lm-distill", [&] {
        return lm_distill(*teacher_lm, recipe.student_config, *data.corpus, *data.vocab,
                          recipe.lm_schedule, recipe.options, &lm_log, mark_sink("lm-distill"));
      });
      if (!log_path.empty()) lm_log.append_csv(log_path);
      save_stage(lm, "lm-distill");
      DistillLog rd_log;
      Checkpoint student = run_stage("ranker-distill", [&] {
        return ranker_distill(*teacher_ranker, lm, *data.triples, *data.vocab,
                              recipe.rank_schedule, recipe.options, &rd_log,
                              mark_sink("ranker-distill"));
      });
      if (!log_path.empty()) rd_log.append_csv(log_path);
      save_stage(student, "ranker-distill");
      result.final_model = std::move(student);
      break;
    }
  }
  if (!out_prefix.empty()) {
    const std::string final_path = out_prefix + ".final.ckpt";
    save_checkpoint(result.final_model, final_path);
    result.stage_files.emplace_back("final", final_path);
  }
  return result;
}

}  // namespace distill
}  // namespace distilrank
