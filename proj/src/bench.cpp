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

#include "distilrank/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "distilrank/errors.hpp"
#include "distilrank/parallel.hpp"

namespace distilrank {
namespace bench {

namespace {

using Clock = std::chrono::steady_clock;

struct ThreadsGuard {
  int saved;
  explicit ThreadsGuard(int n) : saved(threads()) { set_threads(n); }
  ~ThreadsGuard() { set_threads(saved); }
};

BatchInput pack_chunk(const QueryCandidates& q, int64_t lo, int64_t hi) {
  BatchInput batch;
  for (int64_t i = lo; i < hi; ++i) batch.add(q.candidates[static_cast<size_t>(i)]);
  return batch;
}

}  // namespace

std::string hardware_descriptor() {
  std::string model = "unknown-cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      size_t colon = line.find(':');
      if (colon != std::string::npos) {
        model = line.substr(colon + 1);
        size_t b = model.find_first_not_of(' ');
        if (b != std::string::npos) model = model.substr(b);
      }
      break;
    }
  }
  return model + " x" + std::to_string(std::thread::hardware_concurrency());
}

LatencyReport measure_latency(const Checkpoint& model, const std::string& model_id,
                              const std::vector<QueryCandidates>& queries, int64_t depth,
                              const LatencyProtocol& protocol) {
  if (queries.empty()) throw ParamError("measure_latency: need at least one query");
  if (depth < 1) throw ParamError("measure_latency: depth must be >= 1");
  if (protocol.batch_sizes.empty()) throw ParamError("measure_latency: no batch sizes");
  if (protocol.timed_queries < 1) throw ParamError("measure_latency: timed_queries must be >= 1");
  for (const auto& q : queries)
    if (static_cast<int64_t>(q.candidates.size()) < depth)
      throw ParamError("measure_latency: a query has fewer than depth candidates");

  ThreadsGuard guard(protocol.threads);
  InferenceEngine engine(model, protocol.precision);

  LatencyReport report;
  report.model_id = model_id;
  report.depth = depth;
  report.seq_len = model.config.max_seq_len;
  report.precision = precision_name(protocol.precision);
  report.threads = protocol.threads;
  report.warmup_queries = protocol.warmup_queries;
  report.timed_queries = protocol.timed_queries;
  report.hardware = hardware_descriptor();

  std::vector<double> scores(static_cast<size_t>(depth));
  std::vector<std::pair<double, const std::string*>> order(static_cast<size_t>(depth));

  // One query pass: score `depth` candidates in batch_size chunks, then sort.
  auto run_query = [&](const QueryCandidates& q, int64_t batch_size) {
    int64_t done = 0;
    while (done < depth) {
      const int64_t take = std::min<int64_t>(batch_size, depth - done);
      BatchInput batch = pack_chunk(q, done, done + take);
      engine.rank_scores(batch,
                         std::span<double>(scores.data() + done, static_cast<size_t>(take)));
      done += take;
    }
    for (int64_t i = 0; i < depth; ++i)
      order[static_cast<size_t>(i)] = {scores[static_cast<size_t>(i)],
                                       &q.doc_ids[static_cast<size_t>(i)]};
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return *a.second < *b.second;
    });
  };

  for (int64_t w = 0; w < protocol.warmup_queries; ++w)
    run_query(queries[static_cast<size_t>(w % queries.size())], protocol.batch_sizes.front());

  for (int64_t bs : protocol.batch_sizes) {
    double total = 0.0;
    for (int64_t t = 0; t < protocol.timed_queries; ++t) {
      const auto& q = queries[static_cast<size_t>(t % queries.size())];
      const auto t0 = Clock::now();
      run_query(q, bs);
      total += std::chrono::duration<double>(Clock::now() - t0).count();
    }
    report.per_batch.push_back({bs, total / static_cast<double>(protocol.timed_queries)});
  }

  const auto best = std::min_element(
      report.per_batch.begin(), report.per_batch.end(),
      [](const BatchMeasurement& a, const BatchMeasurement& b) {
        return a.sec_per_query < b.sec_per_query;
      });
  report.best_batch_size = best->batch_size;
  report.best_latency = best->sec_per_query;
  return report;
}

void apply_baseline(LatencyReport& report, const LatencyReport& baseline) {
  report.baseline_id = baseline.model_id;
  report.speedup = baseline.best_latency / report.best_latency;
}

void write_latency_csv(const std::vector<LatencyReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write latency csv: " + path);
  if (!reports.empty()) {
    const auto& r = reports.front();
    out << "# hardware: " << r.hardware << "\n";
    out << "# precision: " << r.precision << ", threads: " << r.threads << ", seq_len: "
        << r.seq_len << "\n";
    out << "# warmup_queries: " << r.warmup_queries << ", timed_queries: " << r.timed_queries
        << "\n";
  }
  out << "model,depth,batch_size,sec_per_query\n";
  char buf[64];
  for (const auto& r : reports) {
    for (const auto& m : r.per_batch) {
      std::snprintf(buf, sizeof(buf), "%.6f", m.sec_per_query);
      out << r.model_id << "," << r.depth << "," << m.batch_size << "," << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%.6f", r.best_latency);
    out << r.model_id << "," << r.depth << ",best:" << r.best_batch_size << "," << buf << "\n";
    if (!r.baseline_id.empty()) {
      std::snprintf(buf, sizeof(buf), "%.4f", r.speedup);
      out << r.model_id << "," << r.depth << ",speedup_vs_" << r.baseline_id << "," << buf
          << "\n";
    }
  }
  if (!out) throw IoError("failed writing latency csv: " + path);
}

// ---------------------------------------------------------------------------
// convergence

namespace {

// Cumulative wall-clock at the last log row with examples_seen <= mark.
double wall_at_mark(const std::string& csv_path, int64_t mark) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open stage log: " + csv_path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::vector<std::string> cols;
  std::string col;
  while (std::getline(hs, col, ',')) cols.push_back(col);
  int examples_col = -1, wall_col = -1;
  for (size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] == "examples_seen") examples_col = static_cast<int>(i);
    if (cols[i] == "wall_clock_seconds") wall_col = static_cast<int>(i);
  }
  if (examples_col < 0 || wall_col < 0)
    throw FormatError("stage log lacks examples_seen/wall_clock_seconds: " + csv_path);
  double best = 0.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    while (std::getline(ls, col, ',')) fields.push_back(col);
    const int64_t ex = std::stoll(fields[static_cast<size_t>(examples_col)]);
    const double wall = std::stod(fields[static_cast<size_t>(wall_col)]);
    if (ex <= mark) best = wall;
  }
  return best;
}

}  // namespace

ConvergenceCurve convergence_track(const ConvergenceInputs& in) {
  if (!in.first_stage || !in.qrels) throw ParamError("convergence_track: run and qrels required");
  ConvergenceCurve curve;
  curve.model_id = in.model_id;
  for (int64_t mark : in.marks) {
    const std::string path = in.ckpt_prefix + ".at" + std::to_string(mark) + ".ckpt";
    std::ifstream probe(path);
    if (!probe.good()) {
      curve.points.push_back({mark, 0.0, 0.0, /*missing=*/true});
      continue;
    }
    probe.close();
    Checkpoint ckpt = load_checkpoint(path);
    InferenceEngine engine(ckpt, in.precision);
    RankedRun reranked =
        rerank_with_model(engine, *in.first_stage, in.depth, in.rerank, in.model_id);
    const auto report = metrics::mrr_at_k(reranked, *in.qrels, 10);
    const double wall =
        in.stage_log_csv.empty() ? 0.0 : wall_at_mark(in.stage_log_csv, mark) + in.base_seconds;
    curve.points.push_back({mark, report.aggregate, wall, false});
  }
  return curve;
}

void write_convergence_csv(const ConvergenceCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write convergence csv: " + path);
  out << "# model: " << curve.model_id << "\n";
  out << "examples_seen,mrr_at_10,wall_clock_training_seconds\n";
  char buf[96];
  for (const auto& p : curve.points) {
    if (p.missing) {
      out << "# missing checkpoint at mark " << p.examples_seen << "\n";
      continue;
    }
    std::snprintf(buf, sizeof(buf), "%lld,%.10f,%.6f", static_cast<long long>(p.examples_seen),
                  p.mrr_at_10, p.wall_clock_seconds);
    out << buf << "\n";
  }
  if (!out) throw IoError("failed writing convergence csv: " + path);
}

ConvergenceCurve load_convergence_csv(const std::string& model_id, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open convergence csv: " + path);
  ConvergenceCurve curve;
  curve.model_id = model_id;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("examples_seen", 0) == 0) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c, ','))
      throw FormatError("malformed convergence row: " + line);
    curve.points.push_back({std::stoll(a), std::stod(b), std::stod(c), false});
  }
  return curve;
}

// ---------------------------------------------------------------------------
// training cost

TrainingCostReport training_cost_report(const std::vector<ConvergenceCurve>& curves,
                                        double teacher_reference_mrr, double tau) {
  if (teacher_reference_mrr <= 0)
    throw ParamError("training_cost_report: teacher reference must be positive");
  TrainingCostReport report;
  report.teacher_reference = teacher_reference_mrr;
  report.tau = tau;
  const double threshold = (1.0 - tau) * teacher_reference_mrr;
  for (const auto& curve : curves) {
    CostEntry e;
    e.pipeline = curve.model_id;
    for (const auto& p : curve.points) {
      if (p.missing) continue;
      if (!e.reached && p.mrr_at_10 >= threshold) {
        e.reached = true;
        e.first_mark = p.examples_seen;
        e.seconds_to_reach = p.wall_clock_seconds;
      }
    }
    for (auto it = curve.points.rbegin(); it != curve.points.rend(); ++it) {
      if (!it->missing && it->examples_seen > 0) {
        e.sec_per_example = it->wall_clock_seconds / static_cast<double>(it->examples_seen);
        break;
      }
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

void write_training_cost_csv(const TrainingCostReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training cost csv: " + path);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "# teacher_reference_mrr_at_10: %.10f, tau: %.4f",
                report.teacher_reference, report.tau);
  out << buf << "\n";
  out << "pipeline,reached,first_mark,seconds_to_reach,sec_per_example\n";
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%lld,%.6f,%.8f", e.pipeline.c_str(),
                  e.reached ? "true" : "not_reached", static_cast<long long>(e.first_mark),
                  e.seconds_to_reach, e.sec_per_example);
    out << buf << "\n";
  }
  if (!out) throw IoError("failed writing training cost csv: " + path);
}

double seconds_per_example_from_log(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open stage log: " + csv_path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::vector<std::string> cols;
  std::string col;
  while (std::getline(hs, col, ',')) cols.push_back(col);
  int examples_col = -1, wall_col = -1;
  for (size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] == "examples_seen") examples_col = static_cast<int>(i);
    if (cols[i] == "wall_clock_seconds") wall_col = static_cast<int>(i);
  }
  if (examples_col < 0 || wall_col < 0)
    throw FormatError("stage log lacks examples_seen/wall_clock_seconds: " + csv_path);
  int64_t last_examples = 0;
  double last_wall = 0.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    while (std::getline(ls, col, ',')) fields.push_back(col);
    last_examples = std::stoll(fields[static_cast<size_t>(examples_col)]);
    last_wall = std::stod(fields[static_cast<size_t>(wall_col)]);
  }
  if (last_examples <= 0) throw FormatError("stage log has no rows: " + csv_path);
  return last_wall / static_cast<double>(last_examples);
}

}  // namespace bench
}  // namespace distilrank
