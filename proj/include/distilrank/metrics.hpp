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

#ifndef DISTILRANK_METRICS_HPP
#define DISTILRANK_METRICS_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "distilrank/io.hpp"

namespace distilrank {
namespace metrics {

// Per-query values plus their arithmetic mean. Queries present in the run
// but missing from the qrels are excluded and reported.
struct MetricReport {
  std::string metric;
  std::vector<std::pair<std::string, double>> per_query;  // ascending query id
  double aggregate = 0.0;
  std::vector<std::string> skipped_queries;
};

using PairScorer = std::function<double(const std::string& query_id, const std::string& doc_id)>;

// Rescores the top-`depth` entries of each query and reorders them by the
// new score (stable for ties, so an identity scorer reproduces the input
// exactly). Entries beyond the depth keep first-stage order; their scores
// are remapped below the rescored head only when needed to keep the run
// score-monotone.
RankedRun rerank_at_depth(const RankedRun& first_stage, const PairScorer& scorer, int64_t depth);

MetricReport mrr_at_k(const RankedRun& run, const Qrels& qrels, int64_t k, int min_grade = 1);
MetricReport mrr(const RankedRun& run, const Qrels& qrels, int min_grade = 1);
MetricReport ndcg_at_10(const RankedRun& run, const Qrels& qrels);
MetricReport map_at_1000(const RankedRun& run, const Qrels& qrels, int min_grade = 1);

// CSV: `query_id,metric,value` rows plus one `all,<metric>,<mean>` row per
// report.
void write_metric_csv(const std::vector<MetricReport>& reports, const std::string& path);

// ---------------------------------------------------------------------------
// non-inferiority (one-sided paired t-test)

enum class MarginMode { Relative, Absolute };

struct NonInferiorityResult {
  bool non_inferior = false;
  double ci_lower = 0.0;   // one-sided lower confidence bound on mean(B - A)
  double statistic = 0.0;  // t statistic of H0: mean(B - A) <= -delta
  double delta = 0.0;      // the margin actually applied
  MarginMode mode = MarginMode::Relative;
  int64_t n = 0;
};

// Tests H0: mean(candidate - baseline) <= -delta at the given alpha, where
// delta = margin * mean(baseline) in relative mode or the margin itself in
// absolute mode. Zero-variance differences degenerate to the mean check.
NonInferiorityResult non_inferiority_test(std::span<const double> baseline,
                                          std::span<const double> candidate, double margin = 0.03,
                                          double alpha = 0.05,
                                          MarginMode mode = MarginMode::Relative);

// One-line structured record: non_inferior,ci_lower,delta,margin_mode.
std::string format_decision(const NonInferiorityResult& r);

// Quantile of Student's t distribution (used for the confidence bound).
double student_t_quantile(double p, int64_t df);

}  // namespace metrics
}  // namespace distilrank

#endif  // DISTILRANK_METRICS_HPP
