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

#include "distilrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "distilrank/errors.hpp"

namespace distilrank {
namespace metrics {

namespace {

// Walks the run; for each query judged in the qrels computes fn(entries,
// judged), collecting everything into a report.
template <class Fn>
MetricReport per_query_metric(const std::string& name, const RankedRun& run, const Qrels& qrels,
                              Fn fn) {
  MetricReport report;
  report.metric = name;
  double sum = 0.0;
  for (const auto& [qid, entries] : run.queries) {
    auto judged = qrels.grades.find(qid);
    if (judged == qrels.grades.end()) {
      report.skipped_queries.push_back(qid);
      continue;
    }
    const double value = fn(entries, judged->second);
    report.per_query.emplace_back(qid, value);
    sum += value;
  }
  report.aggregate = report.per_query.empty()
                         ? 0.0
                         : sum / static_cast<double>(report.per_query.size());
  return report;
}

}  // namespace

RankedRun rerank_at_depth(const RankedRun& first_stage, const PairScorer& scorer, int64_t depth) {
  if (depth < 1) throw ParamError("rerank_at_depth: depth must be >= 1");
  RankedRun out;
  out.tag = first_stage.tag;
  for (const auto& [qid, entries] : first_stage.queries) {
    const size_t head_n = std::min<size_t>(entries.size(), static_cast<size_t>(depth));
    std::vector<RunEntry> head(entries.begin(), entries.begin() + static_cast<long>(head_n));
    for (auto& e : head) {
      try {
        e.score = scorer(qid, e.doc_id);
      } catch (const Error& err) {
        throw Error(err.code(), "rerank_at_depth: scorer failed on query '" + qid + "' doc '" +
                                    e.doc_id + "': " + err.what());
      }
    }
    // Stable: equal scores keep first-stage relative order, which makes the
    // identity scorer an exact identity.
    std::stable_sort(head.begin(), head.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.score > b.score; });
    std::vector<RunEntry> full = std::move(head);
    if (head_n < entries.size()) {
      const double head_min = full.empty() ? 0.0 : full.back().score;
      const bool tail_fits = entries[head_n].score <= head_min;
      for (size_t i = head_n; i < entries.size(); ++i) {
        RunEntry e = entries[i];
        if (!tail_fits) e.score = head_min - 1.0 - static_cast<double>(i - head_n);
        full.push_back(e);
      }
    }
    out.queries[qid] = std::move(full);
  }
  return out;
}

MetricReport mrr_at_k(const RankedRun& run, const Qrels& qrels, int64_t k, int min_grade) {
  if (k < 1) throw ParamError("mrr_at_k: k must be >= 1");
  if (min_grade < 1) throw ParamError("mrr_at_k: min_grade must be >= 1");
  const std::string name = "mrr@" + std::to_string(k);
  return per_query_metric(name, run, qrels,
                          [&](const std::vector<RunEntry>& entries,
                              const std::map<std::string, int>& judged) {
                            const size_t limit =
                                std::min<size_t>(entries.size(), static_cast<size_t>(k));
                            for (size_t i = 0; i < limit; ++i) {
                              auto it = judged.find(entries[i].doc_id);
                              if (it != judged.end() && it->second >= min_grade)
                                return 1.0 / static_cast<double>(i + 1);
                            }
                            return 0.0;
                          });
}

MetricReport mrr(const RankedRun& run, const Qrels& qrels, int min_grade) {
  MetricReport r = mrr_at_k(run, qrels, std::numeric_limits<int64_t>::max(), min_grade);
  r.metric = "mrr";
  return r;
}

MetricReport ndcg_at_10(const RankedRun& run, const Qrels& qrels) {
  constexpr size_t kDepth = 10;
  auto gain = [](int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; };
  auto discount = [](size_t rank1) { return 1.0 / std::log2(static_cast<double>(rank1) + 1.0); };
  return per_query_metric(
      "ndcg@10", run, qrels,
      [&](const std::vector<RunEntry>& entries, const std::map<std::string, int>& judged) {
        double dcg = 0.0;
        const size_t limit = std::min(entries.size(), kDepth);
        for (size_t i = 0; i < limit; ++i) {
          auto it = judged.find(entries[i].doc_id);
          if (it != judged.end() && it->second > 0) dcg += gain(it->second) * discount(i + 1);
        }
        std::vector<int> grades;
        for (const auto& [did, g] : judged)
          if (g > 0) grades.push_back(g);
        std::sort(grades.begin(), grades.end(), std::greater<int>());
        double ideal = 0.0;
        for (size_t i = 0; i < grades.size() && i < kDepth; ++i)
          ideal += gain(grades[i]) * discount(i + 1);
        return ideal > 0.0 ? dcg / ideal : 0.0;
      });
}

MetricReport map_at_1000(const RankedRun& run, const Qrels& qrels, int min_grade) {
  constexpr size_t kDepth = 1000;
  if (min_grade < 1) throw ParamError("map_at_1000: min_grade must be >= 1");
  return per_query_metric(
      "map@1000", run, qrels,
      [&](const std::vector<RunEntry>& entries, const std::map<std::string, int>& judged) {
        int64_t total_relevant = 0;
        for (const auto& [did, g] : judged)
          if (g >= min_grade) ++total_relevant;
        if (total_relevant == 0) return 0.0;
        double sum_prec = 0.0;
        int64_t hits = 0;
        const size_t limit = std::min(entries.size(), kDepth);
        for (size_t i = 0; i < limit; ++i) {
          auto it = judged.find(entries[i].doc_id);
          if (it != judged.end() && it->second >= min_grade) {
            ++hits;
            sum_prec += static_cast<double>(hits) / static_cast<double>(i + 1);
          }
        }
        return sum_prec / static_cast<double>(total_relevant);
      });
}

void write_metric_csv(const std::vector<MetricReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write metrics csv: " + path);
  out << "query_id,metric,value\n";
  char buf[48];
  for (const auto& r : reports) {
    for (const auto& [qid, v] : r.per_query) {
      std::snprintf(buf, sizeof(buf), "%.10f", v);
      out << qid << "," << r.metric << "," << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%.10f", r.aggregate);
    out << "all," << r.metric << "," << buf << "\n";
    for (const auto& qid : r.skipped_queries)
      out << "# skipped (not in qrels): " << qid << "," << r.metric << ",\n";
  }
  if (!out) throw IoError("failed writing metrics csv: " + path);
}

// ---------------------------------------------------------------------------
// Student t machinery (regularized incomplete beta via continued fraction)

namespace {

double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) <= kEps) break;
  }
  return h;
}

double reg_ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
               b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  const double x = df / (df + t * t);
  const double p = 0.5 * reg_ibeta(0.5 * df, 0.5, x);
  return t >= 0.0 ? 1.0 - p : p;
}

}  // namespace

double student_t_quantile(double p, int64_t df) {
  if (df < 1) throw ParamError("student_t_quantile: df must be >= 1");
  if (p <= 0.0 || p >= 1.0) throw ParamError("student_t_quantile: p must be in (0,1)");
  if (p == 0.5) return 0.0;
  // Bisection on the CDF; the bracket grows until it spans p.
  double lo = -1.0, hi = 1.0;
  while (student_t_cdf(lo, static_cast<double>(df)) > p) lo *= 2.0;
  while (student_t_cdf(hi, static_cast<double>(df)) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, static_cast<double>(df)) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

NonInferiorityResult non_inferiority_test(std::span<const double> baseline,
                                          std::span<const double> candidate, double margin,
                                          double alpha, MarginMode mode) {
  if (baseline.size() != candidate.size())
    throw ParamError("non_inferiority_test: paired vectors differ in length (" +
                     std::to_string(baseline.size()) + " vs " + std::to_string(candidate.size()) +
                     ")");
  const int64_t n = static_cast<int64_t>(baseline.size());
  if (n < 2) throw ParamError("non_inferiority_test: need at least 2 paired samples");
  if (margin < 0) throw ParamError("non_inferiority_test: margin must be >= 0");
  if (alpha <= 0 || alpha >= 1) throw ParamError("non_inferiority_test: alpha must be in (0,1)");

  double mean_a = 0.0, mean_d = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    mean_a += baseline[static_cast<size_t>(i)];
    mean_d += candidate[static_cast<size_t>(i)] - baseline[static_cast<size_t>(i)];
  }
  mean_a /= static_cast<double>(n);
  mean_d /= static_cast<double>(n);
  double ss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = candidate[static_cast<size_t>(i)] - baseline[static_cast<size_t>(i)] - mean_d;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  NonInferiorityResult r;
  r.mode = mode;
  r.n = n;
  r.delta = mode == MarginMode::Relative ? margin * mean_a : margin;
  if (sd == 0.0) {
    // Degenerate: every pair moved identically.
    r.ci_lower = mean_d;
    r.non_inferior = mean_d > -r.delta;
    const double shift = mean_d + r.delta;
    r.statistic = shift == 0.0 ? 0.0
                               : std::copysign(std::numeric_limits<double>::infinity(), shift);
    return r;
  }
  const double se = sd / std::sqrt(static_cast<double>(n));
  const double t_crit = student_t_quantile(1.0 - alpha, n - 1);
  r.statistic = (mean_d + r.delta) / se;
  r.ci_lower = mean_d - t_crit * se;
  r.non_inferior = r.ci_lower > -r.delta;
  return r;
}

std::string format_decision(const NonInferiorityResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "non_inferior=%s,ci_lower=%.10f,delta=%.10f,margin_mode=%s",
                r.non_inferior ? "true" : "false", r.ci_lower, r.delta,
                r.mode == MarginMode::Relative ? "relative" : "absolute");
  return buf;
}

}  // namespace metrics
}  // namespace distilrank
