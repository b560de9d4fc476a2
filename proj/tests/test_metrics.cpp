#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "distilrank/errors.hpp"
#include "distilrank/metrics.hpp"
#include "distilrank/rng.hpp"
#include "oracles.hpp"

using namespace distilrank;
using namespace distilrank::metrics;

namespace {

RankedRun make_run(const std::string& qid, const std::vector<std::string>& docs) {
  RankedRun run;
  double score = static_cast<double>(docs.size());
  for (const auto& d : docs) run.queries[qid].push_back({d, score--});
  return run;
}

}  // namespace

TEST_CASE("mrr at k basics") {
  Qrels qrels;
  qrels.set("q", "rel", 1);

  CHECK(mrr_at_k(make_run("q", {"rel", "x", "y"}), qrels, 10).aggregate == doctest::Approx(1.0));
  CHECK(mrr_at_k(make_run("q", {"a", "b", "c", "rel"}), qrels, 10).aggregate ==
        doctest::Approx(0.25));

  std::vector<std::string> eleven;
  for (int i = 0; i < 10; ++i) eleven.push_back("x" + std::to_string(i));
  eleven.push_back("rel");  // rank 11
  CHECK(mrr_at_k(make_run("q", eleven), qrels, 10).aggregate == doctest::Approx(0.0));
  CHECK(mrr(make_run("q", eleven), qrels).aggregate == doctest::Approx(1.0 / 11.0));
}

TEST_CASE("queries missing from qrels are excluded and reported") {
  Qrels qrels;
  qrels.set("q1", "d", 1);
  RankedRun run = make_run("q1", {"d"});
  run.queries["q2"] = {{"d", 1.0}};
  auto report = mrr_at_k(run, qrels, 10);
  CHECK(report.per_query.size() == 1);
  CHECK(report.aggregate == doctest::Approx(1.0));
  REQUIRE(report.skipped_queries.size() == 1);
  CHECK(report.skipped_queries[0] == "q2");
}

TEST_CASE("ndcg hand case: single relevant at rank 2") {
  Qrels qrels;
  qrels.set("q", "rel", 1);
  auto report = ndcg_at_10(make_run("q", {"junk", "rel"}), qrels);
  CHECK(report.aggregate == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));

  // Perfect ordering of all relevant docs scores 1.
  Qrels graded;
  graded.set("q", "a", 3);
  graded.set("q", "b", 2);
  graded.set("q", "c", 1);
  CHECK(ndcg_at_10(make_run("q", {"a", "b", "c"}), graded).aggregate == doctest::Approx(1.0));
}

TEST_CASE("map hand cases") {
  Qrels qrels;
  qrels.set("q", "r1", 1);
  CHECK(map_at_1000(make_run("q", {"r1", "x"}), qrels, 1).aggregate == doctest::Approx(1.0));

  Qrels two;
  two.set("q", "r1", 1);
  two.set("q", "r2", 1);
  // relevant at ranks 1 and 3: (1 + 2/3)/2 = 5/6
  CHECK(map_at_1000(make_run("q", {"r1", "x", "r2"}), two, 1).aggregate ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  // unretrieved relevant keeps inflating the denominator
  CHECK(map_at_1000(make_run("q", {"r1", "x", "y"}), two, 1).aggregate ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("aggregate equals the arithmetic mean of per-query values") {
  Qrels qrels;
  qrels.set("q1", "a", 1);
  qrels.set("q2", "b", 1);
  RankedRun run;
  run.queries["q1"] = {{"a", 2.0}, {"x", 1.0}};
  run.queries["q2"] = {{"x", 2.0}, {"b", 1.0}};
  auto report = mrr_at_k(run, qrels, 10);
  double mean = 0;
  for (auto& [q, v] : report.per_query) mean += v;
  mean /= static_cast<double>(report.per_query.size());
  CHECK(std::abs(report.aggregate - mean) < 1e-12);
}

TEST_CASE("metric oracle equivalence on random micro-cases") {
  Rng rng(555);
  for (int trial = 0; trial < 400; ++trial) {
    const int n_docs = rng.next_int(1, 20);
    std::vector<std::string> ranked;
    Qrels qrels;
    std::map<std::string, int> grades;
    for (int d = 0; d < n_docs; ++d) {
      const std::string id = "d" + std::to_string(d);
      ranked.push_back(id);
      const int grade = rng.next_int(0, 3);
      if (grade > 0) {
        qrels.set("q", id, grade);
        grades[id] = grade;
      }
    }
    if (grades.empty()) {
      qrels.set("q", "unretrieved", 1);
      grades["unretrieved"] = 1;
    }
    RankedRun run = make_run("q", ranked);

    CHECK(std::abs(mrr_at_k(run, qrels, 10).aggregate -
                   oracles::ref_mrr_at_k(ranked, grades, 10, 1)) < 1e-9);
    CHECK(std::abs(mrr(run, qrels).aggregate -
                   oracles::ref_mrr_at_k(ranked, grades, ranked.size(), 1)) < 1e-9);
    CHECK(std::abs(ndcg_at_10(run, qrels).aggregate - oracles::ref_ndcg_at_10(ranked, grades)) <
          1e-9);
    CHECK(std::abs(map_at_1000(run, qrels, 1).aggregate -
                   oracles::ref_map_at_1000(ranked, grades, 1)) < 1e-9);
  }
}

TEST_CASE("permuting query order leaves aggregates unchanged") {
  Qrels qrels;
  RankedRun a, b;
  Rng rng(3);
  for (int q = 0; q < 12; ++q) {
    const std::string qid = "q" + std::to_string(q);
    std::vector<RunEntry> entries;
    double score = 50;
    for (int d = 0; d < 8; ++d) {
      const std::string did = "d" + std::to_string(d);
      entries.push_back({did, score--});
      if (rng.next_double() < 0.3) qrels.set(qid, did, rng.next_int(1, 3));
    }
    if (qrels.relevant_count(qid, 1) == 0) qrels.set(qid, "d0", 1);
    a.queries[qid] = entries;
  }
  // RankedRun keys are ordered; feeding them in reverse must not matter.
  for (auto it = a.queries.rbegin(); it != a.queries.rend(); ++it) b.queries[it->first] = it->second;
  CHECK(mrr_at_k(a, qrels, 10).aggregate == mrr_at_k(b, qrels, 10).aggregate);
  CHECK(ndcg_at_10(a, qrels).aggregate == ndcg_at_10(b, qrels).aggregate);
  CHECK(map_at_1000(a, qrels, 1).aggregate == map_at_1000(b, qrels, 1).aggregate);
}

TEST_CASE("rerank_at_depth with the identity scorer is the identity") {
  RankedRun run;
  run.queries["q1"] = {{"a", 9.0}, {"b", 7.5}, {"c", 7.5}, {"d", 1.0}};
  run.queries["q2"] = {{"z", 3.0}, {"y", 2.0}};
  std::map<std::string, std::map<std::string, double>> first;
  for (auto& [qid, entries] : run.queries)
    for (auto& e : entries) first[qid][e.doc_id] = e.score;
  auto identity = [&](const std::string& q, const std::string& d) { return first.at(q).at(d); };
  for (int64_t depth : {1, 2, 3, 100}) {
    RankedRun out = rerank_at_depth(run, identity, depth);
    REQUIRE(out.queries.size() == run.queries.size());
    for (auto& [qid, entries] : run.queries) {
      const auto& got = out.queries.at(qid);
      REQUIRE(got.size() == entries.size());
      for (size_t i = 0; i < entries.size(); ++i) {
        CHECK(got[i].doc_id == entries[i].doc_id);
        CHECK(got[i].score == entries[i].score);
      }
    }
  }
}

TEST_CASE("rerank_at_depth constructed micro-case: oracle scorer and depth") {
  // Relevant doc parked at first-stage rank 15.
  RankedRun run;
  for (int i = 0; i < 20; ++i)
    run.queries["q"].push_back({(i == 14 ? "rel" : "junk" + std::to_string(i)),
                                100.0 - static_cast<double>(i)});
  Qrels qrels;
  qrels.set("q", "rel", 1);
  auto oracle = [&](const std::string&, const std::string& d) {
    return d == "rel" ? 1.0 : 0.0;
  };
  RankedRun depth10 = rerank_at_depth(run, oracle, 10);
  CHECK(mrr_at_k(depth10, qrels, 10).aggregate == doctest::Approx(0.0));
  RankedRun depth20 = rerank_at_depth(run, oracle, 20);
  CHECK(mrr_at_k(depth20, qrels, 10).aggregate == doctest::Approx(1.0));
  // Tail order is preserved beyond the rescored head.
  CHECK(depth10.queries.at("q").size() == 20);
  CHECK(depth10.queries.at("q")[10].doc_id == "junk10");

  auto failing = [](const std::string&, const std::string&) -> double {
    throw LookupError("boom");
  };
  CHECK_THROWS_WITH_AS((void)rerank_at_depth(run, failing, 5),
                       doctest::Contains("query 'q'"), Error);
}

TEST_CASE("non-inferiority decisions") {
  std::vector<double> a(40, 0.5);

  SUBCASE("identical systems are non-inferior (degenerate variance)") {
    auto r = non_inferiority_test(a, a, 0.03, 0.05, MarginMode::Relative);
    CHECK(r.non_inferior);
    CHECK(r.ci_lower == doctest::Approx(0.0));
  }
  SUBCASE("a uniform 10% drop fails a 3% margin") {
    std::vector<double> b;
    for (double v : a) b.push_back(v - 0.10 * 0.5);
    auto r = non_inferiority_test(a, b, 0.03, 0.05, MarginMode::Relative);
    CHECK_FALSE(r.non_inferior);
  }
  SUBCASE("absolute mode is shift invariant") {
    std::vector<double> base = {0.2, 0.4, 0.3, 0.5, 0.25, 0.45, 0.35, 0.3};
    std::vector<double> cand = {0.19, 0.41, 0.28, 0.5, 0.26, 0.44, 0.36, 0.29};
    auto r1 = non_inferiority_test(base, cand, 0.03, 0.05, MarginMode::Absolute);
    std::vector<double> base_s = base, cand_s = cand;
    for (auto& v : base_s) v += 0.17;
    for (auto& v : cand_s) v += 0.17;
    auto r2 = non_inferiority_test(base_s, cand_s, 0.03, 0.05, MarginMode::Absolute);
    CHECK(r1.non_inferior == r2.non_inferior);
    CHECK(r1.ci_lower == doctest::Approx(r2.ci_lower).epsilon(1e-9));
  }
  SUBCASE("errors") {
    std::vector<double> short_b(39, 0.5);
    CHECK_THROWS_AS((void)non_inferiority_test(a, short_b), ParamError);
    std::vector<double> one(1, 0.5);
    CHECK_THROWS_AS((void)non_inferiority_test(one, one), ParamError);
  }
}

TEST_CASE("student t quantile matches table values") {
  for (const auto& [df, expected] : oracles::t_table_095()) {
    CHECK(student_t_quantile(0.95, df) == doctest::Approx(expected).epsilon(5e-4));
  }
  CHECK(student_t_quantile(0.5, 10) == doctest::Approx(0.0));
  CHECK(student_t_quantile(0.05, 10) == doctest::Approx(-1.8125).epsilon(5e-4));
}

TEST_CASE("seeded simulated decisions match the closed-form computation") {
  Rng rng(99);
  int agreements = 0;
  const int cases = 100;
  for (int c = 0; c < cases; ++c) {
    const int n = 100;
    std::vector<double> base(n), cand(n);
    const double shift = rng.next_uniform(-0.03, 0.02);
    for (int i = 0; i < n; ++i) {
      base[static_cast<size_t>(i)] = 0.35 + 0.05 * rng.next_normal();
      cand[static_cast<size_t>(i)] =
          base[static_cast<size_t>(i)] + shift + 0.01 * rng.next_normal();
    }
    auto got = non_inferiority_test(base, cand, 0.03, 0.05, MarginMode::Relative);

    // Independent recomputation with a hard-coded critical value (df = 99).
    double mean_a = 0, mean_d = 0;
    for (int i = 0; i < n; ++i) {
      mean_a += base[static_cast<size_t>(i)];
      mean_d += cand[static_cast<size_t>(i)] - base[static_cast<size_t>(i)];
    }
    mean_a /= n;
    mean_d /= n;
    double ss = 0;
    for (int i = 0; i < n; ++i) {
      const double d = cand[static_cast<size_t>(i)] - base[static_cast<size_t>(i)] - mean_d;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1));
    const double delta = 0.03 * mean_a;
    const double t_crit = 1.6604;  // one-sided 95%, df 99
    const bool expect = sd == 0.0 ? mean_d > -delta
                                  : (mean_d + delta) / (sd / std::sqrt(double(n))) > t_crit;
    if (expect == got.non_inferior) ++agreements;
  }
  CHECK(agreements == cases);
}

TEST_CASE("decision record format") {
  std::vector<double> a(10, 0.5), b(10, 0.5);
  auto r = non_inferiority_test(a, b, 0.03, 0.05, MarginMode::Relative);
  const std::string line = format_decision(r);
  CHECK(line.find("non_inferior=true") == 0);
  CHECK(line.find("margin_mode=relative") != std::string::npos);
  CHECK(line.find("delta=") != std::string::npos);
}
