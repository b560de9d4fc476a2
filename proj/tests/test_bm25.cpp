#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "distilrank/bm25.hpp"
#include "distilrank/errors.hpp"
#include "distilrank/rng.hpp"
#include "distilrank/text.hpp"
#include "oracles.hpp"

using namespace distilrank;

TEST_CASE("index statistics from a one-doc collection") {
  auto index = bm25::InvertedIndex::build({{"d1", "a a b"}});
  CHECK(index.num_docs() == 1);
  CHECK(index.avg_doc_len() == doctest::Approx(3.0));
  CHECK(index.doc_freq("a") == 1);
  CHECK(index.doc_freq("b") == 1);
  CHECK(index.doc_freq("zzz") == 0);  // absent terms have no postings
  CHECK_THROWS_AS((void)bm25::InvertedIndex::build({}), ParamError);
  CHECK_THROWS_AS((void)index.doc_index("nope"), LookupError);
}

TEST_CASE("hand-computed score on a single-doc index") {
  auto index = bm25::InvertedIndex::build({{"d1", "a a b"}});
  bm25::Params p{0.9, 0.4};
  // tf=2, df=1, N=1: idf = ln(1 + 0.5/1.5); len == avgdl so norm == 1.
  const double idf = std::log(1.0 + 0.5 / 1.5);
  const double expected = idf * 2.0 * 1.9 / (2.0 + 0.9);
  CHECK(index.score({"a"}, 0, p) == doctest::Approx(expected).epsilon(1e-12));
  // Terms missing from the doc contribute exactly zero.
  CHECK(index.score({"zzz"}, 0, p) == 0.0);
  CHECK(index.score({"a", "zzz"}, 0, p) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("b = 0 removes length normalization") {
  auto index = bm25::InvertedIndex::build({{"short", "a b"}, {"long", "a b c d e f g h"}});
  bm25::Params p{0.9, 0.0};
  CHECK(index.score({"a"}, 0, p) == doctest::Approx(index.score({"a"}, 1, p)).epsilon(1e-12));
  bm25::Params with_b{0.9, 0.4};
  CHECK(index.score({"a"}, 0, with_b) > index.score({"a"}, 1, with_b));
}

TEST_CASE("rebuilding the same collection gives identical statistics") {
  std::vector<DocRecord> docs = {{"d1", "x y z"}, {"d2", "y y w"}, {"d3", "w"}};
  auto a = bm25::InvertedIndex::build(docs);
  auto b = bm25::InvertedIndex::build(docs);
  CHECK(a.avg_doc_len() == b.avg_doc_len());
  bm25::Params p;
  for (int64_t d = 0; d < a.num_docs(); ++d)
    CHECK(a.score({"y", "w"}, d, p) == b.score({"y", "w"}, d, p));
}

TEST_CASE("retrieve_topk: argmax, ties by doc id, monotone in k") {
  std::vector<DocRecord> docs = {{"db", "a a"}, {"da", "a a"}, {"dc", "a b"}, {"dd", "zz"}};
  auto index = bm25::InvertedIndex::build(docs);
  bm25::Params p;

  auto top1 = index.retrieve_topk("a", 1, p);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0].doc_id == "da");  // tie with db broken by ascending id

  auto top3 = index.retrieve_topk("a", 3, p);
  REQUIRE(top3.size() == 3);
  CHECK(top3[0].doc_id == "da");
  CHECK(top3[1].doc_id == "db");
  CHECK(top3[2].doc_id == "dc");

  // increasing k preserves the prefix ordering
  auto top2 = index.retrieve_topk("a", 2, p);
  for (size_t i = 0; i < top2.size(); ++i) CHECK(top2[i].doc_id == top3[i].doc_id);

  // docs matching nothing are not candidates
  auto none = index.retrieve_topk("qqq", 5, p);
  CHECK(none.empty());
  CHECK_THROWS_AS((void)index.retrieve_topk("a", 0, p), ParamError);
}

TEST_CASE("oracle equivalence on random corpora") {
  Rng rng(2026);
  bm25::Params p{0.9, 0.4};
  for (int trial = 0; trial < 20; ++trial) {
    const int n_docs = rng.next_int(5, 200);
    std::vector<DocRecord> docs;
    oracles::Bm25Corpus corpus;
    for (int d = 0; d < n_docs; ++d) {
      const int len = rng.next_int(1, 30);
      std::string text;
      std::vector<std::string> terms;
      for (int i = 0; i < len; ++i) {
        std::string w = "w" + std::to_string(rng.next_int(0, 40));
        terms.push_back(w);
        text += w + " ";
      }
      char id[16];
      std::snprintf(id, sizeof(id), "d%03d", d);
      docs.push_back({id, text});
      corpus.doc_ids.push_back(id);
      corpus.doc_terms.push_back(terms);
    }
    auto index = bm25::InvertedIndex::build(docs);

    for (int q = 0; q < 5; ++q) {
      const int qlen = rng.next_int(1, 4);
      std::string query;
      std::vector<std::string> qterms;
      for (int i = 0; i < qlen; ++i) {
        std::string w = "w" + std::to_string(rng.next_int(0, 45));
        qterms.push_back(w);
        query += w + " ";
      }
      const int64_t k = rng.next_int(1, 20);
      auto got = index.retrieve_topk(query, k, p);

      // Exhaustive reference: score every doc, keep matches, sort by the
      // tie rule, truncate.
      std::vector<std::pair<std::string, double>> ref;
      for (int d = 0; d < n_docs; ++d) {
        const double s = oracles::ref_bm25_score(corpus, qterms, static_cast<size_t>(d), p.k1, p.b);
        if (s > 0.0) ref.emplace_back(corpus.doc_ids[static_cast<size_t>(d)], s);
      }
      std::sort(ref.begin(), ref.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
      });
      if (ref.size() > static_cast<size_t>(k)) ref.resize(static_cast<size_t>(k));

      REQUIRE(got.size() == ref.size());
      for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].doc_id == ref[i].first);
        CHECK(std::abs(got[i].score - ref[i].second) < 1e-9);
      }
    }
  }
}

TEST_CASE("index save/load roundtrip preserves retrieval") {
  std::vector<DocRecord> docs = {{"d1", "alpha beta gamma"}, {"d2", "beta beta delta"},
                                 {"d3", "gamma gamma gamma epsilon"}};
  auto index = bm25::InvertedIndex::build(docs);
  const auto dir = std::filesystem::temp_directory_path() / "distilrank_bm25_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "test.index").string();
  index.save(path);
  auto loaded = bm25::InvertedIndex::load(path);
  bm25::Params p;
  auto a = index.retrieve_topk("beta gamma", 3, p);
  auto b = loaded.retrieve_topk("beta gamma", 3, p);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].doc_id == b[i].doc_id);
    CHECK(a[i].score == b[i].score);
  }
  std::filesystem::remove_all(dir);
}
