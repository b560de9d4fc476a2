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

#ifndef DISTILRANK_IO_HPP
#define DISTILRANK_IO_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace distilrank {

// File formats:
//   collection_tsv  doc_id<TAB>text
//   queries_tsv     query_id<TAB>text
//   qrels_trec      query_id 0 doc_id grade        (whitespace separated)
//   triples_tsv     query<TAB>positive<TAB>negative
//   run_trec        query_id Q0 doc_id rank score run_tag

struct DocRecord {
  std::string id;
  std::string text;
};

struct QueryRecord {
  std::string id;
  std::string text;
};

struct TrainTriple {
  std::string query;
  std::string positive;
  std::string negative;
};

// Graded relevance judgments keyed by (query_id, doc_id). Ordered maps keep
// every serialization byte-stable.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> grades;

  void set(const std::string& qid, const std::string& did, int grade);
  int grade(const std::string& qid, const std::string& did) const;  // 0 when unjudged
  bool has_query(const std::string& qid) const;
  // Total docs with grade >= min_grade for a query.
  int64_t relevant_count(const std::string& qid, int min_grade) const;
};

struct RunEntry {
  std::string doc_id;
  double score;
};

// Per-query ranked lists; entries ordered by non-increasing score, ties by
// ascending doc_id, rank implicit (1-based position).
struct RankedRun {
  std::map<std::string, std::vector<RunEntry>> queries;
  std::string tag = "distilrank";
};

struct IngestStats {
  int64_t records = 0;
  int64_t malformed = 0;
};

// Streaming reader; fn is invoked per well-formed record. Throws IoError if
// unreadable and FormatError when more than 1% of lines are malformed.
IngestStats for_each_collection(const std::string& path,
                                const std::function<void(const DocRecord&)>& fn);

std::vector<DocRecord> load_collection(const std::string& path, IngestStats* stats = nullptr);
std::vector<QueryRecord> load_queries(const std::string& path, IngestStats* stats = nullptr);
std::vector<TrainTriple> load_triples(const std::string& path, IngestStats* stats = nullptr);
Qrels load_qrels(const std::string& path, IngestStats* stats = nullptr);
RankedRun load_run(const std::string& path, IngestStats* stats = nullptr);

void write_collection(const std::vector<DocRecord>& docs, const std::string& path);
void write_queries(const std::vector<QueryRecord>& queries, const std::string& path);
void write_triples(const std::vector<TrainTriple>& triples, const std::string& path);
void write_qrels(const Qrels& qrels, const std::string& path);
void write_run(const RankedRun& run, const std::string& path);

// Validates the RankedRun ordering invariant (throws FormatError).
void check_run_sorted(const RankedRun& run);

}  // namespace distilrank

#endif  // DISTILRANK_IO_HPP
