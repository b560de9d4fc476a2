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

#ifndef DISTILRANK_BM25_HPP
#define DISTILRANK_BM25_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "distilrank/io.hpp"

namespace distilrank {
namespace bm25 {

struct Params {
  double k1 = 0.9;
  double b = 0.4;
};

// Classic inverted index over the collection tokenizer's word stream.
// Lucene-style idf ln(1 + (N - df + 0.5)/(df + 0.5)) keeps scores
// non-negative for very common terms.
class InvertedIndex {
 public:
  static InvertedIndex build(const std::vector<DocRecord>& collection);
  static InvertedIndex build_from_file(const std::string& collection_tsv);

  int64_t num_docs() const { return static_cast<int64_t>(doc_ids_.size()); }
  double avg_doc_len() const { return avgdl_; }
  int64_t doc_len(int64_t doc) const { return doc_lengths_[static_cast<size_t>(doc)]; }
  const std::string& doc_id(int64_t doc) const { return doc_ids_[static_cast<size_t>(doc)]; }
  int64_t doc_index(const std::string& doc_id) const;  // throws LookupError
  int64_t doc_freq(const std::string& term) const;

  double score(const std::vector<std::string>& query_terms, int64_t doc,
               const Params& params) const;
  double score_by_id(const std::vector<std::string>& query_terms, const std::string& doc_id,
                     const Params& params) const;

  // Top-k by (score desc, doc_id asc); docs matching no query term are not
  // candidates. May return fewer than k entries.
  std::vector<RunEntry> retrieve_topk(const std::string& query_text, int64_t k,
                                      const Params& params) const;

  void save(const std::string& path) const;
  static InvertedIndex load(const std::string& path);

 private:
  struct Posting {
    int64_t doc;
    int64_t tf;
  };
  std::map<std::string, std::vector<Posting>> postings_;
  std::vector<std::string> doc_ids_;
  std::vector<int64_t> doc_lengths_;
  std::map<std::string, int64_t> doc_index_;
  double avgdl_ = 0.0;

  double idf(const std::string& term) const;
  double term_score(double idf_t, int64_t tf, int64_t len, const Params& p) const;
};

// Runs retrieval for every query and assembles a RankedRun.
RankedRun retrieve_run(const InvertedIndex& index, const std::vector<QueryRecord>& queries,
                       int64_t k, const Params& params, const std::string& run_tag);

}  // namespace bm25
}  // namespace distilrank

#endif  // DISTILRANK_BM25_HPP
