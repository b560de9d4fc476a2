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

#include "distilrank/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "distilrank/errors.hpp"
#include "distilrank/text.hpp"

namespace distilrank {
namespace bm25 {

InvertedIndex InvertedIndex::build(const std::vector<DocRecord>& collection) {
  if (collection.empty()) throw ParamError("bm25: cannot index an empty collection");
  InvertedIndex idx;
  int64_t total_len = 0;
  for (const auto& doc : collection) {
    if (idx.doc_index_.count(doc.id))
      throw FormatError("bm25: duplicate doc id '" + doc.id + "'");
    const int64_t d = static_cast<int64_t>(idx.doc_ids_.size());
    idx.doc_index_[doc.id] = d;
    idx.doc_ids_.push_back(doc.id);
    auto words = tokenize_words(doc.text);
    idx.doc_lengths_.push_back(static_cast<int64_t>(words.size()));
    total_len += static_cast<int64_t>(words.size());
    std::map<std::string, int64_t> tf;
    for (auto& w : words) ++tf[w];
    for (const auto& [term, count] : tf) idx.postings_[term].push_back({d, count});
  }
  idx.avgdl_ = static_cast<double>(total_len) / static_cast<double>(collection.size());
  return idx;
}

InvertedIndex InvertedIndex::build_from_file(const std::string& collection_tsv) {
  // Streaming ingest keeps memory at one record plus the index itself.
  InvertedIndex idx;
  int64_t total_len = 0;
  for_each_collection(collection_tsv, [&](const DocRecord& doc) {
    if (idx.doc_index_.count(doc.id))
      throw FormatError("bm25: duplicate doc id '" + doc.id + "'");
    const int64_t d = static_cast<int64_t>(idx.doc_ids_.size());
    idx.doc_index_[doc.id] = d;
    idx.doc_ids_.push_back(doc.id);
    auto words = tokenize_words(doc.text);
    idx.doc_lengths_.push_back(static_cast<int64_t>(words.size()));
    total_len += static_cast<int64_t>(words.size());
    std::map<std::string, int64_t> tf;
    for (auto& w : words) ++tf[w];
    for (const auto& [term, count] : tf) idx.postings_[term].push_back({d, count});
  });
  if (idx.doc_ids_.empty()) throw ParamError("bm25: cannot index an empty collection");
  idx.avgdl_ = static_cast<double>(total_len) / static_cast<double>(idx.doc_ids_.size());
  return idx;
}

int64_t InvertedIndex::doc_index(const std::string& doc_id) const {
  auto it = doc_index_.find(doc_id);
  if (it == doc_index_.end()) throw LookupError("bm25: unknown doc id '" + doc_id + "'");
  return it->second;
}

int64_t InvertedIndex::doc_freq(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : static_cast<int64_t>(it->second.size());
}

double InvertedIndex::idf(const std::string& term) const {
  const double df = static_cast<double>(doc_freq(term));
  const double n = static_cast<double>(num_docs());
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double InvertedIndex::term_score(double idf_t, int64_t tf, int64_t len, const Params& p) const {
  if (tf <= 0) return 0.0;
  const double tfd = static_cast<double>(tf);
  const double norm = 1.0 - p.b + p.b * static_cast<double>(len) / avgdl_;
  return idf_t * tfd * (p.k1 + 1.0) / (tfd + p.k1 * norm);
}

double InvertedIndex::score(const std::vector<std::string>& query_terms, int64_t doc,
                            const Params& params) const {
  if (doc < 0 || doc >= num_docs()) throw LookupError("bm25: doc index out of range");
  double s = 0.0;
  for (const auto& term : query_terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    // Postings are in ascending doc order by construction.
    const auto& list = it->second;
    auto pos = std::lower_bound(list.begin(), list.end(), doc,
                                [](const Posting& p, int64_t d) { return p.doc < d; });
    if (pos != list.end() && pos->doc == doc) s += term_score(idf(term), pos->tf, doc_len(doc), params);
  }
  return s;
}

double InvertedIndex::score_by_id(const std::vector<std::string>& query_terms,
                                  const std::string& doc_id, const Params& params) const {
  return score(query_terms, doc_index(doc_id), params);
}

std::vector<RunEntry> InvertedIndex::retrieve_topk(const std::string& query_text, int64_t k,
                                                   const Params& params) const {
  if (k < 1) throw ParamError("bm25: k must be >= 1");
  const auto terms = tokenize_words(query_text);
  // Term-at-a-time accumulation; per-doc sums follow query term order, so
  // scores are bit-reproducible.
  std::unordered_map<int64_t, double> acc;
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double idf_t = idf(term);
    for (const Posting& p : it->second)
      acc[p.doc] += term_score(idf_t, p.tf, doc_len(p.doc), params);
  }
  std::vector<std::pair<int64_t, double>> scored(acc.begin(), acc.end());
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return doc_ids_[static_cast<size_t>(a.first)] < doc_ids_[static_cast<size_t>(b.first)];
  });
  if (static_cast<int64_t>(scored.size()) > k) scored.resize(static_cast<size_t>(k));
  std::vector<RunEntry> out;
  out.reserve(scored.size());
  for (const auto& [doc, s] : scored) out.push_back({doc_ids_[static_cast<size_t>(doc)], s});
  return out;
}

RankedRun retrieve_run(const InvertedIndex& index, const std::vector<QueryRecord>& queries,
                       int64_t k, const Params& params, const std::string& run_tag) {
  RankedRun run;
  run.tag = run_tag;
  for (const auto& q : queries) run.queries[q.id] = index.retrieve_topk(q.text, k, params);
  return run;
}

// ---------------------------------------------------------------------------
// index file format: plain text, fully deterministic.

void InvertedIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write index: " + path);
  out << "distilrank-index 1\n";
  out << num_docs() << "\n";
  for (int64_t d = 0; d < num_docs(); ++d)
    out << doc_ids_[static_cast<size_t>(d)] << " " << doc_lengths_[static_cast<size_t>(d)] << "\n";
  out << postings_.size() << "\n";
  for (const auto& [term, list] : postings_) {
    out << term << " " << list.size();
    for (const auto& p : list) out << " " << p.doc << ":" << p.tf;
    out << "\n";
  }
  if (!out) throw IoError("failed writing index: " + path);
}

InvertedIndex InvertedIndex::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open index: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "distilrank-index" || version != 1)
    throw FormatError("not a distilrank index: " + path);
  int64_t ndocs = 0;
  in >> ndocs;
  if (!in || ndocs <= 0) throw FormatError("bad doc count in index: " + path);
  InvertedIndex idx;
  int64_t total_len = 0;
  for (int64_t d = 0; d < ndocs; ++d) {
    std::string id;
    int64_t len;
    in >> id >> len;
    if (!in) throw FormatError("truncated doc table in index: " + path);
    idx.doc_ids_.push_back(id);
    idx.doc_lengths_.push_back(len);
    idx.doc_index_[id] = d;
    total_len += len;
  }
  idx.avgdl_ = static_cast<double>(total_len) / static_cast<double>(ndocs);
  size_t nterms = 0;
  in >> nterms;
  for (size_t t = 0; t < nterms; ++t) {
    std::string term;
    size_t n = 0;
    in >> term >> n;
    if (!in) throw FormatError("truncated postings in index: " + path);
    auto& list = idx.postings_[term];
    list.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      std::string pair;
      in >> pair;
      size_t colon = pair.find(':');
      if (colon == std::string::npos) throw FormatError("bad posting in index: " + path);
      list.push_back({std::stoll(pair.substr(0, colon)), std::stoll(pair.substr(colon + 1))});
    }
  }
  return idx;
}

}  // namespace bm25
}  // namespace distilrank
