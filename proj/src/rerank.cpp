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

#include "distilrank/rerank.hpp"

#include <algorithm>

#include "distilrank/errors.hpp"

namespace distilrank {

std::map<std::string, std::string> text_map_queries(const std::vector<QueryRecord>& queries) {
  std::map<std::string, std::string> out;
  for (const auto& q : queries) out[q.id] = q.text;
  return out;
}

std::map<std::string, std::string> text_map_docs(const std::vector<DocRecord>& docs) {
  std::map<std::string, std::string> out;
  for (const auto& d : docs) out[d.id] = d.text;
  return out;
}

RankedRun rerank_with_model(const InferenceEngine& engine, const RankedRun& first_stage,
                            int64_t depth, const RerankContext& ctx, const std::string& run_tag) {
  if (!ctx.vocab || !ctx.query_texts || !ctx.doc_texts)
    throw ParamError("rerank_with_model: context is incomplete");
  const int64_t seq_len = engine.config().max_seq_len;

  // Precompute scores for the heads of every query, then delegate the
  // ordering semantics to rerank_at_depth via a lookup scorer.
  std::map<std::string, std::map<std::string, double>> scores;
  for (const auto& [qid, entries] : first_stage.queries) {
    auto qt = ctx.query_texts->find(qid);
    if (qt == ctx.query_texts->end())
      throw LookupError("rerank_with_model: no text for query '" + qid + "'");
    const auto query_ids = tokenize(qt->second, *ctx.vocab, seq_len);
    const size_t head = std::min<size_t>(entries.size(), static_cast<size_t>(depth));
    size_t done = 0;
    while (done < head) {
      const size_t take = std::min<size_t>(static_cast<size_t>(ctx.batch_size), head - done);
      BatchInput batch;
      for (size_t i = done; i < done + take; ++i) {
        auto dt = ctx.doc_texts->find(entries[i].doc_id);
        if (dt == ctx.doc_texts->end())
          throw LookupError("rerank_with_model: no text for doc '" + entries[i].doc_id + "'");
        batch.add(build_pair_input(query_ids, tokenize(dt->second, *ctx.vocab, seq_len), seq_len));
      }
      std::vector<double> out(take);
      engine.rank_scores(batch, out);
      for (size_t i = 0; i < take; ++i) scores[qid][entries[done + i].doc_id] = out[i];
      done += take;
    }
  }

  RankedRun reranked = metrics::rerank_at_depth(
      first_stage,
      [&](const std::string& qid, const std::string& did) { return scores.at(qid).at(did); },
      depth);
  reranked.tag = run_tag;
  return reranked;
}

}  // namespace distilrank
