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

#ifndef DISTILRANK_SYNTH_HPP
#define DISTILRANK_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "distilrank/io.hpp"

namespace distilrank {

// Deterministic synthetic retrieval task.
//
// Every query owns 2-4 private topic words. Relevant documents embed >= 2 of
// them near the front of the passage (qrels grade = embedded count, capped
// at 3); distractor documents repeat a couple of the same words deep in the
// passage and are not relevant. BM25 sees term overlap only, so distractors
// routinely outscore true positives, while a ranker that can read positions
// has headroom to beat it. Triples take positives from qrels and negatives
// from the BM25 top-100 that are absent from qrels.
struct SynthParams {
  uint64_t seed = 1;
  int64_t num_docs = 2400;
  int64_t num_queries = 250;
  int64_t num_heldout = 50;    // final queries form the held-out set
  int64_t vocab_words = 1500;  // distinct surface words
  int64_t triples_per_query = 24;

  void validate() const;  // throws ParamError
};

struct SynthData {
  std::vector<DocRecord> collection;
  std::vector<QueryRecord> train_queries;
  std::vector<QueryRecord> heldout_queries;
  Qrels qrels;  // covers train and held-out queries
  std::vector<TrainTriple> triples;
};

SynthData generate_synthetic(const SynthParams& params);

struct SynthPaths {
  std::string collection;
  std::string train_queries;
  std::string heldout_queries;
  std::string qrels;
  std::string triples;
};

void write_synth(const SynthData& data, const SynthPaths& paths);

}  // namespace distilrank

#endif  // DISTILRANK_SYNTH_HPP
