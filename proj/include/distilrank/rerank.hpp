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

#ifndef DISTILRANK_RERANK_HPP
#define DISTILRANK_RERANK_HPP

#include <map>
#include <string>

#include "distilrank/infer.hpp"
#include "distilrank/io.hpp"
#include "distilrank/metrics.hpp"
#include "distilrank/text.hpp"

namespace distilrank {

struct RerankContext {
  const Vocabulary* vocab = nullptr;
  const std::map<std::string, std::string>* query_texts = nullptr;  // id -> text
  const std::map<std::string, std::string>* doc_texts = nullptr;    // id -> text
  int64_t batch_size = 64;
};

std::map<std::string, std::string> text_map_queries(const std::vector<QueryRecord>& queries);
std::map<std::string, std::string> text_map_docs(const std::vector<DocRecord>& docs);

// Rescores the top-`depth` of each query with the model (batched through the
// inference engine) and reorders per rerank_at_depth semantics.
RankedRun rerank_with_model(const InferenceEngine& engine, const RankedRun& first_stage,
                            int64_t depth, const RerankContext& ctx, const std::string& run_tag);

}  // namespace distilrank

#endif  // DISTILRANK_RERANK_HPP
