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

#ifndef DISTILRANK_TEXT_HPP
#define DISTILRANK_TEXT_HPP

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "distilrank/encoder.hpp"

namespace distilrank {

// Lowercases and splits on anything that is not [a-z0-9]. Total function:
// any input yields a (possibly empty) word list.
std::vector<std::string> tokenize_words(const std::string& text);

// Frequency vocabulary with fixed reserved ids. Non-reserved tokens are
// ranked by (count desc, token asc) so construction is deterministic.
class Vocabulary {
 public:
  static constexpr int64_t kPad = 0;
  static constexpr int64_t kUnk = 1;
  static constexpr int64_t kCls = 2;
  static constexpr int64_t kSep = 3;
  static constexpr int64_t kMask = 4;
  static constexpr int64_t kNumReserved = 5;

  static Vocabulary build(const std::unordered_map<std::string, int64_t>& counts,
                          int64_t max_size);

  int64_t id(const std::string& word) const;  // kUnk when absent
  const std::string& token(int64_t id) const;
  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;  // index == id, reserved entries first
  std::unordered_map<std::string, int64_t> ids_;
};

// Counts words across a collection_tsv file (streaming).
std::unordered_map<std::string, int64_t> count_collection_words(const std::string& path);

// tokenize = words -> vocabulary ids, hard-truncated to max_len.
std::vector<int64_t> tokenize(const std::string& text, const Vocabulary& vocab, int64_t max_len);

// Packs [CLS] query [SEP] passage [SEP] padded to exactly max_len, segment 0
// through the first [SEP], segment 1 after. The query is capped at
// `query_cap` ids first; the passage absorbs the remaining truncation.
PairInput build_pair_input(std::span<const int64_t> query_ids,
                           std::span<const int64_t> passage_ids, int64_t max_len,
                           int64_t query_cap = 64);

// Packs [CLS] ids [SEP] padded to max_len, single segment.
PairInput build_single_input(std::span<const int64_t> ids, int64_t max_len);

}  // namespace distilrank

#endif  // DISTILRANK_TEXT_HPP
