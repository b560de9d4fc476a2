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

#include "distilrank/text.hpp"

#include <algorithm>
#include <fstream>

#include "distilrank/errors.hpp"
#include "distilrank/io.hpp"

namespace distilrank {

namespace {

const char* kReserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

}  // namespace

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    char lower = 0;
    if (c >= 'a' && c <= 'z') lower = static_cast<char>(c);
    else if (c >= 'A' && c <= 'Z') lower = static_cast<char>(c - 'A' + 'a');
    else if (c >= '0' && c <= '9') lower = static_cast<char>(c);
    if (lower) {
      cur.push_back(lower);
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocabulary Vocabulary::build(const std::unordered_map<std::string, int64_t>& counts,
                             int64_t max_size) {
  if (max_size <= kNumReserved)
    throw ParamError("vocabulary size must exceed the " + std::to_string(kNumReserved) +
                     " reserved ids");
  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const char* r : kReserved) v.tokens_.emplace_back(r);
  const size_t room = static_cast<size_t>(max_size - kNumReserved);
  for (size_t i = 0; i < ranked.size() && i < room; ++i) v.tokens_.push_back(ranked[i].first);
  for (size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = static_cast<int64_t>(i);
  return v;
}

int64_t Vocabulary::id(const std::string& word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int64_t id) const {
  if (id < 0 || id >= size()) throw VocabError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary: " + path);
  for (const auto& t : tokens_) out << t << "\n";
  if (!out) throw IoError("failed writing vocabulary: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    v.tokens_.push_back(line);
  }
  if (v.tokens_.size() < static_cast<size_t>(kNumReserved))
    throw FormatError("vocabulary file too small: " + path);
  for (int64_t i = 0; i < kNumReserved; ++i)
    if (v.tokens_[static_cast<size_t>(i)] != kReserved[i])
      throw FormatError("vocabulary reserved ids corrupted in " + path);
  for (size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = static_cast<int64_t>(i);
  return v;
}

std::unordered_map<std::string, int64_t> count_collection_words(const std::string& path) {
  std::unordered_map<std::string, int64_t> counts;
  for_each_collection(path, [&](const DocRecord& doc) {
    for (auto& w : tokenize_words(doc.text)) ++counts[w];
  });
  return counts;
}

std::vector<int64_t> tokenize(const std::string& text, const Vocabulary& vocab, int64_t max_len) {
  std::vector<int64_t> ids;
  for (const auto& w : tokenize_words(text)) {
    if (static_cast<int64_t>(ids.size()) >= max_len) break;
    ids.push_back(vocab.id(w));
  }
  return ids;
}

PairInput build_pair_input(std::span<const int64_t> query_ids,
                           std::span<const int64_t> passage_ids, int64_t max_len,
                           int64_t query_cap) {
  if (max_len < 8) throw ParamError("build_pair_input: max_len must be >= 8");
  int64_t q_len = std::min<int64_t>(static_cast<int64_t>(query_ids.size()), query_cap);
  // Query gives way only when it alone cannot fit: [CLS] q [SEP] [SEP].
  q_len = std::min<int64_t>(q_len, max_len - 3);
  const int64_t p_room = max_len - q_len - 3;
  const int64_t p_len = std::min<int64_t>(static_cast<int64_t>(passage_ids.size()), p_room);

  PairInput out;
  out.tokens.reserve(static_cast<size_t>(max_len));
  auto push = [&](int64_t tok, int64_t seg, uint8_t m) {
    out.tokens.push_back(tok);
    out.segments.push_back(seg);
    out.mask.push_back(m);
  };
  push(Vocabulary::kCls, 0, 1);
  for (int64_t i = 0; i < q_len; ++i) push(query_ids[static_cast<size_t>(i)], 0, 1);
  push(Vocabulary::kSep, 0, 1);
  for (int64_t i = 0; i < p_len; ++i) push(passage_ids[static_cast<size_t>(i)], 1, 1);
  push(Vocabulary::kSep, 1, 1);
  while (static_cast<int64_t>(out.tokens.size()) < max_len) push(Vocabulary::kPad, 0, 0);
  return out;
}

PairInput build_single_input(std::span<const int64_t> ids, int64_t max_len) {
  if (max_len < 8) throw ParamError("build_single_input: max_len must be >= 8");
  const int64_t len = std::min<int64_t>(static_cast<int64_t>(ids.size()), max_len - 2);
  PairInput out;
  auto push = [&](int64_t tok, uint8_t m) {
    out.tokens.push_back(tok);
    out.segments.push_back(0);
    out.mask.push_back(m);
  };
  push(Vocabulary::kCls, 1);
  for (int64_t i = 0; i < len; ++i) push(ids[static_cast<size_t>(i)], 1);
  push(Vocabulary::kSep, 1);
  while (static_cast<int64_t>(out.tokens.size()) < max_len) push(Vocabulary::kPad, 0);
  return out;
}

}  // namespace distilrank
