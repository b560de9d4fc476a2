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

#include "distilrank/synth.hpp"

#include <algorithm>
#include <set>

#include "distilrank/bm25.hpp"
#include "distilrank/errors.hpp"
#include "distilrank/rng.hpp"

namespace distilrank {

namespace {

constexpr int64_t kGenericWords = 12;
constexpr int64_t kMinBackground = 50;
constexpr int64_t kMaxTopicsPerQuery = 4;
constexpr int64_t kEarlyWindow = 8;   // relevant topic words land before this
constexpr int64_t kLateStart = 14;    // distractor topic words land at/after this

int64_t topic_pool_size(int64_t num_queries) { return num_queries * kMaxTopicsPerQuery; }

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

struct DraftDoc {
  std::string text;
  int64_t query = -1;  // owning query for relevant docs
  int grade = 0;       // 0 = not relevant
};

}  // namespace

void SynthParams::validate() const {
  if (num_docs < 1 || num_queries < 1 || vocab_words < 1 || triples_per_query < 0)
    throw ParamError("synth: sizes must be >= 1");
  if (num_heldout < 0 || num_heldout >= num_queries)
    throw ParamError("synth: num_heldout must be in [0, num_queries)");
  const int64_t topics_needed = topic_pool_size(num_queries);
  if (vocab_words < topics_needed + kGenericWords + kMinBackground)
    throw ParamError("synth: vocab of " + std::to_string(vocab_words) +
                     " words is too small to embed " + std::to_string(topics_needed) +
                     " topic words (need >= " +
                     std::to_string(topics_needed + kGenericWords + kMinBackground) + ")");
}

SynthData generate_synthetic(const SynthParams& params) {
  params.validate();
  Rng rng(params.seed);

  const int64_t num_topics = topic_pool_size(params.num_queries);
  const int64_t num_background = params.vocab_words - num_topics - kGenericWords;

  auto topic_word = [](int64_t i) { return "t" + std::to_string(i); };
  auto background_word = [&](Rng& r) { return "w" + std::to_string(r.next_below(static_cast<uint64_t>(num_background))); };
  auto generic_word = [&](Rng& r) { return "g" + std::to_string(r.next_below(kGenericWords)); };

  // Queries own disjoint topic-word blocks: a candidate either belongs to
  // the query (relevant or distractor) or matches nothing, so first-stage
  // lists are exactly the docs the ranker has to re-order.
  std::vector<std::vector<std::string>> query_topics(static_cast<size_t>(params.num_queries));
  std::vector<QueryRecord> queries;
  for (int64_t q = 0; q < params.num_queries; ++q) {
    const int64_t n = rng.next_int(2, static_cast<int>(kMaxTopicsPerQuery));
    std::vector<std::string> words;
    for (int64_t i = 0; i < n; ++i) words.push_back(topic_word(q * kMaxTopicsPerQuery + i));
    rng.shuffle(words);
    query_topics[static_cast<size_t>(q)] = words;
    queries.push_back({"q" + std::to_string(q), join(words)});
  }

  auto background_body = [&](int64_t len) {
    std::vector<std::string> body;
    body.reserve(static_cast<size_t>(len));
    for (int64_t i = 0; i < len; ++i) body.push_back(background_word(rng));
    // A couple of low-idf generic words keep candidate lists long.
    const int64_t n_gen = rng.next_int(1, 3);
    for (int64_t i = 0; i < n_gen; ++i)
      body[static_cast<size_t>(rng.next_below(static_cast<uint64_t>(len)))] = generic_word(rng);
    return body;
  };

  auto distinct_positions = [&](int64_t count, int64_t lo, int64_t hi) {
    std::set<int64_t> taken;
    while (static_cast<int64_t>(taken.size()) < count)
      taken.insert(lo + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(hi - lo))));
    return std::vector<int64_t>(taken.begin(), taken.end());
  };

  std::vector<DraftDoc> drafts;
  for (int64_t q = 0; q < params.num_queries; ++q) {
    const auto& topics = query_topics[static_cast<size_t>(q)];
    const int64_t n_topics = static_cast<int64_t>(topics.size());

    const int64_t n_rel = rng.next_int(3, 4);
    for (int64_t r = 0; r < n_rel; ++r) {
      const int64_t embed = rng.next_int(2, static_cast<int>(n_topics));
      std::vector<std::string> chosen = topics;
      rng.shuffle(chosen);
      chosen.resize(static_cast<size_t>(embed));
      auto body = background_body(rng.next_int(20, 36));
      auto pos = distinct_positions(embed, 0, kEarlyWindow);
      for (int64_t i = 0; i < embed; ++i)
        body[static_cast<size_t>(pos[static_cast<size_t>(i)])] = chosen[static_cast<size_t>(i)];
      drafts.push_back({join(body), q, static_cast<int>(std::min<int64_t>(embed, 3))});
    }

    // Distractors repeat topic words deep in the passage: term overlap
    // without the early-position evidence. The strong kind (two doubled
    // words) outscores low-grade relevants under BM25's tf saturation; the
    // weak kind (one doubled word) pads the list below them. Both keep the
    // neural headroom honest while BM25 still beats a random shuffle.
    const int64_t n_strong = rng.next_int(1, 2);
    const int64_t n_weak = rng.next_int(3, 4);
    for (int64_t d = 0; d < n_strong + n_weak; ++d) {
      const int64_t use = d < n_strong ? std::min<int64_t>(2, n_topics) : 1;
      std::vector<std::string> chosen = topics;
      rng.shuffle(chosen);
      chosen.resize(static_cast<size_t>(use));
      const int64_t len = rng.next_int(24, 40);
      auto body = background_body(len);
      auto pos = distinct_positions(2 * use, kLateStart, len);
      for (int64_t i = 0; i < 2 * use; ++i)
        body[static_cast<size_t>(pos[static_cast<size_t>(i)])] =
            chosen[static_cast<size_t>(i % use)];
      drafts.push_back({join(body), -1, 0});
    }
  }
  if (static_cast<int64_t>(drafts.size()) > params.num_docs)
    throw ParamError("synth: num_docs " + std::to_string(params.num_docs) +
                     " too small for the generated relevant/distractor docs (" +
                     std::to_string(drafts.size()) + "); increase num_docs or reduce queries");
  while (static_cast<int64_t>(drafts.size()) < params.num_docs)
    drafts.push_back({join(background_body(rng.next_int(18, 36))), -1, 0});

  // Shuffle before assigning ids so doc ids carry no relevance signal.
  rng.shuffle(drafts);

  SynthData data;
  Qrels& qrels = data.qrels;
  const int64_t width = std::to_string(params.num_docs).size();
  for (size_t i = 0; i < drafts.size(); ++i) {
    std::string num = std::to_string(i);
    data.collection.push_back(
        {"d" + std::string(static_cast<size_t>(width) - num.size(), '0') + num, drafts[i].text});
    if (drafts[i].grade > 0)
      qrels.set(queries[static_cast<size_t>(drafts[i].query)].id, data.collection.back().id,
                drafts[i].grade);
  }

  const int64_t num_train = params.num_queries - params.num_heldout;
  data.train_queries.assign(queries.begin(), queries.begin() + num_train);
  data.heldout_queries.assign(queries.begin() + num_train, queries.end());

  // Negatives come from what BM25 actually retrieves, minus the judged docs.
  if (params.triples_per_query > 0) {
    auto index = bm25::InvertedIndex::build(data.collection);
    bm25::Params bp;

    for (int64_t q = 0; q < num_train; ++q) {
      const auto& query = queries[static_cast<size_t>(q)];
      const auto& judged = qrels.grades.at(query.id);
      std::vector<std::string> positives;
      for (const auto& [did, g] : judged) positives.push_back(did);
      auto top = index.retrieve_topk(query.text, 100, bp);
      std::vector<std::string> negatives;
      for (const auto& e : top)
        if (!judged.count(e.doc_id)) negatives.push_back(e.doc_id);
      if (negatives.empty()) {  // only when the query has no distractors left
        Rng fallback = rng.fork(static_cast<uint64_t>(q));
        for (int tries = 0; tries < 64 && negatives.empty(); ++tries) {
          const auto& doc =
              data.collection[fallback.next_below(data.collection.size())];
          if (!judged.count(doc.id)) negatives.push_back(doc.id);
        }
      }
      auto text_of = [&](const std::string& did) {
        return data.collection[static_cast<size_t>(index.doc_index(did))].text;
      };
      for (int64_t t = 0; t < params.triples_per_query; ++t) {
        const auto& pos = positives[rng.next_below(positives.size())];
        const auto& neg = negatives[rng.next_below(negatives.size())];
        data.triples.push_back({query.text, text_of(pos), text_of(neg)});
      }
    }
    Rng shuffle_rng = rng.fork(0x747269706c65);
    shuffle_rng.shuffle(data.triples);
  }
  return data;
}

void write_synth(const SynthData& data, const SynthPaths& paths) {
  write_collection(data.collection, paths.collection);
  write_queries(data.train_queries, paths.train_queries);
  write_queries(data.heldout_queries, paths.heldout_queries);
  write_qrels(data.qrels, paths.qrels);
  write_triples(data.triples, paths.triples);
}

}  // namespace distilrank
