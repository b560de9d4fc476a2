#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "distilrank/errors.hpp"
#include "distilrank/rng.hpp"
#include "distilrank/synth.hpp"
#include "distilrank/train.hpp"

using namespace distilrank;
using namespace distilrank::train;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.num_layers = 2;
  c.hidden_dim = 32;
  c.num_heads = 2;
  c.ff_dim = 64;
  c.vocab_size = 512;
  c.max_seq_len = 32;
  return c;
}

std::vector<DocRecord> small_corpus(uint64_t seed, int64_t docs = 60) {
  Rng rng(seed);
  std::vector<DocRecord> out;
  for (int64_t d = 0; d < docs; ++d) {
    std::string text;
    const int len = rng.next_int(6, 20);
    for (int i = 0; i < len; ++i) text += "w" + std::to_string(rng.next_int(0, 200)) + " ";
    out.push_back({"d" + std::to_string(d), text});
  }
  return out;
}

Vocabulary corpus_vocab(const std::vector<DocRecord>& corpus) {
  std::unordered_map<std::string, int64_t> counts;
  for (const auto& d : corpus)
    for (auto& w : tokenize_words(d.text)) ++counts[w];
  return Vocabulary::build(counts, 512);
}

}  // namespace

TEST_CASE("schedule validation") {
  TrainSchedule s;
  s.max_examples = 100;
  s.checkpoint_marks = {10, 50, 100};
  CHECK_NOTHROW(s.validate());
  s.checkpoint_marks = {50, 50};
  CHECK_THROWS_AS(s.validate(), ParamError);
  s.checkpoint_marks = {150};
  CHECK_THROWS_AS(s.validate(), ParamError);
  s.checkpoint_marks.clear();
  s.lr = 0;
  CHECK_THROWS_AS(s.validate(), ParamError);
}

TEST_CASE("fresh-model mlm loss is near ln(vocab)") {
  auto corpus = small_corpus(5);
  Vocabulary vocab = corpus_vocab(corpus);
  EncoderConfig c = small_config();
  TrainSchedule s;
  s.max_examples = 64;
  s.batch_size = 32;
  s.seed = 3;
  TrainLog log;
  (void)pretrain_mlm(c, corpus, vocab, s, &log);
  REQUIRE(!log.rows.empty());
  const double expected = std::log(static_cast<double>(c.vocab_size));
  CHECK(log.rows.front().loss == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("mlm loss trends downward on the synthetic corpus") {
  SynthParams sp;
  sp.seed = 17;
  sp.num_docs = 300;
  sp.num_queries = 30;
  sp.num_heldout = 5;
  sp.vocab_words = 260;
  sp.triples_per_query = 0;
  SynthData data = generate_synthetic(sp);
  Vocabulary vocab = corpus_vocab(data.collection);

  EncoderConfig c = small_config();
  TrainSchedule s;
  s.lr = 3e-4;
  s.batch_size = 32;
  s.max_examples = 5600;
  s.seed = 9;
  TrainLog log;
  (void)pretrain_mlm(c, data.collection, vocab, s, &log);
  REQUIRE(log.rows.size() >= 20);
  double first10 = 0, last10 = 0;
  for (int i = 0; i < 10; ++i) {
    first10 += log.rows[static_cast<size_t>(i)].loss;
    last10 += log.rows[log.rows.size() - 1 - static_cast<size_t>(i)].loss;
  }
  CHECK(last10 / 10.0 < first10 / 10.0);
  // Wall clock column is non-decreasing.
  for (size_t i = 1; i < log.rows.size(); ++i)
    CHECK(log.rows[i].wall_clock_seconds >= log.rows[i - 1].wall_clock_seconds);
}

TEST_CASE("pretraining is bitwise reproducible for a fixed seed") {
  auto corpus = small_corpus(8, 40);
  Vocabulary vocab = corpus_vocab(corpus);
  EncoderConfig c = small_config();
  TrainSchedule s;
  s.max_examples = 96;
  s.batch_size = 16;
  s.seed = 77;
  Checkpoint a = pretrain_mlm(c, corpus, vocab, s);
  Checkpoint b = pretrain_mlm(c, corpus, vocab, s);
  CHECK(bitwise_equal(a, b));
  CHECK(a.meta.stage == "pretrained");
  CHECK(a.meta.lineage == "initialized>pretrained");
  CHECK(a.meta.examples_seen == 96);

  s.seed = 78;
  Checkpoint other = pretrain_mlm(c, corpus, vocab, s);
  CHECK_FALSE(bitwise_equal(a, other));
}

TEST_CASE("short sequences are skipped and counted") {
  std::vector<DocRecord> corpus = {{"d0", "single"}, {"d1", ""}, {"d2", "two tokens here"}};
  Vocabulary vocab = corpus_vocab(corpus);
  TrainSchedule s;
  s.max_examples = 8;
  s.batch_size = 4;
  TrainLog log;
  (void)pretrain_mlm(small_config(), corpus, vocab, s, &log);
  CHECK(log.skipped_short == 2);
}

TEST_CASE("finetune stage gating and zero-example behavior") {
  auto corpus = small_corpus(4, 30);
  Vocabulary vocab = corpus_vocab(corpus);
  TrainSchedule ps;
  ps.max_examples = 32;
  ps.batch_size = 16;
  ps.seed = 5;
  Checkpoint pretrained = pretrain_mlm(small_config(), corpus, vocab, ps);

  std::vector<TrainTriple> triples = {{"w1 w2", "w1 w2 w3", "w9 w8"}};
  TrainSchedule fs;
  fs.max_examples = 0;
  Checkpoint tuned = train::finetune_ranker(pretrained, triples, vocab, fs);
  CHECK(tuned.meta.stage == "finetuned");
  // Parameters unchanged by a zero-example run (ranking head aside).
  for (const auto& [name, tensor] : pretrained.params()) {
    const auto& after = tuned.param(name);
    for (int64_t i = 0; i < tensor.size(); ++i) CHECK(tensor.data()[i] == after.data()[i]);
  }

  Checkpoint wrong_stage = Checkpoint::init(small_config(), 1);
  CHECK_THROWS_AS((void)train::finetune_ranker(wrong_stage, triples, vocab, fs), StateError);
}

TEST_CASE("checkpoint marks are emitted with exact example counts") {
  auto corpus = small_corpus(4, 30);
  Vocabulary vocab = corpus_vocab(corpus);
  TrainSchedule ps;
  ps.max_examples = 100;
  ps.batch_size = 16;
  ps.checkpoint_marks = {10, 48, 100};
  ps.seed = 5;
  std::vector<int64_t> seen_marks;
  std::vector<int64_t> meta_examples;
  (void)pretrain_mlm(small_config(), corpus, vocab, ps, nullptr,
                     [&](int64_t mark, const Checkpoint& snap) {
                       seen_marks.push_back(mark);
                       meta_examples.push_back(snap.meta.examples_seen);
                       CHECK(snap.meta.stage == "pretrained");
                     });
  CHECK(seen_marks == std::vector<int64_t>{10, 48, 100});
  CHECK(meta_examples == std::vector<int64_t>{10, 48, 100});
}

TEST_CASE("a single memorizable triple drives the loss to zero") {
  auto corpus = small_corpus(6, 30);
  Vocabulary vocab = corpus_vocab(corpus);
  TrainSchedule ps;
  ps.max_examples = 32;
  ps.batch_size = 16;
  ps.seed = 2;
  EncoderConfig c = small_config();
  c.num_layers = 1;
  Checkpoint pretrained = pretrain_mlm(c, corpus, vocab, ps);

  std::vector<TrainTriple> triples = {{"w1 w2", "w1 w2 w3 w4", "w120 w121 w122"}};
  TrainSchedule fs;
  fs.lr = 1e-3;
  fs.batch_size = 2;
  fs.max_examples = 1000;  // 500 steps over the same pair of examples
  fs.seed = 3;
  TrainLog log;
  (void)train::finetune_ranker(pretrained, triples, vocab, fs, &log);
  CHECK(log.rows.back().loss < 0.01);
}
