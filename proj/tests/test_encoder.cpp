#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "distilrank/encoder.hpp"
#include "distilrank/errors.hpp"
#include "distilrank/infer.hpp"
#include "distilrank/optim.hpp"
#include "distilrank/rng.hpp"
#include "distilrank/text.hpp"

using namespace distilrank;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.num_layers = 2;
  c.hidden_dim = 8;
  c.num_heads = 2;
  c.ff_dim = 32;
  c.vocab_size = 16;
  c.max_seq_len = 16;
  return c;
}

PairInput tiny_input() {
  // [CLS] 5 6 [SEP] 7 8 [SEP] with padding to 12.
  PairInput in;
  in.tokens = {2, 5, 6, 3, 7, 8, 3, 0, 0, 0, 0, 0};
  in.segments = {0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0};
  in.mask = {1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  return in;
}

// Closed-form parameter count for the architecture (kept independent of the
// manifest enumeration on purpose).
int64_t formula_count(const EncoderConfig& c, bool rank_head) {
  const int64_t h = c.hidden_dim, f = c.ff_dim, v = c.vocab_size;
  int64_t embeddings = v * h + c.num_segments * h + c.max_seq_len * h + 2 * h;
  int64_t per_layer = 4 * (h * h + h) + 2 * h + (h * f + f + f * h + h) + 2 * h;
  int64_t mlm = h * h + h + 2 * h + v;
  int64_t rank = rank_head ? h + 1 : 0;
  return embeddings + c.num_layers * per_layer + mlm + rank;
}

}  // namespace

TEST_CASE("parameter count matches the architecture formula") {
  for (auto [layers, hidden, heads, ff, vocab, seqlen] :
       {std::tuple{2, 8, 2, 32, 16, 16}, std::tuple{4, 12, 3, 48, 30, 24},
        std::tuple{1, 16, 4, 64, 64, 32}}) {
    EncoderConfig c;
    c.num_layers = layers;
    c.hidden_dim = hidden;
    c.num_heads = heads;
    c.ff_dim = ff;
    c.vocab_size = vocab;
    c.max_seq_len = seqlen;
    Checkpoint ckpt = Checkpoint::init(c, 1);
    CHECK(parameter_count(ckpt) == formula_count(c, false));
    ckpt.add_rank_head(2);
    CHECK(parameter_count(ckpt) == formula_count(c, true));
  }
}

TEST_CASE("config validation") {
  EncoderConfig c = tiny_config();
  c.num_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(c.validate(), ParamError);
  c = tiny_config();
  c.max_seq_len = 4;
  CHECK_THROWS_AS(c.validate(), ParamError);
}

TEST_CASE("attention rows sum to one and padding columns get zero") {
  Checkpoint model = Checkpoint::init(tiny_config(), 42);
  EncodeTrace trace = encode(model, tiny_input());
  REQUIRE(trace.hidden_states.size() == 3);  // embedding + 2 layers
  REQUIRE(trace.attentions.size() == 2);
  for (const auto& layer : trace.attentions) {
    REQUIRE(layer.size() == 2);  // heads
    for (const auto& head : layer) {
      for (int64_t i = 0; i < head.rows(); ++i) {
        double sum = 0;
        for (int64_t j = 0; j < head.cols(); ++j) {
          const double v = head.data()[i * head.cols() + j];
          if (j >= 7) CHECK(v == 0.0);  // padded key positions
          sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("changing values at masked positions never touches unmasked states") {
  Checkpoint model = Checkpoint::init(tiny_config(), 7);
  PairInput a = tiny_input();
  PairInput b = a;
  b.tokens[8] = 9;   // padded slots: any id, still masked out
  b.tokens[11] = 4;
  EncodeTrace ta = encode(model, a);
  EncodeTrace tb = encode(model, b);
  for (size_t l = 0; l < ta.hidden_states.size(); ++l) {
    const auto& ha = ta.hidden_states[l];
    const auto& hb = tb.hidden_states[l];
    for (int64_t pos = 0; pos < 7; ++pos)  // unmasked positions only
      for (int64_t j = 0; j < ha.cols(); ++j)
        CHECK(ha.data()[pos * ha.cols() + j] == hb.data()[pos * hb.cols() + j]);
  }
  for (int64_t j = 0; j < ta.cls_vector.size(); ++j)
    CHECK(ta.cls_vector.data()[j] == tb.cls_vector.data()[j]);
}

TEST_CASE("swapping two padding token values leaves the cls vector unchanged") {
  Checkpoint model = Checkpoint::init(tiny_config(), 7);
  PairInput a = tiny_input();
  a.tokens[8] = 9;
  a.tokens[9] = 12;
  PairInput b = a;
  std::swap(b.tokens[8], b.tokens[9]);
  EncodeTrace ta = encode(model, a);
  EncodeTrace tb = encode(model, b);
  for (int64_t j = 0; j < ta.cls_vector.size(); ++j)
    CHECK(ta.cls_vector.data()[j] == tb.cls_vector.data()[j]);
}

TEST_CASE("encode input validation") {
  Checkpoint model = Checkpoint::init(tiny_config(), 7);
  PairInput bad = tiny_input();
  bad.tokens[1] = 99;  // vocab is 16
  CHECK_THROWS_AS((void)encode(model, bad), VocabError);

  PairInput long_input;
  for (int i = 0; i < 20; ++i) {
    long_input.tokens.push_back(2);
    long_input.segments.push_back(0);
    long_input.mask.push_back(1);
  }
  CHECK_THROWS_AS((void)encode(model, long_input), ParamError);
}

TEST_CASE("rank score requires a head, is deterministic, and reduces to the bias") {
  Checkpoint model = Checkpoint::init(tiny_config(), 3);
  CHECK_THROWS_AS((void)rank_score(model, tiny_input()), StateError);

  model.add_rank_head(4);
  const double s1 = rank_score(model, tiny_input());
  const double s2 = rank_score(model, tiny_input());
  CHECK(s1 == s2);  // bitwise

  for (double& v : model.param("rank.w").mutable_data()) v = 0.0;
  model.param("rank.b").mutable_data()[0] = 1.25;
  CHECK(rank_score(model, tiny_input()) == 1.25);
  PairInput other = tiny_input();
  other.tokens[4] = 11;
  CHECK(rank_score(model, other) == 1.25);
}

TEST_CASE("inference engine reproduces the training-path scores") {
  Checkpoint model = Checkpoint::init(tiny_config(), 10);
  model.add_rank_head(11);
  InferenceEngine engine64(model, Precision::F64);
  InferenceEngine engine32(model, Precision::F32);
  Rng rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    PairInput in = tiny_input();
    in.tokens[4] = rng.next_int(5, 15);
    in.tokens[5] = rng.next_int(5, 15);
    const double want = rank_score(model, in);
    // Same math, differently shaped loops: agreement up to FMA contraction.
    CHECK(engine64.score_pair(in) == doctest::Approx(want).epsilon(1e-12));
    CHECK(engine32.score_pair(in) == doctest::Approx(want).epsilon(1e-4));
    // Each path is individually deterministic.
    CHECK(engine64.score_pair(in) == engine64.score_pair(in));
    CHECK(engine32.score_pair(in) == engine32.score_pair(in));
  }
}

TEST_CASE("mlm logits are per-position distributions over the vocabulary") {
  Checkpoint model = Checkpoint::init(tiny_config(), 9);
  BatchInput batch;
  batch.add(tiny_input());
  BatchTrace trace = encode_batch(model, batch);
  Tensor logits = mlm_logits(model, trace, {1, 4});
  CHECK(logits.rows() == 2);
  CHECK(logits.cols() == 16);
  Tensor probs = softmax_rows(logits);
  for (int64_t i = 0; i < 2; ++i) {
    double sum = 0;
    for (int64_t j = 0; j < 16; ++j) sum += probs.data()[i * 16 + j];
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS((void)mlm_logits(model, trace, {}), UsageError);
}

TEST_CASE("untrained mlm accuracy is at chance level") {
  EncoderConfig c = tiny_config();
  c.vocab_size = 64;
  Checkpoint model = Checkpoint::init(c, 123);
  Rng rng(77);
  int64_t correct = 0, total = 0;
  while (total < 1000) {
    BatchInput batch;
    std::vector<int64_t> positions, labels;
    for (int b = 0; b < 8; ++b) {
      PairInput in;
      for (int64_t s = 0; s < 12; ++s) {
        in.tokens.push_back(rng.next_int(5, 63));
        in.segments.push_back(0);
        in.mask.push_back(1);
      }
      const int64_t pos = rng.next_int(1, 11);
      labels.push_back(in.tokens[static_cast<size_t>(pos)]);
      in.tokens[static_cast<size_t>(pos)] = Vocabulary::kMask;
      positions.push_back(b * 12 + pos);
      batch.add(in);
    }
    BatchTrace trace = encode_batch(model, batch);
    Tensor logits = mlm_logits(model, trace, positions);
    for (int64_t i = 0; i < logits.rows(); ++i) {
      int64_t best = 0;
      for (int64_t j = 1; j < logits.cols(); ++j)
        if (logits.data()[i * logits.cols() + j] > logits.data()[i * logits.cols() + best])
          best = j;
      correct += best == labels[static_cast<size_t>(i)] ? 1 : 0;
      ++total;
    }
  }
  const double acc = double(correct) / double(total);
  CHECK(acc <= 2.0 / 64.0);  // within 2x of uniform
}

TEST_CASE("checkpoint save/load roundtrip is bitwise") {
  const auto dir = std::filesystem::temp_directory_path() / "distilrank_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "tiny.ckpt").string();

  Checkpoint model = Checkpoint::init(tiny_config(), 99);
  model.add_rank_head(7);
  model.meta.stage = "finetuned";
  model.meta.lineage = "initialized>pretrained>finetuned";
  model.meta.examples_seen = 1234;
  save_checkpoint(model, path);
  Checkpoint loaded = load_checkpoint(path);
  CHECK(bitwise_equal(model, loaded));
  CHECK(loaded.meta.stage == "finetuned");
  CHECK(loaded.meta.lineage == "initialized>pretrained>finetuned");
  CHECK(loaded.meta.examples_seen == 1234);

  // Same seed, same init.
  CHECK(bitwise_equal(Checkpoint::init(tiny_config(), 99), Checkpoint::init(tiny_config(), 99)));
  CHECK_FALSE(bitwise_equal(Checkpoint::init(tiny_config(), 99), Checkpoint::init(tiny_config(), 98)));
  CHECK_THROWS_AS((void)load_checkpoint((dir / "absent.ckpt").string()), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("tiny model learns a positional repeating pattern to >90% mlm accuracy") {
  // Corpus: the fixed word sequence a b c d e repeated; position alone
  // determines the answer.
  EncoderConfig c;
  c.num_layers = 1;
  c.hidden_dim = 32;
  c.num_heads = 2;
  c.ff_dim = 64;
  c.vocab_size = 16;
  c.max_seq_len = 16;
  Checkpoint model = Checkpoint::init(c, 21);
  model.set_requires_grad(true);
  Optimizer opt({OptimizerKind::Adam, 3e-3, 0.0}, model.trainable());
  Rng rng(4);
  auto make_example = [&](PairInput& in, int64_t& pos, int64_t& label) {
    in = PairInput{};
    in.tokens = {2, 5, 6, 7, 8, 9, 5, 6, 7, 8, 9, 5, 6, 7, 8, 3};
    in.segments.assign(16, 0);
    in.mask.assign(16, 1);
    pos = rng.next_int(1, 14);
    label = in.tokens[static_cast<size_t>(pos)];
    in.tokens[static_cast<size_t>(pos)] = Vocabulary::kMask;
  };
  for (int step = 0; step < 120; ++step) {
    BatchInput batch;
    std::vector<int64_t> positions, labels;
    for (int b = 0; b < 16; ++b) {
      PairInput in;
      int64_t pos, label;
      make_example(in, pos, label);
      positions.push_back(b * 16 + pos);
      labels.push_back(label);
      batch.add(in);
    }
    Tensor loss = cross_entropy_logits(mlm_logits(model, encode_batch(model, batch), positions),
                                       labels);
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  model.set_requires_grad(false);
  int correct = 0, total = 0;
  for (int trial = 0; trial < 200; ++trial) {
    PairInput in;
    int64_t pos, label;
    make_example(in, pos, label);
    BatchInput batch;
    batch.add(in);
    Tensor logits = mlm_logits(model, encode_batch(model, batch), {pos});
    int64_t best = 0;
    for (int64_t j = 1; j < logits.cols(); ++j)
      if (logits.data()[j] > logits.data()[best]) best = j;
    correct += best == label ? 1 : 0;
    ++total;
  }
  CHECK(double(correct) / double(total) > 0.9);
}
