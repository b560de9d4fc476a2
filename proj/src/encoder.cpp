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

#include "distilrank/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "distilrank/errors.hpp"
#include "distilrank/kv.hpp"
#include "distilrank/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace distilrank {

namespace {

constexpr double kInitStd = 0.02;
constexpr char kMagic[] = "distilrank-checkpoint";

Tensor init_normal(std::vector<int64_t> shape, Rng& rng, double std_dev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.next_normal() * std_dev;
  return t;
}

std::string layer_prefix(int64_t i) { return "layers." + std::to_string(i) + "."; }

}  // namespace

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ParamError("encoder config: num_layers must be >= 1");
  if (hidden_dim < 1 || num_heads < 1 || ff_dim < 1 || vocab_size < 6)
    throw ParamError("encoder config: dimensions must be positive (vocab >= 6 for reserved ids)");
  if (hidden_dim % num_heads != 0)
    throw ParamError("encoder config: hidden_dim " + std::to_string(hidden_dim) +
                     " not divisible by num_heads " + std::to_string(num_heads));
  if (max_seq_len < 8) throw ParamError("encoder config: max_seq_len must be >= 8");
  if (num_segments < 2) throw ParamError("encoder config: num_segments must be >= 2");
}

std::vector<std::string> Checkpoint::manifest(const EncoderConfig& config, bool with_rank_head) {
  std::vector<std::string> names = {
      "embeddings.token", "embeddings.segment", "embeddings.position",
      "embeddings.ln.gain", "embeddings.ln.bias",
  };
  for (int64_t i = 0; i < config.num_layers; ++i) {
    const std::string p = layer_prefix(i);
    for (const char* n : {"attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
                          "attn.wo", "attn.bo", "attn.ln.gain", "attn.ln.bias", "ff.w1", "ff.b1",
                          "ff.w2", "ff.b2", "ff.ln.gain", "ff.ln.bias"})
      names.push_back(p + n);
  }
  for (const char* n : {"mlm.transform.w", "mlm.transform.b", "mlm.ln.gain", "mlm.ln.bias",
                        "mlm.bias"})
    names.emplace_back(n);
  if (with_rank_head) {
    names.emplace_back("rank.w");
    names.emplace_back("rank.b");
  }
  return names;
}

namespace {

std::vector<int64_t> param_shape(const EncoderConfig& c, const std::string& name) {
  const int64_t h = c.hidden_dim, f = c.ff_dim, v = c.vocab_size;
  auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  if (name == "embeddings.token") return {v, h};
  if (name == "embeddings.segment") return {c.num_segments, h};
  if (name == "embeddings.position") return {c.max_seq_len, h};
  if (name == "mlm.transform.w") return {h, h};
  if (name == "mlm.transform.b") return {h};
  if (name == "mlm.bias") return {v};
  if (name == "rank.w") return {h, 1};
  if (name == "rank.b") return {1};
  if (ends_with("ln.gain") || ends_with("ln.bias")) return {h};
  if (ends_with("ff.w1")) return {h, f};
  if (ends_with("ff.b1")) return {f};
  if (ends_with("ff.w2")) return {f, h};
  if (ends_with("ff.b2")) return {h};
  if (ends_with(".wq") || ends_with(".wk") || ends_with(".wv") || ends_with(".wo")) return {h, h};
  if (ends_with(".bq") || ends_with(".bk") || ends_with(".bv") || ends_with(".bo")) return {h};
  throw ParamError("unknown parameter name '" + name + "'");
}

Tensor init_param(const EncoderConfig& c, const std::string& name, Rng& rng) {
  auto shape = param_shape(c, name);
  const bool is_gain = name.size() >= 7 && name.compare(name.size() - 7, 7, "ln.gain") == 0;
  const bool is_bias = !is_gain && (shape.size() == 1 || name == "rank.b");
  if (is_gain) return Tensor::full(std::move(shape), 1.0);
  if (is_bias) return Tensor::zeros(std::move(shape));
  return init_normal(std::move(shape), rng, kInitStd);
}

}  // namespace

Checkpoint Checkpoint::init(const EncoderConfig& config, uint64_t seed) {
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.meta.seed = seed;
  Rng rng(seed);
  for (const auto& name : manifest(config, /*with_rank_head=*/false))
    ckpt.push_param(name, init_param(config, name, rng));
  return ckpt;
}

void Checkpoint::push_param(std::string name, Tensor t) {
  if (has_param(name)) throw UsageError("duplicate parameter '" + name + "'");
  params_.emplace_back(std::move(name), std::move(t));
}

Tensor& Checkpoint::param(std::string_view name) {
  for (auto& [n, t] : params_)
    if (n == name) return t;
  throw StateError("checkpoint lacks parameter '" + std::string(name) + "'");
}

const Tensor& Checkpoint::param(std::string_view name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw StateError("checkpoint lacks parameter '" + std::string(name) + "'");
}

bool Checkpoint::has_param(std::string_view name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return true;
  return false;
}

void Checkpoint::add_rank_head(uint64_t seed) {
  if (has_rank_head()) return;
  Rng rng(seed ^ 0x72616e6bull);  // decorrelate from body init
  push_param("rank.w", init_normal({config.hidden_dim, 1}, rng, kInitStd));
  push_param("rank.b", Tensor::zeros({1}));
}

Checkpoint Checkpoint::clone() const {
  Checkpoint out;
  out.config = config;
  out.meta = meta;
  for (const auto& [n, t] : params_) {
    std::vector<double> data(t.data().begin(), t.data().end());
    out.push_param(n, Tensor::from(t.shape(), std::move(data)));
  }
  return out;
}

void Checkpoint::set_requires_grad(bool v) {
  for (auto& [n, t] : params_) t.set_requires_grad(v);
}

std::vector<Tensor> Checkpoint::trainable() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

int64_t parameter_count(const Checkpoint& ckpt) {
  int64_t total = 0;
  for (const auto& [n, t] : ckpt.params()) total += t.size();
  return total;
}

// ---------------------------------------------------------------------------
// serialization

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  KvDoc doc;
  doc.set("format", kMagic);
  doc.set_int("config.num_layers", ckpt.config.num_layers);
  doc.set_int("config.hidden_dim", ckpt.config.hidden_dim);
  doc.set_int("config.num_heads", ckpt.config.num_heads);
  doc.set_int("config.ff_dim", ckpt.config.ff_dim);
  doc.set_int("config.vocab_size", ckpt.config.vocab_size);
  doc.set_int("config.max_seq_len", ckpt.config.max_seq_len);
  doc.set_int("config.num_segments", ckpt.config.num_segments);
  doc.set_int("meta.examples_seen", ckpt.meta.examples_seen);
  doc.set("meta.stage", ckpt.meta.stage);
  doc.set("meta.lineage", ckpt.meta.lineage);
  doc.set_int("meta.seed", static_cast<int64_t>(ckpt.meta.seed));
  doc.set_int("params.count", static_cast<int64_t>(ckpt.params().size()));
  for (size_t i = 0; i < ckpt.params().size(); ++i) {
    const auto& [name, t] = ckpt.params()[i];
    doc.set("param." + std::to_string(i) + ".name", name);
    std::string dims;
    for (size_t d = 0; d < t.shape().size(); ++d) {
      if (d) dims += "x";
      dims += std::to_string(t.shape()[d]);
    }
    doc.set("param." + std::to_string(i) + ".shape", dims);
  }
  const std::string header = doc.serialize();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint file for writing: " + path);
  out << kMagic << " " << header.size() << "\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : ckpt.params()) {
    auto d = t.data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint file: " + path);
  std::string magic_line;
  std::getline(in, magic_line);
  const std::string prefix = std::string(kMagic) + " ";
  if (magic_line.rfind(prefix, 0) != 0)
    throw FormatError("not a checkpoint file: " + path);
  size_t header_len = 0;
  try {
    header_len = std::stoul(magic_line.substr(prefix.size()));
  } catch (...) {
    throw FormatError("bad checkpoint header length in " + path);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("truncated checkpoint header in " + path);
  KvDoc doc = KvDoc::parse(header);

  Checkpoint ckpt;
  ckpt.config.num_layers = doc.get_int("config.num_layers");
  ckpt.config.hidden_dim = doc.get_int("config.hidden_dim");
  ckpt.config.num_heads = doc.get_int("config.num_heads");
  ckpt.config.ff_dim = doc.get_int("config.ff_dim");
  ckpt.config.vocab_size = doc.get_int("config.vocab_size");
  ckpt.config.max_seq_len = doc.get_int("config.max_seq_len");
  ckpt.config.num_segments = doc.get_int("config.num_segments");
  ckpt.config.validate();
  ckpt.meta.examples_seen = doc.get_int("meta.examples_seen");
  ckpt.meta.stage = doc.get("meta.stage");
  ckpt.meta.lineage = doc.get("meta.lineage");
  ckpt.meta.seed = static_cast<uint64_t>(doc.get_int("meta.seed"));

  const int64_t count = doc.get_int("params.count");
  for (int64_t i = 0; i < count; ++i) {
    const std::string name = doc.get("param." + std::to_string(i) + ".name");
    const std::string dims = doc.get("param." + std::to_string(i) + ".shape");
    std::vector<int64_t> shape;
    size_t pos = 0;
    while (pos <= dims.size()) {
      size_t x = dims.find('x', pos);
      shape.push_back(std::stoll(dims.substr(pos, x == std::string::npos ? std::string::npos
                                                                         : x - pos)));
      if (x == std::string::npos) break;
      pos = x + 1;
    }
    int64_t total = 1;
    for (int64_t d : shape) total *= d;
    std::vector<double> data(static_cast<size_t>(total));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw FormatError("truncated parameter data in " + path);
    ckpt.push_param(name, Tensor::from(std::move(shape), std::move(data)));
  }

  // Validate the manifest against the architecture.
  auto expected = Checkpoint::manifest(ckpt.config, ckpt.has_rank_head());
  if (expected.size() != ckpt.params().size())
    throw FormatError("checkpoint manifest size mismatch in " + path);
  for (size_t i = 0; i < expected.size(); ++i)
    if (expected[i] != ckpt.params()[i].first)
      throw FormatError("checkpoint manifest mismatch at '" + ckpt.params()[i].first + "'");
  return ckpt;
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.config == b.config) || a.params().size() != b.params().size()) return false;
  for (size_t i = 0; i < a.params().size(); ++i) {
    const auto& [an, at] = a.params()[i];
    const auto& [bn, bt] = b.params()[i];
    if (an != bn || at.shape() != bt.shape()) return false;
    if (std::memcmp(at.data().data(), bt.data().data(),
                    at.data().size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// forward pass

void BatchInput::add(const PairInput& p) {
  const int64_t len = static_cast<int64_t>(p.tokens.size());
  if (p.segments.size() != p.tokens.size() || p.mask.size() != p.tokens.size())
    throw ShapeError("pair input: tokens/segments/mask lengths differ");
  if (batch == 0) seq = len;
  if (len != seq) throw ShapeError("batch input: all sequences must share one length");
  ++batch;
  tokens.insert(tokens.end(), p.tokens.begin(), p.tokens.end());
  segments.insert(segments.end(), p.segments.begin(), p.segments.end());
  mask.insert(mask.end(), p.mask.begin(), p.mask.end());
}

namespace {

void validate_batch(const Checkpoint& model, const BatchInput& in) {
  const auto& c = model.config;
  if (in.batch < 1) throw ParamError("encode: empty batch");
  if (in.seq > c.max_seq_len)
    throw ParamError("encode: sequence length " + std::to_string(in.seq) +
                     " exceeds max_seq_len " + std::to_string(c.max_seq_len) +
                     "; pre-truncate inputs");
  for (int64_t id : in.tokens)
    if (id < 0 || id >= c.vocab_size)
      throw VocabError("encode: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(c.vocab_size));
  for (int64_t id : in.segments)
    if (id < 0 || id >= c.num_segments)
      throw VocabError("encode: segment id " + std::to_string(id) + " out of range");
  for (int64_t b = 0; b < in.batch; ++b) {
    bool any = false;
    for (int64_t s = 0; s < in.seq; ++s) any = any || in.mask[b * in.seq + s];
    if (!any) throw ParamError("encode: sequence " + std::to_string(b) + " is fully masked");
  }
}

}  // namespace

BatchTrace encode_batch(const Checkpoint& model, const BatchInput& in) {
  validate_batch(model, in);
  const auto& c = model.config;
  const int64_t B = in.batch, S = in.seq, H = c.num_heads;
  const int64_t dh = c.hidden_dim / H;

  std::vector<int64_t> positions(static_cast<size_t>(B * S));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t s = 0; s < S; ++s) positions[static_cast<size_t>(b * S + s)] = s;

  BatchTrace trace;
  trace.batch = B;
  trace.seq = S;

  Tensor x = add(add(gather_rows(model.param("embeddings.token"), in.tokens),
                     gather_rows(model.param("embeddings.segment"), in.segments)),
                 gather_rows(model.param("embeddings.position"), positions));
  x = layer_norm_rows(x, model.param("embeddings.ln.gain"), model.param("embeddings.ln.bias"));
  trace.hidden.push_back(x);

  // Attention keep mask: one group per (batch, head) block of rows; kept
  // columns are the unmasked key positions of that batch item.
  std::vector<uint8_t> keep(static_cast<size_t>(B * H * S));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t s = 0; s < S; ++s)
        keep[static_cast<size_t>((b * H + h) * S + s)] = in.mask[static_cast<size_t>(b * S + s)];

  const double scaling = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int64_t l = 0; l < c.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    Tensor q = add_row_broadcast(matmul(x, model.param(p + "attn.wq")), model.param(p + "attn.bq"));
    Tensor k = add_row_broadcast(matmul(x, model.param(p + "attn.wk")), model.param(p + "attn.bk"));
    Tensor v = add_row_broadcast(matmul(x, model.param(p + "attn.wv")), model.param(p + "attn.bv"));
    Tensor qh = split_heads(q, B, S, H);
    Tensor kh = split_heads(k, B, S, H);
    Tensor vh = split_heads(v, B, S, H);
    Tensor scores = attention_scores(qh, kh, B * H, S, scaling);
    Tensor probs = masked_softmax_rows(scores, keep, /*rows_per_group=*/S);
    trace.attn.push_back(probs);
    Tensor ctx = merge_heads(attention_apply(probs, vh, B * H, S), B, S, H);
    Tensor attn_out =
        add_row_broadcast(matmul(ctx, model.param(p + "attn.wo")), model.param(p + "attn.bo"));
    x = layer_norm_rows(add(x, attn_out), model.param(p + "attn.ln.gain"),
                        model.param(p + "attn.ln.bias"));
    Tensor ff = add_row_broadcast(matmul(x, model.param(p + "ff.w1")), model.param(p + "ff.b1"));
    ff = add_row_broadcast(matmul(gelu(ff), model.param(p + "ff.w2")), model.param(p + "ff.b2"));
    x = layer_norm_rows(add(x, ff), model.param(p + "ff.ln.gain"), model.param(p + "ff.ln.bias"));
    trace.hidden.push_back(x);
  }

  std::vector<int64_t> cls_rows(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) cls_rows[static_cast<size_t>(b)] = b * S;
  trace.cls = gather_rows(x, cls_rows);
  return trace;
}

EncodeTrace encode(const Checkpoint& model, const PairInput& in) {
  BatchInput batch;
  batch.add(in);
  BatchTrace bt = encode_batch(model, batch);

  // The keep-mask group layout guarantees every attention row sums to 1 and
  // masked columns are exactly 0; here we only reslice per layer and head.
  const int64_t S = bt.seq, H = model.config.num_heads;
  EncodeTrace out;
  out.hidden_states = bt.hidden;
  out.attentions.resize(static_cast<size_t>(model.config.num_layers));
  for (int64_t l = 0; l < model.config.num_layers; ++l) {
    for (int64_t h = 0; h < H; ++h) {
      std::vector<int64_t> rows(static_cast<size_t>(S));
      for (int64_t s = 0; s < S; ++s) rows[static_cast<size_t>(s)] = h * S + s;
      out.attentions[static_cast<size_t>(l)].push_back(gather_rows(bt.attn[static_cast<size_t>(l)], rows));
    }
  }
  out.cls_vector = bt.cls;
  return out;
}

Tensor rank_logits(const Checkpoint& model, const BatchTrace& trace) {
  if (!model.has_rank_head())
    throw StateError("model has no ranking head; fine-tune or distill a ranker first");
  return add_row_broadcast(matmul(trace.cls, model.param("rank.w")), model.param("rank.b"));
}

double rank_score(const Checkpoint& model, const PairInput& in) {
  BatchInput batch;
  batch.add(in);
  BatchTrace trace = encode_batch(model, batch);
  return rank_logits(model, trace).data()[0];
}

Tensor mlm_logits(const Checkpoint& model, const BatchTrace& trace,
                  const std::vector<int64_t>& positions) {
  if (positions.empty()) throw UsageError("mlm_logits: no masked positions given");
  Tensor h = gather_rows(trace.hidden.back(), positions);
  h = add_row_broadcast(matmul(h, model.param("mlm.transform.w")),
                        model.param("mlm.transform.b"));
  h = layer_norm_rows(gelu(h), model.param("mlm.ln.gain"), model.param("mlm.ln.bias"));
  // Decoder tied to the token embedding.
  Tensor logits = matmul(h, transpose(model.param("embeddings.token")));
  return add_row_broadcast(logits, model.param("mlm.bias"));
}

}  // namespace distilrank
