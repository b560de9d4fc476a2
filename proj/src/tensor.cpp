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

#include "distilrank/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "distilrank/errors.hpp"
#include "distilrank/fastmath.hpp"
#include "distilrank/gemm.hpp"
#include "distilrank/parallel.hpp"

namespace distilrank {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

namespace {

std::atomic<uint64_t> g_seq{0};

NodePtr make_node(std::vector<int64_t> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  int64_t total = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    total *= d;
  }
  n->shape = std::move(shape);
  n->data = acquire_buffer(static_cast<size_t>(total));  // producer overwrites
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed) + 1;
  return n;
}

// Result node of an op: requires_grad if any parent does; only then is the
// backward closure recorded.
NodePtr op_node(std::vector<int64_t> shape, std::initializer_list<NodePtr> parents) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto n = make_node(std::move(shape), rg);
  if (rg) n->parents.assign(parents.begin(), parents.end());
  return n;
}

const NodePtr& need(const Tensor& t, const char* what) {
  if (!t.defined()) throw UsageError(std::string("undefined tensor passed as ") + what);
  return t.node();
}

void check_same_shape(const TensorNode& a, const TensorNode& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

void check_2d(const TensorNode& a, const char* op) {
  if (a.shape.size() != 2)
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(a.shape));
}

inline double* grad_of(const NodePtr& p) {
  p->ensure_grad();
  return p->grad.data();
}

// Elementwise work below this size is not worth fanning out.
constexpr int64_t kParCutoff = 1 << 15;

template <class Fn>
void par_range(int64_t n, Fn&& fn) {
  if (n < kParCutoff || threads() <= 1) {
    fn(0, n);
    return;
  }
  parallel_for(n, fn);
}

// Row- or block-granular loops: each unit is heavy, so fan out early.
template <class Fn>
void par_rows(int64_t rows, Fn&& fn) {
  if (rows < 16 || threads() <= 1) {
    fn(0, rows);
    return;
  }
  parallel_for(rows, fn);
}

}  // namespace

std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  auto n = make_node(std::move(shape), requires_grad);
  std::fill(n->data.begin(), n->data.end(), 0.0);
  return Tensor(n);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
  auto n = make_node(std::move(shape), requires_grad);
  std::fill(n->data.begin(), n->data.end(), value);
  return Tensor(n);
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data, bool requires_grad) {
  auto n = make_node(std::move(shape), requires_grad);
  if (static_cast<int64_t>(data.size()) != n->size())
    throw ShapeError("data length " + std::to_string(data.size()) + " does not fill shape " +
                     shape_str(n->shape));
  n->data.assign(data.begin(), data.end());
  return Tensor(n);
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

const std::vector<int64_t>& Tensor::shape() const { return need(*this, "shape")->shape; }

int64_t Tensor::rows() const {
  check_2d(*need(*this, "rows"), "rows");
  return node_->shape[0];
}

int64_t Tensor::cols() const {
  check_2d(*need(*this, "cols"), "cols");
  return node_->shape[1];
}

int64_t Tensor::size() const { return need(*this, "size")->size(); }

std::span<const double> Tensor::data() const { return need(*this, "data")->data; }

std::span<double> Tensor::mutable_data() { return need(*this, "data")->data; }

std::span<const double> Tensor::grad() const {
  const auto& n = need(*this, "grad");
  if (n->grad.size() != n->data.size())
    throw UsageError("gradient not populated; run backward() first");
  return n->grad;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }

void Tensor::set_requires_grad(bool v) { need(*this, "set_requires_grad")->requires_grad = v; }

void Tensor::zero_grad() {
  auto& n = need(*this, "zero_grad");
  n->grad.assign(n->data.size(), 0.0);
}

double Tensor::item() const {
  const auto& n = need(*this, "item");
  if (n->size() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(n->shape));
  return n->data[0];
}

void Tensor::backward() const {
  const auto& root = need(*this, "backward");
  if (root->size() != 1)
    throw UsageError("backward() requires a scalar loss, got " + shape_str(root->shape));

  // Collect the reachable sub-graph, then replay in reverse creation order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });

  for (TensorNode* n : order) {
    if (n->requires_grad) n->ensure_grad();
  }
  root->grad[0] += 1.0;
  for (TensorNode* n : order) {
    if (n->backprop && n->requires_grad) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const auto &na = need(a, "add lhs"), &nb = need(b, "add rhs");
  check_same_shape(*na, *nb, "add");
  auto out = op_node(na->shape, {na, nb});
  const int64_t n = out->size();
  par_range(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) out->data[i] = na->data[i] + nb->data[i];
  });
  if (out->requires_grad) {
    out->backprop = [](TensorNode& self) {
      for (const auto& p : self.parents) {
        if (!p->requires_grad) continue;
        double* g = grad_of(p);
        par_range(self.size(), [&](int64_t lo, int64_t hi) {
          for (int64_t i = lo; i < hi; ++i) g[i] += self.grad[i];
        });
      }
    };
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto &na = need(a, "sub lhs"), &nb = need(b, "sub rhs");
  check_same_shape(*na, *nb, "sub");
  auto out = op_node(na->shape, {na, nb});
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = na->data[i] - nb->data[i];
  if (out->requires_grad) {
    out->backprop = [na, nb](TensorNode& self) {
      if (na->requires_grad) {
        double* g = grad_of(na);
        for (int64_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
      }
      if (nb->requires_grad) {
        double* g = grad_of(nb);
        for (int64_t i = 0; i < self.size(); ++i) g[i] -= self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto &na = need(a, "mul lhs"), &nb = need(b, "mul rhs");
  check_same_shape(*na, *nb, "mul");
  auto out = op_node(na->shape, {na, nb});
  const int64_t n = out->size();
  par_range(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) out->data[i] = na->data[i] * nb->data[i];
  });
  if (out->requires_grad) {
    out->backprop = [na, nb](TensorNode& self) {
      if (na->requires_grad) {
        double* g = grad_of(na);
        for (int64_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * nb->data[i];
      }
      if (nb->requires_grad) {
        double* g = grad_of(nb);
        for (int64_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * na->data[i];
      }
    };
  }
  return Tensor(out);
}

Tensor affine(const Tensor& a, double s, double shift) {
  const auto& na = need(a, "affine input");
  auto out = op_node(na->shape, {na});
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = s * na->data[i] + shift;
  if (out->requires_grad) {
    out->backprop = [na, s](TensorNode& self) {
      double* g = grad_of(na);
      for (int64_t i = 0; i < self.size(); ++i) g[i] += s * self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }

Tensor add_row_broadcast(const Tensor& a, const Tensor& row) {
  const auto &na = need(a, "broadcast lhs"), &nr = need(row, "broadcast row");
  check_2d(*na, "add_row_broadcast");
  const int64_t m = na->shape[0], n = na->shape[1];
  if (nr->size() != n)
    throw ShapeError("add_row_broadcast: row " + shape_str(nr->shape) + " vs matrix " +
                     shape_str(na->shape));
  auto out = op_node(na->shape, {na, nr});
  par_rows(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i)
      for (int64_t j = 0; j < n; ++j) out->data[i * n + j] = na->data[i * n + j] + nr->data[j];
  });
  if (out->requires_grad) {
    out->backprop = [na, nr, m, n](TensorNode& self) {
      if (na->requires_grad) {
        double* g = grad_of(na);
        par_range(m * n, [&](int64_t lo, int64_t hi) {
          for (int64_t i = lo; i < hi; ++i) g[i] += self.grad[i];
        });
      }
      if (nr->requires_grad) {
        double* g = grad_of(nr);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto &na = need(a, "matmul lhs"), &nb = need(b, "matmul rhs");
  check_2d(*na, "matmul");
  check_2d(*nb, "matmul");
  const int64_t m = na->shape[0], k = na->shape[1], n = nb->shape[1];
  if (nb->shape[0] != k)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(na->shape) + " x " +
                     shape_str(nb->shape));
  auto out = op_node({m, n}, {na, nb});
  gemm_f64(na->data.data(), nb->data.data(), out->data.data(), m, k, n,
           /*accumulate=*/false);
  if (out->requires_grad) {
    out->backprop = [na, nb, m, k, n](TensorNode& self) {
      if (na->requires_grad)
        gemm_nt_f64(self.grad.data(), nb->data.data(), grad_of(na), m, n, k);
      if (nb->requires_grad)
        gemm_tn_f64(na->data.data(), self.grad.data(), grad_of(nb), k, m, n);
    };
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  const auto& na = need(a, "transpose input");
  check_2d(*na, "transpose");
  const int64_t m = na->shape[0], n = na->shape[1];
  auto out = op_node({n, m}, {na});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out->data[j * m + i] = na->data[i * n + j];
  if (out->requires_grad) {
    out->backprop = [na, m, n](TensorNode& self) {
      double* g = grad_of(na);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// shape plumbing

Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& idx) {
  const auto& nt = need(table, "gather_rows table");
  check_2d(*nt, "gather_rows");
  const int64_t rows = nt->shape[0], width = nt->shape[1];
  for (int64_t i : idx)
    if (i < 0 || i >= rows)
      throw ParamError("gather_rows: index " + std::to_string(i) + " outside [0," +
                       std::to_string(rows) + ")");
  auto out = op_node({static_cast<int64_t>(idx.size()), width}, {nt});
  for (size_t r = 0; r < idx.size(); ++r)
    std::memcpy(out->data.data() + r * width, nt->data.data() + idx[r] * width,
                sizeof(double) * static_cast<size_t>(width));
  if (out->requires_grad) {
    out->backprop = [nt, idx, width](TensorNode& self) {
      double* g = grad_of(nt);
      for (size_t r = 0; r < idx.size(); ++r) {
        const double* src = self.grad.data() + r * width;
        double* dst = g + idx[r] * width;
        for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    };
  }
  return Tensor(out);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const auto &na = need(a, "concat lhs"), &nb = need(b, "concat rhs");
  check_2d(*na, "concat_cols");
  check_2d(*nb, "concat_cols");
  if (na->shape[0] != nb->shape[0])
    throw ShapeError("concat_cols: row counts differ, " + shape_str(na->shape) + " vs " +
                     shape_str(nb->shape));
  const int64_t m = na->shape[0], p = na->shape[1], q = nb->shape[1];
  auto out = op_node({m, p + q}, {na, nb});
  for (int64_t i = 0; i < m; ++i) {
    std::memcpy(out->data.data() + i * (p + q), na->data.data() + i * p,
                sizeof(double) * static_cast<size_t>(p));
    std::memcpy(out->data.data() + i * (p + q) + p, nb->data.data() + i * q,
                sizeof(double) * static_cast<size_t>(q));
  }
  if (out->requires_grad) {
    out->backprop = [na, nb, m, p, q](TensorNode& self) {
      if (na->requires_grad) {
        double* g = grad_of(na);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < p; ++j) g[i * p + j] += self.grad[i * (p + q) + j];
      }
      if (nb->requires_grad) {
        double* g = grad_of(nb);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < q; ++j) g[i * q + j] += self.grad[i * (p + q) + p + j];
      }
    };
  }
  return Tensor(out);
}

// [B*S, heads*dh] -> [B*heads*S, dh]; a pure index map, so backward is the
// inverse scatter.
Tensor split_heads(const Tensor& x, int64_t batch, int64_t seq, int64_t heads) {
  const auto& nx = need(x, "split_heads input");
  check_2d(*nx, "split_heads");
  const int64_t width = nx->shape[1];
  if (width % heads != 0)
    throw ShapeError("split_heads: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  if (nx->shape[0] != batch * seq)
    throw ShapeError("split_heads: rows != batch*seq");
  const int64_t dh = width / heads;
  auto out = op_node({batch * heads * seq, dh}, {nx});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t s = 0; s < seq; ++s)
        std::memcpy(out->data.data() + (((b * heads + h) * seq + s)) * dh,
                    nx->data.data() + (b * seq + s) * width + h * dh,
                    sizeof(double) * static_cast<size_t>(dh));
  if (out->requires_grad) {
    out->backprop = [nx, batch, seq, heads, width, dh](TensorNode& self) {
      double* g = grad_of(nx);
      for (int64_t b = 0; b < batch; ++b)
        for (int64_t h = 0; h < heads; ++h)
          for (int64_t s = 0; s < seq; ++s) {
            const double* src = self.grad.data() + ((b * heads + h) * seq + s) * dh;
            double* dst = g + (b * seq + s) * width + h * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
          }
    };
  }
  return Tensor(out);
}

// Inverse of split_heads: [B*heads*S, dh] -> [B*S, heads*dh].
Tensor merge_heads(const Tensor& x, int64_t batch, int64_t seq, int64_t heads) {
  const auto& nx = need(x, "merge_heads input");
  check_2d(*nx, "merge_heads");
  const int64_t dh = nx->shape[1];
  if (nx->shape[0] != batch * heads * seq)
    throw ShapeError("merge_heads: rows != batch*heads*seq");
  const int64_t width = heads * dh;
  auto out = op_node({batch * seq, width}, {nx});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t s = 0; s < seq; ++s)
        std::memcpy(out->data.data() + (b * seq + s) * width + h * dh,
                    nx->data.data() + ((b * heads + h) * seq + s) * dh,
                    sizeof(double) * static_cast<size_t>(dh));
  if (out->requires_grad) {
    out->backprop = [nx, batch, seq, heads, width, dh](TensorNode& self) {
      double* g = grad_of(nx);
      for (int64_t b = 0; b < batch; ++b)
        for (int64_t h = 0; h < heads; ++h)
          for (int64_t s = 0; s < seq; ++s) {
            const double* src = self.grad.data() + (b * seq + s) * width + h * dh;
            double* dst = g + ((b * heads + h) * seq + s) * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
          }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// nonlinearities

Tensor gelu(const Tensor& x) {
  const auto& nx = need(x, "gelu input");
  auto out = op_node(nx->shape, {nx});
  const int64_t n = out->size();
  par_range(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) out->data[i] = gelu_value(nx->data[i]);
  });
  if (out->requires_grad) {
    out->backprop = [nx](TensorNode& self) {
      double* g = grad_of(nx);
      par_range(self.size(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) g[i] += self.grad[i] * gelu_derivative(nx->data[i]);
      });
    };
  }
  return Tensor(out);
}

Tensor sigmoid(const Tensor& x) {
  const auto& nx = need(x, "sigmoid input");
  auto out = op_node(nx->shape, {nx});
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = fast_sigmoid(nx->data[i]);
  if (out->requires_grad) {
    out->backprop = [nx](TensorNode& self) {
      double* g = grad_of(nx);
      for (int64_t i = 0; i < self.size(); ++i) {
        const double s = self.data[i];
        g[i] += self.grad[i] * s * (1.0 - s);
      }
    };
  }
  return Tensor(out);
}

namespace {

void softmax_row(const double* in, double* out, const uint8_t* keep, int64_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int64_t j = 0; j < n; ++j)
    if ((!keep || keep[j]) && in[j] > mx) mx = in[j];
  double denom = 0.0;
  for (int64_t j = 0; j < n; ++j) {
    if (keep && !keep[j]) {
      out[j] = 0.0;
    } else {
      out[j] = fast_exp(in[j] - mx);
      denom += out[j];
    }
  }
  const double inv = 1.0 / denom;
  for (int64_t j = 0; j < n; ++j) out[j] *= inv;
}

void softmax_backward_row(const double* p, const double* gout, double* gin, int64_t n) {
  double dot = 0.0;
  for (int64_t j = 0; j < n; ++j) dot += gout[j] * p[j];
  for (int64_t j = 0; j < n; ++j) gin[j] += p[j] * (gout[j] - dot);
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  const auto& nx = need(x, "softmax input");
  check_2d(*nx, "softmax_rows");
  const int64_t m = nx->shape[0], n = nx->shape[1];
  for (double v : nx->data)
    if (!std::isfinite(v)) throw DomainError("softmax_rows: non-finite input");
  auto out = op_node(nx->shape, {nx});
  par_rows(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i)
      softmax_row(nx->data.data() + i * n, out->data.data() + i * n, nullptr, n);
  });
  if (out->requires_grad) {
    out->backprop = [nx, m, n](TensorNode& self) {
      double* g = grad_of(nx);
      par_rows(m, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
          softmax_backward_row(self.data.data() + i * n, self.grad.data() + i * n, g + i * n, n);
      });
    };
  }
  return Tensor(out);
}

Tensor masked_softmax_rows(const Tensor& x, const std::vector<uint8_t>& keep,
                           int64_t rows_per_group) {
  const auto& nx = need(x, "masked softmax input");
  check_2d(*nx, "masked_softmax_rows");
  const int64_t m = nx->shape[0], n = nx->shape[1];
  if (rows_per_group <= 0 || m % rows_per_group != 0)
    throw ShapeError("masked_softmax_rows: rows_per_group does not divide row count");
  const int64_t groups = m / rows_per_group;
  if (static_cast<int64_t>(keep.size()) != groups * n)
    throw ShapeError("masked_softmax_rows: keep mask size mismatch");
  for (int64_t g = 0; g < groups; ++g) {
    bool any = false;
    for (int64_t j = 0; j < n; ++j) any = any || keep[g * n + j];
    if (!any) throw ParamError("masked_softmax_rows: a group masks out every column");
  }
  auto out = op_node(nx->shape, {nx});
  par_rows(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const uint8_t* k = keep.data() + (i / rows_per_group) * n;
      softmax_row(nx->data.data() + i * n, out->data.data() + i * n, k, n);
    }
  });
  if (out->requires_grad) {
    out->backprop = [nx, m, n](TensorNode& self) {
      double* g = grad_of(nx);
      // Masked entries have p == 0, so the shared formula leaves them at 0.
      par_rows(m, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
          softmax_backward_row(self.data.data() + i * n, self.grad.data() + i * n, g + i * n, n);
      });
    };
  }
  return Tensor(out);
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto &nx = need(x, "layer_norm input"), &ng = need(gain, "layer_norm gain"),
             &nb = need(bias, "layer_norm bias");
  check_2d(*nx, "layer_norm_rows");
  const int64_t m = nx->shape[0], n = nx->shape[1];
  if (ng->size() != n || nb->size() != n)
    throw ShapeError("layer_norm_rows: gain/bias width mismatch with " + shape_str(nx->shape));
  auto out = op_node(nx->shape, {nx, ng, nb});

  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m * n));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(m));
  par_rows(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const double* row = nx->data.data() + i * n;
      double mean = 0.0;
      for (int64_t j = 0; j < n; ++j) mean += row[j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (int64_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= static_cast<double>(n);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<size_t>(i)] = is;
      for (int64_t j = 0; j < n; ++j) {
        const double xh = (row[j] - mean) * is;
        (*xhat)[static_cast<size_t>(i * n + j)] = xh;
        out->data[i * n + j] = ng->data[j] * xh + nb->data[j];
      }
    }
  });
  if (out->requires_grad) {
    out->backprop = [nx, ng, nb, m, n, xhat, inv_std](TensorNode& self) {
      if (ng->requires_grad) {
        double* g = grad_of(ng);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            g[j] += self.grad[i * n + j] * (*xhat)[static_cast<size_t>(i * n + j)];
      }
      if (nb->requires_grad) {
        double* g = grad_of(nb);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
      if (nx->requires_grad) {
        double* g = grad_of(nx);
        const double invn = 1.0 / static_cast<double>(n);
        par_rows(m, [&](int64_t lo, int64_t hi) {
          for (int64_t i = lo; i < hi; ++i) {
            double sum_gy = 0.0, sum_gy_xh = 0.0;
            for (int64_t j = 0; j < n; ++j) {
              const double gy = self.grad[i * n + j] * ng->data[j];
              sum_gy += gy;
              sum_gy_xh += gy * (*xhat)[static_cast<size_t>(i * n + j)];
            }
            const double is = (*inv_std)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < n; ++j) {
              const double gy = self.grad[i * n + j] * ng->data[j];
              const double xh = (*xhat)[static_cast<size_t>(i * n + j)];
              g[i * n + j] += is * (gy - invn * sum_gy - xh * invn * sum_gy_xh);
            }
          }
        });
      }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// attention primitives

Tensor attention_scores(const Tensor& q, const Tensor& k, int64_t blocks, int64_t seq,
                        double scaling) {
  const auto &nq = need(q, "attention q"), &nk = need(k, "attention k");
  check_2d(*nq, "attention_scores");
  check_same_shape(*nq, *nk, "attention_scores");
  if (nq->shape[0] != blocks * seq)
    throw ShapeError("attention_scores: rows != blocks*seq");
  const int64_t dh = nq->shape[1];
  auto out = op_node({blocks * seq, seq}, {nq, nk});
  par_rows(blocks, [&](int64_t lo, int64_t hi) {
    for (int64_t b = lo; b < hi; ++b) {
      const double* qb = nq->data.data() + b * seq * dh;
      const double* kb = nk->data.data() + b * seq * dh;
      double* ob = out->data.data() + b * seq * seq;
      gemm_nt_f64(qb, kb, ob, seq, dh, seq, /*accumulate=*/false);
      for (int64_t i = 0; i < seq * seq; ++i) ob[i] *= scaling;
    }
  });
  if (out->requires_grad) {
    out->backprop = [nq, nk, blocks, seq, dh, scaling](TensorNode& self) {
      double* gq = nq->requires_grad ? grad_of(nq) : nullptr;
      double* gk = nk->requires_grad ? grad_of(nk) : nullptr;
      par_rows(blocks, [&](int64_t lo, int64_t hi) {
        std::vector<double> gs(static_cast<size_t>(seq * seq));
        for (int64_t b = lo; b < hi; ++b) {
          const double* gb = self.grad.data() + b * seq * seq;
          for (int64_t i = 0; i < seq * seq; ++i) gs[static_cast<size_t>(i)] = gb[i] * scaling;
          if (gq)
            gemm_f64(gs.data(), nk->data.data() + b * seq * dh, gq + b * seq * dh, seq, seq, dh);
          if (gk)
            gemm_tn_f64(gs.data(), nq->data.data() + b * seq * dh, gk + b * seq * dh, seq, seq,
                        dh);
        }
      });
    };
  }
  return Tensor(out);
}

Tensor attention_apply(const Tensor& probs, const Tensor& v, int64_t blocks, int64_t seq) {
  const auto &np = need(probs, "attention probs"), &nv = need(v, "attention v");
  check_2d(*np, "attention_apply");
  check_2d(*nv, "attention_apply");
  const int64_t dh = nv->shape[1];
  if (np->shape[0] != blocks * seq || np->shape[1] != seq || nv->shape[0] != blocks * seq)
    throw ShapeError("attention_apply: inconsistent block shapes");
  auto out = op_node({blocks * seq, dh}, {np, nv});
  par_rows(blocks, [&](int64_t lo, int64_t hi) {
    for (int64_t b = lo; b < hi; ++b)
      gemm_f64(np->data.data() + b * seq * seq, nv->data.data() + b * seq * dh,
               out->data.data() + b * seq * dh, seq, seq, dh, /*accumulate=*/false);
  });
  if (out->requires_grad) {
    out->backprop = [np, nv, blocks, seq, dh](TensorNode& self) {
      double* gp = np->requires_grad ? grad_of(np) : nullptr;
      double* gv = nv->requires_grad ? grad_of(nv) : nullptr;
      par_rows(blocks, [&](int64_t lo, int64_t hi) {
        for (int64_t b = lo; b < hi; ++b) {
          const double* gb = self.grad.data() + b * seq * dh;
          if (gp)
            gemm_nt_f64(gb, nv->data.data() + b * seq * dh, gp + b * seq * seq, seq, dh, seq);
          if (gv)
            gemm_tn_f64(np->data.data() + b * seq * seq, gb, gv + b * seq * dh, seq, seq, dh);
        }
      });
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// reductions and losses

Tensor sum_all(const Tensor& a) {
  const auto& na = need(a, "sum input");
  auto out = op_node({1}, {na});
  double s = 0.0;
  for (double v : na->data) s += v;
  out->data[0] = s;
  if (out->requires_grad) {
    out->backprop = [na](TensorNode& self) {
      double* g = grad_of(na);
      for (int64_t i = 0; i < na->size(); ++i) g[i] += self.grad[0];
    };
  }
  return Tensor(out);
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(need(a, "mean input")->size()));
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  const auto &na = need(a, "mse lhs"), &nb = need(b, "mse rhs");
  check_same_shape(*na, *nb, "mse_loss");
  auto out = op_node({1}, {na, nb});
  const int64_t n = na->size();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = na->data[i] - nb->data[i];
    s += d * d;
  }
  out->data[0] = s / static_cast<double>(n);
  if (out->requires_grad) {
    out->backprop = [na, nb, n](TensorNode& self) {
      const double c = 2.0 * self.grad[0] / static_cast<double>(n);
      if (na->requires_grad) {
        double* g = grad_of(na);
        for (int64_t i = 0; i < n; ++i) g[i] += c * (na->data[i] - nb->data[i]);
      }
      if (nb->requires_grad) {
        double* g = grad_of(nb);
        for (int64_t i = 0; i < n; ++i) g[i] -= c * (na->data[i] - nb->data[i]);
      }
    };
  }
  return Tensor(out);
}

Tensor masked_row_mse(const Tensor& a, const Tensor& b, const std::vector<uint8_t>& row_keep) {
  const auto &na = need(a, "masked mse lhs"), &nb = need(b, "masked mse rhs");
  check_same_shape(*na, *nb, "masked_row_mse");
  check_2d(*na, "masked_row_mse");
  const int64_t m = na->shape[0], n = na->shape[1];
  if (static_cast<int64_t>(row_keep.size()) != m)
    throw ShapeError("masked_row_mse: row mask length mismatch");
  int64_t kept = 0;
  for (uint8_t k : row_keep) kept += k ? 1 : 0;
  if (kept == 0) throw ParamError("masked_row_mse: no rows kept");
  auto out = op_node({1}, {na, nb});
  double s = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    if (!row_keep[static_cast<size_t>(i)]) continue;
    for (int64_t j = 0; j < n; ++j) {
      const double d = na->data[i * n + j] - nb->data[i * n + j];
      s += d * d;
    }
  }
  out->data[0] = s / static_cast<double>(kept * n);
  if (out->requires_grad) {
    out->backprop = [na, nb, m, n, row_keep, kept](TensorNode& self) {
      const double c = 2.0 * self.grad[0] / static_cast<double>(kept * n);
      for (int64_t i = 0; i < m; ++i) {
        if (!row_keep[static_cast<size_t>(i)]) continue;
        for (int64_t j = 0; j < n; ++j) {
          const double d = na->data[i * n + j] - nb->data[i * n + j];
          if (na->requires_grad) grad_of(na)[i * n + j] += c * d;
          if (nb->requires_grad) grad_of(nb)[i * n + j] -= c * d;
        }
      }
    };
  }
  return Tensor(out);
}

Tensor kl_div_rows(const Tensor& p, const Tensor& q) {
  const auto &np = need(p, "kl p"), &nq = need(q, "kl q");
  check_same_shape(*np, *nq, "kl_div_rows");
  check_2d(*np, "kl_div_rows");
  const int64_t m = np->shape[0], n = np->shape[1];
  for (int64_t i = 0; i < m; ++i) {
    double sp = 0.0, sq = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double pv = np->data[i * n + j], qv = nq->data[i * n + j];
      if (!(pv >= 0.0) || !(qv >= 0.0))
        throw DomainError("kl_div_rows: negative probability entry");
      if (pv > 0.0 && qv == 0.0)
        throw DomainError("kl_div_rows: q has zero mass where p is positive");
      sp += pv;
      sq += qv;
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
      throw DomainError("kl_div_rows: rows must sum to 1 within 1e-9");
  }
  auto out = op_node({1}, {np, nq});
  double s = 0.0;
  for (int64_t i = 0; i < m * n; ++i) {
    const double pv = np->data[i];
    if (pv > 0.0) s += pv * std::log(pv / nq->data[i]);
  }
  out->data[0] = s / static_cast<double>(m);
  if (out->requires_grad) {
    out->backprop = [np, nq, m, n](TensorNode& self) {
      const double c = self.grad[0] / static_cast<double>(m);
      for (int64_t i = 0; i < m * n; ++i) {
        const double pv = np->data[i], qv = nq->data[i];
        if (pv <= 0.0) continue;
        if (np->requires_grad) grad_of(np)[i] += c * (std::log(pv / qv) + 1.0);
        if (nq->requires_grad) grad_of(nq)[i] -= c * pv / qv;
      }
    };
  }
  return Tensor(out);
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int64_t>& targets) {
  const auto& nl = need(logits, "cross entropy logits");
  check_2d(*nl, "cross_entropy_logits");
  const int64_t m = nl->shape[0], n = nl->shape[1];
  if (static_cast<int64_t>(targets.size()) != m)
    throw ShapeError("cross_entropy_logits: target count != logit rows");
  for (int64_t t : targets)
    if (t < 0 || t >= n) throw ParamError("cross_entropy_logits: target class out of range");
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(m * n));
  auto out = op_node({1}, {nl});
  double s = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    softmax_row(nl->data.data() + i * n, probs->data() + i * n, nullptr, n);
    s -= std::log(std::max((*probs)[static_cast<size_t>(i * n + targets[static_cast<size_t>(i)])],
                           1e-300));
  }
  out->data[0] = s / static_cast<double>(m);
  if (out->requires_grad) {
    out->backprop = [nl, m, n, targets, probs](TensorNode& self) {
      const double c = self.grad[0] / static_cast<double>(m);
      double* g = grad_of(nl);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          double d = (*probs)[static_cast<size_t>(i * n + j)];
          if (j == targets[static_cast<size_t>(i)]) d -= 1.0;
          g[i * n + j] += c * d;
        }
      }
    };
  }
  return Tensor(out);
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels) {
  const auto& nl = need(logits, "bce logits");
  const int64_t m = nl->size();
  if (static_cast<int64_t>(labels.size()) != m)
    throw ShapeError("bce_with_logits: label count != logit count");
  auto out = op_node({1}, {nl});
  double s = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    const double z = nl->data[i], y = labels[static_cast<size_t>(i)];
    s += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  out->data[0] = s / static_cast<double>(m);
  if (out->requires_grad) {
    out->backprop = [nl, m, labels](TensorNode& self) {
      const double c = self.grad[0] / static_cast<double>(m);
      double* g = grad_of(nl);
      for (int64_t i = 0; i < m; ++i) {
        const double sig = 1.0 / (1.0 + std::exp(-nl->data[i]));
        g[i] += c * (sig - labels[static_cast<size_t>(i)]);
      }
    };
  }
  return Tensor(out);
}

}  // namespace distilrank
