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

#ifndef DISTILRANK_TENSOR_HPP
#define DISTILRANK_TENSOR_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "distilrank/buffer.hpp"
#include "distilrank/parallel.hpp"

namespace distilrank {

namespace detail {

struct TensorNode {
  std::vector<int64_t> shape;
  Buffer data;
  Buffer grad;  // allocated lazily; accumulates until zeroed
  bool requires_grad = false;
  uint64_t seq = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  ~TensorNode() {
    release_buffer(std::move(data));
    release_buffer(std::move(grad));
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) {
      grad = acquire_buffer(data.size());
      double* g = grad.data();
      parallel_for(static_cast<int64_t>(grad.size()), [g](int64_t lo, int64_t hi) {
        std::fill(g + lo, g + hi, 0.0);
      });
    }
  }
};

}  // namespace detail

// Dense row-major tensor of doubles with reverse-mode gradients. Tensors
// are cheap handles onto a shared node; forward ops record the backward
// closure whenever an input requires gradients, so running a frozen model
// builds no graph at all.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int64_t>& shape() const;
  int64_t dim(int i) const { return shape()[static_cast<size_t>(i)]; }
  int64_t ndim() const { return static_cast<int64_t>(shape().size()); }
  int64_t rows() const;  // 2-D helpers
  int64_t cols() const;
  int64_t size() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  void set_requires_grad(bool v);
  void zero_grad();

  double item() const;  // scalar value; throws UsageError otherwise

  // Reverse-mode sweep from a scalar loss. Gradients accumulate across
  // repeated calls until explicitly zeroed.
  void backward() const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

std::string shape_str(const std::vector<int64_t>& s);

// Elementwise and broadcast arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& a, double scale, double shift);  // scale*a + shift
Tensor scale(const Tensor& a, double s);
Tensor add_row_broadcast(const Tensor& a, const Tensor& row);  // a[M,N] + row[N]

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Shape plumbing.
Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& idx);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor split_heads(const Tensor& x, int64_t batch, int64_t seq, int64_t heads);
Tensor merge_heads(const Tensor& x, int64_t batch, int64_t seq, int64_t heads);

// Nonlinearities and normalization.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
// Softmax over a subset of columns; excluded columns get exactly 0. The
// keep mask covers `groups` row groups: row r uses keep[(r / rows_per_group)
// * cols + j].
Tensor masked_softmax_rows(const Tensor& x, const std::vector<uint8_t>& keep,
                           int64_t rows_per_group);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-12);

// Attention primitives over head-major blocks of shape [blocks*S, width].
Tensor attention_scores(const Tensor& q, const Tensor& k, int64_t blocks, int64_t seq,
                        double scaling);
Tensor attention_apply(const Tensor& probs, const Tensor& v, int64_t blocks, int64_t seq);

// Reductions and losses (all return scalars unless noted).
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mse_loss(const Tensor& a, const Tensor& b);
Tensor masked_row_mse(const Tensor& a, const Tensor& b, const std::vector<uint8_t>& row_keep);
Tensor kl_div_rows(const Tensor& p, const Tensor& q);  // mean over rows of KL(p||q)
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int64_t>& targets);
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels);

}  // namespace distilrank

#endif  // DISTILRANK_TENSOR_HPP
