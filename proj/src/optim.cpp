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

#include "distilrank/optim.hpp"

#include <cmath>

#include "distilrank/errors.hpp"

namespace distilrank {

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)) {
  if (config_.lr <= 0) throw ParamError("optimizer: learning rate must be positive");
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const auto& p : params_) {
    first_moment_.emplace_back(static_cast<size_t>(p.size()), 0.0);
    second_moment_.emplace_back(static_cast<size_t>(p.size()), 0.0);
  }
}

void Optimizer::step() {
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    if (!p.has_grad())
      throw UsageError("optimizer step: parameter " + std::to_string(pi) +
                       " has no gradient; run backward() first");
    auto data = p.mutable_data();
    auto grad = p.grad();
    auto& m = first_moment_[pi];
    auto& v = second_moment_[pi];
    for (size_t i = 0; i < m.size(); ++i) {
      double g = grad[i];
      if (config_.kind == OptimizerKind::Adam) {
        g += config_.weight_decay * data[i];
      } else {
        data[i] -= config_.lr * config_.weight_decay * data[i];
      }
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / bias1;
      const double vhat = v[i] / bias2;
      data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace distilrank
