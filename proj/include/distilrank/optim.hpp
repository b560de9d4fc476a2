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

#ifndef DISTILRANK_OPTIM_HPP
#define DISTILRANK_OPTIM_HPP

#include <cstdint>
#include <vector>

#include "distilrank/tensor.hpp"

namespace distilrank {

enum class OptimizerKind {
  Adam,   // weight decay folded into the gradient
  AdamW,  // decoupled weight decay
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam / AdamW over a fixed parameter set. Moment buffers are allocated at
// construction with the shapes of the parameters; step() reads each
// parameter's accumulated gradient and throws UsageError when one is
// missing. Fully deterministic: identical inputs give bitwise-identical
// parameter updates.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Tensor> params);

  void step();
  void zero_grad();
  int64_t step_count() const { return step_count_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  int64_t step_count_ = 0;
};

}  // namespace distilrank

#endif  // DISTILRANK_OPTIM_HPP
