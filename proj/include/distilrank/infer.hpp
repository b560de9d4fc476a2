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

#ifndef DISTILRANK_INFER_HPP
#define DISTILRANK_INFER_HPP

#include <memory>
#include <span>

#include "distilrank/encoder.hpp"

namespace distilrank {

enum class Precision { F64, F32 };

const char* precision_name(Precision p);

// Gradient-free forward pass over a frozen checkpoint, with weights staged
// once into contiguous buffers. The 32-bit mode exists for the inference
// benchmark path and is always flagged in emitted reports; training stays
// in 64-bit. Identical inputs produce bitwise-identical scores for any
// worker count.
class InferenceEngine {
 public:
  InferenceEngine(const Checkpoint& model, Precision precision);
  ~InferenceEngine();
  InferenceEngine(InferenceEngine&&) noexcept;
  InferenceEngine& operator=(InferenceEngine&&) noexcept;

  // Relevance score per packed sequence in the batch.
  void rank_scores(const BatchInput& batch, std::span<double> out) const;
  double score_pair(const PairInput& in) const;

  Precision precision() const;
  const EncoderConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace distilrank

#endif  // DISTILRANK_INFER_HPP
