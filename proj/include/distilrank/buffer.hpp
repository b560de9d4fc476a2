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

#ifndef DISTILRANK_BUFFER_HPP
#define DISTILRANK_BUFFER_HPP

#include <memory>
#include <vector>

namespace distilrank {

// Allocator whose default-construct is a no-op for trivial types. Tensor
// buffers are fully overwritten by the producing op, and zero-filling every
// intermediate costs more than the arithmetic at training shapes.
template <class T>
struct uninit_allocator : std::allocator<T> {
  using std::allocator<T>::allocator;
  template <class U>
  struct rebind {
    using other = uninit_allocator<U>;
  };
  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using Buffer = std::vector<double, uninit_allocator<double>>;

// Recycles tensor buffers across training steps. Fresh large allocations
// fault in new pages every step otherwise, which costs more than the
// arithmetic at desk-scale shapes. Contents of acquired buffers are
// indeterminate.
Buffer acquire_buffer(size_t n);
void release_buffer(Buffer&& b);

}  // namespace distilrank

#endif  // DISTILRANK_BUFFER_HPP
