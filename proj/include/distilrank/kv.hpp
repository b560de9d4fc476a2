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

#ifndef DISTILRANK_KV_HPP
#define DISTILRANK_KV_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace distilrank {

// Ordered `key = value` text document. Used for checkpoint headers and for
// echoing effective configuration; insertion order is preserved so
// serialization is byte-stable.
class KvDoc {
 public:
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, int64_t v);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;           // throws FormatError
  std::string get_or(const std::string& key, std::string def) const;
  int64_t get_int(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string serialize() const;
  static KvDoc parse(const std::string& text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace distilrank

#endif  // DISTILRANK_KV_HPP
