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

#include "distilrank/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "distilrank/errors.hpp"

namespace distilrank {

namespace {

void finish_stats(const IngestStats& stats, const std::string& path) {
  const int64_t total = stats.records + stats.malformed;
  if (total > 0 && static_cast<double>(stats.malformed) > 0.01 * static_cast<double>(total))
    throw FormatError("more than 1% malformed lines (" + std::to_string(stats.malformed) + "/" +
                      std::to_string(total) + ") in " + path);
}

// Reads lines, strips \r\n, skips fully empty lines.
template <class Fn>
void for_each_line(const std::string& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(line);
  }
}

bool split_tab2(const std::string& line, std::string& a, std::string& b) {
  size_t t = line.find('\t');
  if (t == std::string::npos) return false;
  a = line.substr(0, t);
  b = line.substr(t + 1);
  return !a.empty();
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  try {
    size_t idx = 0;
    out = std::stod(s, &idx);
    return idx == s.size() && std::isfinite(out);
  } catch (...) {
    return false;
  }
}

}  // namespace

void Qrels::set(const std::string& qid, const std::string& did, int grade) {
  if (qid.empty() || did.empty()) throw ParamError("qrels ids must be non-empty");
  if (grade < 0) throw ParamError("qrels grade must be non-negative");
  grades[qid][did] = grade;
}

int Qrels::grade(const std::string& qid, const std::string& did) const {
  auto q = grades.find(qid);
  if (q == grades.end()) return 0;
  auto d = q->second.find(did);
  return d == q->second.end() ? 0 : d->second;
}

bool Qrels::has_query(const std::string& qid) const { return grades.count(qid) > 0; }

int64_t Qrels::relevant_count(const std::string& qid, int min_grade) const {
  auto q = grades.find(qid);
  if (q == grades.end()) return 0;
  int64_t n = 0;
  for (const auto& [d, g] : q->second)
    if (g >= min_grade) ++n;
  return n;
}

IngestStats for_each_collection(const std::string& path,
                                const std::function<void(const DocRecord&)>& fn) {
  IngestStats stats;
  for_each_line(path, [&](const std::string& line) {
    DocRecord doc;
    if (!split_tab2(line, doc.id, doc.text)) {
      ++stats.malformed;
      return;
    }
    ++stats.records;
    fn(doc);
  });
  finish_stats(stats, path);
  return stats;
}

std::vector<DocRecord> load_collection(const std::string& path, IngestStats* stats) {
  std::vector<DocRecord> docs;
  IngestStats s = for_each_collection(path, [&](const DocRecord& d) { docs.push_back(d); });
  if (stats) *stats = s;
  return docs;
}

std::vector<QueryRecord> load_queries(const std::string& path, IngestStats* stats) {
  std::vector<QueryRecord> out;
  IngestStats s;
  for_each_line(path, [&](const std::string& line) {
    QueryRecord q;
    if (!split_tab2(line, q.id, q.text)) {
      ++s.malformed;
      return;
    }
    ++s.records;
    out.push_back(std::move(q));
  });
  finish_stats(s, path);
  if (stats) *stats = s;
  return out;
}

std::vector<TrainTriple> load_triples(const std::string& path, IngestStats* stats) {
  std::vector<TrainTriple> out;
  IngestStats s;
  for_each_line(path, [&](const std::string& line) {
    size_t t1 = line.find('\t');
    size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      ++s.malformed;
      return;
    }
    TrainTriple t;
    t.query = line.substr(0, t1);
    t.positive = line.substr(t1 + 1, t2 - t1 - 1);
    t.negative = line.substr(t2 + 1);
    if (t.query.empty() || t.positive.empty() || t.negative.empty()) {
      ++s.malformed;
      return;
    }
    ++s.records;
    out.push_back(std::move(t));
  });
  finish_stats(s, path);
  if (stats) *stats = s;
  return out;
}

Qrels load_qrels(const std::string& path, IngestStats* stats) {
  Qrels qrels;
  IngestStats s;
  for_each_line(path, [&](const std::string& line) {
    auto f = split_ws(line);
    int grade = 0;
    if (f.size() != 4 ||
        std::from_chars(f[3].data(), f[3].data() + f[3].size(), grade).ec != std::errc{} ||
        grade < 0) {
      ++s.malformed;
      return;
    }
    ++s.records;
    qrels.set(f[0], f[2], grade);
  });
  finish_stats(s, path);
  if (stats) *stats = s;
  return qrels;
}

RankedRun load_run(const std::string& path, IngestStats* stats) {
  RankedRun run;
  IngestStats s;
  bool tag_set = false;
  for_each_line(path, [&](const std::string& line) {
    auto f = split_ws(line);
    double score = 0.0;
    if (f.size() != 6 || f[1] != "Q0" || !parse_double(f[4], score)) {
      ++s.malformed;
      return;
    }
    ++s.records;
    run.queries[f[0]].push_back({f[2], score});
    if (!tag_set) {
      run.tag = f[5];
      tag_set = true;
    }
  });
  finish_stats(s, path);
  check_run_sorted(run);
  if (stats) *stats = s;
  return run;
}

void check_run_sorted(const RankedRun& run) {
  // Strict doc-id tie order is enforced where runs are built from exact
  // scores; files only need non-increasing scores (printing at 6 decimals
  // can merge near-ties).
  for (const auto& [qid, entries] : run.queries) {
    for (size_t i = 1; i < entries.size(); ++i) {
      if (entries[i - 1].score < entries[i].score)
        throw FormatError("run entries for query '" + qid + "' have increasing scores at rank " +
                          std::to_string(i + 1));
    }
  }
}

namespace {

template <class Fn>
void write_file(const std::string& path, Fn fn) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  fn(out);
  if (!out) throw IoError("failed writing: " + path);
}

}  // namespace

void write_collection(const std::vector<DocRecord>& docs, const std::string& path) {
  write_file(path, [&](std::ofstream& out) {
    for (const auto& d : docs) out << d.id << '\t' << d.text << '\n';
  });
}

void write_queries(const std::vector<QueryRecord>& queries, const std::string& path) {
  write_file(path, [&](std::ofstream& out) {
    for (const auto& q : queries) out << q.id << '\t' << q.text << '\n';
  });
}

void write_triples(const std::vector<TrainTriple>& triples, const std::string& path) {
  write_file(path, [&](std::ofstream& out) {
    for (const auto& t : triples) out << t.query << '\t' << t.positive << '\t' << t.negative << '\n';
  });
}

void write_qrels(const Qrels& qrels, const std::string& path) {
  write_file(path, [&](std::ofstream& out) {
    for (const auto& [qid, docs] : qrels.grades)
      for (const auto& [did, g] : docs) out << qid << " 0 " << did << " " << g << '\n';
  });
}

void write_run(const RankedRun& run, const std::string& path) {
  check_run_sorted(run);
  write_file(path, [&](std::ofstream& out) {
    char buf[64];
    for (const auto& [qid, entries] : run.queries) {
      for (size_t i = 0; i < entries.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f", entries[i].score);
        out << qid << " Q0 " << entries[i].doc_id << " " << (i + 1) << " " << buf << " "
            << run.tag << '\n';
      }
    }
  });
}

}  // namespace distilrank
