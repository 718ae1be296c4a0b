// Copyright 2026 The mospred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mospred/common.hpp"

namespace mospred {

using Symbol = std::string;
using SymbolSeq = std::vector<Symbol>;

// One recognizer hypothesis for one utterance.
struct TranscriptRecord {
  std::string utterance_id;
  SymbolSeq phonemes;
};

// Cluster membership and the reference sequence standing in for the unknown
// ground-truth text. cluster_id -1 marks noise; noise points self-reference.
struct ReferenceAssignment {
  std::string utterance_id;
  int cluster_id = -1;
  SymbolSeq reference;
};

inline int edit_distance(const SymbolSeq& a, const SymbolSeq& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Edit distance divided by the longer length; 0 when both sequences are empty.
inline double normalized_levenshtein(const SymbolSeq& a, const SymbolSeq& b) {
  const size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

// ---------------------------------------------------------------------------
// DBSCAN over a pairwise distance function.
//
// Core point: at least min_pts neighbors within eps (inclusive, counting
// itself). Clusters are the density-connected components of core points,
// numbered by the lowest-index core they contain. A non-core point within
// eps of one or more cores joins the cluster of the lowest-index such core;
// otherwise it is noise (-1). The input order is the canonical order, so the
// result is a deterministic function of (items, eps, min_pts).
// ---------------------------------------------------------------------------

inline std::vector<int> dbscan(size_t n,
                               const std::function<double(size_t, size_t)>& dist,
                               double eps, int min_pts) {
  if (eps < 0) throw std::invalid_argument("dbscan: eps must be >= 0");
  if (min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");

  std::vector<std::vector<size_t>> neighbors(n);
  for (size_t i = 0; i < n; ++i) neighbors[i].push_back(i);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (dist(i, j) <= eps) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }
  std::vector<bool> core(n, false);
  for (size_t i = 0; i < n; ++i)
    core[i] = neighbors[i].size() >= static_cast<size_t>(min_pts);

  std::vector<int> label(n, -1);
  int next_cluster = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] != -1) continue;
    const int cid = next_cluster++;
    std::deque<size_t> frontier{i};
    label[i] = cid;
    while (!frontier.empty()) {
      const size_t p = frontier.front();
      frontier.pop_front();
      for (size_t q : neighbors[p]) {
        if (core[q] && label[q] == -1) {
          label[q] = cid;
          frontier.push_back(q);
        }
      }
    }
  }
  // Border points: lowest-index core within eps decides the cluster.
  for (size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    for (size_t q : neighbors[i]) {
      if (core[q]) {
        label[i] = label[q];
        break;  // neighbor lists are in ascending index order
      }
    }
  }
  return label;
}

template <typename T, typename Dist>
std::vector<int> dbscan(const std::vector<T>& items, Dist dist, double eps,
                        int min_pts) {
  return dbscan(
      items.size(),
      [&](size_t i, size_t j) { return dist(items[i], items[j]); }, eps, min_pts);
}

// Member minimizing the sum of distances to all other members; ties broken
// by the lexicographically smallest sequence.
template <typename Dist>
const SymbolSeq& medoid(const std::vector<SymbolSeq>& cluster, Dist dist) {
  if (cluster.empty()) throw std::invalid_argument("medoid: empty cluster");
  size_t best = 0;
  double best_sum = 0.0;
  for (size_t j = 1; j < cluster.size(); ++j) best_sum += dist(cluster[0], cluster[j]);
  for (size_t i = 1; i < cluster.size(); ++i) {
    double s = 0.0;
    for (size_t j = 0; j < cluster.size(); ++j)
      if (j != i) s += dist(cluster[i], cluster[j]);
    if (s < best_sum || (s == best_sum && cluster[i] < cluster[best])) {
      best = i;
      best_sum = s;
    }
  }
  return cluster[best];
}

inline const SymbolSeq& medoid(const std::vector<SymbolSeq>& cluster) {
  return medoid(cluster, normalized_levenshtein);
}

// Clusters transcripts by normalized Levenshtein distance and assigns each
// member its cluster medoid as reference. Transcripts are canonicalized by
// sorting before clustering, so the outcome does not depend on input order.
inline std::vector<ReferenceAssignment> extract_references(
    const std::vector<TranscriptRecord>& transcripts, double eps, int min_pts) {
  const size_t n = transcripts.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (transcripts[a].phonemes != transcripts[b].phonemes)
      return transcripts[a].phonemes < transcripts[b].phonemes;
    return transcripts[a].utterance_id < transcripts[b].utterance_id;
  });

  std::vector<int> labels_sorted = dbscan(
      n,
      [&](size_t i, size_t j) {
        return normalized_levenshtein(transcripts[order[i]].phonemes,
                                      transcripts[order[j]].phonemes);
      },
      eps, min_pts);

  std::map<int, std::vector<SymbolSeq>> members;
  for (size_t k = 0; k < n; ++k)
    if (labels_sorted[k] >= 0)
      members[labels_sorted[k]].push_back(transcripts[order[k]].phonemes);

  std::map<int, SymbolSeq> refs;
  for (const auto& [cid, seqs] : members) refs[cid] = medoid(seqs);

  std::vector<ReferenceAssignment> out(n);
  for (size_t k = 0; k < n; ++k) {
    const auto& t = transcripts[order[k]];
    ReferenceAssignment a;
    a.utterance_id = t.utterance_id;
    a.cluster_id = labels_sorted[k];
    a.reference = (a.cluster_id >= 0) ? refs[a.cluster_id] : t.phonemes;
    out[order[k]] = std::move(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phoneme providers
// ---------------------------------------------------------------------------

class PhonemeProvider {
 public:
  virtual ~PhonemeProvider() = default;
  virtual SymbolSeq phonemes_for(const std::string& utterance_id) const = 0;
};

// Reads precomputed transcripts: `utterance_id<TAB>space-separated symbols`.
class FilePhonemeProvider : public PhonemeProvider {
 public:
  explicit FilePhonemeProvider(std::vector<TranscriptRecord> records) {
    for (auto& r : records) table_[r.utterance_id] = std::move(r.phonemes);
  }

  SymbolSeq phonemes_for(const std::string& utterance_id) const override {
    auto it = table_.find(utterance_id);
    if (it == table_.end())
      throw UsageError("no transcript for utterance: " + utterance_id);
    return it->second;
  }

  bool has(const std::string& utterance_id) const {
    return table_.count(utterance_id) > 0;
  }

 private:
  std::map<std::string, SymbolSeq> table_;
};

// Deterministic pseudo-random sequences for tests and toy pipelines.
class SyntheticPhonemeProvider : public PhonemeProvider {
 public:
  explicit SyntheticPhonemeProvider(uint64_t seed = 0, int min_len = 6,
                                    int max_len = 14)
      : seed_(seed), min_len_(min_len), max_len_(max_len) {}

  SymbolSeq phonemes_for(const std::string& utterance_id) const override {
    Rng rng(derive_seed(seed_, "phonemes:" + utterance_id));
    const int len =
        min_len_ + static_cast<int>(rng.uniform_int(max_len_ - min_len_ + 1));
    SymbolSeq seq;
    seq.reserve(len);
    for (int i = 0; i < len; ++i)
      seq.push_back(alphabet()[rng.uniform_int(alphabet().size())]);
    return seq;
  }

  static const std::vector<Symbol>& alphabet() {
    static const std::vector<Symbol> a = {"a", "e", "i", "o", "u", "p", "t",
                                          "k", "s", "m", "n", "r"};
    return a;
  }

 private:
  uint64_t seed_;
  int min_len_;
  int max_len_;
};

// ---------------------------------------------------------------------------
// Transcript / reference file formats (UTF-8, tab separated)
// ---------------------------------------------------------------------------

inline std::vector<TranscriptRecord> read_transcripts(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open transcripts file: " + path.string());
  std::vector<TranscriptRecord> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw UsageError("transcripts line " + std::to_string(line_no) +
                       ": missing tab separator");
    TranscriptRecord r;
    r.utterance_id = line.substr(0, tab);
    for (const auto& tok : split(line.substr(tab + 1), ' '))
      if (!tok.empty()) r.phonemes.push_back(tok);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_transcripts(const std::filesystem::path& path,
                              const std::vector<TranscriptRecord>& records) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write transcripts file: " + path.string());
  for (const auto& r : records) {
    out << r.utterance_id << '\t';
    for (size_t i = 0; i < r.phonemes.size(); ++i)
      out << (i ? " " : "") << r.phonemes[i];
    out << '\n';
  }
}

// References add a cluster_id column between the id and the symbols.
inline void write_references(const std::filesystem::path& path,
                             const std::vector<ReferenceAssignment>& refs) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write references file: " + path.string());
  for (const auto& r : refs) {
    out << r.utterance_id << '\t' << r.cluster_id << '\t';
    for (size_t i = 0; i < r.reference.size(); ++i)
      out << (i ? " " : "") << r.reference[i];
    out << '\n';
  }
}

inline std::vector<ReferenceAssignment> read_references(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open references file: " + path.string());
  std::vector<ReferenceAssignment> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3)
      throw UsageError("references line " + std::to_string(line_no) +
                       ": expected 3 tab-separated fields");
    ReferenceAssignment r;
    r.utterance_id = fields[0];
    r.cluster_id = static_cast<int>(
        parse_long(fields[1], "cluster_id at line " + std::to_string(line_no)));
    for (const auto& tok : split(fields[2], ' '))
      if (!tok.empty()) r.reference.push_back(tok);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mospred
