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

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mospred/audio.hpp"
#include "mospred/common.hpp"

namespace mospred {

// One audio clip and its identity within a listening test.
struct UtteranceRef {
  std::string utterance_id;
  std::filesystem::path audio_path;
  std::string system_id;
  std::string domain_id;
};

// One listener's score of one utterance. Scores are the raw 5-point scale.
struct RatingRecord {
  std::string utterance_id;
  std::string listener_id;
  int raw_score = 0;
};

// Linear projection between the raw [1,5] scale and the normalized [-1,1]
// scale used for training.
struct ScoreScale {
  double raw_min = 1.0;
  double raw_max = 5.0;
  double norm_min = -1.0;
  double norm_max = 1.0;
};

inline double normalize_score(double raw, const ScoreScale& s = {}) {
  if (raw < s.raw_min || raw > s.raw_max)
    throw std::out_of_range("normalize_score: raw score " + std::to_string(raw) +
                            " outside [" + std::to_string(s.raw_min) + "," +
                            std::to_string(s.raw_max) + "]");
  return s.norm_min +
         (raw - s.raw_min) * (s.norm_max - s.norm_min) / (s.raw_max - s.raw_min);
}

inline double denormalize_score(double norm, const ScoreScale& s = {}) {
  return s.raw_min +
         (norm - s.norm_min) * (s.raw_max - s.raw_min) / (s.norm_max - s.norm_min);
}

// Synthetic listener whose target is the per-utterance average score. One
// such listener exists per domain; its id is kMeanListenerPrefix + domain.
constexpr const char* kMeanListenerPrefix = "__mean__:";

inline std::string mean_listener_id(const std::string& domain_id) {
  return std::string(kMeanListenerPrefix) + domain_id;
}

// Immutable after construction; safe to share across threads.
class MosDataset {
 public:
  MosDataset() = default;

  MosDataset(std::vector<UtteranceRef> utterances, std::vector<RatingRecord> ratings)
      : utterances_(std::move(utterances)), ratings_(std::move(ratings)) {
    build_indices();
  }

  const std::vector<UtteranceRef>& utterances() const { return utterances_; }
  const std::vector<RatingRecord>& ratings() const { return ratings_; }

  size_t n_utterances() const { return utterances_.size(); }
  // Count of real listeners (mean-listener entries excluded).
  size_t n_listeners() const { return listener_ids_.size() - domain_ids_.size(); }
  size_t n_domains() const { return domain_ids_.size(); }

  bool has_utterance(const std::string& id) const {
    return utt_index_.count(id) > 0;
  }

  const UtteranceRef& utterance(const std::string& id) const {
    auto it = utt_index_.find(id);
    if (it == utt_index_.end())
      throw std::invalid_argument("unknown utterance id: " + id);
    return utterances_[it->second];
  }

  int utterance_index(const std::string& id) const {
    auto it = utt_index_.find(id);
    if (it == utt_index_.end())
      throw std::invalid_argument("unknown utterance id: " + id);
    return static_cast<int>(it->second);
  }

  // Embedding index tables. Mean listeners occupy indices [0, n_domains) in
  // domain first-appearance order; real listeners follow in first-appearance
  // order over the ratings file.
  const std::vector<std::string>& listener_ids() const { return listener_ids_; }
  const std::vector<std::string>& domain_ids() const { return domain_ids_; }

  int listener_index(const std::string& listener_id) const {
    auto it = listener_index_.find(listener_id);
    if (it == listener_index_.end())
      throw std::invalid_argument("unknown listener id: " + listener_id);
    return it->second;
  }

  int domain_index(const std::string& domain_id) const {
    auto it = domain_index_.find(domain_id);
    if (it == domain_index_.end())
      throw std::invalid_argument("unknown domain id: " + domain_id);
    return it->second;
  }

  int mean_listener_index(const std::string& domain_id) const {
    return listener_index(mean_listener_id(domain_id));
  }

  // Splits are disjoint utterance-id sets keyed by split name.
  const std::map<std::string, std::set<std::string>>& splits() const {
    return splits_;
  }

  const std::set<std::string>& split(const std::string& name) const {
    auto it = splits_.find(name);
    if (it == splits_.end()) throw UsageError("no such split: " + name);
    return it->second;
  }

  bool has_split(const std::string& name) const { return splits_.count(name) > 0; }

  void set_split(const std::string& name, std::set<std::string> ids) {
    for (const auto& id : ids)
      if (!has_utterance(id))
        throw UsageError("split '" + name + "' references unknown utterance: " + id);
    for (const auto& [other, members] : splits_) {
      if (other == name) continue;
      for (const auto& id : ids)
        if (members.count(id))
          throw UsageError("utterance " + id + " assigned to both '" + other +
                           "' and '" + name + "'");
    }
    splits_[name] = std::move(ids);
  }

  // Utterance ids of a split in dataset (file) order.
  std::vector<std::string> split_order(const std::string& name) const {
    const auto& members = split(name);
    std::vector<std::string> out;
    out.reserve(members.size());
    for (const auto& u : utterances_)
      if (members.count(u.utterance_id)) out.push_back(u.utterance_id);
    return out;
  }

 private:
  void build_indices() {
    for (size_t i = 0; i < utterances_.size(); ++i) {
      if (!utt_index_.emplace(utterances_[i].utterance_id, i).second)
        throw UsageError("duplicate utterance id: " + utterances_[i].utterance_id);
      if (utterances_[i].system_id.empty() || utterances_[i].domain_id.empty())
        throw UsageError("empty system or domain id for utterance " +
                         utterances_[i].utterance_id);
    }
    for (const auto& r : ratings_) {
      if (!utt_index_.count(r.utterance_id))
        throw UsageError("rating references unknown utterance: " + r.utterance_id);
      if (r.raw_score < 1 || r.raw_score > 5)
        throw UsageError("rating score out of range for utterance " +
                         r.utterance_id);
    }
    // Domains in first-appearance order over utterances.
    for (const auto& u : utterances_) {
      if (!domain_index_.count(u.domain_id)) {
        domain_index_.emplace(u.domain_id, static_cast<int>(domain_ids_.size()));
        domain_ids_.push_back(u.domain_id);
      }
    }
    // Mean listeners first (one per domain), then real listeners by first
    // appearance in the ratings.
    for (const auto& d : domain_ids_) {
      listener_index_.emplace(mean_listener_id(d),
                              static_cast<int>(listener_ids_.size()));
      listener_ids_.push_back(mean_listener_id(d));
    }
    for (const auto& r : ratings_) {
      if (!listener_index_.count(r.listener_id)) {
        listener_index_.emplace(r.listener_id,
                                static_cast<int>(listener_ids_.size()));
        listener_ids_.push_back(r.listener_id);
      }
    }
  }

  std::vector<UtteranceRef> utterances_;
  std::vector<RatingRecord> ratings_;
  std::map<std::string, std::set<std::string>> splits_;
  std::vector<std::string> listener_ids_;
  std::vector<std::string> domain_ids_;
  std::unordered_map<std::string, size_t> utt_index_;
  std::unordered_map<std::string, int> listener_index_;
  std::unordered_map<std::string, int> domain_index_;
};

// ---------------------------------------------------------------------------
// Ratings CSV ingestion
//
// Schema (UTF-8, header required):
//   utterance_id,listener_id,system_id,domain_id,score
// score is an integer 1-5. Audio for utterance U is expected at
// <audio_dir>/U.wav; existence is checked lazily at prepare_audio time.
// ---------------------------------------------------------------------------

inline MosDataset load_dataset(const std::filesystem::path& ratings_csv,
                               const std::filesystem::path& audio_dir) {
  std::ifstream in(ratings_csv);
  if (!in) throw UsageError("cannot open ratings csv: " + ratings_csv.string());

  std::string line;
  if (!std::getline(in, line))
    throw UsageError("empty ratings csv (missing header): " + ratings_csv.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> expected = {"utterance_id", "listener_id",
                                             "system_id", "domain_id", "score"};
  const auto header = split(line, ',');
  if (header != expected) {
    std::string got;
    for (size_t i = 0; i < header.size(); ++i)
      got += (i ? "," : "") + header[i];
    throw UsageError("ratings csv header mismatch: expected "
                     "'utterance_id,listener_id,system_id,domain_id,score', got '" +
                     got + "'");
  }

  std::vector<UtteranceRef> utterances;
  std::vector<RatingRecord> ratings;
  std::unordered_map<std::string, size_t> seen;

  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5)
      throw UsageError("ratings csv line " + std::to_string(line_no) +
                       ": expected 5 fields, got " + std::to_string(f.size()));
    const std::string& utt = f[0];
    const std::string& listener = f[1];
    const std::string& system = f[2];
    const std::string& domain = f[3];
    if (utt.empty() || listener.empty() || system.empty() || domain.empty())
      throw UsageError("ratings csv line " + std::to_string(line_no) +
                       ": empty field");
    long score = parse_long(f[4], "score at line " + std::to_string(line_no));
    if (score < 1 || score > 5)
      throw UsageError("ratings csv line " + std::to_string(line_no) +
                       ": score " + std::to_string(score) + " outside 1..5");

    auto it = seen.find(utt);
    if (it == seen.end()) {
      seen.emplace(utt, utterances.size());
      utterances.push_back(
          {utt, audio_dir / (utt + ".wav"), system, domain});
    } else {
      const auto& prev = utterances[it->second];
      if (prev.system_id != system || prev.domain_id != domain)
        throw UsageError("ratings csv line " + std::to_string(line_no) +
                         ": utterance " + utt +
                         " re-declared with different system/domain");
    }
    ratings.push_back({utt, listener, static_cast<int>(score)});
  }
  return MosDataset(std::move(utterances), std::move(ratings));
}

// Per-utterance arithmetic mean of raw listener scores.
inline std::map<std::string, double> mean_listener_targets(const MosDataset& ds) {
  std::map<std::string, double> sums;
  std::map<std::string, int> counts;
  for (const auto& r : ds.ratings()) {
    sums[r.utterance_id] += r.raw_score;
    counts[r.utterance_id] += 1;
  }
  std::map<std::string, double> out;
  for (const auto& u : ds.utterances()) {
    auto it = counts.find(u.utterance_id);
    if (it == counts.end() || it->second == 0)
      throw std::invalid_argument("utterance without ratings: " + u.utterance_id);
    out[u.utterance_id] = sums[u.utterance_id] / it->second;
  }
  return out;
}

// Reads, downmixes, resamples to 16 kHz and peak-normalizes one utterance.
inline Waveform prepare_audio(const UtteranceRef& u) {
  Waveform w = read_wav(u.audio_path);
  if (w.samples.empty())
    throw UsageError("zero-length audio: " + u.audio_path.string());
  if (w.sample_rate != kTargetSampleRate) w = resample(w, kTargetSampleRate);
  peak_normalize(w.samples);
  return w;
}

// ---------------------------------------------------------------------------
// Predictions CSV: `utterance_id,score`, score in raw MOS scale [1,5].
// ---------------------------------------------------------------------------

inline void write_predictions(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, double>>& preds) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write predictions csv: " + path.string());
  out << "utterance_id,score\n";
  char buf[64];
  for (const auto& [id, score] : preds) {
    std::snprintf(buf, sizeof(buf), "%.6f", score);
    out << id << ',' << buf << '\n';
  }
}

inline std::map<std::string, double> read_predictions(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open predictions csv: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw UsageError("empty predictions csv: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split(line, ',') != std::vector<std::string>{"utterance_id", "score"})
    throw UsageError("predictions csv header mismatch in " + path.string());
  std::map<std::string, double> out;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 2)
      throw UsageError("predictions csv line " + std::to_string(line_no) +
                       ": expected 2 fields");
    out[f[0]] = parse_double(f[1], "score at line " + std::to_string(line_no));
  }
  return out;
}

}  // namespace mospred
