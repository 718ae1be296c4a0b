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
//
// One structured run configuration feeding every CLI subcommand. All
// randomness derives from the single `seed` through named sub-seeds.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mospred/stacking.hpp"
#include "mospred/strong.hpp"
#include "mospred/toydata.hpp"

namespace mospred {

struct DatasetConfig {
  std::string ratings_csv;
  std::string audio_dir;
  std::string transcripts;   // optional; empty = synthetic provider
  std::string splits_file;   // optional; empty = split_fractions
  std::map<std::string, double> split_fractions = {
      {"train", 0.8}, {"dev", 0.1}, {"test", 0.1}};
};

struct TextprocConfig {
  double eps = 0.3;
  int min_pts = 2;
};

struct WeakBankConfig {
  std::vector<BackendSpec> backends;
  std::vector<std::string> methods;  // names from the six-method catalog
  std::vector<std::string> domains = {""};
};

struct RunConfig {
  uint64_t seed = 0;
  DatasetConfig dataset;
  BackendSpec backend;  // backend used by the strong learner
  StrongConfig strong;
  AugmentConfig augment;
  TextprocConfig textproc;
  WeakBankConfig weak;
  StackingPlan stacking;
};

inline void to_json(Json& j, const DatasetConfig& c) {
  j = Json{{"ratings_csv", c.ratings_csv},
           {"audio_dir", c.audio_dir},
           {"transcripts", c.transcripts},
           {"splits_file", c.splits_file},
           {"split_fractions", c.split_fractions}};
}

inline void from_json(const Json& j, DatasetConfig& c) {
  serde::get_to_if_present(j, "ratings_csv", c.ratings_csv);
  serde::get_to_if_present(j, "audio_dir", c.audio_dir);
  serde::get_to_if_present(j, "transcripts", c.transcripts);
  serde::get_to_if_present(j, "splits_file", c.splits_file);
  serde::get_to_if_present(j, "split_fractions", c.split_fractions);
}

inline void to_json(Json& j, const TextprocConfig& c) {
  j = Json{{"eps", c.eps}, {"min_pts", c.min_pts}};
}

inline void from_json(const Json& j, TextprocConfig& c) {
  serde::get_to_if_present(j, "eps", c.eps);
  serde::get_to_if_present(j, "min_pts", c.min_pts);
}

inline void to_json(Json& j, const WeakBankConfig& c) {
  j = Json{{"backends", c.backends},
           {"methods", c.methods},
           {"domains", c.domains}};
}

inline void from_json(const Json& j, WeakBankConfig& c) {
  serde::get_to_if_present(j, "backends", c.backends);
  serde::get_to_if_present(j, "methods", c.methods);
  serde::get_to_if_present(j, "domains", c.domains);
}

inline void to_json(Json& j, const RunConfig& c) {
  j = Json{{"seed", c.seed},       {"dataset", c.dataset},
           {"backend", c.backend}, {"strong", c.strong},
           {"loss", c.strong.loss}, {"augment", c.augment},
           {"textproc", c.textproc}, {"weak", c.weak},
           {"stacking", c.stacking}};
}

inline void from_json(const Json& j, RunConfig& c) {
  if (!j.contains("seed"))
    throw UsageError("run config: 'seed' is mandatory");
  j.at("seed").get_to(c.seed);
  serde::get_to_if_present(j, "dataset", c.dataset);
  serde::get_to_if_present(j, "backend", c.backend);
  serde::get_to_if_present(j, "strong", c.strong);
  // The canonical loss section lives at the top level and feeds the strong
  // learner's loss; it wins over any nested copy.
  serde::get_to_if_present(j, "loss", c.strong.loss);
  serde::get_to_if_present(j, "augment", c.augment);
  serde::get_to_if_present(j, "textproc", c.textproc);
  serde::get_to_if_present(j, "weak", c.weak);
  serde::get_to_if_present(j, "stacking", c.stacking);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw UsageError("config file is not valid JSON: " + path.string());
  return j.get<RunConfig>();
}

// Deterministic fraction-based splits for datasets without a splits file.
// Fractions are taken in the fixed order train, dev, test, then any other
// names alphabetically; leftover utterances join the first split.
inline void make_fraction_splits(MosDataset& ds,
                                 const std::map<std::string, double>& fractions,
                                 uint64_t seed) {
  std::vector<std::string> names;
  for (const char* pref : {"train", "dev", "test"})
    if (fractions.count(pref)) names.push_back(pref);
  for (const auto& [name, frac] : fractions)
    if (std::find(names.begin(), names.end(), name) == names.end())
      names.push_back(name);
  if (names.empty()) throw UsageError("split_fractions is empty");

  std::vector<std::string> ids;
  for (const auto& u : ds.utterances()) ids.push_back(u.utterance_id);
  Rng rng(derive_seed(seed, "splits"));
  rng.shuffle(ids);

  const size_t n = ids.size();
  size_t cursor = 0;
  std::map<std::string, std::set<std::string>> result;
  for (size_t k = 0; k < names.size(); ++k) {
    const double frac = fractions.at(names[k]);
    size_t count = (k + 1 == names.size())
                       ? n - cursor
                       : static_cast<size_t>(std::floor(frac * n));
    count = std::min(count, n - cursor);
    std::set<std::string> members(ids.begin() + cursor,
                                  ids.begin() + cursor + count);
    cursor += count;
    result[names[k]] = std::move(members);
  }
  for (auto& [name, members] : result)
    if (!members.empty()) ds.set_split(name, std::move(members));
}

// Loads the dataset and attaches splits from the configured source.
inline MosDataset load_configured_dataset(const RunConfig& cfg) {
  if (cfg.dataset.ratings_csv.empty())
    throw UsageError("run config: dataset.ratings_csv is required");
  MosDataset ds = load_dataset(cfg.dataset.ratings_csv, cfg.dataset.audio_dir);
  if (!cfg.dataset.splits_file.empty())
    toydata::apply_splits_file(ds, cfg.dataset.splits_file);
  else
    make_fraction_splits(ds, cfg.dataset.split_fractions, cfg.seed);
  return ds;
}

inline std::unique_ptr<PhonemeProvider> make_phoneme_provider(
    const RunConfig& cfg) {
  if (!cfg.dataset.transcripts.empty())
    return std::make_unique<FilePhonemeProvider>(
        read_transcripts(cfg.dataset.transcripts));
  return std::make_unique<SyntheticPhonemeProvider>(
      derive_seed(cfg.seed, "synthetic-phonemes"));
}

}  // namespace mospred
