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
// Synthetic benchmark generator: harmonic tones in white noise, where the
// underlying quality score is an affine function of the tone SNR. Listener
// ratings are the quantized score plus per-listener bias and noise. Used by
// the demo pipeline and the test suites.

#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "mospred/audio.hpp"
#include "mospred/common.hpp"
#include "mospred/dataset.hpp"
#include "mospred/strong.hpp"
#include "mospred/textproc.hpp"

namespace mospred::toydata {

struct ToyDataConfig {
  int n_systems = 25;
  int utts_per_system = 10;
  int train_per_system = 8;
  int dev_per_system = 2;  // remainder goes to test
  int n_listeners = 8;
  int ratings_per_utt = 3;
  int n_domains = 1;
  double seconds = 1.0;
  uint64_t seed = 1;
};

// Affine map from tone SNR (dB) to the quality scale, clamped to [1,5].
inline double mos_from_snr(double snr_db) {
  return std::clamp(1.0 + (snr_db + 10.0) * 4.0 / 40.0, 1.0, 5.0);
}

inline Waveform tone_in_noise(double snr_db, double f0, double seconds,
                              Rng& rng) {
  const int sr = kTargetSampleRate;
  const size_t n = static_cast<size_t>(seconds * sr);
  std::vector<double> tone(n, 0.0);
  double tone_power = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int h = 1; h <= 3; ++h)
      s += std::sin(2.0 * M_PI * f0 * h * i / sr) / h;
    tone[i] = 0.3 * s;
    tone_power += tone[i] * tone[i];
  }
  tone_power /= n;
  const double noise_power = tone_power * std::pow(10.0, -snr_db / 10.0);
  const double sigma = std::sqrt(noise_power);
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(tone[i] + sigma * rng.normal());
  return w;
}

struct ToyPaths {
  std::filesystem::path ratings_csv;
  std::filesystem::path audio_dir;
  std::filesystem::path transcripts_tsv;
  std::filesystem::path splits_json;
  // Row-filtered copies of ratings_csv, one per split, for `evaluate`.
  std::map<std::string, std::filesystem::path> split_ratings;
};

inline ToyPaths generate(const ToyDataConfig& cfg,
                         const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  ToyPaths paths;
  paths.ratings_csv = dir / "ratings.csv";
  paths.audio_dir = dir / "wav";
  paths.transcripts_tsv = dir / "transcripts.tsv";
  paths.splits_json = dir / "splits.json";
  fs::create_directories(paths.audio_dir);

  Rng rng(derive_seed(cfg.seed, "toydata"));

  std::vector<double> listener_bias(cfg.n_listeners);
  for (auto& b : listener_bias) b = rng.uniform(-0.5, 0.5);

  const auto& alphabet = SyntheticPhonemeProvider::alphabet();
  std::vector<SymbolSeq> base_texts(cfg.n_systems);
  for (auto& t : base_texts) {
    const int len = 12 + static_cast<int>(rng.uniform_int(6));
    for (int i = 0; i < len; ++i)
      t.push_back(alphabet[rng.uniform_int(alphabet.size())]);
  }

  std::vector<std::string> rating_rows;
  std::vector<TranscriptRecord> transcripts;
  std::vector<std::string> train_ids, dev_ids, test_ids;
  std::map<std::string, std::string> split_of;

  int utt_counter = 0;
  for (int s = 0; s < cfg.n_systems; ++s) {
    const double base_snr =
        -8.0 + 36.0 * (cfg.n_systems > 1
                           ? static_cast<double>(s) / (cfg.n_systems - 1)
                           : 0.5);
    const std::string sys_id = "sys" + std::to_string(s);
    const std::string dom_id = "dom" + std::to_string(s % cfg.n_domains);
    for (int i = 0; i < cfg.utts_per_system; ++i) {
      const std::string utt_id = "utt" + std::to_string(utt_counter++);
      const double snr = base_snr + rng.uniform(-1.5, 1.5);
      const double f0 = 100.0 + rng.uniform(0.0, 150.0);
      const double true_mos = mos_from_snr(snr);

      Waveform w = tone_in_noise(snr, f0, cfg.seconds, rng);
      write_wav(paths.audio_dir / (utt_id + ".wav"), w);

      for (int r = 0; r < cfg.ratings_per_utt; ++r) {
        const int listener = (utt_counter + r * 3) % cfg.n_listeners;
        const double noisy = true_mos + listener_bias[listener] + 0.3 * rng.normal();
        const int score =
            std::clamp(static_cast<int>(std::lround(noisy)), 1, 5);
        rating_rows.push_back(utt_id + ",l" + std::to_string(listener) + ',' +
                              sys_id + ',' + dom_id + ',' +
                              std::to_string(score));
      }

      // Transcript: the system's base text with up to 2 random edits.
      SymbolSeq t = base_texts[s];
      const int n_edits = static_cast<int>(rng.uniform_int(3));
      for (int e = 0; e < n_edits; ++e) {
        const size_t pos = rng.uniform_int(t.size());
        t[pos] = alphabet[rng.uniform_int(alphabet.size())];
      }
      transcripts.push_back({utt_id, t});

      if (i < cfg.train_per_system) {
        train_ids.push_back(utt_id);
        split_of[utt_id] = "train";
      } else if (i < cfg.train_per_system + cfg.dev_per_system) {
        dev_ids.push_back(utt_id);
        split_of[utt_id] = "dev";
      } else {
        test_ids.push_back(utt_id);
        split_of[utt_id] = "test";
      }
    }
  }

  const std::string header = "utterance_id,listener_id,system_id,domain_id,score\n";
  {
    std::ofstream ratings(paths.ratings_csv);
    ratings << header;
    for (const auto& row : rating_rows) ratings << row << '\n';
  }
  for (const char* split : {"train", "dev", "test"}) {
    const auto path = dir / ("ratings_" + std::string(split) + ".csv");
    std::ofstream out(path);
    out << header;
    for (const auto& row : rating_rows)
      if (split_of.at(row.substr(0, row.find(','))) == split) out << row << '\n';
    paths.split_ratings[split] = path;
  }
  write_transcripts(paths.transcripts_tsv, transcripts);

  nlohmann::json splits;
  splits["train"] = train_ids;
  splits["dev"] = dev_ids;
  splits["test"] = test_ids;
  std::ofstream sj(paths.splits_json);
  sj << splits.dump(2) << '\n';
  return paths;
}

inline void apply_splits_file(MosDataset& ds, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open splits file: " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw UsageError("splits file is not valid JSON: " + path.string());
  for (const auto& [name, ids] : j.items()) {
    std::set<std::string> members;
    for (const auto& id : ids) members.insert(id.get<std::string>());
    if (!members.empty()) ds.set_split(name, std::move(members));
  }
}

// Small-dimension strong config that trains in seconds on the synthetic set.
inline StrongConfig toy_strong_config(int total_steps = 2000) {
  StrongConfig c;
  c.listener_emb_dim = 8;
  c.domain_emb_dim = 8;
  c.phoneme_encoder = {1, 16, true, 8};
  c.head = {32, 1};
  c.loss = {0.5, 0.25, 1.0, 0.5};
  c.optimizer.peak_lr = 2e-3;
  c.optimizer.warmup_steps = std::max(1, total_steps / 5);
  c.optimizer.total_steps = total_steps;
  c.optimizer.batch_size = 12;
  c.optimizer.grad_accum = 2;
  c.eval_every = 250;
  return c;
}

}  // namespace mospred::toydata
