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

#include <gtest/gtest.h>

#include "mospred/dataset.hpp"
#include "support/testutil.hpp"

using namespace mospred;

namespace {

const char* kHeader = "utterance_id,listener_id,system_id,domain_id,score\n";

TEST(NormalizeScore, ForcedLinearMap) {
  EXPECT_DOUBLE_EQ(normalize_score(1.0), -1.0);
  EXPECT_DOUBLE_EQ(normalize_score(3.0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_score(4.5), 0.75);
  EXPECT_DOUBLE_EQ(normalize_score(5.0), 1.0);
}

TEST(NormalizeScore, OutOfRangeRejected) {
  EXPECT_THROW(normalize_score(0.5), std::out_of_range);
  EXPECT_THROW(normalize_score(5.5), std::out_of_range);
}

TEST(NormalizeScore, InverseRoundTripProperty) {
  Rng rng(11);
  ScoreScale scale;
  for (int i = 0; i < 1000; ++i) {
    const double raw = rng.uniform(1.0, 5.0);
    EXPECT_NEAR(denormalize_score(normalize_score(raw, scale), scale), raw, 1e-12);
  }
}

TEST(LoadDataset, CountsMatch) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("r.csv"), std::string(kHeader) +
                                              "u1,l1,sysA,dom,4\n"
                                              "u1,l2,sysA,dom,5\n"
                                              "u2,l1,sysB,dom,2\n"
                                              "u2,l2,sysB,dom,3\n");
  auto ds = load_dataset(tmp.file("r.csv"), tmp.path());
  EXPECT_EQ(ds.n_utterances(), 2u);
  EXPECT_EQ(ds.n_listeners(), 2u);
  EXPECT_EQ(ds.n_domains(), 1u);
  EXPECT_EQ(ds.ratings().size(), 4u);
}

TEST(LoadDataset, ScoreOutOfRangeNamesLine) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("r.csv"),
                       std::string(kHeader) + "u1,l1,sysA,dom,6\n");
  try {
    load_dataset(tmp.file("r.csv"), tmp.path());
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("6"), std::string::npos);
  }
}

TEST(LoadDataset, HeaderOnlyIsEmptyDataset) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("r.csv"), kHeader);
  auto ds = load_dataset(tmp.file("r.csv"), tmp.path());
  EXPECT_EQ(ds.n_utterances(), 0u);
  EXPECT_EQ(ds.ratings().size(), 0u);
}

TEST(LoadDataset, UnknownColumnsRejected) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("r.csv"),
                       "utterance_id,listener_id,system_id,domain_id,score,extra\n"
                       "u1,l1,s,d,4,x\n");
  EXPECT_THROW(load_dataset(tmp.file("r.csv"), tmp.path()), UsageError);
}

TEST(LoadDataset, ConflictingUtteranceMetadataRejected) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("r.csv"), std::string(kHeader) +
                                              "u1,l1,sysA,dom,4\n"
                                              "u1,l2,sysB,dom,5\n");
  EXPECT_THROW(load_dataset(tmp.file("r.csv"), tmp.path()), UsageError);
}

TEST(LoadDataset, MalformedRowNamesLine) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("r.csv"),
                       std::string(kHeader) + "u1,l1,sysA,4\n");
  try {
    load_dataset(tmp.file("r.csv"), tmp.path());
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(LoadDataset, DeterministicIndexAssignment) {
  testutil::TempDir tmp("ds");
  const std::string body = std::string(kHeader) +
                           "u1,l9,sysA,domB,4\n"
                           "u2,l3,sysA,domA,5\n"
                           "u3,l9,sysB,domA,2\n";
  testutil::write_text(tmp.file("r.csv"), body);
  auto a = load_dataset(tmp.file("r.csv"), tmp.path());
  auto b = load_dataset(tmp.file("r.csv"), tmp.path());
  EXPECT_EQ(a.listener_ids(), b.listener_ids());
  EXPECT_EQ(a.domain_ids(), b.domain_ids());
  // Mean listeners first, in domain first-appearance order.
  EXPECT_EQ(a.listener_ids()[0], mean_listener_id("domB"));
  EXPECT_EQ(a.listener_ids()[1], mean_listener_id("domA"));
  EXPECT_EQ(a.listener_index("l9"), 2);
  EXPECT_EQ(a.listener_index("l3"), 3);
  EXPECT_EQ(a.mean_listener_index("domB"), 0);
}

TEST(MeanListenerTargets, ArithmeticMeans) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("r.csv"), std::string(kHeader) +
                                              "u1,l1,s,d,4\n"
                                              "u1,l2,s,d,5\n"
                                              "u2,l1,s,d,3\n"
                                              "u3,l1,s,d,1\n"
                                              "u3,l2,s,d,2\n"
                                              "u3,l3,s,d,3\n"
                                              "u3,l4,s,d,4\n"
                                              "u3,l5,s,d,5\n");
  auto ds = load_dataset(tmp.file("r.csv"), tmp.path());
  auto t = mean_listener_targets(ds);
  EXPECT_DOUBLE_EQ(t.at("u1"), 4.5);
  EXPECT_DOUBLE_EQ(t.at("u2"), 3.0);
  EXPECT_DOUBLE_EQ(t.at("u3"), 3.0);
}

TEST(MeanListenerTargets, PermutationInvariant) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("a.csv"), std::string(kHeader) +
                                              "u1,l1,s,d,2\n"
                                              "u1,l2,s,d,5\n"
                                              "u1,l3,s,d,3\n");
  testutil::write_text(tmp.file("b.csv"), std::string(kHeader) +
                                              "u1,l3,s,d,3\n"
                                              "u1,l1,s,d,2\n"
                                              "u1,l2,s,d,5\n");
  auto ta = mean_listener_targets(load_dataset(tmp.file("a.csv"), tmp.path()));
  auto tb = mean_listener_targets(load_dataset(tmp.file("b.csv"), tmp.path()));
  EXPECT_DOUBLE_EQ(ta.at("u1"), tb.at("u1"));
}

TEST(Splits, DisjointnessEnforced) {
  testutil::TempDir tmp("ds");
  testutil::write_text(tmp.file("r.csv"), std::string(kHeader) +
                                              "u1,l1,s,d,4\n"
                                              "u2,l1,s,d,3\n");
  auto ds = load_dataset(tmp.file("r.csv"), tmp.path());
  ds.set_split("train", {"u1"});
  EXPECT_THROW(ds.set_split("dev", {"u1"}), UsageError);
  ds.set_split("dev", {"u2"});
  EXPECT_EQ(ds.split("train").size(), 1u);
}

TEST(PrepareAudio, ResamplesAndNormalizes) {
  testutil::TempDir tmp("audio");
  Waveform w;
  w.sample_rate = 48000;
  w.samples = testutil::sine_wave(440.0, 1.0, 48000, 0.1);
  write_wav(tmp.file("u.wav"), w);
  UtteranceRef u{"u", tmp.file("u.wav"), "s", "d"};
  Waveform p = prepare_audio(u);
  EXPECT_EQ(p.sample_rate, 16000);
  EXPECT_EQ(p.samples.size(), 16000u);
  float peak = 0;
  for (float v : p.samples) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.95, 1e-6);
}

TEST(PrepareAudio, SilentRejected) {
  testutil::TempDir tmp("audio");
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(8000, 0.0f);
  write_wav(tmp.file("z.wav"), w);
  UtteranceRef u{"z", tmp.file("z.wav"), "s", "d"};
  EXPECT_THROW(prepare_audio(u), UsageError);
}

TEST(PredictionsCsv, RoundTrip) {
  testutil::TempDir tmp("pred");
  write_predictions(tmp.file("p.csv"), {{"u1", 3.25}, {"u2", 4.5}});
  auto m = read_predictions(tmp.file("p.csv"));
  EXPECT_NEAR(m.at("u1"), 3.25, 1e-9);
  EXPECT_NEAR(m.at("u2"), 4.5, 1e-9);
}

}  // namespace
