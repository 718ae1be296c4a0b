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

#include <cstdlib>
#include <fstream>

#include "mospred/audio.hpp"
#include "support/testutil.hpp"

namespace {

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run_cli(const std::string& args, const std::string& workdir) {
  const std::string out_file = workdir + "/cli_out.txt";
  const std::string cmd = "cd " + workdir + " && " + MOSPRED_CLI_PATH + " " +
                          args + " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = testutil::read_text(out_file);
  return r;
}

TEST(Cli, HelpExitsZero) {
  testutil::TempDir tmp("cli");
  EXPECT_EQ(run_cli("--help", tmp.path().string()).exit_code, 0);
  for (const char* sub :
       {"train-strong", "infer", "extract-embeddings", "train-weak",
        "cluster-refs", "train-stack", "stack-predict", "evaluate",
        "augment-preview"}) {
    const auto r = run_cli(std::string(sub) + " --help", tmp.path().string());
    EXPECT_EQ(r.exit_code, 0) << sub << "\n" << r.output;
  }
}

TEST(Cli, UnknownFlagIsUsageError) {
  testutil::TempDir tmp("cli");
  EXPECT_EQ(run_cli("evaluate --no-such-flag", tmp.path().string()).exit_code, 2);
  EXPECT_EQ(run_cli("frobnicate", tmp.path().string()).exit_code, 2);
}

TEST(Cli, MissingFileIsUsageError) {
  testutil::TempDir tmp("cli");
  const auto r = run_cli("evaluate --pred nope.csv --ratings nope2.csv",
                         tmp.path().string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("error"), std::string::npos);
}

TEST(Cli, EvaluateIdentityPrintsPerfectMetrics) {
  testutil::TempDir tmp("cli");
  testutil::write_text(tmp.file("ratings.csv"),
                       "utterance_id,listener_id,system_id,domain_id,score\n"
                       "u1,l1,sA,d,4\nu1,l2,sA,d,5\n"
                       "u2,l1,sB,d,3\n"
                       "u3,l1,sC,d,2\n");
  testutil::write_text(tmp.file("pred.csv"),
                       "utterance_id,score\nu1,4.5\nu2,3.0\nu3,2.0\n");
  const auto r = run_cli("evaluate --pred pred.csv --ratings ratings.csv",
                         tmp.path().string());
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("utterance_mse=0.0000000000"), std::string::npos)
      << r.output;
  EXPECT_NE(r.output.find("utterance_srcc=1.0000000000"), std::string::npos);
  EXPECT_NE(r.output.find("n_systems=3"), std::string::npos);
}

TEST(Cli, EvaluateMissingPredictionIsUsageError) {
  testutil::TempDir tmp("cli");
  testutil::write_text(tmp.file("ratings.csv"),
                       "utterance_id,listener_id,system_id,domain_id,score\n"
                       "u1,l1,sA,d,4\nu2,l1,sB,d,3\n");
  testutil::write_text(tmp.file("pred.csv"), "utterance_id,score\nu1,4.0\n");
  const auto r = run_cli("evaluate --pred pred.csv --ratings ratings.csv",
                         tmp.path().string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("u2"), std::string::npos);
}

TEST(Cli, AugmentPreviewWritesDeterministicOutput) {
  testutil::TempDir tmp("cli");
  mospred::Waveform w;
  w.sample_rate = 16000;
  w.samples = testutil::sine_wave(440.0, 0.5, 16000);
  mospred::write_wav(tmp.file("in.wav"), w);

  const auto a =
      run_cli("augment-preview --seed 9 in.wav out_a.wav", tmp.path().string());
  EXPECT_EQ(a.exit_code, 0) << a.output;
  const auto b =
      run_cli("augment-preview --seed 9 in.wav out_b.wav", tmp.path().string());
  EXPECT_EQ(b.exit_code, 0);
  EXPECT_EQ(testutil::read_text(tmp.file("out_a.wav")),
            testutil::read_text(tmp.file("out_b.wav")));

  // Explicit parameters: one-octave shift keeps duration.
  const auto c = run_cli("augment-preview --f-t 1.0 --f-p 1200 in.wav oct.wav",
                         tmp.path().string());
  EXPECT_EQ(c.exit_code, 0) << c.output;
  const mospred::Waveform out = mospred::read_wav(tmp.file("oct.wav"));
  EXPECT_NEAR(static_cast<double>(out.samples.size()), w.samples.size(), 256);
}

TEST(Cli, ClusterRefsRoundTrip) {
  testutil::TempDir tmp("cli");
  testutil::write_text(tmp.file("t.tsv"),
                       "u1\ta b c d e f\n"
                       "u2\ta b c d e f\n"
                       "u3\ta b x d e f\n"
                       "u4\tz z z z z z\n");
  const auto r = run_cli(
      "cluster-refs --transcripts t.tsv --eps 0.3 --min-pts 2 --out refs.tsv",
      tmp.path().string());
  EXPECT_EQ(r.exit_code, 0) << r.output;
  const std::string refs = testutil::read_text(tmp.file("refs.tsv"));
  EXPECT_NE(refs.find("u1\t0\ta b c d e f"), std::string::npos) << refs;
  EXPECT_NE(refs.find("u4\t-1\tz z z z z z"), std::string::npos) << refs;
}

}  // namespace
