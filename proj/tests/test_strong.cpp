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

#include "mospred/strong.hpp"
#include "mospred/toydata.hpp"
#include "support/testutil.hpp"

using namespace mospred;

namespace {

SymbolSeq syms(const std::string& s) {
  SymbolSeq out;
  for (char c : s) out.push_back(std::string(1, c));
  return out;
}

StrongConfig tiny_config() {
  StrongConfig c;
  c.listener_emb_dim = 4;
  c.domain_emb_dim = 4;
  c.phoneme_encoder = {1, 3, true, 4};
  c.head = {5, 1};
  c.loss = {0.5, 0.25, 1.0, 0.5};
  c.optimizer.warmup_steps = 10;
  c.optimizer.total_steps = 100;
  c.eval_every = 50;
  return c;
}

Waveform one_second_tone() {
  Waveform w;
  w.sample_rate = 16000;
  w.samples = testutil::sine_wave(440.0, 1.0, 16000);
  return w;
}

TEST(ToyBackend, HopArithmetic) {
  ToyBackend backend({"toy64", "toy", 64, 7});
  const auto f = backend.extract(one_second_tone());
  EXPECT_NEAR(f.rows(), 50, 1);
  EXPECT_EQ(f.cols(), 64);
}

TEST(ToyBackend, Deterministic) {
  ToyBackend a({"toy64", "toy", 64, 7});
  ToyBackend b({"toy64", "toy", 64, 7});
  const Waveform w = one_second_tone();
  EXPECT_EQ(a.extract(w), b.extract(w));
}

TEST(ToyBackend, NoiseAndToneDiffer) {
  ToyBackend backend({"toy64", "toy", 64, 7});
  Rng rng(5);
  Waveform noise;
  noise.sample_rate = 16000;
  noise.samples = testutil::white_noise(16000, rng);
  const auto ft = backend.extract(one_second_tone());
  const auto fn = backend.extract(noise);
  ASSERT_EQ(ft.rows(), fn.rows());
  EXPECT_GT((ft - fn).norm(), 0.0);
}

TEST(ToyBackend, DistinctSeedsGiveDistinctFeatures) {
  ToyBackend a({"toyA", "toy", 16, 1});
  ToyBackend b({"toyB", "toy", 16, 2});
  const Waveform w = one_second_tone();
  EXPECT_GT((a.extract(w) - b.extract(w)).norm(), 0.0);
}

TEST(MakeFrameTargets, Replication) {
  EXPECT_EQ(make_frame_targets(0.5, 3), (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(make_frame_targets(-1.0, 1), (std::vector<double>{-1.0}));
  EXPECT_THROW(make_frame_targets(0.0, 0), std::invalid_argument);
}

TEST(LrSchedule, KnownPoints) {
  OptimizerConfig o;
  o.peak_lr = 1.0;
  o.warmup_steps = 4000;
  o.total_steps = 15000;
  EXPECT_DOUBLE_EQ(lr_schedule(2000, o), 0.5);
  EXPECT_DOUBLE_EQ(lr_schedule(4000, o), 1.0);
  EXPECT_DOUBLE_EQ(lr_schedule(15000, o), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(0, o), 0.0);
  EXPECT_THROW(lr_schedule(-1, o), std::invalid_argument);
  EXPECT_THROW(lr_schedule(15001, o), std::invalid_argument);
}

TEST(LrSchedule, PiecewiseLinearAndPeaksAtWarmup) {
  OptimizerConfig o;
  o.peak_lr = 3e-4;
  o.warmup_steps = 100;
  o.total_steps = 1000;
  double prev = lr_schedule(0, o);
  double max_seen = prev;
  int argmax = 0;
  for (int s = 1; s <= 1000; ++s) {
    const double cur = lr_schedule(s, o);
    // continuity: steps differ by at most the larger linear slope
    const double max_slope = o.peak_lr / std::min(o.warmup_steps,
                                                  o.total_steps - o.warmup_steps);
    EXPECT_LE(std::abs(cur - prev), max_slope + 1e-15);
    if (cur > max_seen) {
      max_seen = cur;
      argmax = s;
    }
    prev = cur;
  }
  EXPECT_EQ(argmax, 100);
  EXPECT_DOUBLE_EQ(max_seen, o.peak_lr);
}

TEST(StrongModel, PhonemeContextShapeAndDeterminism) {
  StrongConfig c = tiny_config();
  c.phoneme_encoder = {1, 256, true, 16};
  StrongModel m(c, 2, 1, SyntheticPhonemeProvider::alphabet(), 8, 42);
  // two sequences x two states x hidden
  EXPECT_EQ(m.context_dim(), 1024);
  const SymbolSeq ph = syms("kat");
  const SymbolSeq ref = syms("rat");
  const nn::Vec a = m.encode_phoneme_context(ph, ref, nullptr);
  const nn::Vec b = m.encode_phoneme_context(ph, ref, nullptr);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 1024);
  // Context reacts to the reference differing from the phonemes.
  const nn::Vec same = m.encode_phoneme_context(ph, ph, nullptr);
  EXPECT_GT((a - same).norm(), 0.0);
}

TEST(StrongModel, EmptySequenceUsesLearnedNullContext) {
  StrongConfig c = tiny_config();
  StrongModel m(c, 2, 1, SyntheticPhonemeProvider::alphabet(), 8, 42);
  const nn::Vec null_ctx = m.encode_phoneme_context({}, syms("kat"), nullptr);
  EXPECT_EQ(null_ctx, m.params().get("null_context").value.col(0));
}

TEST(StrongModel, UnknownSymbolRejected) {
  StrongConfig c = tiny_config();
  StrongModel m(c, 2, 1, syms("abc"), 8, 42);
  EXPECT_THROW(m.encode_phoneme_context(syms("abz"), syms("abc"), nullptr),
               UsageError);
}

TEST(StrongModel, ForwardShapeContract) {
  StrongConfig c = tiny_config();
  StrongModel m(c, 3, 2, SyntheticPhonemeProvider::alphabet(), 6, 1);
  Eigen::MatrixXd features = Eigen::MatrixXd::Random(17, 6);
  const nn::Vec scores =
      m.forward(features, 0, 1, syms("kat"), syms("kat"), nullptr);
  EXPECT_EQ(scores.size(), 17);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Random(17, 5);
  EXPECT_THROW(m.forward(bad, 0, 1, syms("kat"), syms("kat"), nullptr),
               std::invalid_argument);
}

TEST(StrongModel, ZeroedOutputLayerGivesZeroScores) {
  StrongConfig c = tiny_config();
  StrongModel m(c, 2, 1, SyntheticPhonemeProvider::alphabet(), 6, 1);
  m.params().get("head_out.w").value.setZero();
  m.params().get("head_out.b").value.setZero();
  Eigen::MatrixXd features = Eigen::MatrixXd::Random(9, 6);
  const nn::Vec scores = m.forward(features, 0, 0, syms("ka"), syms("ka"), nullptr);
  EXPECT_EQ(scores.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(StrongModel, ListenerIndexChangesOutput) {
  StrongConfig c = tiny_config();
  StrongModel m(c, 4, 1, SyntheticPhonemeProvider::alphabet(), 6, 1);
  Eigen::MatrixXd features = Eigen::MatrixXd::Random(7, 6);
  const nn::Vec s0 = m.forward(features, 0, 0, syms("ka"), syms("ka"), nullptr);
  const nn::Vec s1 = m.forward(features, 1, 0, syms("ka"), syms("ka"), nullptr);
  EXPECT_GT((s0 - s1).norm(), 0.0);
}

TEST(StrongModel, FullGradientCheckThroughLossAndModel) {
  StrongConfig c = tiny_config();
  c.loss = {0.5, 0.25, 1.0, 0.5};
  StrongModel m(c, 3, 2, SyntheticPhonemeProvider::alphabet(), 4, 3);

  Rng rng(8);
  std::vector<Eigen::MatrixXd> features;
  std::vector<SymbolSeq> phs{syms("kat"), syms("persi")};
  std::vector<int> listeners{0, 2}, domains{0, 1};
  std::vector<double> targets{0.4, -0.6};
  for (int u = 0; u < 2; ++u) {
    Eigen::MatrixXd f(3 + u, 4);
    for (long r = 0; r < f.rows(); ++r)
      for (long col = 0; col < 4; ++col) f(r, col) = rng.uniform(-1, 1);
    features.push_back(f);
  }

  auto batch_loss = [&](bool with_backward) {
    std::vector<StrongModel::ForwardCache> caches(2);
    std::vector<std::vector<double>> preds(2);
    for (int u = 0; u < 2; ++u) {
      const nn::Vec s =
          m.forward(features[u], listeners[u], domains[u], phs[u], phs[u],
                    with_backward ? &caches[u] : nullptr);
      preds[u].assign(s.data(), s.data() + s.size());
    }
    const FrameBatchLoss l = frame_batch_loss(preds, targets, c.loss);
    if (with_backward) {
      for (int u = 0; u < 2; ++u) {
        nn::Vec d = Eigen::Map<const nn::Vec>(l.dpred[u].data(),
                                              l.dpred[u].size());
        m.backward(caches[u], d);
      }
    }
    return l.total;
  };

  m.params().zero_grad();
  batch_loss(true);

  // Spot-check a swath of parameters in every tensor.
  for (const auto& t : m.params().tensors()) {
    const long n = t->value.size();
    const long stride = std::max<long>(1, n / 25);
    for (long k = 0; k < n; k += stride) {
      double* slot = t->value.data() + k;
      const double orig = *slot;
      const double h = 1e-5;
      *slot = orig + h;
      const double up = batch_loss(false);
      *slot = orig - h;
      const double down = batch_loss(false);
      *slot = orig;
      const double fd = (up - down) / (2 * h);
      const double got = t->grad.data()[k];
      const double scale = std::max({1.0, std::abs(fd), std::abs(got)});
      ASSERT_NEAR(got, fd, 1e-3 * scale) << t->name << "[" << k << "]";
    }
  }
}

TEST(Checkpoint, SaveLoadBitExactPredictions) {
  testutil::TempDir tmp("ckpt");
  StrongConfig c = tiny_config();
  ToyBackend backend({"toy6", "toy", 6, 3});

  StrongCheckpoint ckpt;
  ckpt.config = c;
  ckpt.backend = backend.spec();
  ckpt.listener_ids = {mean_listener_id("d"), "l1"};
  ckpt.domain_ids = {"d"};
  ckpt.vocab = SyntheticPhonemeProvider::alphabet();
  ckpt.feature_dim = 6;
  ckpt.dev_system_srcc = 0.5;
  ckpt.step = 100;
  ckpt.model = std::make_shared<StrongModel>(c, 2, 1, ckpt.vocab, 6, 99);

  save_checkpoint(tmp.file("m.ckpt"), ckpt);
  const StrongCheckpoint loaded = load_checkpoint(tmp.file("m.ckpt"));
  EXPECT_EQ(loaded.step, 100);
  EXPECT_DOUBLE_EQ(loaded.dev_system_srcc, 0.5);
  EXPECT_EQ(loaded.listener_ids, ckpt.listener_ids);

  const Waveform w = one_second_tone();
  const double a = predict_utterance(ckpt, backend, w, syms("ka"), syms("ka"), "d");
  const double b =
      predict_utterance(loaded, backend, w, syms("ka"), syms("ka"), "d");
  EXPECT_EQ(a, b);  // bit-for-bit
}

TEST(Checkpoint, RiggedHeadGivesKnownPrediction) {
  StrongConfig c = tiny_config();
  ToyBackend backend({"toy6", "toy", 6, 3});
  StrongCheckpoint ckpt;
  ckpt.config = c;
  ckpt.backend = backend.spec();
  ckpt.listener_ids = {mean_listener_id("d")};
  ckpt.domain_ids = {"d"};
  ckpt.vocab = SyntheticPhonemeProvider::alphabet();
  ckpt.feature_dim = 6;
  ckpt.model = std::make_shared<StrongModel>(c, 1, 1, ckpt.vocab, 6, 99);

  // Zero weights and a fixed bias force every frame score to the bias.
  ckpt.model->params().get("head_out.w").value.setZero();
  ckpt.model->params().get("head_out.b").value.setConstant(0.5);
  const Waveform w = one_second_tone();
  EXPECT_DOUBLE_EQ(
      predict_utterance(ckpt, backend, w, syms("ka"), syms("ka"), "d"), 4.0);

  // Out-of-range head outputs clamp to the raw scale.
  ckpt.model->params().get("head_out.b").value.setConstant(3.0);
  EXPECT_DOUBLE_EQ(
      predict_utterance(ckpt, backend, w, syms("ka"), syms("ka"), "d"), 5.0);
}

class StrongTrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new testutil::TempDir("strongtrain");
    toydata::ToyDataConfig dcfg;
    dcfg.n_systems = 10;
    dcfg.utts_per_system = 5;
    dcfg.train_per_system = 4;
    dcfg.dev_per_system = 1;
    dcfg.seconds = 0.5;
    dcfg.seed = 11;
    paths_ = new toydata::ToyPaths(toydata::generate(dcfg, tmp_->path()));
    ds_ = new MosDataset(load_dataset(paths_->ratings_csv, paths_->audio_dir));
    toydata::apply_splits_file(*ds_, paths_->splits_json);
  }
  static void TearDownTestSuite() {
    delete ds_;
    delete paths_;
    delete tmp_;
    ds_ = nullptr;
    paths_ = nullptr;
    tmp_ = nullptr;
  }

  static testutil::TempDir* tmp_;
  static toydata::ToyPaths* paths_;
  static MosDataset* ds_;
};

testutil::TempDir* StrongTrainingTest::tmp_ = nullptr;
toydata::ToyPaths* StrongTrainingTest::paths_ = nullptr;
MosDataset* StrongTrainingTest::ds_ = nullptr;

TEST_F(StrongTrainingTest, ShortRunLearnsAndSelectsBestCheckpoint) {
  StrongConfig cfg = toydata::toy_strong_config(600);
  cfg.eval_every = 150;
  AugmentConfig aug;
  aug.enabled = false;

  const auto transcripts = read_transcripts(paths_->transcripts_tsv);
  FilePhonemeProvider provider(transcripts);
  const auto refs = extract_references(transcripts, 0.3, 2);
  ToyBackend backend({"toy64", "toy", 64, 7});

  TrainResult r = train_strong(*ds_, cfg, aug, refs, provider, backend, 123);
  ASSERT_FALSE(r.history.empty());

  double best = -3;
  int best_step = 0;
  for (const auto& p : r.history) {
    if (p.sys_srcc > best) {
      best = p.sys_srcc;
      best_step = p.step;
    }
  }
  EXPECT_DOUBLE_EQ(r.checkpoint.dev_system_srcc, best);
  EXPECT_EQ(r.checkpoint.step, best_step);
  // The toy task is learnable: correlation should be clearly positive even
  // in a short run.
  EXPECT_GT(r.history.back().utt_srcc, 0.5);
}

TEST_F(StrongTrainingTest, DeterministicGivenSeed) {
  StrongConfig cfg = toydata::toy_strong_config(120);
  cfg.eval_every = 60;
  AugmentConfig aug;
  aug.enabled = false;

  const auto transcripts = read_transcripts(paths_->transcripts_tsv);
  FilePhonemeProvider provider(transcripts);
  const auto refs = extract_references(transcripts, 0.3, 2);
  ToyBackend backend({"toy64", "toy", 64, 7});

  TrainResult a = train_strong(*ds_, cfg, aug, refs, provider, backend, 7);
  TrainResult b = train_strong(*ds_, cfg, aug, refs, provider, backend, 7);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].sys_srcc, b.history[i].sys_srcc);
    EXPECT_EQ(a.history[i].utt_srcc, b.history[i].utt_srcc);
  }
  // Identical parameters bit-for-bit.
  const auto& ta = a.checkpoint.model->params().tensors();
  const auto& tb = b.checkpoint.model->params().tensors();
  ASSERT_EQ(ta.size(), tb.size());
  for (size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i]->value, tb[i]->value);
}

TEST_F(StrongTrainingTest, AugmentationPathRunsDeterministically) {
  StrongConfig cfg = toydata::toy_strong_config(8);
  cfg.eval_every = 8;
  cfg.optimizer.batch_size = 4;
  cfg.optimizer.warmup_steps = 2;
  AugmentConfig aug;  // enabled
  const auto transcripts = read_transcripts(paths_->transcripts_tsv);
  FilePhonemeProvider provider(transcripts);
  const auto refs = extract_references(transcripts, 0.3, 2);
  ToyBackend backend({"toy64", "toy", 64, 7});

  TrainResult a = train_strong(*ds_, cfg, aug, refs, provider, backend, 5);
  TrainResult b = train_strong(*ds_, cfg, aug, refs, provider, backend, 5);
  ASSERT_EQ(a.history.size(), b.history.size());
  EXPECT_EQ(a.history.back().utt_srcc, b.history.back().utt_srcc);
}

TEST_F(StrongTrainingTest, MissingDevSplitRejected) {
  MosDataset plain = load_dataset(paths_->ratings_csv, paths_->audio_dir);
  StrongConfig cfg = toydata::toy_strong_config(50);
  AugmentConfig aug;
  aug.enabled = false;
  SyntheticPhonemeProvider provider(1);
  ToyBackend backend({"toy64", "toy", 64, 7});
  EXPECT_THROW(train_strong(plain, cfg, aug, {}, provider, backend, 1),
               UsageError);
}

TEST(StrongBatchPrediction, MatchesLoopedPrediction) {
  StrongConfig c = tiny_config();
  ToyBackend backend({"toy6", "toy", 6, 3});
  StrongCheckpoint ckpt;
  ckpt.config = c;
  ckpt.backend = backend.spec();
  ckpt.listener_ids = {mean_listener_id("d")};
  ckpt.domain_ids = {"d"};
  ckpt.vocab = SyntheticPhonemeProvider::alphabet();
  ckpt.feature_dim = 6;
  ckpt.model = std::make_shared<StrongModel>(c, 1, 1, ckpt.vocab, 6, 99);

  std::vector<Waveform> waves;
  for (double f : {220.0, 440.0, 880.0}) {
    Waveform w;
    w.sample_rate = 16000;
    w.samples = testutil::sine_wave(f, 0.5, 16000);
    waves.push_back(w);
  }
  std::vector<double> batched;
  for (const auto& w : waves)
    batched.push_back(
        predict_utterance(ckpt, backend, w, syms("ka"), syms("ka"), "d"));
  for (size_t i = 0; i < waves.size(); ++i) {
    const double solo = predict_utterance(ckpt, backend, waves[i], syms("ka"),
                                          syms("ka"), "d");
    EXPECT_EQ(batched[i], solo);
  }
}

}  // namespace
