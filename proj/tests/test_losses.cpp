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

#include <cmath>

#include "mospred/losses.hpp"
#include "support/testutil.hpp"

using namespace mospred;

namespace {

// Double-loop oracle over ordered pairs.
double contrastive_oracle(const std::vector<double>& s,
                          const std::vector<double>& p, double alpha) {
  double acc = 0.0;
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = 0; j < s.size(); ++j) {
      if (i == j) continue;
      const double d = s[i] - s[j];
      const double dh = p[i] - p[j];
      acc += std::max(0.0, std::abs(d - dh) - alpha);
    }
  return acc;
}

TEST(ContrastivePair, KnownValues) {
  EXPECT_DOUBLE_EQ(contrastive_pair(4, 3, 4.2, 3.2, 0.5), 0.0);
  // Frozen by hand: |1 - (-0.5)| - 0.5 = 1.0.
  EXPECT_DOUBLE_EQ(contrastive_pair(4, 3, 3.0, 3.5, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(contrastive_pair(4, 3, 1.0, 4.9, 10.0), 0.0);
}

TEST(ContrastivePair, SymmetricUnderSwap) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double s1 = rng.uniform(-1, 1), s2 = rng.uniform(-1, 1);
    const double p1 = rng.uniform(-1, 1), p2 = rng.uniform(-1, 1);
    const double a = rng.uniform(0, 0.8);
    EXPECT_DOUBLE_EQ(contrastive_pair(s1, s2, p1, p2, a),
                     contrastive_pair(s2, s1, p2, p1, a));
  }
}

TEST(ContrastivePair, InvariantToConstantShiftOfPredictions) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double s1 = rng.uniform(-1, 1), s2 = rng.uniform(-1, 1);
    const double p1 = rng.uniform(-1, 1), p2 = rng.uniform(-1, 1);
    const double a = rng.uniform(0, 0.8);
    const double c = rng.uniform(-5, 5);
    EXPECT_NEAR(contrastive_pair(s1, s2, p1, p2, a),
                contrastive_pair(s1, s2, p1 + c, p2 + c, a), 1e-12);
  }
}

TEST(ContrastivePair, NonFiniteRejected) {
  EXPECT_THROW(contrastive_pair(NAN, 3, 4, 3, 0.5), std::invalid_argument);
  EXPECT_THROW(contrastive_pair(4, 3, INFINITY, 3, 0.5), std::invalid_argument);
}

TEST(ContrastiveBatch, KnownValues) {
  // Each ordered direction contributes 0.1.
  EXPECT_NEAR(contrastive_batch(std::vector<double>{3, 4},
                                std::vector<double>{3.2, 3.6}, 0.5),
              0.2, 1e-12);
  EXPECT_DOUBLE_EQ(contrastive_batch(std::vector<double>{1, 2, 3},
                                     std::vector<double>{1, 2, 3}, 0.0),
                   0.0);
}

TEST(ContrastiveBatch, MatchesDoubleLoopOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 2 + rng.uniform_int(11);
    std::vector<double> s(n), p(n);
    for (size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform(-1, 1);
      p[i] = rng.uniform(-1, 1);
    }
    const double a = rng.uniform(0, 0.6);
    EXPECT_NEAR(contrastive_batch(s, p, a), contrastive_oracle(s, p, a), 1e-12);
  }
}

TEST(ContrastiveBatch, TooSmallRejected) {
  EXPECT_THROW(
      contrastive_batch(std::vector<double>{1}, std::vector<double>{1}, 0.5),
      std::invalid_argument);
}

TEST(ClippedMse, BranchBehavior) {
  // Frozen by hand: inside the clip -> 0, outside -> squared error.
  EXPECT_DOUBLE_EQ(clipped_mse(0.0, 0.2, 0.25), 0.0);
  EXPECT_NEAR(clipped_mse(0.0, 0.3, 0.25), 0.09, 1e-15);
  EXPECT_DOUBLE_EQ(clipped_mse(1.0, 0.0, 0.0), 1.0);
  // Exactly at the threshold the indicator is false.
  EXPECT_DOUBLE_EQ(clipped_mse(0.0, 0.25, 0.25), 0.0);
}

TEST(ClippedMse, NeverExceedsPlainSquaredError) {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const double y = rng.uniform(-1, 1), yh = rng.uniform(-1, 1);
    const double tau = rng.uniform(0, 0.5);
    const double c = clipped_mse(y, yh, tau);
    const double plain = (y - yh) * (y - yh);
    EXPECT_LE(c, plain);
    const double e = std::abs(y - yh);
    if (e > tau || e == 0.0) {
      EXPECT_DOUBLE_EQ(c, plain);
    }
  }
}

TEST(CombinedLoss, AblationConfigurations) {
  std::vector<double> s{0.1, -0.4, 0.7};
  std::vector<double> p{0.0, -0.1, 0.5};
  LossConfig reg_only{0.5, 0.25, 1.0, 0.0};
  double mean_clip = (clipped_mse(s[0], p[0], 0.25) + clipped_mse(s[1], p[1], 0.25) +
                      clipped_mse(s[2], p[2], 0.25)) /
                     3.0;
  EXPECT_NEAR(combined_loss(s, p, reg_only), mean_clip, 1e-15);

  LossConfig con_only{0.5, 0.25, 0.0, 1.0};
  EXPECT_NEAR(combined_loss(s, p, con_only), contrastive_oracle(s, p, 0.5), 1e-15);

  LossConfig both{0.5, 0.25, 1.0, 0.5};
  EXPECT_NEAR(combined_loss(s, p, both),
              mean_clip + 0.5 * contrastive_oracle(s, p, 0.5), 1e-15);
}

TEST(CombinedLoss, BothWeightsZeroRejected) {
  LossConfig cfg{0.5, 0.25, 0.0, 0.0};
  EXPECT_THROW(
      combined_loss(std::vector<double>{1, 2}, std::vector<double>{1, 2}, cfg),
      std::invalid_argument);
}

TEST(FrameBatchLoss, GradientMatchesFiniteDifferences) {
  Rng rng(77);
  LossConfig cfg{0.5, 0.25, 1.0, 0.5};
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n = 2 + rng.uniform_int(3);
    std::vector<std::vector<double>> preds(n);
    std::vector<double> targets(n);
    for (size_t u = 0; u < n; ++u) {
      targets[u] = rng.uniform(-1, 1);
      preds[u].resize(1 + rng.uniform_int(6));
      for (auto& v : preds[u]) v = rng.uniform(-1, 1);
    }

    // Skip configurations near the hinge/clip kinks.
    bool near_kink = false;
    std::vector<double> means(n);
    for (size_t u = 0; u < n; ++u) {
      double m = 0;
      for (double v : preds[u]) {
        m += v;
        if (std::abs(std::abs(targets[u] - v) - cfg.tau) < 1e-3) near_kink = true;
      }
      means[u] = m / preds[u].size();
    }
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) {
        const double z = (targets[i] - targets[j]) - (means[i] - means[j]);
        if (std::abs(std::abs(z) - cfg.alpha) < 1e-3) near_kink = true;
      }
    if (near_kink) continue;

    auto result = frame_batch_loss(preds, targets, cfg);
    for (size_t u = 0; u < n; ++u) {
      for (size_t f = 0; f < preds[u].size(); ++f) {
        const double h = 1e-6;
        const double orig = preds[u][f];
        preds[u][f] = orig + h;
        const double up = frame_batch_loss(preds, targets, cfg).total;
        preds[u][f] = orig - h;
        const double down = frame_batch_loss(preds, targets, cfg).total;
        preds[u][f] = orig;
        const double fd = (up - down) / (2 * h);
        const double scale = std::max({1.0, std::abs(fd), std::abs(result.dpred[u][f])});
        EXPECT_NEAR(result.dpred[u][f], fd, 1e-4 * scale);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(FrameBatchLoss, CrossDomainSwitchFiltersPairs) {
  std::vector<std::vector<double>> preds{{0.5}, {-0.5}};
  std::vector<double> targets{-0.5, 0.5};
  std::vector<int> groups{0, 1};
  LossConfig cfg{0.1, 0.0, 0.0, 1.0};
  cfg.cross_domain_pairs = true;
  auto with_pairs = frame_batch_loss(preds, targets, cfg, groups);
  EXPECT_GT(with_pairs.con, 0.0);
  cfg.cross_domain_pairs = false;
  auto without = frame_batch_loss(preds, targets, cfg, groups);
  EXPECT_DOUBLE_EQ(without.con, 0.0);
}

TEST(FrameBatchLoss, ConstantFramePredictionsMatchUtteranceLoss) {
  Rng rng(99);
  LossConfig cfg{0.5, 0.25, 1.0, 0.0};
  for (int trial = 0; trial < 300; ++trial) {
    const double s = rng.uniform(-1, 1);
    const double p = rng.uniform(-1, 1);
    const int t = 1 + static_cast<int>(rng.uniform_int(400));
    std::vector<std::vector<double>> preds{std::vector<double>(t, p)};
    std::vector<double> targets{s};
    const double frame_loss = frame_batch_loss(preds, targets, cfg).total;
    const double utt_loss =
        combined_loss(std::vector<double>{s}, std::vector<double>{p}, cfg);
    EXPECT_EQ(frame_loss, utt_loss);  // exact, not approximate
  }
}

}  // namespace
