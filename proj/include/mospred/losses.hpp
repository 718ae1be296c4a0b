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

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "mospred/common.hpp"

namespace mospred {

// Loss hyperparameters, interpreted in normalized [-1,1] score space.
//   alpha: contrastive margin; tau: clipped-MSE threshold;
//   beta/gamma: regression/contrastive weights.
// cross_domain_pairs controls whether contrastive pairs may span domains
// when group ids are supplied to frame_batch_loss.
struct LossConfig {
  double alpha = 0.5;
  double tau = 0.25;
  double beta = 1.0;
  double gamma = 0.5;
  bool cross_domain_pairs = true;
};

inline void validate(const LossConfig& cfg) {
  if (cfg.alpha < 0 || cfg.tau < 0 || cfg.beta < 0 || cfg.gamma < 0)
    throw std::invalid_argument("loss config: alpha, tau, beta, gamma must be >= 0");
  if (cfg.beta == 0 && cfg.gamma == 0)
    throw std::invalid_argument("loss config: beta and gamma cannot both be 0");
}

namespace detail {
inline void check_finite(double v, const char* who) {
  if (!std::isfinite(v))
    throw std::invalid_argument(std::string(who) + ": non-finite input");
}
}  // namespace detail

// Hinge on the mismatch between the true score difference and the predicted
// one: max(0, |(s1-s2) - (p1-p2)| - alpha). Subgradient 0 at the kink.
inline double contrastive_pair(double s1, double s2, double p1, double p2,
                               double alpha) {
  detail::check_finite(s1, "contrastive_pair");
  detail::check_finite(s2, "contrastive_pair");
  detail::check_finite(p1, "contrastive_pair");
  detail::check_finite(p2, "contrastive_pair");
  if (alpha < 0) throw std::invalid_argument("contrastive_pair: alpha must be >= 0");
  const double d = s1 - s2;
  const double dhat = p1 - p2;
  return std::max(0.0, std::abs(d - dhat) - alpha);
}

// Sum over all ordered pairs i != j; each unordered pair contributes twice.
inline double contrastive_batch(std::span<const double> scores,
                                std::span<const double> preds, double alpha) {
  if (scores.size() != preds.size())
    throw std::invalid_argument("contrastive_batch: length mismatch");
  if (scores.size() < 2)
    throw std::invalid_argument("contrastive_batch: needs at least 2 elements");
  double acc = 0.0;
  for (size_t i = 0; i < scores.size(); ++i)
    for (size_t j = i + 1; j < scores.size(); ++j)
      acc += 2.0 * contrastive_pair(scores[i], scores[j], preds[i], preds[j], alpha);
  return acc;
}

// Squared error gated by the clip threshold: 0 when |y - yhat| <= tau.
inline double clipped_mse(double y, double yhat, double tau) {
  detail::check_finite(y, "clipped_mse");
  detail::check_finite(yhat, "clipped_mse");
  if (tau < 0) throw std::invalid_argument("clipped_mse: tau must be >= 0");
  const double e = y - yhat;
  return (std::abs(e) > tau) ? e * e : 0.0;
}

// beta * mean clipped-MSE + gamma * contrastive_batch over the elements.
// The mean accumulates in extended precision so that a batch of identical
// terms reduces to the single term exactly.
inline double combined_loss(std::span<const double> scores,
                            std::span<const double> preds,
                            const LossConfig& cfg) {
  validate(cfg);
  if (scores.size() != preds.size())
    throw std::invalid_argument("combined_loss: length mismatch");
  if (scores.empty()) throw std::invalid_argument("combined_loss: empty batch");
  long double reg = 0.0L;
  for (size_t i = 0; i < scores.size(); ++i)
    reg += clipped_mse(scores[i], preds[i], cfg.tau);
  reg /= static_cast<long double>(scores.size());
  double total = cfg.beta * static_cast<double>(reg);
  if (cfg.gamma != 0.0)
    total += cfg.gamma * contrastive_batch(scores, preds, cfg.alpha);
  return total;
}

// ---------------------------------------------------------------------------
// Frame-level batch loss with gradients, for training.
//
// The regression term is the mean of clipped-MSE over every frame of every
// utterance in the batch (targets replicated across frames). The contrastive
// term pairs frame-averaged utterance predictions. With group ids given and
// cross_domain_pairs=false, only same-group pairs contribute.
// ---------------------------------------------------------------------------

struct FrameBatchLoss {
  double total = 0.0;
  double reg = 0.0;  // unweighted mean clipped-MSE
  double con = 0.0;  // unweighted contrastive sum
  std::vector<std::vector<double>> dpred;  // dL/d frame prediction
};

inline FrameBatchLoss frame_batch_loss(
    const std::vector<std::vector<double>>& frame_preds,
    std::span<const double> targets, const LossConfig& cfg,
    std::span<const int> group_ids = {}) {
  validate(cfg);
  const size_t n = frame_preds.size();
  if (targets.size() != n)
    throw std::invalid_argument("frame_batch_loss: batch size mismatch");
  if (n == 0) throw std::invalid_argument("frame_batch_loss: empty batch");
  if (!group_ids.empty() && group_ids.size() != n)
    throw std::invalid_argument("frame_batch_loss: group id size mismatch");

  FrameBatchLoss out;
  out.dpred.resize(n);

  // Regression term over all frames.
  size_t total_frames = 0;
  for (const auto& fp : frame_preds) {
    if (fp.empty())
      throw std::invalid_argument("frame_batch_loss: utterance with no frames");
    total_frames += fp.size();
  }
  long double reg_acc = 0.0L;
  for (size_t u = 0; u < n; ++u) {
    out.dpred[u].assign(frame_preds[u].size(), 0.0);
    for (size_t f = 0; f < frame_preds[u].size(); ++f) {
      const double e = targets[u] - frame_preds[u][f];
      if (std::abs(e) > cfg.tau) {
        reg_acc += e * e;
        out.dpred[u][f] += cfg.beta * 2.0 * (frame_preds[u][f] - targets[u]) /
                           static_cast<double>(total_frames);
      }
    }
  }
  out.reg = static_cast<double>(reg_acc / static_cast<long double>(total_frames));

  // Contrastive term over frame-averaged utterance predictions.
  std::vector<double> mean_pred(n);
  for (size_t u = 0; u < n; ++u) {
    long double s = 0.0L;
    for (double p : frame_preds[u]) s += p;
    mean_pred[u] = static_cast<double>(s / static_cast<long double>(frame_preds[u].size()));
  }
  std::vector<double> dmean(n, 0.0);
  if (cfg.gamma != 0.0 && n >= 2) {
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = i + 1; j < n; ++j) {
        if (!group_ids.empty() && !cfg.cross_domain_pairs &&
            group_ids[i] != group_ids[j])
          continue;
        const double z = (targets[i] - targets[j]) - (mean_pred[i] - mean_pred[j]);
        if (std::abs(z) > cfg.alpha) {
          out.con += 2.0 * (std::abs(z) - cfg.alpha);
          const double s = (z > 0) ? 1.0 : -1.0;
          // d|z|/dmean_pred[i] = -s, and the ordered-pair sum doubles it.
          dmean[i] += cfg.gamma * 2.0 * -s;
          dmean[j] += cfg.gamma * 2.0 * s;
        }
      }
    }
    for (size_t u = 0; u < n; ++u) {
      if (dmean[u] == 0.0) continue;
      const double per_frame = dmean[u] / static_cast<double>(frame_preds[u].size());
      for (double& g : out.dpred[u]) g += per_frame;
    }
  }

  out.total = cfg.beta * out.reg + cfg.gamma * out.con;
  return out;
}

}  // namespace mospred
