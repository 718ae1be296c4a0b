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
// Stacking, stages 0-3: stage-1 learners produce out-of-fold (or held-out
// dev) scores, stage-2 meta learners fit those scores, and a stage-3
// combiner produces the final prediction. Greedy strong-learner selection
// maximizes dev system-level rank correlation.

#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mospred/metrics.hpp"
#include "mospred/weak.hpp"

namespace mospred {

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

struct StackingPlan {
  int n_folds = 5;
  std::vector<std::string> strong_checkpoints;
  std::string strong_oof_mode = "per-fold";  // or "dev-shortcut"
  std::vector<WeakLearnerSpec> weak_specs;
  std::vector<WeakMethod> stage2_methods = {
      WeakMethod::kRidge,          WeakMethod::kLinearSvr,
      WeakMethod::kRandomForest,   WeakMethod::kGradientBoostedTrees,
      WeakMethod::kKernelSvr,      WeakMethod::kGaussianProcess};
  WeakMethod stage3_method = WeakMethod::kRidge;
  bool greedy = true;
  int greedy_k = 0;  // 0 keeps every strong candidate

  std::map<std::string, double> stage2_hyperparams;
  std::map<std::string, double> stage3_hyperparams;
};

inline void validate(const StackingPlan& p) {
  if (p.n_folds < 2) throw UsageError("stacking plan: n_folds must be >= 2");
  if (p.weak_specs.empty() && p.strong_checkpoints.empty())
    throw UsageError("stacking plan: needs at least one stage-1 learner");
  if (p.stage2_methods.empty())
    throw UsageError("stacking plan: needs at least one stage-2 method");
  if (p.strong_oof_mode != "per-fold" && p.strong_oof_mode != "dev-shortcut")
    throw UsageError("stacking plan: strong_oof_mode must be 'per-fold' or 'dev-shortcut'");
}

inline void to_json(Json& j, const StackingPlan& p) {
  std::vector<std::string> m2;
  for (auto m : p.stage2_methods) m2.push_back(to_string(m));
  j = Json{{"n_folds", p.n_folds},
           {"strong_checkpoints", p.strong_checkpoints},
           {"strong_oof_mode", p.strong_oof_mode},
           {"weak_specs", p.weak_specs},
           {"stage2_methods", m2},
           {"stage3_method", to_string(p.stage3_method)},
           {"greedy", p.greedy},
           {"greedy_k", p.greedy_k},
           {"stage2_hyperparams", p.stage2_hyperparams},
           {"stage3_hyperparams", p.stage3_hyperparams}};
}

inline void from_json(const Json& j, StackingPlan& p) {
  serde::get_to_if_present(j, "n_folds", p.n_folds);
  serde::get_to_if_present(j, "strong_checkpoints", p.strong_checkpoints);
  serde::get_to_if_present(j, "strong_oof_mode", p.strong_oof_mode);
  serde::get_to_if_present(j, "weak_specs", p.weak_specs);
  if (j.contains("stage2_methods")) {
    p.stage2_methods.clear();
    for (const auto& s : j.at("stage2_methods"))
      p.stage2_methods.push_back(weak_method_from_string(s.get<std::string>()));
  }
  if (j.contains("stage3_method"))
    p.stage3_method =
        weak_method_from_string(j.at("stage3_method").get<std::string>());
  serde::get_to_if_present(j, "greedy", p.greedy);
  serde::get_to_if_present(j, "greedy_k", p.greedy_k);
  serde::get_to_if_present(j, "stage2_hyperparams", p.stage2_hyperparams);
  serde::get_to_if_present(j, "stage3_hyperparams", p.stage3_hyperparams);
}

// ---------------------------------------------------------------------------
// Stage scores
// ---------------------------------------------------------------------------

struct StageScores {
  std::vector<std::string> utterance_ids;  // row order
  std::vector<std::string> columns;        // learner names
  Eigen::MatrixXd scores;                  // rows x columns, no gaps

  void validate_shape() const {
    if (scores.rows() != static_cast<long>(utterance_ids.size()) ||
        scores.cols() != static_cast<long>(columns.size()))
      throw std::invalid_argument("stage scores: shape mismatch");
  }
};

inline void write_stage_scores(const std::filesystem::path& path,
                               const StageScores& s) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write stage scores: " + path.string());
  out << "utterance_id";
  for (const auto& c : s.columns) out << ',' << c;
  out << '\n';
  char buf[64];
  for (size_t r = 0; r < s.utterance_ids.size(); ++r) {
    out << s.utterance_ids[r];
    for (long c = 0; c < s.scores.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.scores(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline StageScores read_stage_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open stage scores: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw UsageError("empty stage scores file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split(line, ',');
  if (header.empty() || header[0] != "utterance_id")
    throw UsageError("stage scores header mismatch in " + path.string());
  StageScores s;
  s.columns.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto f = split(line, ',');
    if (f.size() != header.size())
      throw UsageError("stage scores row width mismatch in " + path.string());
    s.utterance_ids.push_back(f[0]);
    std::vector<double> row;
    for (size_t i = 1; i < f.size(); ++i)
      row.push_back(parse_double(f[i], "stage score"));
    rows.push_back(std::move(row));
  }
  s.scores.resize(rows.size(), s.columns.size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < s.columns.size(); ++c) s.scores(r, c) = rows[r][c];
  return s;
}

// ---------------------------------------------------------------------------
// Stage-1 learner interface
//
// Learners are addressed by positions into a caller-defined master utterance
// list; each concrete learner captures whatever data it needs.
// ---------------------------------------------------------------------------

class StageLearner {
 public:
  virtual ~StageLearner() = default;
  virtual std::string name() const = 0;
  virtual void fit(const std::vector<int>& positions) = 0;
  virtual Eigen::VectorXd predict(const std::vector<int>& positions) const = 0;
  virtual std::unique_ptr<StageLearner> clone_unfitted() const = 0;
  // Column descriptor for bundle persistence.
  virtual Json describe() const { return Json{{"type", "opaque"}}; }
};

// Weak learner over a shared embedding matrix. Training rows may be
// restricted to one domain tag; prediction is unrestricted.
class WeakStageLearner final : public StageLearner {
 public:
  WeakStageLearner(WeakLearnerSpec spec, const Eigen::MatrixXd* embeddings,
                   const Eigen::VectorXd* targets,
                   const std::vector<std::string>* domains, uint64_t seed)
      : spec_(std::move(spec)),
        embeddings_(embeddings),
        targets_(targets),
        domains_(domains),
        seed_(seed) {}

  std::string name() const override { return spec_.name(); }

  void fit(const std::vector<int>& positions) override {
    std::vector<int> keep;
    for (int p : positions)
      if (spec_.domain_tag.empty() || spec_.domain_tag == "*" ||
          (*domains_)[p] == spec_.domain_tag)
        keep.push_back(p);
    if (keep.size() < 2)
      throw UsageError("weak learner " + name() +
                       ": fewer than 2 training rows after domain filtering");
    Eigen::MatrixXd x(keep.size(), embeddings_->cols());
    Eigen::VectorXd y(keep.size());
    for (size_t i = 0; i < keep.size(); ++i) {
      x.row(i) = embeddings_->row(keep[i]);
      y(i) = (*targets_)(keep[i]);
    }
    model_ = train_weak(spec_, x, y, seed_);
  }

  Eigen::VectorXd predict(const std::vector<int>& positions) const override {
    if (!model_) throw std::logic_error("weak stage learner not fitted");
    Eigen::MatrixXd x(positions.size(), embeddings_->cols());
    for (size_t i = 0; i < positions.size(); ++i)
      x.row(i) = embeddings_->row(positions[i]);
    return model_->predict(x);
  }

  std::unique_ptr<StageLearner> clone_unfitted() const override {
    return std::make_unique<WeakStageLearner>(spec_, embeddings_, targets_,
                                              domains_, seed_);
  }

  Json describe() const override {
    if (!model_) throw std::logic_error("weak stage learner not fitted");
    return Json{{"type", "weak"}, {"spec", spec_}, {"model", model_->to_json()}};
  }

  const WeakModel* model() const { return model_.get(); }

 private:
  WeakLearnerSpec spec_;
  const Eigen::MatrixXd* embeddings_;
  const Eigen::VectorXd* targets_;
  const std::vector<std::string>* domains_;
  uint64_t seed_;
  std::unique_ptr<WeakModel> model_;
};

// Precomputed per-position predictions; fitting is a no-op. Used for strong
// checkpoints in dev-shortcut mode and as a test double.
class FixedPredictionLearner final : public StageLearner {
 public:
  FixedPredictionLearner(std::string name, Eigen::VectorXd predictions,
                         Json descriptor = Json{{"type", "fixed"}})
      : name_(std::move(name)),
        predictions_(std::move(predictions)),
        descriptor_(std::move(descriptor)) {}

  std::string name() const override { return name_; }
  void fit(const std::vector<int>&) override {}

  Eigen::VectorXd predict(const std::vector<int>& positions) const override {
    Eigen::VectorXd out(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
      if (positions[i] < 0 || positions[i] >= predictions_.size())
        throw std::invalid_argument("fixed learner: position out of range");
      out(i) = predictions_(positions[i]);
    }
    return out;
  }

  std::unique_ptr<StageLearner> clone_unfitted() const override {
    return std::make_unique<FixedPredictionLearner>(name_, predictions_,
                                                    descriptor_);
  }

  Json describe() const override { return descriptor_; }

 private:
  std::string name_;
  Eigen::VectorXd predictions_;
  Json descriptor_;
};

// ---------------------------------------------------------------------------
// Out-of-fold predictions
// ---------------------------------------------------------------------------

// Shuffled round-robin fold assignment; returns the fold id per position
// index [0, n).
inline std::vector<int> make_folds(size_t n, int n_folds, Rng& rng) {
  if (n_folds < 2) throw UsageError("make_folds: n_folds must be >= 2");
  if (static_cast<size_t>(n_folds) > n)
    throw UsageError("make_folds: n_folds exceeds number of items");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  rng.shuffle(order);
  std::vector<int> fold_of(n);
  for (size_t i = 0; i < n; ++i)
    fold_of[order[i]] = static_cast<int>(i % n_folds);
  return fold_of;
}

struct OofResult {
  Eigen::VectorXd predictions;  // aligned with the input positions
  std::vector<int> fold_of;     // fold id per input position
};

// Each position is predicted by a clone trained on every other fold.
inline OofResult oof_predictions(const StageLearner& prototype,
                                 const std::vector<int>& positions,
                                 const std::vector<int>& fold_of) {
  if (fold_of.size() != positions.size())
    throw std::invalid_argument("oof_predictions: fold assignment mismatch");
  int n_folds = 0;
  for (int f : fold_of) n_folds = std::max(n_folds, f + 1);

  OofResult out;
  out.predictions.resize(positions.size());
  out.fold_of = fold_of;
  for (int fold = 0; fold < n_folds; ++fold) {
    std::vector<int> train_pos, held_pos;
    std::vector<size_t> held_slots;
    for (size_t i = 0; i < positions.size(); ++i) {
      if (fold_of[i] == fold) {
        held_pos.push_back(positions[i]);
        held_slots.push_back(i);
      } else {
        train_pos.push_back(positions[i]);
      }
    }
    if (held_pos.empty()) continue;
    auto learner = prototype.clone_unfitted();
    learner->fit(train_pos);
    const Eigen::VectorXd pred = learner->predict(held_pos);
    for (size_t k = 0; k < held_slots.size(); ++k)
      out.predictions(held_slots[k]) = pred(k);
  }
  return out;
}

inline OofResult oof_predictions(const StageLearner& prototype,
                                 const std::vector<int>& positions, int n_folds,
                                 Rng& rng) {
  return oof_predictions(prototype, positions,
                         make_folds(positions.size(), n_folds, rng));
}

// ---------------------------------------------------------------------------
// Meta stages over score matrices
// ---------------------------------------------------------------------------

// Adapts a weak regressor to the StageLearner interface over a fixed matrix.
class MatrixStageLearner final : public StageLearner {
 public:
  MatrixStageLearner(std::string name, WeakMethod method,
                     std::map<std::string, double> hyperparams,
                     const Eigen::MatrixXd* x, const Eigen::VectorXd* y,
                     uint64_t seed)
      : name_(std::move(name)),
        method_(method),
        hyperparams_(std::move(hyperparams)),
        x_(x),
        y_(y),
        seed_(seed) {}

  std::string name() const override { return name_; }

  void fit(const std::vector<int>& positions) override {
    Eigen::MatrixXd x(positions.size(), x_->cols());
    Eigen::VectorXd y(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
      x.row(i) = x_->row(positions[i]);
      y(i) = (*y_)(positions[i]);
    }
    model_ = make_weak_model(method_, hyperparams_);
    model_->fit(x, y, seed_);
  }

  Eigen::VectorXd predict(const std::vector<int>& positions) const override {
    if (!model_) throw std::logic_error("matrix stage learner not fitted");
    Eigen::MatrixXd x(positions.size(), x_->cols());
    for (size_t i = 0; i < positions.size(); ++i)
      x.row(i) = x_->row(positions[i]);
    return model_->predict(x);
  }

  std::unique_ptr<StageLearner> clone_unfitted() const override {
    return std::make_unique<MatrixStageLearner>(name_, method_, hyperparams_,
                                                x_, y_, seed_);
  }

  const WeakModel* model() const { return model_.get(); }
  std::unique_ptr<WeakModel> release_model() { return std::move(model_); }

 private:
  std::string name_;
  WeakMethod method_;
  std::map<std::string, double> hyperparams_;
  const Eigen::MatrixXd* x_;
  const Eigen::VectorXd* y_;
  uint64_t seed_;
  std::unique_ptr<WeakModel> model_;
};

// ---------------------------------------------------------------------------
// Fitted stack
// ---------------------------------------------------------------------------

struct FittedStack {
  StackingPlan plan;
  std::vector<std::string> stage1_columns;
  std::vector<std::unique_ptr<StageLearner>> stage1_full;  // fitted on full train
  std::vector<std::string> stage2_names;
  std::vector<std::unique_ptr<WeakModel>> stage2_models;
  std::unique_ptr<WeakModel> stage3_model;
  StageScores meta_scores;  // the matrix the meta stages trained on
};

struct StackingInputs {
  std::vector<std::string> utterance_ids;  // master order, rows everywhere
  Eigen::VectorXd targets;                 // raw-scale mean listener scores
  std::vector<int> train_positions;
  std::vector<int> dev_positions;  // required for dev-shortcut mode
};

// Trains stages 1-3. Stage-1 full models always fit on the training split;
// the meta matrix rows are either train-split OOF predictions (per-fold) or
// held-out dev predictions (dev-shortcut).
inline FittedStack train_stack(
    const StackingPlan& plan,
    std::vector<std::unique_ptr<StageLearner>> stage1_prototypes,
    const StackingInputs& in, uint64_t seed) {
  validate(plan);
  if (stage1_prototypes.empty())
    throw UsageError("train_stack: no stage-1 learners supplied");
  if (in.train_positions.empty())
    throw UsageError("train_stack: empty training split");

  FittedStack out;
  out.plan = plan;

  const bool dev_mode = plan.strong_oof_mode == "dev-shortcut";
  if (dev_mode && in.dev_positions.empty())
    throw UsageError("train_stack: dev-shortcut mode requires a dev split");
  const std::vector<int>& meta_positions =
      dev_mode ? in.dev_positions : in.train_positions;

  // Shared fold assignment so every learner sees the same partition.
  Rng fold_rng(derive_seed(seed, "stack.folds"));
  std::vector<int> fold_of;
  if (!dev_mode)
    fold_of = make_folds(in.train_positions.size(), plan.n_folds, fold_rng);

  Eigen::MatrixXd z1(meta_positions.size(), stage1_prototypes.size());
  for (size_t l = 0; l < stage1_prototypes.size(); ++l) {
    out.stage1_columns.push_back(stage1_prototypes[l]->name());
    if (dev_mode) {
      stage1_prototypes[l]->fit(in.train_positions);
      z1.col(l) = stage1_prototypes[l]->predict(in.dev_positions);
      out.stage1_full.push_back(std::move(stage1_prototypes[l]));
    } else {
      const OofResult oof =
          oof_predictions(*stage1_prototypes[l], in.train_positions, fold_of);
      z1.col(l) = oof.predictions;
      stage1_prototypes[l]->fit(in.train_positions);
      out.stage1_full.push_back(std::move(stage1_prototypes[l]));
    }
  }

  out.meta_scores.columns = out.stage1_columns;
  for (int p : meta_positions)
    out.meta_scores.utterance_ids.push_back(in.utterance_ids[p]);
  out.meta_scores.scores = z1;

  Eigen::VectorXd y_meta(meta_positions.size());
  for (size_t i = 0; i < meta_positions.size(); ++i)
    y_meta(i) = in.targets(meta_positions[i]);

  // Stage 2: per-method models over the stage-1 matrix, plus their own OOF
  // scores to train stage 3 without leakage.
  const long r = z1.rows();
  std::vector<int> rows(r);
  std::iota(rows.begin(), rows.end(), 0);
  const int stage2_folds =
      std::max(2, std::min<int>(plan.n_folds, static_cast<int>(r)));
  Rng stage2_rng(derive_seed(seed, "stack.stage2"));
  const std::vector<int> stage2_fold_of = make_folds(r, stage2_folds, stage2_rng);

  Eigen::MatrixXd z2(r, plan.stage2_methods.size());
  for (size_t m = 0; m < plan.stage2_methods.size(); ++m) {
    const std::string mname = "stage2/" + to_string(plan.stage2_methods[m]);
    out.stage2_names.push_back(mname);
    MatrixStageLearner proto(mname, plan.stage2_methods[m],
                             plan.stage2_hyperparams, &z1, &y_meta,
                             derive_seed(seed, mname));
    z2.col(m) = oof_predictions(proto, rows, stage2_fold_of).predictions;
    proto.fit(rows);
    out.stage2_models.push_back(proto.release_model());
  }

  // Stage 3 on the stage-2 OOF scores.
  out.stage3_model = make_weak_model(plan.stage3_method, plan.stage3_hyperparams);
  out.stage3_model->fit(z2, y_meta, derive_seed(seed, "stack.stage3"));
  return out;
}

// Final raw-scale predictions for arbitrary positions (typically the test
// split): full-train stage-1 models -> stage-2 models -> stage-3 combiner.
inline Eigen::VectorXd stack_predict(const FittedStack& stack,
                                     const std::vector<int>& positions) {
  if (stack.stage1_full.empty() || !stack.stage3_model)
    throw std::logic_error("stack_predict: stack not fitted");
  Eigen::MatrixXd z1(positions.size(), stack.stage1_full.size());
  for (size_t l = 0; l < stack.stage1_full.size(); ++l)
    z1.col(l) = stack.stage1_full[l]->predict(positions);
  Eigen::MatrixXd z2(positions.size(), stack.stage2_models.size());
  for (size_t m = 0; m < stack.stage2_models.size(); ++m)
    z2.col(m) = stack.stage2_models[m]->predict(z1);
  return stack.stage3_model->predict(z2);
}

// Matrix-level prediction used when stage-1 columns were computed elsewhere
// (e.g. from a persisted bundle).
inline Eigen::VectorXd stack_predict_from_scores(
    const std::vector<std::unique_ptr<WeakModel>>& stage2_models,
    const WeakModel& stage3_model, const Eigen::MatrixXd& z1) {
  Eigen::MatrixXd z2(z1.rows(), stage2_models.size());
  for (size_t m = 0; m < stage2_models.size(); ++m)
    z2.col(m) = stage2_models[m]->predict(z1);
  return stage3_model.predict(z2);
}

// ---------------------------------------------------------------------------
// Greedy strong-learner selection
//
// Iteratively adds the candidate maximizing the dev system-level SRCC of the
// unweighted mean of the selected candidates' predictions. Ties keep the
// earliest candidate index.
// ---------------------------------------------------------------------------

inline std::vector<int> greedy_select(const Eigen::MatrixXd& dev_predictions,
                                      const Eigen::VectorXd& dev_true,
                                      const std::vector<std::string>& systems,
                                      int k) {
  const long n = dev_predictions.rows();
  const long c = dev_predictions.cols();
  if (dev_true.size() != n || static_cast<long>(systems.size()) != n)
    throw std::invalid_argument("greedy_select: row mismatch");
  if (k < 1 || k > c)
    throw std::invalid_argument("greedy_select: k outside [1, n_candidates]");

  auto system_srcc = [&](const Eigen::VectorXd& pred) {
    std::map<std::string, double> pred_map, true_map;
    std::map<std::string, std::string> sys_of;
    for (long i = 0; i < n; ++i) {
      const std::string key = "u" + std::to_string(i);
      pred_map[key] = pred(i);
      true_map[key] = dev_true(i);
      sys_of[key] = systems[i];
    }
    try {
      auto [ps, ts] = system_aggregate(pred_map, true_map, sys_of);
      return srcc(ps, ts);
    } catch (const UndefinedCorrelationError&) {
      return -2.0;
    }
  };

  std::vector<int> selected;
  std::vector<bool> used(c, false);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  for (int round = 0; round < k; ++round) {
    int best = -1;
    double best_score = -3.0;
    for (long cand = 0; cand < c; ++cand) {
      if (used[cand]) continue;
      const Eigen::VectorXd mean =
          (sum + dev_predictions.col(cand)) / static_cast<double>(round + 1);
      const double score = system_srcc(mean);
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(cand);
      }
    }
    used[best] = true;
    selected.push_back(best);
    sum += dev_predictions.col(best);
  }
  return selected;
}

}  // namespace mospred
