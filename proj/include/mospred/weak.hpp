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
// Weak learners: classical regressors over mean-pooled utterance embeddings.
// Six families: ridge, linear SVR, random forest, gradient-boosted trees,
// kernel SVR, and Gaussian-process regression. All are deterministic given
// the fit seed and serialize to JSON.

#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mospred/common.hpp"
#include "mospred/strong.hpp"

namespace mospred {

struct UtteranceEmbedding {
  std::string utterance_id;
  Eigen::VectorXd vector;
  std::string backend_id;
};

// Arithmetic mean over the time axis, accumulated in extended precision so
// frame order cannot perturb the result.
inline UtteranceEmbedding mean_pool(const FrameFeatures& f) {
  if (f.frames.rows() < 1)
    throw std::invalid_argument("mean_pool: needs at least one frame");
  Eigen::VectorXd out(f.frames.cols());
  for (long c = 0; c < f.frames.cols(); ++c) {
    long double acc = 0.0L;
    for (long r = 0; r < f.frames.rows(); ++r) acc += f.frames(r, c);
    out(c) = static_cast<double>(acc / static_cast<long double>(f.frames.rows()));
  }
  return {f.utterance_id, out, f.backend_id};
}

enum class WeakMethod {
  kRidge,
  kLinearSvr,
  kRandomForest,
  kGradientBoostedTrees,
  kKernelSvr,
  kGaussianProcess,
};

inline const std::vector<std::pair<WeakMethod, std::string>>& weak_method_names() {
  static const std::vector<std::pair<WeakMethod, std::string>> names = {
      {WeakMethod::kRidge, "ridge"},
      {WeakMethod::kLinearSvr, "linear-svr"},
      {WeakMethod::kRandomForest, "random-forest"},
      {WeakMethod::kGradientBoostedTrees, "gradient-boosted-trees"},
      {WeakMethod::kKernelSvr, "kernel-svr"},
      {WeakMethod::kGaussianProcess, "gaussian-process"},
  };
  return names;
}

inline std::string to_string(WeakMethod m) {
  for (const auto& [method, name] : weak_method_names())
    if (method == m) return name;
  throw std::invalid_argument("unknown weak method");
}

inline WeakMethod weak_method_from_string(const std::string& s) {
  for (const auto& [method, name] : weak_method_names())
    if (name == s) return method;
  throw UsageError("unknown weak method: " + s);
}

struct WeakLearnerSpec {
  std::string backend_id;
  WeakMethod method = WeakMethod::kRidge;
  std::string domain_tag;  // empty = all domains
  std::map<std::string, double> hyperparams;

  std::string name() const {
    std::string n = backend_id + "/" + to_string(method);
    if (!domain_tag.empty()) n += "/" + domain_tag;
    return n;
  }
};

inline void to_json(Json& j, const WeakLearnerSpec& s) {
  j = Json{{"backend_id", s.backend_id},
           {"method", to_string(s.method)},
           {"domain_tag", s.domain_tag},
           {"hyperparams", s.hyperparams}};
}

inline void from_json(const Json& j, WeakLearnerSpec& s) {
  serde::get_to_if_present(j, "backend_id", s.backend_id);
  if (j.contains("method"))
    s.method = weak_method_from_string(j.at("method").get<std::string>());
  serde::get_to_if_present(j, "domain_tag", s.domain_tag);
  serde::get_to_if_present(j, "hyperparams", s.hyperparams);
}

// Cross product of backends x methods x domains, in that nesting order.
inline std::vector<WeakLearnerSpec> build_learner_bank(
    const std::vector<std::string>& backends,
    const std::vector<WeakMethod>& methods,
    const std::vector<std::string>& domains) {
  if (backends.empty() || methods.empty() || domains.empty())
    throw std::invalid_argument("build_learner_bank: empty inputs");
  std::vector<WeakLearnerSpec> out;
  out.reserve(backends.size() * methods.size() * domains.size());
  for (const auto& b : backends)
    for (const auto& m : methods)
      for (const auto& d : domains) out.push_back({b, m, d, {}});
  return out;
}

// ---------------------------------------------------------------------------
// Model interface
// ---------------------------------------------------------------------------

class WeakModel {
 public:
  virtual ~WeakModel() = default;
  virtual void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                   uint64_t seed) = 0;
  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& x) const = 0;
  virtual Json to_json() const = 0;
  virtual std::unique_ptr<WeakModel> clone_unfitted() const = 0;
  virtual std::string method_name() const = 0;
};

namespace weak_detail {

inline double hp(const std::map<std::string, double>& m, const std::string& key,
                 double def) {
  auto it = m.find(key);
  return it == m.end() ? def : it->second;
}

inline void check_xy(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size())
    throw std::invalid_argument("weak fit: row count does not match targets");
  if (x.rows() < 2)
    throw std::invalid_argument("weak fit: needs at least 2 examples");
}

// Per-dimension standardization; constant dimensions pass through unscaled.
struct Standardizer {
  Eigen::VectorXd mean, scale;

  void fit(const Eigen::MatrixXd& x) {
    mean = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    scale = (centered.array().square().colwise().mean()).sqrt();
    for (long i = 0; i < scale.size(); ++i)
      if (scale(i) < 1e-12) scale(i) = 1.0;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() /
           scale.transpose().array();
  }

  Json to_json() const {
    return Json{{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())}};
  }

  void load(const Json& j) {
    const auto m = j.at("mean").get<std::vector<double>>();
    const auto s = j.at("scale").get<std::vector<double>>();
    mean = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    scale = Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
  }
};

inline std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

inline Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a,
                                  const Eigen::MatrixXd& b, double gamma) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (long i = 0; i < a.rows(); ++i)
    for (long j = 0; j < b.rows(); ++j)
      k(i, j) = std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
  return k;
}

// ---------------------------------------------------------------------------
// Ridge regression (closed form, unpenalized intercept via centering).
// ---------------------------------------------------------------------------

class RidgeModel final : public WeakModel {
 public:
  explicit RidgeModel(const std::map<std::string, double>& hps)
      : lambda_(hp(hps, "lambda", 1.0)) {}

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           uint64_t /*seed*/) override {
    check_xy(x, y);
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;
    Eigen::MatrixXd a = xc.transpose() * xc;
    a.diagonal().array() += lambda_;
    w_ = a.ldlt().solve(xc.transpose() * yc);
    b_ = y_mean - x_mean * w_;
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    return (x * w_).array() + b_;
  }

  Json to_json() const override {
    return Json{{"method", "ridge"},
                {"lambda", lambda_},
                {"w", to_vec(w_)},
                {"b", b_}};
  }

  void load(const Json& j) {
    w_ = from_vec(j.at("w").get<std::vector<double>>());
    b_ = j.at("b").get<double>();
  }

  std::unique_ptr<WeakModel> clone_unfitted() const override {
    return std::make_unique<RidgeModel>(std::map<std::string, double>{{"lambda", lambda_}});
  }

  std::string method_name() const override { return "ridge"; }

 private:
  double lambda_;
  Eigen::VectorXd w_;
  double b_ = 0.0;
};

// ---------------------------------------------------------------------------
// Linear SVR: epsilon-insensitive loss, full-batch subgradient descent on
// standardized inputs and targets.
// ---------------------------------------------------------------------------

class LinearSvrModel final : public WeakModel {
 public:
  explicit LinearSvrModel(const std::map<std::string, double>& hps)
      : lambda_(hp(hps, "lambda", 1e-3)),
        epsilon_(hp(hps, "epsilon", 0.1)),
        iterations_(static_cast<int>(hp(hps, "iterations", 2000))) {}

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           uint64_t /*seed*/) override {
    check_xy(x, y);
    std_.fit(x);
    const Eigen::MatrixXd xs = std_.apply(x);
    y_mean_ = y.mean();
    y_scale_ = std::sqrt((y.array() - y_mean_).square().mean());
    if (y_scale_ < 1e-12) y_scale_ = 1.0;
    const Eigen::VectorXd ys = (y.array() - y_mean_) / y_scale_;

    const long n = xs.rows(), d = xs.cols();
    w_ = Eigen::VectorXd::Zero(d);
    b_ = 0.0;
    const double eta0 = 0.5;
    for (int t = 0; t < iterations_; ++t) {
      const Eigen::VectorXd f = xs * w_;
      Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
      for (long i = 0; i < n; ++i) {
        const double r = f(i) + b_ - ys(i);
        if (r > epsilon_)
          s(i) = 1.0;
        else if (r < -epsilon_)
          s(i) = -1.0;
      }
      const double eta = eta0 / (1.0 + eta0 * lambda_ * t);
      w_ -= eta * (xs.transpose() * s / static_cast<double>(n) + lambda_ * w_);
      b_ -= eta * s.mean();
    }
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    const Eigen::MatrixXd xs = std_.apply(x);
    return ((xs * w_).array() + b_) * y_scale_ + y_mean_;
  }

  Json to_json() const override {
    return Json{{"method", "linear-svr"}, {"lambda", lambda_},
                {"epsilon", epsilon_},   {"iterations", iterations_},
                {"std", std_.to_json()}, {"w", to_vec(w_)},
                {"b", b_},               {"y_mean", y_mean_},
                {"y_scale", y_scale_}};
  }

  void load(const Json& j) {
    std_.load(j.at("std"));
    w_ = from_vec(j.at("w").get<std::vector<double>>());
    b_ = j.at("b").get<double>();
    y_mean_ = j.at("y_mean").get<double>();
    y_scale_ = j.at("y_scale").get<double>();
  }

  std::unique_ptr<WeakModel> clone_unfitted() const override {
    return std::make_unique<LinearSvrModel>(std::map<std::string, double>{
        {"lambda", lambda_},
        {"epsilon", epsilon_},
        {"iterations", static_cast<double>(iterations_)}});
  }

  std::string method_name() const override { return "linear-svr"; }

 private:
  double lambda_, epsilon_;
  int iterations_;
  Standardizer std_;
  Eigen::VectorXd w_;
  double b_ = 0.0, y_mean_ = 0.0, y_scale_ = 1.0;
};

// ---------------------------------------------------------------------------
// CART regression trees; shared by the forest and the boosted ensemble.
// ---------------------------------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 = leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

class RegressionTree {
 public:
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           const std::vector<int>& indices, int max_depth, int min_leaf,
           double feature_frac, Rng& rng) {
    nodes_.clear();
    build(x, y, indices, 0, max_depth, min_leaf, feature_frac, rng);
  }

  double predict_one(const Eigen::RowVectorXd& x) const {
    int node = 0;
    while (nodes_[node].feature >= 0)
      node = (x(nodes_[node].feature) <= nodes_[node].threshold)
                 ? nodes_[node].left
                 : nodes_[node].right;
    return nodes_[node].value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& n : nodes_)
      arr.push_back(Json{{"f", n.feature},
                         {"t", n.threshold},
                         {"l", n.left},
                         {"r", n.right},
                         {"v", n.value}});
    return arr;
  }

  void load(const Json& j) {
    nodes_.clear();
    for (const auto& n : j)
      nodes_.push_back({n.at("f").get<int>(), n.at("t").get<double>(),
                        n.at("l").get<int>(), n.at("r").get<int>(),
                        n.at("v").get<double>()});
  }

 private:
  int build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
            const std::vector<int>& idx, int depth, int max_depth, int min_leaf,
            double feature_frac, Rng& rng) {
    const int node_id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    double sum = 0.0, sum2 = 0.0;
    for (int i : idx) {
      sum += y(i);
      sum2 += y(i) * y(i);
    }
    const double m = static_cast<double>(idx.size());
    nodes_[node_id].value = sum / m;
    const double parent_sse = sum2 - sum * sum / m;

    if (depth >= max_depth || idx.size() < static_cast<size_t>(2 * min_leaf) ||
        parent_sse <= 1e-12)
      return node_id;

    // Candidate features, ascending for deterministic tie-breaks.
    const long d = x.cols();
    std::vector<int> features(d);
    std::iota(features.begin(), features.end(), 0);
    const int keep =
        std::max(1, static_cast<int>(std::ceil(feature_frac * static_cast<double>(d))));
    if (keep < d) {
      for (int i = 0; i < keep; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(d - i));
        std::swap(features[i], features[j]);
      }
      features.resize(keep);
      std::sort(features.begin(), features.end());
    }

    int best_feature = -1;
    double best_threshold = 0.0, best_gain = 1e-12;
    std::vector<int> sorted = idx;
    for (int f : features) {
      std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
        if (x(a, f) != x(b, f)) return x(a, f) < x(b, f);
        return a < b;
      });
      double left_sum = 0.0, left_sum2 = 0.0;
      for (size_t p = 1; p < sorted.size(); ++p) {
        const double yv = y(sorted[p - 1]);
        left_sum += yv;
        left_sum2 += yv * yv;
        if (x(sorted[p - 1], f) == x(sorted[p], f)) continue;
        if (p < static_cast<size_t>(min_leaf) ||
            sorted.size() - p < static_cast<size_t>(min_leaf))
          continue;
        const double lm = static_cast<double>(p);
        const double rm = m - lm;
        const double right_sum = sum - left_sum;
        const double right_sum2 = sum2 - left_sum2;
        const double sse = (left_sum2 - left_sum * left_sum / lm) +
                           (right_sum2 - right_sum * right_sum / rm);
        const double gain = parent_sse - sse;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (x(sorted[p - 1], f) + x(sorted[p], f));
        }
      }
    }
    if (best_feature < 0) return node_id;

    std::vector<int> left_idx, right_idx;
    for (int i : idx)
      (x(i, best_feature) <= best_threshold ? left_idx : right_idx).push_back(i);
    if (left_idx.empty() || right_idx.empty()) return node_id;

    nodes_[node_id].feature = best_feature;
    nodes_[node_id].threshold = best_threshold;
    nodes_[node_id].left = build(x, y, left_idx, depth + 1, max_depth, min_leaf,
                                 feature_frac, rng);
    nodes_[node_id].right = build(x, y, right_idx, depth + 1, max_depth,
                                  min_leaf, feature_frac, rng);
    return node_id;
  }

  std::vector<TreeNode> nodes_;
};

class RandomForestModel final : public WeakModel {
 public:
  explicit RandomForestModel(const std::map<std::string, double>& hps)
      : n_trees_(static_cast<int>(hp(hps, "trees", 50))),
        max_depth_(static_cast<int>(hp(hps, "max_depth", 12))),
        min_leaf_(static_cast<int>(hp(hps, "min_leaf", 2))),
        feature_frac_(hp(hps, "feature_frac", 1.0 / 3.0)) {}

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           uint64_t seed) override {
    check_xy(x, y);
    trees_.assign(n_trees_, {});
    const long n = x.rows();
    for (int t = 0; t < n_trees_; ++t) {
      Rng rng(derive_seed(seed, "rf-tree:" + std::to_string(t)));
      std::vector<int> bootstrap(n);
      for (long i = 0; i < n; ++i)
        bootstrap[i] = static_cast<int>(rng.uniform_int(n));
      trees_[t].fit(x, y, bootstrap, max_depth_, min_leaf_, feature_frac_, rng);
    }
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
    for (long i = 0; i < x.rows(); ++i) {
      double acc = 0.0;
      for (const auto& t : trees_) acc += t.predict_one(x.row(i));
      out(i) = acc / trees_.size();
    }
    return out;
  }

  Json to_json() const override {
    Json trees = Json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return Json{{"method", "random-forest"},
                {"trees_cfg", n_trees_},
                {"max_depth", max_depth_},
                {"min_leaf", min_leaf_},
                {"feature_frac", feature_frac_},
                {"trees", trees}};
  }

  void load(const Json& j) {
    trees_.clear();
    for (const auto& t : j.at("trees")) {
      trees_.emplace_back();
      trees_.back().load(t);
    }
  }

  std::unique_ptr<WeakModel> clone_unfitted() const override {
    return std::make_unique<RandomForestModel>(std::map<std::string, double>{
        {"trees", static_cast<double>(n_trees_)},
        {"max_depth", static_cast<double>(max_depth_)},
        {"min_leaf", static_cast<double>(min_leaf_)},
        {"feature_frac", feature_frac_}});
  }

  std::string method_name() const override { return "random-forest"; }

 private:
  int n_trees_, max_depth_, min_leaf_;
  double feature_frac_;
  std::vector<RegressionTree> trees_;
};

class GradientBoostedTreesModel final : public WeakModel {
 public:
  explicit GradientBoostedTreesModel(const std::map<std::string, double>& hps)
      : rounds_(static_cast<int>(hp(hps, "rounds", 100))),
        depth_(static_cast<int>(hp(hps, "depth", 3))),
        learning_rate_(hp(hps, "learning_rate", 0.1)),
        min_leaf_(static_cast<int>(hp(hps, "min_leaf", 2))) {}

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           uint64_t seed) override {
    check_xy(x, y);
    base_ = y.mean();
    trees_.clear();
    Eigen::VectorXd residual = y.array() - base_;
    std::vector<int> all(x.rows());
    std::iota(all.begin(), all.end(), 0);
    for (int r = 0; r < rounds_; ++r) {
      Rng rng(derive_seed(seed, "gbt-round:" + std::to_string(r)));
      RegressionTree tree;
      tree.fit(x, residual, all, depth_, min_leaf_, 1.0, rng);
      for (long i = 0; i < x.rows(); ++i)
        residual(i) -= learning_rate_ * tree.predict_one(x.row(i));
      trees_.push_back(std::move(tree));
    }
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), base_);
    for (long i = 0; i < x.rows(); ++i)
      for (const auto& t : trees_)
        out(i) += learning_rate_ * t.predict_one(x.row(i));
    return out;
  }

  Json to_json() const override {
    Json trees = Json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return Json{{"method", "gradient-boosted-trees"},
                {"rounds", rounds_},
                {"depth", depth_},
                {"learning_rate", learning_rate_},
                {"min_leaf", min_leaf_},
                {"base", base_},
                {"trees", trees}};
  }

  void load(const Json& j) {
    base_ = j.at("base").get<double>();
    trees_.clear();
    for (const auto& t : j.at("trees")) {
      trees_.emplace_back();
      trees_.back().load(t);
    }
  }

  std::unique_ptr<WeakModel> clone_unfitted() const override {
    return std::make_unique<GradientBoostedTreesModel>(std::map<std::string, double>{
        {"rounds", static_cast<double>(rounds_)},
        {"depth", static_cast<double>(depth_)},
        {"learning_rate", learning_rate_},
        {"min_leaf", static_cast<double>(min_leaf_)}});
  }

  std::string method_name() const override { return "gradient-boosted-trees"; }

 private:
  int rounds_, depth_;
  double learning_rate_;
  int min_leaf_;
  double base_ = 0.0;
  std::vector<RegressionTree> trees_;
};

// ---------------------------------------------------------------------------
// Kernel SVR: RBF kernel, representer-theorem parameterization, full-batch
// subgradient descent.
// ---------------------------------------------------------------------------

class KernelSvrModel final : public WeakModel {
 public:
  explicit KernelSvrModel(const std::map<std::string, double>& hps)
      : lambda_(hp(hps, "lambda", 1e-2)),
        epsilon_(hp(hps, "epsilon", 0.05)),
        gamma_(hp(hps, "gamma", 0.0)),  // 0 = 1/D
        iterations_(static_cast<int>(hp(hps, "iterations", 500))) {}

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           uint64_t /*seed*/) override {
    check_xy(x, y);
    std_.fit(x);
    x_train_ = std_.apply(x);
    y_mean_ = y.mean();
    y_scale_ = std::sqrt((y.array() - y_mean_).square().mean());
    if (y_scale_ < 1e-12) y_scale_ = 1.0;
    const Eigen::VectorXd ys = (y.array() - y_mean_) / y_scale_;

    const double g = gamma_ > 0 ? gamma_ : 1.0 / static_cast<double>(x.cols());
    gamma_eff_ = g;
    const Eigen::MatrixXd k = rbf_kernel(x_train_, x_train_, g);
    const long n = x_train_.rows();
    alpha_ = Eigen::VectorXd::Zero(n);
    b_ = 0.0;
    const double eta0 = 0.5;
    for (int t = 0; t < iterations_; ++t) {
      const Eigen::VectorXd f = k * alpha_;
      Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
      for (long i = 0; i < n; ++i) {
        const double r = f(i) + b_ - ys(i);
        if (r > epsilon_)
          s(i) = 1.0;
        else if (r < -epsilon_)
          s(i) = -1.0;
      }
      const double eta = eta0 / (1.0 + eta0 * lambda_ * t);
      // Functional subgradient: d/d f = s/n + lambda * alpha.
      alpha_ -= eta * (s / static_cast<double>(n) + lambda_ * alpha_);
      b_ -= eta * s.mean();
    }
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    const Eigen::MatrixXd xs = std_.apply(x);
    const Eigen::MatrixXd k = rbf_kernel(xs, x_train_, gamma_eff_);
    return ((k * alpha_).array() + b_) * y_scale_ + y_mean_;
  }

  Json to_json() const override {
    Json xt = Json::array();
    for (long i = 0; i < x_train_.rows(); ++i)
      xt.push_back(to_vec(x_train_.row(i).transpose()));
    return Json{{"method", "kernel-svr"}, {"lambda", lambda_},
                {"epsilon", epsilon_},   {"gamma", gamma_},
                {"gamma_eff", gamma_eff_}, {"iterations", iterations_},
                {"std", std_.to_json()}, {"alpha", to_vec(alpha_)},
                {"b", b_},               {"y_mean", y_mean_},
                {"y_scale", y_scale_},   {"x_train", xt}};
  }

  void load(const Json& j) {
    std_.load(j.at("std"));
    gamma_eff_ = j.at("gamma_eff").get<double>();
    alpha_ = from_vec(j.at("alpha").get<std::vector<double>>());
    b_ = j.at("b").get<double>();
    y_mean_ = j.at("y_mean").get<double>();
    y_scale_ = j.at("y_scale").get<double>();
    const auto& xt = j.at("x_train");
    x_train_.resize(xt.size(), alpha_.size() > 0 ? xt[0].size() : 0);
    for (size_t i = 0; i < xt.size(); ++i)
      x_train_.row(i) = from_vec(xt[i].get<std::vector<double>>()).transpose();
  }

  std::unique_ptr<WeakModel> clone_unfitted() const override {
    return std::make_unique<KernelSvrModel>(std::map<std::string, double>{
        {"lambda", lambda_},
        {"epsilon", epsilon_},
        {"gamma", gamma_},
        {"iterations", static_cast<double>(iterations_)}});
  }

  std::string method_name() const override { return "kernel-svr"; }

 private:
  double lambda_, epsilon_, gamma_, gamma_eff_ = 0.0;
  int iterations_;
  Standardizer std_;
  Eigen::MatrixXd x_train_;
  Eigen::VectorXd alpha_;
  double b_ = 0.0, y_mean_ = 0.0, y_scale_ = 1.0;
};

// ---------------------------------------------------------------------------
// Gaussian-process regression: RBF kernel, posterior mean via Cholesky.
// ---------------------------------------------------------------------------

class GaussianProcessModel final : public WeakModel {
 public:
  explicit GaussianProcessModel(const std::map<std::string, double>& hps)
      : sigma2_(hp(hps, "sigma2", 1e-2)), gamma_(hp(hps, "gamma", 0.0)) {}

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           uint64_t /*seed*/) override {
    check_xy(x, y);
    std_.fit(x);
    x_train_ = std_.apply(x);
    y_mean_ = y.mean();
    const Eigen::VectorXd yc = y.array() - y_mean_;
    const double g = gamma_ > 0 ? gamma_ : 1.0 / static_cast<double>(x.cols());
    gamma_eff_ = g;
    Eigen::MatrixXd k = rbf_kernel(x_train_, x_train_, g);
    k.diagonal().array() += sigma2_ + 1e-10;
    alpha_ = k.llt().solve(yc);
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    const Eigen::MatrixXd xs = std_.apply(x);
    const Eigen::MatrixXd k = rbf_kernel(xs, x_train_, gamma_eff_);
    return (k * alpha_).array() + y_mean_;
  }

  Json to_json() const override {
    Json xt = Json::array();
    for (long i = 0; i < x_train_.rows(); ++i)
      xt.push_back(to_vec(x_train_.row(i).transpose()));
    return Json{{"method", "gaussian-process"},
                {"sigma2", sigma2_},
                {"gamma", gamma_},
                {"gamma_eff", gamma_eff_},
                {"std", std_.to_json()},
                {"alpha", to_vec(alpha_)},
                {"y_mean", y_mean_},
                {"x_train", xt}};
  }

  void load(const Json& j) {
    std_.load(j.at("std"));
    gamma_eff_ = j.at("gamma_eff").get<double>();
    alpha_ = from_vec(j.at("alpha").get<std::vector<double>>());
    y_mean_ = j.at("y_mean").get<double>();
    const auto& xt = j.at("x_train");
    x_train_.resize(xt.size(), xt.empty() ? 0 : xt[0].size());
    for (size_t i = 0; i < xt.size(); ++i)
      x_train_.row(i) = from_vec(xt[i].get<std::vector<double>>()).transpose();
  }

  std::unique_ptr<WeakModel> clone_unfitted() const override {
    return std::make_unique<GaussianProcessModel>(
        std::map<std::string, double>{{"sigma2", sigma2_}, {"gamma", gamma_}});
  }

  std::string method_name() const override { return "gaussian-process"; }

 private:
  double sigma2_, gamma_, gamma_eff_ = 0.0;
  Standardizer std_;
  Eigen::MatrixXd x_train_;
  Eigen::VectorXd alpha_;
  double y_mean_ = 0.0;
};

}  // namespace weak_detail

inline std::unique_ptr<WeakModel> make_weak_model(
    WeakMethod method, const std::map<std::string, double>& hyperparams = {}) {
  using namespace weak_detail;
  switch (method) {
    case WeakMethod::kRidge:
      return std::make_unique<RidgeModel>(hyperparams);
    case WeakMethod::kLinearSvr:
      return std::make_unique<LinearSvrModel>(hyperparams);
    case WeakMethod::kRandomForest:
      return std::make_unique<RandomForestModel>(hyperparams);
    case WeakMethod::kGradientBoostedTrees:
      return std::make_unique<GradientBoostedTreesModel>(hyperparams);
    case WeakMethod::kKernelSvr:
      return std::make_unique<KernelSvrModel>(hyperparams);
    case WeakMethod::kGaussianProcess:
      return std::make_unique<GaussianProcessModel>(hyperparams);
  }
  throw std::invalid_argument("unknown weak method");
}

inline std::unique_ptr<WeakModel> weak_model_from_json(const Json& j) {
  using namespace weak_detail;
  const auto method = j.at("method").get<std::string>();
  if (method == "ridge") {
    auto m = std::make_unique<RidgeModel>(std::map<std::string, double>{});
    m->load(j);
    return m;
  } else if (method == "linear-svr") {
    auto m = std::make_unique<LinearSvrModel>(std::map<std::string, double>{});
    m->load(j);
    return m;
  } else if (method == "random-forest") {
    auto m = std::make_unique<RandomForestModel>(std::map<std::string, double>{});
    m->load(j);
    return m;
  } else if (method == "gradient-boosted-trees") {
    auto m = std::make_unique<GradientBoostedTreesModel>(std::map<std::string, double>{});
    m->load(j);
    return m;
  } else if (method == "kernel-svr") {
    auto m = std::make_unique<KernelSvrModel>(std::map<std::string, double>{});
    m->load(j);
    return m;
  } else if (method == "gaussian-process") {
    auto m = std::make_unique<GaussianProcessModel>(std::map<std::string, double>{});
    m->load(j);
    return m;
  }
  throw UsageError("unknown weak model method in JSON: " + method);
}

// Fits a fresh model for the spec over (embeddings, mean-listener targets).
inline std::unique_ptr<WeakModel> train_weak(const WeakLearnerSpec& spec,
                                             const Eigen::MatrixXd& embeddings,
                                             const Eigen::VectorXd& targets,
                                             uint64_t seed) {
  auto model = make_weak_model(spec.method, spec.hyperparams);
  model->fit(embeddings, targets, derive_seed(seed, "weak:" + spec.name()));
  return model;
}

inline Eigen::VectorXd predict_weak(const WeakModel& model,
                                    const Eigen::MatrixXd& embeddings) {
  return model.predict(embeddings);
}

// ---------------------------------------------------------------------------
// Embeddings CSV: utterance_id,backend_id,v0,...,v{D-1}
// ---------------------------------------------------------------------------

inline void write_embeddings(const std::filesystem::path& path,
                             const std::vector<UtteranceEmbedding>& embs) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write embeddings csv: " + path.string());
  out << "utterance_id,backend_id";
  const long d = embs.empty() ? 0 : embs[0].vector.size();
  for (long i = 0; i < d; ++i) out << ",v" << i;
  out << '\n';
  char buf[64];
  for (const auto& e : embs) {
    out << e.utterance_id << ',' << e.backend_id;
    for (long i = 0; i < e.vector.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", e.vector(i));
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline std::vector<UtteranceEmbedding> read_embeddings(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open embeddings csv: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw UsageError("empty embeddings csv: " + path.string());
  std::vector<UtteranceEmbedding> out;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() < 3)
      throw UsageError("embeddings csv line " + std::to_string(line_no) +
                       ": too few fields");
    UtteranceEmbedding e;
    e.utterance_id = f[0];
    e.backend_id = f[1];
    e.vector.resize(f.size() - 2);
    for (size_t i = 2; i < f.size(); ++i)
      e.vector(i - 2) =
          parse_double(f[i], "embedding value at line " + std::to_string(line_no));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mospred
