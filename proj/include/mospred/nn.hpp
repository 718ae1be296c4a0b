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
// Minimal dense building blocks with hand-written backprop: parameter store
// with Adam state, linear layers, embeddings, and (bi)LSTM stacks over
// [T x dim] sequences. Everything is double precision and single threaded.

#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mospred/common.hpp"

namespace mospred::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Tensor {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;  // Adam first moment
  Mat v;  // Adam second moment

  Tensor(std::string n, long rows, long cols)
      : name(std::move(n)),
        value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)),
        m(Mat::Zero(rows, cols)),
        v(Mat::Zero(rows, cols)) {}
};

class ParamStore {
 public:
  Tensor& create(const std::string& name, long rows, long cols) {
    if (by_name_.count(name))
      throw std::invalid_argument("duplicate tensor name: " + name);
    tensors_.push_back(std::make_unique<Tensor>(name, rows, cols));
    by_name_[name] = tensors_.back().get();
    return *tensors_.back();
  }

  Tensor& get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end())
      throw std::invalid_argument("no such tensor: " + name);
    return *it->second;
  }

  const Tensor& get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end())
      throw std::invalid_argument("no such tensor: " + name);
    return *it->second;
  }

  const std::vector<std::unique_ptr<Tensor>>& tensors() const { return tensors_; }

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& t : tensors_) n += t->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& t : tensors_) t->grad.setZero();
  }

  void scale_grad(double s) {
    for (auto& t : tensors_) t->grad *= s;
  }

  // One bias-corrected Adam update over all tensors.
  void adam_step(double lr, double beta1, double beta2, double eps = 1e-8) {
    ++adam_t_;
    const double bc1 = 1.0 - std::pow(beta1, adam_t_);
    const double bc2 = 1.0 - std::pow(beta2, adam_t_);
    for (auto& t : tensors_) {
      t->m = beta1 * t->m + (1.0 - beta1) * t->grad;
      t->v = beta2 * t->v + (1.0 - beta2) * t->grad.cwiseProduct(t->grad);
      const Mat mhat = t->m / bc1;
      const Mat vhat = t->v / bc2;
      t->value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
    }
  }

  std::vector<Mat> snapshot() const {
    std::vector<Mat> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back(t->value);
    return out;
  }

  void restore(const std::vector<Mat>& snap) {
    if (snap.size() != tensors_.size())
      throw std::invalid_argument("snapshot size mismatch");
    for (size_t i = 0; i < snap.size(); ++i) tensors_[i]->value = snap[i];
  }

  // Raw little-endian doubles in declaration order, row-major per tensor.
  void save_values(std::ostream& out) const {
    for (const auto& t : tensors_) {
      for (long r = 0; r < t->value.rows(); ++r)
        for (long c = 0; c < t->value.cols(); ++c) {
          const double v = t->value(r, c);
          out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
    }
  }

  void load_values(std::istream& in) {
    for (auto& t : tensors_) {
      for (long r = 0; r < t->value.rows(); ++r)
        for (long c = 0; c < t->value.cols(); ++c) {
          double v;
          in.read(reinterpret_cast<char*>(&v), sizeof(double));
          if (!in) throw UsageError("truncated parameter blob");
          t->value(r, c) = v;
        }
    }
  }

 private:
  std::vector<std::unique_ptr<Tensor>> tensors_;
  std::unordered_map<std::string, Tensor*> by_name_;
  long adam_t_ = 0;
};

inline void xavier_uniform(Tensor& t, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
  for (long r = 0; r < t.value.rows(); ++r)
    for (long c = 0; c < t.value.cols(); ++c)
      t.value(r, c) = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------
// Linear layer: y = x * W^T + b, over [T x in] sequences.
// ---------------------------------------------------------------------------

struct Linear {
  Tensor* w = nullptr;  // out x in
  Tensor* b = nullptr;  // out x 1

  static Linear create(ParamStore& ps, const std::string& prefix, int in,
                       int out, Rng& rng) {
    Linear l;
    l.w = &ps.create(prefix + ".w", out, in);
    l.b = &ps.create(prefix + ".b", out, 1);
    xavier_uniform(*l.w, rng);
    return l;
  }

  Mat forward(const Mat& x) const {
    Mat y = x * w->value.transpose();
    y.rowwise() += b->value.col(0).transpose();
    return y;
  }

  // Accumulates parameter grads, returns dx.
  Mat backward(const Mat& x, const Mat& dy) const {
    w->grad += dy.transpose() * x;
    b->grad.col(0) += dy.colwise().sum().transpose();
    return dy * w->value;
  }
};

// ---------------------------------------------------------------------------
// Embedding table with simple row lookup.
// ---------------------------------------------------------------------------

struct Embedding {
  Tensor* table = nullptr;  // n x dim

  static Embedding create(ParamStore& ps, const std::string& name, int n,
                          int dim, Rng& rng) {
    Embedding e;
    e.table = &ps.create(name, n, dim);
    for (long r = 0; r < n; ++r)
      for (long c = 0; c < dim; ++c) e.table->value(r, c) = 0.1 * rng.normal();
    return e;
  }

  Vec lookup(int idx) const {
    if (idx < 0 || idx >= table->value.rows())
      throw std::invalid_argument("embedding index out of range for " +
                                  table->name);
    return table->value.row(idx).transpose();
  }

  void accumulate_grad(int idx, const Vec& d) const {
    table->grad.row(idx) += d.transpose();
  }
};

// ---------------------------------------------------------------------------
// LSTM over a [T x in] sequence. Gate order in the stacked weight matrices
// is (input, forget, cell, output). The forget-gate bias starts at 1.
// ---------------------------------------------------------------------------

struct LstmParams {
  Tensor* wx = nullptr;  // 4h x in
  Tensor* wh = nullptr;  // 4h x h
  Tensor* b = nullptr;   // 4h x 1
  int in_dim = 0;
  int hidden = 0;

  static LstmParams create(ParamStore& ps, const std::string& prefix, int in,
                           int h, Rng& rng) {
    LstmParams p;
    p.in_dim = in;
    p.hidden = h;
    p.wx = &ps.create(prefix + ".wx", 4 * h, in);
    p.wh = &ps.create(prefix + ".wh", 4 * h, h);
    p.b = &ps.create(prefix + ".b", 4 * h, 1);
    xavier_uniform(*p.wx, rng);
    xavier_uniform(*p.wh, rng);
    p.b->value.block(h, 0, h, 1).setOnes();  // forget gate
    return p;
  }
};

struct LstmCache {
  Mat x;       // T x in, in scan order
  Mat gi, gf, gg, go;  // T x h gate activations
  Mat c;       // T x h cell states
  Mat h;       // T x h hidden states
  bool reversed = false;
};

namespace detail {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace detail

// Runs the scan in the given direction; the returned hidden states are in
// the original time order either way.
inline Mat lstm_forward(const LstmParams& p, const Mat& x, bool reversed,
                        LstmCache* cache) {
  const long T = x.rows();
  const int h = p.hidden;
  Mat xs = x;
  if (reversed) xs = x.colwise().reverse();

  // Input projection for all steps at once.
  Mat proj = xs * p.wx->value.transpose();  // T x 4h
  proj.rowwise() += p.b->value.col(0).transpose();

  Mat gi(T, h), gf(T, h), gg(T, h), go(T, h), cs(T, h), hs(T, h);
  Vec h_prev = Vec::Zero(h), c_prev = Vec::Zero(h);
  for (long t = 0; t < T; ++t) {
    Vec a = proj.row(t).transpose() + p.wh->value * h_prev;
    for (int k = 0; k < h; ++k) {
      const double i_g = detail::sigmoid(a(k));
      const double f_g = detail::sigmoid(a(h + k));
      const double g_g = std::tanh(a(2 * h + k));
      const double o_g = detail::sigmoid(a(3 * h + k));
      const double c_new = f_g * c_prev(k) + i_g * g_g;
      gi(t, k) = i_g;
      gf(t, k) = f_g;
      gg(t, k) = g_g;
      go(t, k) = o_g;
      cs(t, k) = c_new;
      hs(t, k) = o_g * std::tanh(c_new);
    }
    h_prev = hs.row(t).transpose();
    c_prev = cs.row(t).transpose();
  }

  if (cache) {
    cache->x = std::move(xs);
    cache->gi = std::move(gi);
    cache->gf = std::move(gf);
    cache->gg = std::move(gg);
    cache->go = std::move(go);
    cache->c = cs;
    cache->h = hs;
    cache->reversed = reversed;
  }
  return reversed ? Mat(hs.colwise().reverse()) : hs;
}

// BPTT. dh_orig is dL/dh in original time order; returns dL/dx in original
// time order and accumulates parameter grads.
inline Mat lstm_backward(const LstmParams& p, const LstmCache& cache,
                         const Mat& dh_orig) {
  const long T = cache.h.rows();
  const int h = p.hidden;
  Mat dh_scan = cache.reversed ? Mat(dh_orig.colwise().reverse()) : dh_orig;

  Mat da_all(T, 4 * h);
  Vec dh_next = Vec::Zero(h), dc_next = Vec::Zero(h);
  for (long t = T - 1; t >= 0; --t) {
    Vec dh = dh_scan.row(t).transpose() + dh_next;
    Vec da(4 * h);
    Vec dc(h);
    for (int k = 0; k < h; ++k) {
      const double c_t = cache.c(t, k);
      const double tanh_c = std::tanh(c_t);
      const double i_g = cache.gi(t, k);
      const double f_g = cache.gf(t, k);
      const double g_g = cache.gg(t, k);
      const double o_g = cache.go(t, k);
      const double c_prev = (t > 0) ? cache.c(t - 1, k) : 0.0;

      const double d_o = dh(k) * tanh_c;
      dc(k) = dh(k) * o_g * (1.0 - tanh_c * tanh_c) + dc_next(k);
      const double d_i = dc(k) * g_g;
      const double d_f = dc(k) * c_prev;
      const double d_g = dc(k) * i_g;

      da(k) = d_i * i_g * (1.0 - i_g);
      da(h + k) = d_f * f_g * (1.0 - f_g);
      da(2 * h + k) = d_g * (1.0 - g_g * g_g);
      da(3 * h + k) = d_o * o_g * (1.0 - o_g);
    }
    da_all.row(t) = da.transpose();
    dh_next = p.wh->value.transpose() * da;
    for (int k = 0; k < h; ++k) dc_next(k) = dc(k) * cache.gf(t, k);
  }

  p.wx->grad += da_all.transpose() * cache.x;
  for (long t = 1; t < T; ++t)
    p.wh->grad += da_all.row(t).transpose() * cache.h.row(t - 1);
  p.b->grad.col(0) += da_all.colwise().sum().transpose();

  Mat dx_scan = da_all * p.wx->value;
  return cache.reversed ? Mat(dx_scan.colwise().reverse()) : dx_scan;
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM layer and stacks of them.
// ---------------------------------------------------------------------------

struct BiLstm {
  LstmParams fwd;
  LstmParams bwd;

  static BiLstm create(ParamStore& ps, const std::string& prefix, int in, int h,
                       Rng& rng) {
    BiLstm l;
    l.fwd = LstmParams::create(ps, prefix + ".fwd", in, h, rng);
    l.bwd = LstmParams::create(ps, prefix + ".bwd", in, h, rng);
    return l;
  }

  int out_dim() const { return 2 * fwd.hidden; }

  // Output columns: [forward | backward], both in original time order.
  Mat forward(const Mat& x, LstmCache* cf, LstmCache* cb) const {
    Mat hf = lstm_forward(fwd, x, false, cf);
    Mat hb = lstm_forward(bwd, x, true, cb);
    Mat out(x.rows(), out_dim());
    out.leftCols(fwd.hidden) = hf;
    out.rightCols(fwd.hidden) = hb;
    return out;
  }

  Mat backward(const LstmCache& cf, const LstmCache& cb, const Mat& dy) const {
    Mat dx = lstm_backward(fwd, cf, dy.leftCols(fwd.hidden));
    dx += lstm_backward(bwd, cb, dy.rightCols(fwd.hidden));
    return dx;
  }
};

struct StackedBiLstmCache {
  std::vector<Mat> inputs;            // per-layer input
  std::vector<LstmCache> fwd, bwd;    // per-layer direction caches
  Mat output;
};

struct StackedBiLstm {
  std::vector<BiLstm> layers;

  static StackedBiLstm create(ParamStore& ps, const std::string& prefix, int in,
                              int h, int n_layers, Rng& rng) {
    StackedBiLstm s;
    int dim = in;
    for (int l = 0; l < n_layers; ++l) {
      s.layers.push_back(
          BiLstm::create(ps, prefix + ".l" + std::to_string(l), dim, h, rng));
      dim = 2 * h;
    }
    return s;
  }

  int out_dim() const { return layers.back().out_dim(); }

  Mat forward(const Mat& x, StackedBiLstmCache* cache) const {
    Mat cur = x;
    if (cache) {
      cache->inputs.clear();
      cache->fwd.assign(layers.size(), {});
      cache->bwd.assign(layers.size(), {});
    }
    for (size_t l = 0; l < layers.size(); ++l) {
      if (cache) cache->inputs.push_back(cur);
      cur = layers[l].forward(cur, cache ? &cache->fwd[l] : nullptr,
                              cache ? &cache->bwd[l] : nullptr);
    }
    if (cache) cache->output = cur;
    return cur;
  }

  Mat backward(const StackedBiLstmCache& cache, const Mat& dy) const {
    Mat d = dy;
    for (size_t l = layers.size(); l-- > 0;)
      d = layers[l].backward(cache.fwd[l], cache.bwd[l], d);
    return d;
  }
};

}  // namespace mospred::nn
