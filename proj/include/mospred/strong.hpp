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
// The strong learner: a frame-level feature backend feeding a bidirectional
// recurrent head, conditioned on listener, domain and phoneme context.
// Training uses the combined clipped-MSE + contrastive loss; inference
// averages frame scores under the mean listener.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "mospred/augment.hpp"
#include "mospred/dataset.hpp"
#include "mospred/fft.hpp"
#include "mospred/losses.hpp"
#include "mospred/metrics.hpp"
#include "mospred/nn.hpp"
#include "mospred/serde.hpp"
#include "mospred/textproc.hpp"

namespace mospred {

// ---------------------------------------------------------------------------
// Feature backends
// ---------------------------------------------------------------------------

struct FrameFeatures {
  std::string utterance_id;
  Eigen::MatrixXd frames;  // T x D
  std::string backend_id;
};

struct BackendSpec {
  std::string id = "toy64";
  std::string kind = "toy";  // adapter slot; only "toy" ships in-repo
  int dim = 64;
  uint64_t seed = 0;
};

class FeatureBackend {
 public:
  virtual ~FeatureBackend() = default;
  virtual const BackendSpec& spec() const = 0;
  virtual Eigen::MatrixXd extract(const Waveform& w) const = 0;
};

// Windowed log-filterbank statistics pushed through a fixed seeded random
// projection. Deterministic, untrainable, and cheap; it stands in for
// pretrained frame-level encoders behind the same interface.
class ToyBackend final : public FeatureBackend {
 public:
  static constexpr int kWindow = 512;  // 32 ms at 16 kHz
  static constexpr int kHop = 320;     // 20 ms
  static constexpr int kBands = 24;

  explicit ToyBackend(BackendSpec spec) : spec_(std::move(spec)) {
    if (spec_.kind != "toy")
      throw UsageError("ToyBackend requires kind 'toy', got " + spec_.kind);
    if (spec_.dim < 1) throw UsageError("backend dim must be >= 1");
    build_filterbank();
    Rng rng(derive_seed(spec_.seed, "toy-backend:" + spec_.id));
    proj_ = Eigen::MatrixXd(spec_.dim, kBands + 1);
    for (int r = 0; r < spec_.dim; ++r)
      for (int c = 0; c <= kBands; ++c)
        proj_(r, c) = rng.normal() / std::sqrt(static_cast<double>(kBands + 1));
  }

  const BackendSpec& spec() const override { return spec_; }

  Eigen::MatrixXd extract(const Waveform& w) const override {
    if (w.sample_rate != kTargetSampleRate)
      throw std::invalid_argument("ToyBackend expects a 16 kHz waveform");
    if (w.samples.empty())
      throw std::invalid_argument("ToyBackend: empty waveform");
    const long n = static_cast<long>(w.samples.size());
    const long t_frames = (n + kHop - 1) / kHop;

    Eigen::MatrixXd raw(t_frames, kBands + 1);
    std::vector<std::complex<double>> frame(kWindow);
    for (long t = 0; t < t_frames; ++t) {
      const long center = t * kHop;
      double total = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const long idx = center - kWindow / 2 + i;
        const double s = (idx >= 0 && idx < n) ? w.samples[idx] : 0.0;
        const double win = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / kWindow);
        frame[i] = {s * win, 0.0};
        total += s * s;
      }
      fft(frame);
      for (int b = 0; b < kBands; ++b) {
        double e = 0.0;
        for (const auto& [bin, wgt] : filters_[b])
          e += wgt * std::norm(frame[bin]);
        raw(t, b) = std::log(e + 1e-10);
      }
      raw(t, kBands) = std::log(total + 1e-10);
    }
    return raw * proj_.transpose();  // T x dim
  }

 private:
  void build_filterbank() {
    auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto mel_inv = [](double m) {
      return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
    };
    const double lo = mel(50.0), hi = mel(7600.0);
    std::vector<double> edges(kBands + 2);
    for (int i = 0; i < kBands + 2; ++i)
      edges[i] = mel_inv(lo + (hi - lo) * i / (kBands + 1));
    filters_.resize(kBands);
    const double bin_hz = static_cast<double>(kTargetSampleRate) / kWindow;
    for (int b = 0; b < kBands; ++b) {
      for (int bin = 1; bin <= kWindow / 2; ++bin) {
        const double f = bin * bin_hz;
        double wgt = 0.0;
        if (f > edges[b] && f < edges[b + 1])
          wgt = (f - edges[b]) / (edges[b + 1] - edges[b]);
        else if (f >= edges[b + 1] && f < edges[b + 2])
          wgt = (edges[b + 2] - f) / (edges[b + 2] - edges[b + 1]);
        if (wgt > 0) filters_[b].emplace_back(bin, wgt);
      }
    }
  }

  BackendSpec spec_;
  Eigen::MatrixXd proj_;
  std::vector<std::vector<std::pair<int, double>>> filters_;
};

inline std::unique_ptr<FeatureBackend> make_backend(const BackendSpec& spec) {
  if (spec.kind == "toy") return std::make_unique<ToyBackend>(spec);
  throw UsageError("backend kind '" + spec.kind +
                   "' needs an external adapter; only 'toy' ships in-repo");
}

inline FrameFeatures backend_extract(const FeatureBackend& backend,
                                     const Waveform& w,
                                     const std::string& utterance_id) {
  return {utterance_id, backend.extract(w), backend.spec().id};
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct PhonemeEncoderConfig {
  int layers = 3;
  int hidden = 256;
  bool bidirectional = true;
  int emb_dim = 64;
};

struct HeadConfig {
  int hidden = 256;
  int layers = 1;
};

struct OptimizerConfig {
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double peak_lr = 1e-3;  // tuned for the toy backend head; 3e-5 suits
                          // fine-tuning external encoders
  int warmup_steps = 4000;
  int total_steps = 15000;
  int batch_size = 12;
  int grad_accum = 2;
};

struct StrongConfig {
  int listener_emb_dim = 128;
  int domain_emb_dim = 128;
  PhonemeEncoderConfig phoneme_encoder;
  HeadConfig head;
  LossConfig loss;
  OptimizerConfig optimizer;
  bool use_listener = true;
  bool use_domain = true;
  bool use_phoneme = true;
  bool mean_listener_examples = true;  // one per utterance per epoch
  int eval_every = 500;
};

inline void validate(const StrongConfig& c) {
  validate(c.loss);
  if (c.optimizer.warmup_steps >= c.optimizer.total_steps)
    throw UsageError("strong config: warmup_steps must be < total_steps");
  if (c.optimizer.batch_size < 2)
    throw UsageError("strong config: batch_size must be >= 2");
  if (c.optimizer.grad_accum < 1)
    throw UsageError("strong config: grad_accum must be >= 1");
  if (c.eval_every < 1) throw UsageError("strong config: eval_every must be >= 1");
  if (c.head.hidden < 1 || c.head.layers < 1)
    throw UsageError("strong config: head dimensions must be positive");
  if (c.use_phoneme && !c.phoneme_encoder.bidirectional)
    throw UsageError("strong config: only a bidirectional phoneme encoder is supported");
  if (c.use_listener && c.listener_emb_dim < 1)
    throw UsageError("strong config: listener_emb_dim must be positive");
  if (c.use_domain && c.domain_emb_dim < 1)
    throw UsageError("strong config: domain_emb_dim must be positive");
}

inline void to_json(Json& j, const PhonemeEncoderConfig& c) {
  j = Json{{"layers", c.layers},
           {"hidden", c.hidden},
           {"bidirectional", c.bidirectional},
           {"emb_dim", c.emb_dim}};
}

inline void from_json(const Json& j, PhonemeEncoderConfig& c) {
  serde::get_to_if_present(j, "layers", c.layers);
  serde::get_to_if_present(j, "hidden", c.hidden);
  serde::get_to_if_present(j, "bidirectional", c.bidirectional);
  serde::get_to_if_present(j, "emb_dim", c.emb_dim);
}

inline void to_json(Json& j, const HeadConfig& c) {
  j = Json{{"hidden", c.hidden}, {"layers", c.layers}};
}

inline void from_json(const Json& j, HeadConfig& c) {
  serde::get_to_if_present(j, "hidden", c.hidden);
  serde::get_to_if_present(j, "layers", c.layers);
}

inline void to_json(Json& j, const OptimizerConfig& c) {
  j = Json{{"adam_beta1", c.adam_beta1}, {"adam_beta2", c.adam_beta2},
           {"peak_lr", c.peak_lr},       {"warmup_steps", c.warmup_steps},
           {"total_steps", c.total_steps}, {"batch_size", c.batch_size},
           {"grad_accum", c.grad_accum}};
}

inline void from_json(const Json& j, OptimizerConfig& c) {
  serde::get_to_if_present(j, "adam_beta1", c.adam_beta1);
  serde::get_to_if_present(j, "adam_beta2", c.adam_beta2);
  serde::get_to_if_present(j, "peak_lr", c.peak_lr);
  serde::get_to_if_present(j, "warmup_steps", c.warmup_steps);
  serde::get_to_if_present(j, "total_steps", c.total_steps);
  serde::get_to_if_present(j, "batch_size", c.batch_size);
  serde::get_to_if_present(j, "grad_accum", c.grad_accum);
}

inline void to_json(Json& j, const StrongConfig& c) {
  j = Json{{"listener_emb_dim", c.listener_emb_dim},
           {"domain_emb_dim", c.domain_emb_dim},
           {"phoneme_encoder", c.phoneme_encoder},
           {"head", c.head},
           {"loss", c.loss},
           {"optimizer", c.optimizer},
           {"use_listener", c.use_listener},
           {"use_domain", c.use_domain},
           {"use_phoneme", c.use_phoneme},
           {"mean_listener_examples", c.mean_listener_examples},
           {"eval_every", c.eval_every}};
}

inline void from_json(const Json& j, StrongConfig& c) {
  serde::get_to_if_present(j, "listener_emb_dim", c.listener_emb_dim);
  serde::get_to_if_present(j, "domain_emb_dim", c.domain_emb_dim);
  serde::get_to_if_present(j, "phoneme_encoder", c.phoneme_encoder);
  serde::get_to_if_present(j, "head", c.head);
  serde::get_to_if_present(j, "loss", c.loss);
  serde::get_to_if_present(j, "optimizer", c.optimizer);
  serde::get_to_if_present(j, "use_listener", c.use_listener);
  serde::get_to_if_present(j, "use_domain", c.use_domain);
  serde::get_to_if_present(j, "use_phoneme", c.use_phoneme);
  serde::get_to_if_present(j, "mean_listener_examples", c.mean_listener_examples);
  serde::get_to_if_present(j, "eval_every", c.eval_every);
}

inline void to_json(Json& j, const BackendSpec& s) {
  j = Json{{"id", s.id}, {"kind", s.kind}, {"dim", s.dim}, {"seed", s.seed}};
}

inline void from_json(const Json& j, BackendSpec& s) {
  serde::get_to_if_present(j, "id", s.id);
  serde::get_to_if_present(j, "kind", s.kind);
  serde::get_to_if_present(j, "dim", s.dim);
  serde::get_to_if_present(j, "seed", s.seed);
}

// Linear warmup to peak_lr, then linear decay to zero at total_steps.
inline double lr_schedule(int step, const OptimizerConfig& o) {
  if (step < 0 || step > o.total_steps)
    throw std::invalid_argument("lr_schedule: step outside [0, total_steps]");
  if (step <= o.warmup_steps && o.warmup_steps > 0)
    return o.peak_lr * static_cast<double>(step) / o.warmup_steps;
  return o.peak_lr * static_cast<double>(o.total_steps - step) /
         static_cast<double>(o.total_steps - o.warmup_steps);
}

inline std::vector<double> make_frame_targets(double score, int t_frames) {
  if (t_frames < 1)
    throw std::invalid_argument("make_frame_targets: T must be >= 1");
  return std::vector<double>(static_cast<size_t>(t_frames), score);
}

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

class StrongModel {
 public:
  StrongModel(StrongConfig cfg, int n_listener_entries, int n_domains,
              std::vector<Symbol> vocab, int feature_dim, uint64_t init_seed)
      : cfg_(std::move(cfg)),
        vocab_(std::move(vocab)),
        feature_dim_(feature_dim) {
    validate(cfg_);
    for (size_t i = 0; i < vocab_.size(); ++i) symbol_index_[vocab_[i]] = static_cast<int>(i);

    Rng rng(derive_seed(init_seed, "strong.init"));
    if (cfg_.use_listener)
      listener_emb_ = nn::Embedding::create(params_, "listener_emb",
                                            n_listener_entries,
                                            cfg_.listener_emb_dim, rng);
    if (cfg_.use_domain)
      domain_emb_ = nn::Embedding::create(params_, "domain_emb", n_domains,
                                          cfg_.domain_emb_dim, rng);
    if (cfg_.use_phoneme) {
      phoneme_emb_ = nn::Embedding::create(
          params_, "phoneme_emb", std::max<size_t>(1, vocab_.size()),
          cfg_.phoneme_encoder.emb_dim, rng);
      null_context_ = &params_.create("null_context", context_dim(), 1);
      nn::xavier_uniform(*null_context_, rng);
      encoder_ = nn::StackedBiLstm::create(params_, "phoneme_encoder",
                                           cfg_.phoneme_encoder.emb_dim,
                                           cfg_.phoneme_encoder.hidden,
                                           cfg_.phoneme_encoder.layers, rng);
    }
    head_ = nn::StackedBiLstm::create(params_, "head", input_dim(),
                                      cfg_.head.hidden, cfg_.head.layers, rng);
    out_ = nn::Linear::create(params_, "head_out", 2 * cfg_.head.hidden, 1, rng);
  }

  const StrongConfig& config() const { return cfg_; }
  const std::vector<Symbol>& vocab() const { return vocab_; }
  int feature_dim() const { return feature_dim_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Two states (one per direction) for each of the two sequences.
  int context_dim() const {
    return cfg_.use_phoneme ? 4 * cfg_.phoneme_encoder.hidden : 0;
  }

  int input_dim() const {
    return feature_dim_ + (cfg_.use_listener ? cfg_.listener_emb_dim : 0) +
           (cfg_.use_domain ? cfg_.domain_emb_dim : 0) + context_dim();
  }

  int symbol_index(const Symbol& s) const {
    auto it = symbol_index_.find(s);
    if (it == symbol_index_.end())
      throw UsageError("symbol not in model vocabulary: " + s);
    return it->second;
  }

  struct ContextCache {
    bool null_context = false;
    std::vector<int> ph_idx, ref_idx;
    nn::StackedBiLstmCache ph_cache, ref_cache;
  };

  // Concatenates, for each sequence, the forward direction's last state and
  // the backward direction's state at the first timestep. Empty input falls
  // back to the learned null-context vector.
  nn::Vec encode_phoneme_context(const SymbolSeq& phonemes,
                                 const SymbolSeq& reference,
                                 ContextCache* cache) const {
    if (!cfg_.use_phoneme)
      throw std::logic_error("phoneme context disabled in config");
    if (phonemes.empty() || reference.empty()) {
      if (cache) cache->null_context = true;
      return null_context_->value.col(0);
    }
    if (cache) cache->null_context = false;
    const int h = cfg_.phoneme_encoder.hidden;
    nn::Vec ctx(context_dim());
    ctx.segment(0, 2 * h) =
        encode_sequence(phonemes, cache ? &cache->ph_idx : nullptr,
                        cache ? &cache->ph_cache : nullptr);
    ctx.segment(2 * h, 2 * h) =
        encode_sequence(reference, cache ? &cache->ref_idx : nullptr,
                        cache ? &cache->ref_cache : nullptr);
    return ctx;
  }

  struct ForwardCache {
    nn::Mat input;
    nn::StackedBiLstmCache head_cache;
    ContextCache ctx;
    int listener_idx = -1;
    int domain_idx = -1;
  };

  // Frame scores in normalized space; unbounded head output.
  nn::Vec forward(const Eigen::MatrixXd& features, int listener_idx,
                  int domain_idx, const SymbolSeq& phonemes,
                  const SymbolSeq& reference, ForwardCache* cache) const {
    if (features.cols() != feature_dim_)
      throw std::invalid_argument(
          "strong forward: feature dim " + std::to_string(features.cols()) +
          " does not match configured " + std::to_string(feature_dim_));
    const long t_frames = features.rows();
    if (t_frames < 1)
      throw std::invalid_argument("strong forward: needs at least one frame");

    nn::Mat input(t_frames, input_dim());
    long col = 0;
    input.block(0, col, t_frames, feature_dim_) = features;
    col += feature_dim_;
    if (cfg_.use_listener) {
      const nn::Vec e = listener_emb_.lookup(listener_idx);
      input.block(0, col, t_frames, e.size()).rowwise() = e.transpose();
      col += e.size();
    }
    if (cfg_.use_domain) {
      const nn::Vec e = domain_emb_.lookup(domain_idx);
      input.block(0, col, t_frames, e.size()).rowwise() = e.transpose();
      col += e.size();
    }
    if (cfg_.use_phoneme) {
      const nn::Vec ctx =
          encode_phoneme_context(phonemes, reference, cache ? &cache->ctx : nullptr);
      input.block(0, col, t_frames, ctx.size()).rowwise() = ctx.transpose();
      col += ctx.size();
    }

    nn::Mat hidden =
        head_.forward(input, cache ? &cache->head_cache : nullptr);
    nn::Mat scores = out_.forward(hidden);
    if (cache) {
      cache->input = std::move(input);
      cache->listener_idx = listener_idx;
      cache->domain_idx = domain_idx;
    }
    return scores.col(0);
  }

  void backward(const ForwardCache& cache, const nn::Vec& dscores) {
    const long t_frames = cache.input.rows();
    nn::Mat dy(t_frames, 1);
    dy.col(0) = dscores;
    nn::Mat dhidden = out_.backward(cache.head_cache.output, dy);
    nn::Mat dinput = head_.backward(cache.head_cache, dhidden);

    long col = feature_dim_;  // backend features are frozen
    if (cfg_.use_listener) {
      listener_emb_.accumulate_grad(
          cache.listener_idx,
          dinput.block(0, col, t_frames, cfg_.listener_emb_dim).colwise().sum().transpose());
      col += cfg_.listener_emb_dim;
    }
    if (cfg_.use_domain) {
      domain_emb_.accumulate_grad(
          cache.domain_idx,
          dinput.block(0, col, t_frames, cfg_.domain_emb_dim).colwise().sum().transpose());
      col += cfg_.domain_emb_dim;
    }
    if (cfg_.use_phoneme) {
      const nn::Vec dctx =
          dinput.block(0, col, t_frames, context_dim()).colwise().sum().transpose();
      backward_context(cache.ctx, dctx);
    }
  }

 private:
  nn::Vec encode_sequence(const SymbolSeq& seq, std::vector<int>* idx_out,
                          nn::StackedBiLstmCache* cache) const {
    const int h = cfg_.phoneme_encoder.hidden;
    nn::Mat emb(seq.size(), cfg_.phoneme_encoder.emb_dim);
    std::vector<int> idx(seq.size());
    for (size_t t = 0; t < seq.size(); ++t) {
      idx[t] = symbol_index(seq[t]);
      emb.row(t) = phoneme_emb_.lookup(idx[t]).transpose();
    }
    nn::StackedBiLstmCache local;
    nn::StackedBiLstmCache* c = cache ? cache : &local;
    const nn::Mat out = encoder_.forward(emb, c);
    nn::Vec state(2 * h);
    state.segment(0, h) = out.row(out.rows() - 1).segment(0, h);  // fwd last
    state.segment(h, h) = out.row(0).segment(h, h);               // bwd first
    if (idx_out) *idx_out = std::move(idx);
    return state;
  }

  void backward_sequence(const std::vector<int>& idx,
                         const nn::StackedBiLstmCache& cache,
                         const nn::Vec& dstate) {
    const int h = cfg_.phoneme_encoder.hidden;
    const long t_len = cache.output.rows();
    nn::Mat dout = nn::Mat::Zero(t_len, 2 * h);
    dout.row(t_len - 1).segment(0, h) += dstate.segment(0, h).transpose();
    dout.row(0).segment(h, h) += dstate.segment(h, h).transpose();
    nn::Mat demb = encoder_.backward(cache, dout);
    for (size_t t = 0; t < idx.size(); ++t)
      phoneme_emb_.accumulate_grad(idx[t], demb.row(t).transpose());
  }

  void backward_context(const ContextCache& cache, const nn::Vec& dctx) {
    if (cache.null_context) {
      null_context_->grad.col(0) += dctx;
      return;
    }
    const int h = cfg_.phoneme_encoder.hidden;
    backward_sequence(cache.ph_idx, cache.ph_cache, dctx.segment(0, 2 * h));
    backward_sequence(cache.ref_idx, cache.ref_cache, dctx.segment(2 * h, 2 * h));
  }

  StrongConfig cfg_;
  std::vector<Symbol> vocab_;
  std::map<Symbol, int> symbol_index_;
  int feature_dim_;
  nn::ParamStore params_;
  nn::Embedding listener_emb_;
  nn::Embedding domain_emb_;
  nn::Embedding phoneme_emb_;
  nn::Tensor* null_context_ = nullptr;
  nn::StackedBiLstm encoder_;
  nn::StackedBiLstm head_;
  nn::Linear out_;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct StrongCheckpoint {
  StrongConfig config;
  BackendSpec backend;
  std::vector<std::string> listener_ids;  // embedding index order
  std::vector<std::string> domain_ids;
  std::vector<Symbol> vocab;
  int feature_dim = 0;
  double dev_system_srcc = 0.0;
  int step = 0;
  std::shared_ptr<StrongModel> model;

  int mean_listener_idx(const std::string& domain_id) const {
    const std::string want = mean_listener_id(domain_id);
    for (size_t i = 0; i < listener_ids.size(); ++i)
      if (listener_ids[i] == want) return static_cast<int>(i);
    throw UsageError("checkpoint has no mean listener for domain: " + domain_id);
  }

  int domain_idx(const std::string& domain_id) const {
    for (size_t i = 0; i < domain_ids.size(); ++i)
      if (domain_ids[i] == domain_id) return static_cast<int>(i);
    throw UsageError("checkpoint has no domain: " + domain_id);
  }
};

constexpr char kCheckpointMagic[9] = "MOSPCKP1";
constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path,
                            const StrongCheckpoint& ckpt) {
  Json meta;
  meta["version"] = kCheckpointVersion;
  meta["config"] = ckpt.config;
  meta["backend"] = ckpt.backend;
  meta["listener_ids"] = ckpt.listener_ids;
  meta["domain_ids"] = ckpt.domain_ids;
  meta["vocab"] = ckpt.vocab;
  meta["feature_dim"] = ckpt.feature_dim;
  meta["dev_system_srcc"] = ckpt.dev_system_srcc;
  meta["step"] = ckpt.step;
  Json tensors = Json::array();
  for (const auto& t : ckpt.model->params().tensors())
    tensors.push_back(Json{{"name", t->name},
                           {"rows", t->value.rows()},
                           {"cols", t->value.cols()}});
  meta["tensors"] = tensors;
  const std::string header = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, 8);
  const uint32_t ver = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  ckpt.model->params().save_values(out);
  if (!out) throw UsageError("short write to checkpoint: " + path.string());
}

inline StrongCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw UsageError("not a checkpoint file: " + path.string());
  uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (ver != kCheckpointVersion)
    throw UsageError("unsupported checkpoint version " + std::to_string(ver));
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw UsageError("truncated checkpoint header: " + path.string());
  Json meta = Json::parse(header, nullptr, false);
  if (meta.is_discarded())
    throw UsageError("corrupt checkpoint header: " + path.string());

  StrongCheckpoint ckpt;
  ckpt.config = meta.at("config").get<StrongConfig>();
  ckpt.backend = meta.at("backend").get<BackendSpec>();
  meta.at("listener_ids").get_to(ckpt.listener_ids);
  meta.at("domain_ids").get_to(ckpt.domain_ids);
  meta.at("vocab").get_to(ckpt.vocab);
  meta.at("feature_dim").get_to(ckpt.feature_dim);
  meta.at("dev_system_srcc").get_to(ckpt.dev_system_srcc);
  meta.at("step").get_to(ckpt.step);

  ckpt.model = std::make_shared<StrongModel>(
      ckpt.config, static_cast<int>(ckpt.listener_ids.size()),
      static_cast<int>(ckpt.domain_ids.size()), ckpt.vocab, ckpt.feature_dim,
      /*init_seed=*/0);

  const auto& dir = meta.at("tensors");
  const auto& have = ckpt.model->params().tensors();
  if (dir.size() != have.size())
    throw UsageError("checkpoint tensor directory mismatch in " + path.string());
  for (size_t i = 0; i < have.size(); ++i) {
    if (dir[i].at("name").get<std::string>() != have[i]->name ||
        dir[i].at("rows").get<long>() != have[i]->value.rows() ||
        dir[i].at("cols").get<long>() != have[i]->value.cols())
      throw UsageError("checkpoint tensor layout mismatch at index " +
                       std::to_string(i));
  }
  ckpt.model->params().load_values(in);
  return ckpt;
}

// Mean of frame scores under the mean listener, denormalized and clamped to
// the raw [1,5] scale.
inline double predict_utterance_prepared(const StrongCheckpoint& ckpt,
                                         const Eigen::MatrixXd& features,
                                         const SymbolSeq& phonemes,
                                         const SymbolSeq& reference,
                                         int listener_idx, int domain_idx) {
  const nn::Vec scores = ckpt.model->forward(features, listener_idx, domain_idx,
                                             phonemes, reference, nullptr);
  const double mean_norm = scores.mean();
  const double raw = denormalize_score(std::clamp(mean_norm, -1.0, 1.0));
  return std::clamp(raw, 1.0, 5.0);
}

inline double predict_utterance(const StrongCheckpoint& ckpt,
                                const FeatureBackend& backend,
                                const Waveform& wave, const SymbolSeq& phonemes,
                                const SymbolSeq& reference,
                                const std::string& domain_id) {
  return predict_utterance_prepared(
      ckpt, backend.extract(wave), phonemes, reference,
      ckpt.mean_listener_idx(domain_id), ckpt.domain_idx(domain_id));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EvalPoint {
  int step = 0;
  double utt_srcc = 0.0;
  double sys_srcc = 0.0;
};

struct TrainResult {
  StrongCheckpoint checkpoint;
  std::vector<EvalPoint> history;
};

namespace detail {

struct UttData {
  int ds_index = -1;
  Waveform wave;
  SymbolSeq phonemes;
  SymbolSeq reference;
  Eigen::MatrixXd features;  // cached when augmentation is off
  double mean_target_raw = 0.0;
  std::string system_id;
  int domain_idx = -1;
  int mean_listener_idx = -1;
};

}  // namespace detail

inline TrainResult train_strong(const MosDataset& ds, const StrongConfig& cfg,
                                const AugmentConfig& aug,
                                const std::vector<ReferenceAssignment>& refs,
                                const PhonemeProvider& phonemes,
                                const FeatureBackend& backend, uint64_t seed) {
  validate(cfg);
  if (!ds.has_split("train") || ds.split("train").empty())
    throw UsageError("train_strong: empty or missing train split");
  if (!ds.has_split("dev") || ds.split("dev").empty())
    throw UsageError("train_strong: empty or missing dev split");

  const auto mean_targets = mean_listener_targets(ds);
  std::map<std::string, const SymbolSeq*> ref_by_utt;
  for (const auto& r : refs) ref_by_utt[r.utterance_id] = &r.reference;

  // Per-utterance data for train and dev.
  auto gather = [&](const std::string& split_name) {
    std::vector<detail::UttData> out;
    for (const auto& id : ds.split_order(split_name)) {
      const auto& u = ds.utterance(id);
      detail::UttData d;
      d.ds_index = ds.utterance_index(id);
      d.wave = prepare_audio(u);
      if (cfg.use_phoneme) {
        d.phonemes = phonemes.phonemes_for(id);
        auto it = ref_by_utt.find(id);
        d.reference = (it != ref_by_utt.end()) ? *it->second : d.phonemes;
      }
      if (!aug.enabled) d.features = backend.extract(d.wave);
      d.mean_target_raw = mean_targets.at(id);
      d.system_id = u.system_id;
      d.domain_idx = ds.domain_index(u.domain_id);
      d.mean_listener_idx = ds.mean_listener_index(u.domain_id);
      out.push_back(std::move(d));
    }
    return out;
  };
  std::vector<detail::UttData> train = gather("train");
  std::vector<detail::UttData> dev = gather("dev");
  // Dev features are always cached (no augmentation at eval).
  for (auto& d : dev)
    if (d.features.size() == 0) d.features = backend.extract(d.wave);

  // Vocabulary over everything the model will see.
  std::vector<Symbol> vocab;
  if (cfg.use_phoneme) {
    std::set<Symbol> sym;
    for (const auto* side : {&train, &dev})
      for (const auto& d : *side) {
        sym.insert(d.phonemes.begin(), d.phonemes.end());
        sym.insert(d.reference.begin(), d.reference.end());
      }
    vocab.assign(sym.begin(), sym.end());
  }

  auto model = std::make_shared<StrongModel>(
      cfg, static_cast<int>(ds.listener_ids().size()),
      static_cast<int>(ds.domain_ids().size()), vocab, backend.spec().dim, seed);

  // One example per rating record plus, optionally, one mean-listener
  // example per utterance per epoch.
  struct Example {
    int utt = 0;  // index into `train`
    int listener_idx = 0;
    double target_norm = 0.0;
  };
  std::map<int, int> train_pos_by_ds_index;
  for (size_t i = 0; i < train.size(); ++i)
    train_pos_by_ds_index[train[i].ds_index] = static_cast<int>(i);
  std::vector<Example> examples;
  const auto& train_ids = ds.split("train");
  for (const auto& r : ds.ratings()) {
    if (!train_ids.count(r.utterance_id)) continue;
    Example e;
    e.utt = train_pos_by_ds_index.at(ds.utterance_index(r.utterance_id));
    e.listener_idx = ds.listener_index(r.listener_id);
    e.target_norm = normalize_score(r.raw_score);
    examples.push_back(e);
  }
  if (cfg.mean_listener_examples) {
    for (size_t i = 0; i < train.size(); ++i) {
      Example e;
      e.utt = static_cast<int>(i);
      e.listener_idx = train[i].mean_listener_idx;
      e.target_norm = normalize_score(train[i].mean_target_raw);
      examples.push_back(e);
    }
  }
  if (examples.empty()) throw UsageError("train_strong: no training examples");

  Rng shuffle_rng(derive_seed(seed, "strong.shuffle"));
  Rng aug_rng(derive_seed(seed, "strong.augment"));

  auto evaluate_dev = [&](int step) {
    std::vector<double> pred, truth;
    std::map<std::string, double> pred_map, true_map;
    std::map<std::string, std::string> sys_of;
    for (size_t i = 0; i < dev.size(); ++i) {
      const auto& d = dev[i];
      const nn::Vec scores = model->forward(
          d.features, d.mean_listener_idx, d.domain_idx, d.phonemes, d.reference,
          nullptr);
      const double raw =
          std::clamp(denormalize_score(std::clamp(scores.mean(), -1.0, 1.0)),
                     1.0, 5.0);
      const std::string key = "dev" + std::to_string(i);
      pred.push_back(raw);
      truth.push_back(d.mean_target_raw);
      pred_map[key] = raw;
      true_map[key] = d.mean_target_raw;
      sys_of[key] = d.system_id;
    }
    EvalPoint p;
    p.step = step;
    try {
      p.utt_srcc = srcc(pred, truth);
    } catch (const UndefinedCorrelationError&) {
      p.utt_srcc = -2.0;
    }
    try {
      auto [ps, ts] = system_aggregate(pred_map, true_map, sys_of);
      p.sys_srcc = srcc(ps, ts);
    } catch (const UndefinedCorrelationError&) {
      p.sys_srcc = -2.0;
    }
    return p;
  };

  const OptimizerConfig& opt = cfg.optimizer;
  std::vector<EvalPoint> history;
  std::vector<nn::Mat> best_params = model->params().snapshot();
  double best_srcc = -3.0;
  int best_step = 0;

  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();  // trigger reshuffle on first use

  model->params().zero_grad();
  int accum_count = 0;
  for (int step = 1; step <= opt.total_steps; ++step) {
    // Assemble the next micro-batch, reshuffling at epoch boundaries.
    std::vector<size_t> batch;
    for (int b = 0; b < opt.batch_size; ++b) {
      if (cursor >= order.size()) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    std::vector<std::vector<double>> frame_preds(batch.size());
    std::vector<double> targets(batch.size());
    std::vector<int> groups(batch.size());
    std::vector<StrongModel::ForwardCache> caches(batch.size());
    for (size_t b = 0; b < batch.size(); ++b) {
      const Example& ex = examples[batch[b]];
      detail::UttData& d = train[ex.utt];
      Eigen::MatrixXd features;
      if (aug.enabled) {
        const Waveform augmented = augment(d.wave, aug, aug_rng);
        features = backend.extract(augmented);
      } else {
        features = d.features;
      }
      const nn::Vec scores =
          model->forward(features, ex.listener_idx, d.domain_idx, d.phonemes,
                         d.reference, &caches[b]);
      frame_preds[b].assign(scores.data(), scores.data() + scores.size());
      targets[b] = ex.target_norm;
      groups[b] = d.domain_idx;
    }

    const FrameBatchLoss loss = frame_batch_loss(frame_preds, targets, cfg.loss, groups);
    for (size_t b = 0; b < batch.size(); ++b) {
      nn::Vec dscores = Eigen::Map<const nn::Vec>(loss.dpred[b].data(),
                                                  loss.dpred[b].size());
      model->backward(caches[b], dscores);
    }
    ++accum_count;

    if (step % opt.grad_accum == 0 || step == opt.total_steps) {
      model->params().scale_grad(1.0 / accum_count);
      model->params().adam_step(lr_schedule(step, opt), opt.adam_beta1,
                                opt.adam_beta2);
      model->params().zero_grad();
      accum_count = 0;
    }

    if (step % cfg.eval_every == 0 || step == opt.total_steps) {
      const EvalPoint p = evaluate_dev(step);
      history.push_back(p);
      if (p.sys_srcc > best_srcc) {
        best_srcc = p.sys_srcc;
        best_step = step;
        best_params = model->params().snapshot();
      }
    }
  }

  model->params().restore(best_params);

  TrainResult result;
  result.checkpoint.config = cfg;
  result.checkpoint.backend = backend.spec();
  result.checkpoint.listener_ids = ds.listener_ids();
  result.checkpoint.domain_ids = ds.domain_ids();
  result.checkpoint.vocab = model->vocab();
  result.checkpoint.feature_dim = backend.spec().dim;
  result.checkpoint.dev_system_srcc = best_srcc;
  result.checkpoint.step = best_step;
  result.checkpoint.model = model;
  result.history = std::move(history);
  return result;
}

}  // namespace mospred
