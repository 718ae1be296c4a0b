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
// Batch command-line surface over the library. Exit codes: 0 success,
// 2 usage error (bad flags, missing files, schema violations), 1 runtime
// error. Every failure prints one structured line to stderr.

#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mospred/config.hpp"
#include "mospred/metrics.hpp"
#include "mospred/stacking.hpp"
#include "mospred/strong.hpp"
#include "mospred/weak.hpp"

namespace mospred {
namespace {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

std::vector<TranscriptRecord> transcripts_for(const MosDataset& ds,
                                              const PhonemeProvider& provider) {
  std::vector<TranscriptRecord> out;
  for (const auto& u : ds.utterances())
    out.push_back({u.utterance_id, provider.phonemes_for(u.utterance_id)});
  return out;
}

std::map<std::string, SymbolSeq> reference_map(
    const std::vector<ReferenceAssignment>& refs) {
  std::map<std::string, SymbolSeq> out;
  for (const auto& r : refs) out[r.utterance_id] = r.reference;
  return out;
}

// Registry of toy backends declared in the config (strong backend included).
std::map<std::string, std::unique_ptr<FeatureBackend>> backend_registry(
    const RunConfig& cfg) {
  std::map<std::string, std::unique_ptr<FeatureBackend>> out;
  out[cfg.backend.id] = make_backend(cfg.backend);
  for (const auto& spec : cfg.weak.backends)
    if (!out.count(spec.id)) out[spec.id] = make_backend(spec);
  return out;
}

// Mean-pooled embeddings for every utterance, rows in dataset order.
Eigen::MatrixXd embedding_matrix(const MosDataset& ds,
                                 const FeatureBackend& backend) {
  Eigen::MatrixXd out(ds.n_utterances(), backend.spec().dim);
  for (size_t i = 0; i < ds.n_utterances(); ++i) {
    const auto& u = ds.utterances()[i];
    const Waveform w = prepare_audio(u);
    out.row(i) =
        mean_pool(backend_extract(backend, w, u.utterance_id)).vector.transpose();
  }
  return out;
}

std::vector<int> split_positions(const MosDataset& ds, const std::string& name) {
  std::vector<int> out;
  for (const auto& id : ds.split_order(name))
    out.push_back(ds.utterance_index(id));
  return out;
}

double strong_predict_one(const StrongCheckpoint& ckpt,
                          const FeatureBackend& backend, const UtteranceRef& u,
                          const std::map<std::string, SymbolSeq>& phoneme_map,
                          const std::map<std::string, SymbolSeq>& ref_map) {
  SymbolSeq ph, ref;
  if (ckpt.config.use_phoneme) {
    auto it = phoneme_map.find(u.utterance_id);
    if (it != phoneme_map.end()) ph = it->second;
    auto rt = ref_map.find(u.utterance_id);
    ref = (rt != ref_map.end()) ? rt->second : ph;
  }
  const Waveform w = prepare_audio(u);
  return predict_utterance(ckpt, backend, w, ph, ref, u.domain_id);
}

// Strong learner adapter for per-fold stacking. The already-trained
// checkpoint serves as the full-train model; fitting on a strict subset
// retrains from the checkpoint's config on that subset.
class StrongStageLearner final : public StageLearner {
 public:
  StrongStageLearner(std::string ckpt_path, const MosDataset* ds,
                     const PhonemeProvider* provider,
                     std::vector<ReferenceAssignment> refs, uint64_t seed)
      : ckpt_path_(std::move(ckpt_path)),
        ds_(ds),
        provider_(provider),
        refs_(std::move(refs)),
        seed_(seed),
        original_(std::make_shared<StrongCheckpoint>(load_checkpoint(ckpt_path_))),
        backend_(make_backend(original_->backend)),
        full_train_size_(ds->split("train").size()) {}

  std::string name() const override {
    return "strong/" + std::filesystem::path(ckpt_path_).filename().string();
  }

  void fit(const std::vector<int>& positions) override {
    if (positions.size() == full_train_size_) {
      active_ = original_;
      return;
    }
    MosDataset sub = *ds_;
    std::set<std::string> train_ids;
    for (int p : positions)
      train_ids.insert(ds_->utterances()[p].utterance_id);
    sub.set_split("train", std::move(train_ids));
    TrainResult r = train_strong(sub, original_->config, disabled_augment(),
                                 refs_, *provider_, *backend_,
                                 derive_seed(seed_, name()));
    active_ = std::make_shared<StrongCheckpoint>(std::move(r.checkpoint));
  }

  Eigen::VectorXd predict(const std::vector<int>& positions) const override {
    if (!active_) throw std::logic_error("strong stage learner not fitted");
    const auto ref_map = reference_map(refs_);
    Eigen::VectorXd out(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
      const auto& u = ds_->utterances()[positions[i]];
      SymbolSeq ph, ref;
      if (active_->config.use_phoneme) {
        ph = provider_->phonemes_for(u.utterance_id);
        auto it = ref_map.find(u.utterance_id);
        ref = (it != ref_map.end()) ? it->second : ph;
      }
      const Waveform w = prepare_audio(u);
      out(i) = predict_utterance(*active_, *backend_, w, ph, ref, u.domain_id);
    }
    return out;
  }

  std::unique_ptr<StageLearner> clone_unfitted() const override {
    return std::make_unique<StrongStageLearner>(ckpt_path_, ds_, provider_,
                                                refs_, seed_);
  }

  Json describe() const override {
    return Json{{"type", "strong"}, {"checkpoint", ckpt_path_}};
  }

 private:
  static AugmentConfig disabled_augment() {
    AugmentConfig a;
    a.enabled = false;
    return a;
  }

  std::string ckpt_path_;
  const MosDataset* ds_;
  const PhonemeProvider* provider_;
  std::vector<ReferenceAssignment> refs_;
  uint64_t seed_;
  std::shared_ptr<StrongCheckpoint> original_;
  std::unique_ptr<FeatureBackend> backend_;
  size_t full_train_size_;
  std::shared_ptr<StrongCheckpoint> active_;
};

// ---------------------------------------------------------------------------
// train-strong
// ---------------------------------------------------------------------------

int cmd_train_strong(const std::string& config_path, int64_t seed_override,
                     const std::string& out_path) {
  RunConfig cfg = load_run_config(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);

  MosDataset ds = load_configured_dataset(cfg);
  auto provider = make_phoneme_provider(cfg);
  std::vector<ReferenceAssignment> refs;
  if (cfg.strong.use_phoneme)
    refs = extract_references(transcripts_for(ds, *provider), cfg.textproc.eps,
                              cfg.textproc.min_pts);
  auto backend = make_backend(cfg.backend);

  TrainResult result =
      train_strong(ds, cfg.strong, cfg.augment, refs, *provider, *backend, cfg.seed);
  save_checkpoint(out_path, result.checkpoint);

  for (const auto& p : result.history)
    std::printf("step=%d dev_utt_srcc=%.6f dev_sys_srcc=%.6f\n", p.step,
                p.utt_srcc, p.sys_srcc);
  std::printf("best_step=%d\ndev_system_srcc=%.6f\ncheckpoint=%s\n",
              result.checkpoint.step, result.checkpoint.dev_system_srcc,
              out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

int cmd_infer(const std::string& ckpt_path, const std::string& ratings_path,
              const std::string& audio_dir, const std::string& transcripts_path,
              double eps, int min_pts, const std::string& out_path) {
  const StrongCheckpoint ckpt = load_checkpoint(ckpt_path);
  MosDataset ds = load_dataset(ratings_path, audio_dir);
  auto backend = make_backend(ckpt.backend);

  std::map<std::string, SymbolSeq> phoneme_map, ref_map;
  if (ckpt.config.use_phoneme) {
    if (transcripts_path.empty())
      throw UsageError(
          "checkpoint uses phoneme context; --transcripts is required");
    const auto transcripts = read_transcripts(transcripts_path);
    for (const auto& t : transcripts) phoneme_map[t.utterance_id] = t.phonemes;
    ref_map = reference_map(extract_references(transcripts, eps, min_pts));
  }

  std::vector<std::pair<std::string, double>> preds;
  for (const auto& u : ds.utterances())
    preds.emplace_back(u.utterance_id,
                       strong_predict_one(ckpt, *backend, u, phoneme_map, ref_map));
  write_predictions(out_path, preds);
  std::printf("wrote %zu predictions to %s\n", preds.size(), out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// extract-embeddings
// ---------------------------------------------------------------------------

int cmd_extract_embeddings(const std::string& config_path,
                           const std::string& split,
                           const std::vector<std::string>& only_backends,
                           const std::string& out_path) {
  RunConfig cfg = load_run_config(config_path);
  MosDataset ds = load_configured_dataset(cfg);
  auto registry = backend_registry(cfg);

  std::vector<std::string> ids = split.empty() ? std::vector<std::string>{}
                                               : ds.split_order(split);
  if (split.empty())
    for (const auto& u : ds.utterances()) ids.push_back(u.utterance_id);

  std::vector<UtteranceEmbedding> rows;
  for (const auto& [backend_id, backend] : registry) {
    if (!only_backends.empty() &&
        std::find(only_backends.begin(), only_backends.end(), backend_id) ==
            only_backends.end())
      continue;
    for (const auto& id : ids) {
      const auto& u = ds.utterance(id);
      const Waveform w = prepare_audio(u);
      rows.push_back(mean_pool(backend_extract(*backend, w, id)));
    }
  }
  if (rows.empty()) throw UsageError("no embeddings produced; check --backend");
  write_embeddings(out_path, rows);
  std::printf("wrote %zu embeddings to %s\n", rows.size(), out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-weak
// ---------------------------------------------------------------------------

int cmd_train_weak(const std::string& config_path,
                   const std::string& embeddings_path,
                   const std::string& backend_id, const std::string& method,
                   const std::string& domain_tag, const std::string& out_path,
                   const std::string& pred_split,
                   const std::string& pred_out) {
  RunConfig cfg = load_run_config(config_path);
  MosDataset ds = load_configured_dataset(cfg);
  const auto targets = mean_listener_targets(ds);

  std::map<std::string, Eigen::VectorXd> vectors;
  for (const auto& e : read_embeddings(embeddings_path))
    if (e.backend_id == backend_id) vectors[e.utterance_id] = e.vector;
  if (vectors.empty())
    throw UsageError("no embeddings for backend '" + backend_id + "' in " +
                     embeddings_path);

  WeakLearnerSpec spec{backend_id, weak_method_from_string(method), domain_tag, {}};

  std::vector<std::string> train_ids;
  for (const auto& id : ds.split_order("train")) {
    const auto& u = ds.utterance(id);
    if (!domain_tag.empty() && domain_tag != "*" && u.domain_id != domain_tag)
      continue;
    if (!vectors.count(id))
      throw UsageError("train utterance missing from embeddings: " + id);
    train_ids.push_back(id);
  }
  if (train_ids.size() < 2)
    throw UsageError("fewer than 2 training utterances for weak learner");

  Eigen::MatrixXd x(train_ids.size(), vectors.begin()->second.size());
  Eigen::VectorXd y(train_ids.size());
  for (size_t i = 0; i < train_ids.size(); ++i) {
    x.row(i) = vectors.at(train_ids[i]).transpose();
    y(i) = targets.at(train_ids[i]);
  }
  auto model = train_weak(spec, x, y, cfg.seed);

  Json bundle{{"spec", spec}, {"model", model->to_json()}};
  std::ofstream out(out_path);
  if (!out) throw UsageError("cannot write model file: " + out_path);
  out << bundle.dump(2) << '\n';
  std::printf("trained %s on %zu utterances -> %s\n", spec.name().c_str(),
              train_ids.size(), out_path.c_str());

  if (!pred_split.empty()) {
    if (pred_out.empty())
      throw UsageError("--pred-split requires --pred-out");
    std::vector<std::pair<std::string, double>> preds;
    for (const auto& id : ds.split_order(pred_split)) {
      if (!vectors.count(id))
        throw UsageError("prediction utterance missing from embeddings: " + id);
      Eigen::MatrixXd q = vectors.at(id).transpose();
      preds.emplace_back(id, model->predict(q)(0));
    }
    write_predictions(pred_out, preds);
    std::printf("wrote %zu predictions to %s\n", preds.size(), pred_out.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cluster-refs
// ---------------------------------------------------------------------------

int cmd_cluster_refs(const std::string& transcripts_path, double eps,
                     int min_pts, const std::string& out_path) {
  const auto transcripts = read_transcripts(transcripts_path);
  const auto refs = extract_references(transcripts, eps, min_pts);
  write_references(out_path, refs);
  int clusters = 0;
  for (const auto& r : refs) clusters = std::max(clusters, r.cluster_id + 1);
  std::printf("clustered %zu transcripts into %d clusters -> %s\n",
              transcripts.size(), clusters, out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-stack / stack-predict
// ---------------------------------------------------------------------------

struct StackContext {
  RunConfig cfg;
  MosDataset ds;
  std::unique_ptr<PhonemeProvider> provider;
  std::vector<ReferenceAssignment> refs;
  std::map<std::string, std::unique_ptr<FeatureBackend>> backends;
  std::map<std::string, Eigen::MatrixXd> embeddings;  // backend -> rows
  StackingInputs inputs;
  std::vector<std::string> domains;  // per master row
  Eigen::VectorXd targets;

  const Eigen::MatrixXd& embeddings_for(const std::string& backend_id) {
    auto it = embeddings.find(backend_id);
    if (it != embeddings.end()) return it->second;
    auto bit = backends.find(backend_id);
    if (bit == backends.end())
      throw UsageError("backend '" + backend_id +
                       "' is not declared in weak.backends");
    embeddings[backend_id] = embedding_matrix(ds, *bit->second);
    return embeddings.at(backend_id);
  }
};

StackContext make_stack_context(const std::string& config_path) {
  StackContext ctx{load_run_config(config_path), {}, nullptr, {}, {}, {}, {}, {}, {}};
  ctx.ds = load_configured_dataset(ctx.cfg);
  ctx.provider = make_phoneme_provider(ctx.cfg);
  ctx.refs = extract_references(transcripts_for(ctx.ds, *ctx.provider),
                                ctx.cfg.textproc.eps, ctx.cfg.textproc.min_pts);
  ctx.backends = backend_registry(ctx.cfg);

  const auto target_map = mean_listener_targets(ctx.ds);
  ctx.targets.resize(ctx.ds.n_utterances());
  for (size_t i = 0; i < ctx.ds.n_utterances(); ++i) {
    const auto& u = ctx.ds.utterances()[i];
    ctx.inputs.utterance_ids.push_back(u.utterance_id);
    ctx.targets(i) = target_map.at(u.utterance_id);
    ctx.domains.push_back(u.domain_id);
  }
  ctx.inputs.targets = ctx.targets;
  ctx.inputs.train_positions = split_positions(ctx.ds, "train");
  if (ctx.ds.has_split("dev"))
    ctx.inputs.dev_positions = split_positions(ctx.ds, "dev");
  return ctx;
}

int cmd_train_stack(const std::string& config_path, const std::string& plan_path,
                    const std::string& out_path, std::string scores_out) {
  StackContext ctx = make_stack_context(config_path);
  StackingPlan plan = ctx.cfg.stacking;
  if (!plan_path.empty()) {
    std::ifstream in(plan_path);
    if (!in) throw UsageError("cannot open plan file: " + plan_path);
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded())
      throw UsageError("plan file is not valid JSON: " + plan_path);
    plan = j.get<StackingPlan>();
  }
  validate(plan);

  // Strong candidates, optionally greedily pruned on dev system SRCC.
  std::vector<std::string> strong_paths = plan.strong_checkpoints;
  if (plan.greedy && plan.greedy_k > 0 &&
      plan.greedy_k < static_cast<int>(strong_paths.size())) {
    if (ctx.inputs.dev_positions.empty())
      throw UsageError("greedy selection requires a dev split");
    const auto& dev_pos = ctx.inputs.dev_positions;
    Eigen::MatrixXd dev_preds(dev_pos.size(), strong_paths.size());
    const auto ref_map = reference_map(ctx.refs);
    for (size_t c = 0; c < strong_paths.size(); ++c) {
      const StrongCheckpoint ckpt = load_checkpoint(strong_paths[c]);
      auto backend = make_backend(ckpt.backend);
      std::map<std::string, SymbolSeq> phoneme_map;
      for (int p : dev_pos) {
        const auto& id = ctx.inputs.utterance_ids[p];
        phoneme_map[id] = ctx.provider->phonemes_for(id);
      }
      for (size_t i = 0; i < dev_pos.size(); ++i)
        dev_preds(i, c) = strong_predict_one(
            ckpt, *backend, ctx.ds.utterances()[dev_pos[i]], phoneme_map, ref_map);
    }
    Eigen::VectorXd dev_true(dev_pos.size());
    std::vector<std::string> dev_systems;
    for (size_t i = 0; i < dev_pos.size(); ++i) {
      dev_true(i) = ctx.targets(dev_pos[i]);
      dev_systems.push_back(ctx.ds.utterances()[dev_pos[i]].system_id);
    }
    const auto picked =
        greedy_select(dev_preds, dev_true, dev_systems, plan.greedy_k);
    std::vector<std::string> kept;
    for (int idx : picked) kept.push_back(strong_paths[idx]);
    std::printf("greedy selection kept %zu of %zu strong candidates\n",
                kept.size(), strong_paths.size());
    strong_paths = kept;
  }

  // Stage-1 prototypes.
  std::vector<std::unique_ptr<StageLearner>> stage1;
  const auto ref_map = reference_map(ctx.refs);
  for (const auto& path : strong_paths) {
    if (plan.strong_oof_mode == "dev-shortcut") {
      const StrongCheckpoint ckpt = load_checkpoint(path);
      auto backend = make_backend(ckpt.backend);
      std::map<std::string, SymbolSeq> phoneme_map;
      for (const auto& u : ctx.ds.utterances())
        phoneme_map[u.utterance_id] =
            ctx.provider->phonemes_for(u.utterance_id);
      Eigen::VectorXd all_preds(ctx.ds.n_utterances());
      for (size_t i = 0; i < ctx.ds.n_utterances(); ++i)
        all_preds(i) = strong_predict_one(ckpt, *backend, ctx.ds.utterances()[i],
                                          phoneme_map, ref_map);
      stage1.push_back(std::make_unique<FixedPredictionLearner>(
          "strong/" + std::filesystem::path(path).filename().string(),
          all_preds, Json{{"type", "strong"}, {"checkpoint", path}}));
    } else {
      stage1.push_back(std::make_unique<StrongStageLearner>(
          path, &ctx.ds, ctx.provider.get(), ctx.refs, ctx.cfg.seed));
    }
  }
  for (const auto& spec : plan.weak_specs) {
    const Eigen::MatrixXd& emb = ctx.embeddings_for(spec.backend_id);
    stage1.push_back(std::make_unique<WeakStageLearner>(
        spec, &emb, &ctx.targets, &ctx.domains, ctx.cfg.seed));
  }

  FittedStack stack = train_stack(plan, std::move(stage1), ctx.inputs, ctx.cfg.seed);

  Json bundle;
  bundle["version"] = 1;
  bundle["plan"] = plan;
  Json columns = Json::array();
  for (size_t l = 0; l < stack.stage1_full.size(); ++l) {
    Json col = stack.stage1_full[l]->describe();
    col["name"] = stack.stage1_columns[l];
    columns.push_back(col);
  }
  bundle["columns"] = columns;
  Json stage2 = Json::array();
  for (size_t m = 0; m < stack.stage2_models.size(); ++m)
    stage2.push_back(Json{{"name", stack.stage2_names[m]},
                          {"model", stack.stage2_models[m]->to_json()}});
  bundle["stage2"] = stage2;
  bundle["stage3"] = stack.stage3_model->to_json();

  std::ofstream out(out_path);
  if (!out) throw UsageError("cannot write stack bundle: " + out_path);
  out << bundle.dump() << '\n';

  if (scores_out.empty()) scores_out = out_path + ".scores.csv";
  write_stage_scores(scores_out, stack.meta_scores);
  std::printf("trained stack with %zu stage-1 columns -> %s\n",
              stack.stage1_columns.size(), out_path.c_str());
  std::printf("meta stage scores -> %s\n", scores_out.c_str());
  return 0;
}

int cmd_stack_predict(const std::string& config_path,
                      const std::string& bundle_path, const std::string& split,
                      const std::string& out_path,
                      const std::string& scores_out) {
  StackContext ctx = make_stack_context(config_path);
  std::ifstream in(bundle_path);
  if (!in) throw UsageError("cannot open stack bundle: " + bundle_path);
  Json bundle = Json::parse(in, nullptr, false);
  if (bundle.is_discarded())
    throw UsageError("stack bundle is not valid JSON: " + bundle_path);

  const std::vector<int> positions = split_positions(ctx.ds, split);
  if (positions.empty()) throw UsageError("split '" + split + "' is empty");
  const auto ref_map = reference_map(ctx.refs);

  const auto& columns = bundle.at("columns");
  StageScores z1;
  z1.scores.resize(positions.size(), columns.size());
  for (int p : positions)
    z1.utterance_ids.push_back(ctx.inputs.utterance_ids[p]);

  for (size_t c = 0; c < columns.size(); ++c) {
    const auto& col = columns[c];
    const std::string type = col.at("type").get<std::string>();
    z1.columns.push_back(col.value("name", "col" + std::to_string(c)));
    if (type == "weak") {
      const WeakLearnerSpec spec = col.at("spec").get<WeakLearnerSpec>();
      const auto model = weak_model_from_json(col.at("model"));
      const Eigen::MatrixXd& emb = ctx.embeddings_for(spec.backend_id);
      Eigen::MatrixXd x(positions.size(), emb.cols());
      for (size_t i = 0; i < positions.size(); ++i)
        x.row(i) = emb.row(positions[i]);
      z1.scores.col(c) = model->predict(x);
    } else if (type == "strong") {
      const std::string path = col.at("checkpoint").get<std::string>();
      const StrongCheckpoint ckpt = load_checkpoint(path);
      auto backend = make_backend(ckpt.backend);
      std::map<std::string, SymbolSeq> phoneme_map;
      for (int p : positions) {
        const auto& id = ctx.inputs.utterance_ids[p];
        phoneme_map[id] = ctx.provider->phonemes_for(id);
      }
      for (size_t i = 0; i < positions.size(); ++i)
        z1.scores(i, c) = strong_predict_one(
            ckpt, *backend, ctx.ds.utterances()[positions[i]], phoneme_map,
            ref_map);
    } else {
      throw UsageError("unsupported stage-1 column type in bundle: " + type);
    }
  }

  std::vector<std::unique_ptr<WeakModel>> stage2;
  for (const auto& m : bundle.at("stage2"))
    stage2.push_back(weak_model_from_json(m.at("model")));
  const auto stage3 = weak_model_from_json(bundle.at("stage3"));

  const Eigen::VectorXd final_pred =
      stack_predict_from_scores(stage2, *stage3, z1.scores);
  std::vector<std::pair<std::string, double>> preds;
  for (size_t i = 0; i < positions.size(); ++i)
    preds.emplace_back(z1.utterance_ids[i], final_pred(i));
  write_predictions(out_path, preds);
  if (!scores_out.empty()) write_stage_scores(scores_out, z1);
  std::printf("wrote %zu stacked predictions to %s\n", preds.size(),
              out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate / augment-preview
// ---------------------------------------------------------------------------

int cmd_evaluate(const std::string& pred_path, const std::string& ratings_path) {
  const MetricReport rep = evaluate_files(pred_path, ratings_path);
  std::fputs(format_report_table(rep).c_str(), stdout);
  std::fputs(format_report_kv(rep).c_str(), stdout);
  return 0;
}

int cmd_augment_preview(uint64_t seed, double f_t, double f_p, bool has_f_t,
                        bool has_f_p, const std::string& in_path,
                        const std::string& out_path) {
  Waveform w = read_wav(in_path);
  if (w.samples.empty()) throw UsageError("empty input wav: " + in_path);
  Rng rng(derive_seed(seed, "augment-preview"));
  AugmentConfig cfg;
  if (!has_f_t || !has_f_p) {
    const auto [st, sp] = sample_augmentation(cfg, rng);
    if (!has_f_t) f_t = st;
    if (!has_f_p) f_p = sp;
  }
  std::printf("f_t=%.6f f_p=%.2f cents\n", f_t, f_p);
  const Waveform out = shift_pitch(change_speed(w, f_t), f_p);
  write_wav(out_path, out);
  std::printf("wrote %s (%zu samples at %d Hz)\n", out_path.c_str(),
              out.samples.size(), out.sample_rate);
  return 0;
}

}  // namespace
}  // namespace mospred

int main(int argc, char** argv) {
  using namespace mospred;

  CLI::App app{"MOS prediction toolkit: strong/weak learners, stacking, metrics"};
  app.require_subcommand(1);
  int rc = 0;

  // train-strong
  {
    auto* sub = app.add_subcommand(
        "train-strong", "Train the frame-level neural scorer (config keys: "
                        "dataset.*, backend.*, strong.*, loss.{alpha,tau,beta,"
                        "gamma,cross_domain_pairs}, augment.{F_t,F_p,enabled}, "
                        "textproc.{eps,min_pts}, seed)");
    auto config = std::make_shared<std::string>();
    auto seed = std::make_shared<int64_t>(-1);
    auto out = std::make_shared<std::string>("strong.ckpt");
    sub->add_option("--config", *config, "Run config JSON")->required();
    sub->add_option("--seed", *seed, "Override the config seed");
    sub->add_option("--out", *out, "Checkpoint output path");
    sub->callback([=, &rc]() { rc = cmd_train_strong(*config, *seed, *out); });
  }

  // infer
  {
    auto* sub = app.add_subcommand(
        "infer", "Predict scores with a trained checkpoint (mean listener)");
    auto ckpt = std::make_shared<std::string>();
    auto ratings = std::make_shared<std::string>();
    auto audio = std::make_shared<std::string>();
    auto transcripts = std::make_shared<std::string>();
    auto eps = std::make_shared<double>(0.3);
    auto min_pts = std::make_shared<int>(2);
    auto out = std::make_shared<std::string>("predictions.csv");
    sub->add_option("--ckpt", *ckpt, "Checkpoint file")->required();
    sub->add_option("--ratings", *ratings, "Ratings CSV naming the utterances")
        ->required();
    sub->add_option("--audio-dir", *audio, "Directory with <utterance>.wav")
        ->required();
    sub->add_option("--transcripts", *transcripts,
                    "Transcripts TSV (required when the checkpoint uses "
                    "phoneme context)");
    sub->add_option("--eps", *eps, "Reference clustering radius");
    sub->add_option("--min-pts", *min_pts, "Reference clustering min points");
    sub->add_option("--out", *out, "Predictions CSV output");
    sub->callback([=, &rc]() {
      rc = cmd_infer(*ckpt, *ratings, *audio, *transcripts, *eps, *min_pts, *out);
    });
  }

  // extract-embeddings
  {
    auto* sub = app.add_subcommand(
        "extract-embeddings",
        "Mean-pooled utterance embeddings for the configured backends "
        "(config keys: dataset.*, backend.*, weak.backends, seed)");
    auto config = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>();
    auto backends = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>("embeddings.csv");
    sub->add_option("--config", *config, "Run config JSON")->required();
    sub->add_option("--split", *split, "Restrict to one split (default: all)");
    sub->add_option("--backend", *backends, "Backend id filter (repeatable)");
    sub->add_option("--out", *out, "Embeddings CSV output");
    sub->callback([=, &rc]() {
      rc = cmd_extract_embeddings(*config, *split, *backends, *out);
    });
  }

  // train-weak
  {
    auto* sub = app.add_subcommand(
        "train-weak", "Fit one classical regressor on mean-pooled embeddings "
                      "(config keys: dataset.*, seed)");
    auto config = std::make_shared<std::string>();
    auto embeddings = std::make_shared<std::string>();
    auto backend = std::make_shared<std::string>();
    auto method = std::make_shared<std::string>();
    auto domain = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("weak_model.json");
    auto pred_split = std::make_shared<std::string>();
    auto pred_out = std::make_shared<std::string>();
    sub->add_option("--config", *config, "Run config JSON")->required();
    sub->add_option("--embeddings", *embeddings, "Embeddings CSV")->required();
    sub->add_option("--backend", *backend, "Backend id inside the CSV")
        ->required();
    sub->add_option("--method", *method,
                    "ridge | linear-svr | random-forest | "
                    "gradient-boosted-trees | kernel-svr | gaussian-process")
        ->required();
    sub->add_option("--domain", *domain, "Train only on this domain tag");
    sub->add_option("--out", *out, "Fitted model JSON output");
    sub->add_option("--pred-split", *pred_split, "Also predict this split");
    sub->add_option("--pred-out", *pred_out, "Predictions CSV for --pred-split");
    sub->callback([=, &rc]() {
      rc = cmd_train_weak(*config, *embeddings, *backend, *method, *domain,
                          *out, *pred_split, *pred_out);
    });
  }

  // cluster-refs
  {
    auto* sub = app.add_subcommand(
        "cluster-refs",
        "Cluster transcripts by normalized edit distance; emit references");
    auto transcripts = std::make_shared<std::string>();
    auto eps = std::make_shared<double>(0.3);
    auto min_pts = std::make_shared<int>(2);
    auto out = std::make_shared<std::string>("references.tsv");
    sub->add_option("--transcripts", *transcripts, "Transcripts TSV")->required();
    sub->add_option("--eps", *eps, "Neighborhood radius in [0,1]");
    sub->add_option("--min-pts", *min_pts, "Core point threshold");
    sub->add_option("--out", *out, "References TSV output");
    sub->callback([=, &rc]() {
      rc = cmd_cluster_refs(*transcripts, *eps, *min_pts, *out);
    });
  }

  // train-stack
  {
    auto* sub = app.add_subcommand(
        "train-stack", "Train the stage 0-3 stacking ensemble (config keys: "
                       "dataset.*, weak.*, stacking.*, seed)");
    auto config = std::make_shared<std::string>();
    auto plan = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("stack.json");
    auto scores = std::make_shared<std::string>();
    sub->add_option("--config", *config, "Run config JSON")->required();
    sub->add_option("--plan", *plan, "Plan JSON overriding config.stacking");
    sub->add_option("--out", *out, "Stack bundle output");
    sub->add_option("--scores-out", *scores,
                    "Meta stage-score CSV (default: <out>.scores.csv)");
    sub->callback(
        [=, &rc]() { rc = cmd_train_stack(*config, *plan, *out, *scores); });
  }

  // stack-predict
  {
    auto* sub = app.add_subcommand(
        "stack-predict", "Predict a split with a trained stack bundle");
    auto config = std::make_shared<std::string>();
    auto bundle = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    auto out = std::make_shared<std::string>("predictions.csv");
    auto scores = std::make_shared<std::string>();
    sub->add_option("--config", *config, "Run config JSON")->required();
    sub->add_option("--bundle", *bundle, "Stack bundle from train-stack")
        ->required();
    sub->add_option("--split", *split, "Split to predict (default: test)");
    sub->add_option("--out", *out, "Predictions CSV output");
    sub->add_option("--scores-out", *scores, "Stage-1 test score CSV");
    sub->callback([=, &rc]() {
      rc = cmd_stack_predict(*config, *bundle, *split, *out, *scores);
    });
  }

  // evaluate
  {
    auto* sub = app.add_subcommand(
        "evaluate",
        "Four challenge metrics at utterance and system level");
    auto pred = std::make_shared<std::string>();
    auto ratings = std::make_shared<std::string>();
    sub->add_option("--pred", *pred, "Predictions CSV")->required();
    sub->add_option("--ratings", *ratings, "Ratings CSV with true scores")
        ->required();
    sub->callback([=, &rc]() { rc = cmd_evaluate(*pred, *ratings); });
  }

  // augment-preview
  {
    auto* sub = app.add_subcommand(
        "augment-preview",
        "Apply speed/pitch augmentation to one file for listening checks");
    auto seed = std::make_shared<uint64_t>(0);
    auto f_t = std::make_shared<double>(1.0);
    auto f_p = std::make_shared<double>(0.0);
    auto in_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto* ft_opt = sub->add_option("--f-t", *f_t, "Speed factor (sampled if omitted)");
    auto* fp_opt = sub->add_option("--f-p", *f_p, "Pitch shift in cents (sampled if omitted)");
    sub->add_option("--seed", *seed, "Sampling seed");
    sub->add_option("input", *in_path, "Input WAV")->required();
    sub->add_option("output", *out_path, "Output WAV")->required();
    sub->callback([=, &rc]() {
      rc = cmd_augment_preview(*seed, *f_t, *f_p, ft_opt->count() > 0,
                               fp_opt->count() > 0, *in_path, *out_path);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "mospred: error: usage: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mospred: error: runtime: %s\n", e.what());
    return 1;
  }
  return rc;
}
