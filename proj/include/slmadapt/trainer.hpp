// slmadapt/trainer.hpp

// Copyright 2026  The slmadapt authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "slmadapt/checkpoint.hpp"
#include "slmadapt/common.hpp"
#include "slmadapt/config.hpp"
#include "slmadapt/data.hpp"
#include "slmadapt/lora.hpp"
#include "slmadapt/model.hpp"
#include "slmadapt/monitor.hpp"
#include "slmadapt/optimizer.hpp"
#include "slmadapt/rng.hpp"

namespace slmadapt {

// ---------------------------------------------------------------------------
// Run artifacts. Every trainer entry point takes an out_dir; when it is
// empty nothing is written and training is purely in-memory.
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsCsv = "metrics.csv";
inline constexpr const char* kCurveCsv = "alignment_curve.csv";
inline constexpr const char* kPretrainCkpt = "pretrained.ckpt";
inline constexpr const char* kTextBestCkpt = "text-best.ckpt";
inline constexpr const char* kAdaptTextCkpt = "adapted-text.ckpt";
inline constexpr const char* kAdaptSpeechCkpt = "adapted-speech.ckpt";
inline constexpr const char* kAdaptComposedCkpt =
    "adapted-text-then-speech.ckpt";

inline std::string join_path(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

inline json run_meta(const RunConfig& cfg, const std::string& stage,
                     const std::string& strategy = "-") {
  json j;
  j["config"] = cfg;
  j["stage"] = stage;
  j["strategy"] = strategy;
  return j;
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::int64_t step = 0;
  std::string stage;
  std::string strategy = "-";
  double lr = 0.0;
  double train_loss = 0.0;
  bool has_eval = false;
  double asr_dev_loss = 0.0;
  double ppl = 0.0;
  double token_acc = 0.0;
};

inline const char* metrics_csv_header() {
  return "step,stage,strategy,lr,train_loss,asr_dev_loss,ppl,token_acc";
}

/// Appends rows to <dir>/metrics.csv; a writer built with an empty path
/// swallows everything.
class MetricsWriter {
 public:
  MetricsWriter() = default;

  explicit MetricsWriter(const std::string& path) {
    if (path.empty()) return;
    namespace fs = std::filesystem;
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    os_.open(path, std::ios::trunc);
    if (!os_) throw DataError(cat("metrics: cannot write '", path, "'"));
    os_ << metrics_csv_header() << "\n";
    os_ << std::setprecision(17);
    active_ = true;
  }

  void row(const MetricsRow& r) {
    if (!active_) return;
    os_ << r.step << ',' << r.stage << ',' << r.strategy << ',' << r.lr << ','
        << r.train_loss << ',';
    if (r.has_eval)
      os_ << r.asr_dev_loss << ',' << r.ppl << ',' << r.token_acc;
    else
      os_ << ",,";
    os_ << "\n";
  }

  void flush() {
    if (active_) os_.flush();
  }

 private:
  std::ofstream os_;
  bool active_ = false;
};

// ---------------------------------------------------------------------------
// Parameter snapshots (best-so-far selection restores these)
// ---------------------------------------------------------------------------

template <typename S>
std::map<std::string, Mat<S>> snapshot_named(
    const ParamStore<S>& params, const std::vector<std::string>& names) {
  std::map<std::string, Mat<S>> snap;
  for (const std::string& n : names) snap.emplace(n, params.at(n));
  return snap;
}

template <typename S>
void restore_named(ParamStore<S>& params,
                   const std::map<std::string, Mat<S>>& snap) {
  for (const auto& [n, t] : snap) params.at(n) = t;
}

// ---------------------------------------------------------------------------
// Shared phase loop
// ---------------------------------------------------------------------------

struct PhaseSummary {
  std::string stage;
  std::vector<double> dev_history;  // mean dev NLL after each epoch
  int best_epoch = -1;              // index into dev_history
  double best_dev = std::numeric_limits<double>::quiet_NaN();
  std::int64_t steps = 0;
};

namespace detail {

template <typename S>
double batch_loss(const Model<S>& m, const std::vector<const Utterance*>& b,
                  bool active, GradStore<S>* g, std::mt19937_64* eng) {
  return m.asr_loss(b, active, g, eng);
}

template <typename S>
double batch_loss(const Model<S>& m, const std::vector<const TextSample*>& b,
                  bool active, GradStore<S>* g, std::mt19937_64* eng) {
  return m.text_loss(b, active, g, eng);
}

template <typename S>
EvalMetrics batch_eval(const Model<S>& m,
                       const std::vector<const Utterance*>& b, bool active) {
  return m.asr_eval(b, active);
}

template <typename S>
EvalMetrics batch_eval(const Model<S>& m,
                       const std::vector<const TextSample*>& b, bool active) {
  return m.text_eval(b, active);
}

template <typename S>
[[noreturn]] void abort_non_finite(Model<S>& model, const json& meta,
                                   const std::string& out_dir,
                                   const std::string& stage,
                                   std::int64_t step, double loss) {
  if (!out_dir.empty()) {
    json diag = meta;
    diag["aborted_at_step"] = step;
    save_checkpoint(
        join_path(out_dir, ("diagnostic-" + stage + ".ckpt").c_str()),
        model.params(), diag);
  }
  throw NumericError(cat(stage, ": non-finite loss ", loss, " at step ", step,
                         out_dir.empty() ? "" : "; diagnostic snapshot saved"));
}

/// One training phase over a fixed dataset: epochs of shuffled minibatches
/// under a trainability mask, a dev evaluation after every epoch, and the
/// best-dev weights restored at the end. A non-negative rel_tol stops the
/// phase once the relative dev improvement falls below it.
template <typename S, typename Sample>
PhaseSummary run_phase(Model<S>& model, const std::string& stage,
                       const std::string& strategy_label,
                       const std::vector<Sample>& train,
                       const std::vector<Sample>& dev,
                       const TrainabilityMask& mask, bool adapters_active,
                       const OptimizerConfig& opt_cfg, int max_epochs,
                       double rel_tol, const TrainConfig& tcfg,
                       std::uint64_t seed, MetricsWriter& metrics,
                       std::int64_t& gstep, const json& meta,
                       const std::string& out_dir) {
  PhaseSummary sum;
  sum.stage = stage;
  if (max_epochs <= 0) return sum;
  if (train.empty()) throw ConfigError(cat(stage, ": empty training set"));
  if (dev.empty()) throw ConfigError(cat(stage, ": empty dev set"));

  GradStore<S> grads(model.params(), mask);
  AdamOptimizer<S> opt(model.params(), mask, opt_cfg);
  const std::vector<std::string> names = mask.trainable_names();
  const std::vector<const Sample*> dev_view = pointer_view(dev);
  const std::uint64_t order_seed = derive_seed(seed, "order." + stage);
  std::map<std::string, Mat<S>> best_snap;

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    const std::vector<int> perm =
        epoch_permutation(static_cast<int>(train.size()), order_seed, epoch);
    double loss_sum = 0.0;
    std::int64_t sample_count = 0;
    for (const auto& batch : make_batches(train, perm, tcfg.batch_size)) {
      grads.zero();
      std::mt19937_64 eng(derive_seed(seed, "dropout." + stage, gstep));
      const double loss =
          batch_loss(model, batch, adapters_active, &grads, &eng);
      if (!std::isfinite(loss))
        abort_non_finite(model, meta, out_dir, stage, gstep, loss);
      auto info = opt.step(model.params(), grads);
      ++gstep;
      ++sum.steps;
      loss_sum += loss * static_cast<double>(batch.size());
      sample_count += static_cast<std::int64_t>(batch.size());
      MetricsRow row;
      row.step = gstep;
      row.stage = stage;
      row.strategy = strategy_label;
      row.lr = info.lr;
      row.train_loss = loss;
      metrics.row(row);
    }

    EvalMetrics dm = batch_eval(model, dev_view, adapters_active);
    const double dev_loss = dm.mean_nll();
    sum.dev_history.push_back(dev_loss);
    MetricsRow row;
    row.step = gstep;
    row.stage = stage;
    row.strategy = strategy_label;
    row.lr = opt_cfg.lr_at(opt.step_count());
    row.train_loss = loss_sum / static_cast<double>(sample_count);
    row.has_eval = true;
    row.asr_dev_loss = dev_loss;
    row.ppl = dm.perplexity();
    row.token_acc = dm.token_accuracy();
    metrics.row(row);

    if (sum.best_epoch < 0 || dev_loss < sum.best_dev) {
      sum.best_epoch = epoch;
      sum.best_dev = dev_loss;
      best_snap = snapshot_named(model.params(), names);
    }
    if (rel_tol >= 0.0 && epoch > 0) {
      const double prev = sum.dev_history[static_cast<std::size_t>(epoch) - 1];
      const double rel =
          (prev - dev_loss) / std::max(std::abs(prev), 1e-12);
      if (rel < rel_tol) break;
    }
  }

  if (sum.best_epoch >= 0) restore_named(model.params(), best_snap);
  metrics.flush();
  return sum;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 1: source-domain pretraining
// ---------------------------------------------------------------------------

struct PretrainResult {
  PhaseSummary lm_init;
  PhaseSummary phase_a;
  PhaseSummary phase_b;
  std::int64_t total_steps = 0;
};

/// Source pretraining on paired data. Three sub-phases:
///   lm-init  base LM alone on the training transcripts, giving the desk
///            model the text competence a full-scale run inherits from its
///            pretrained LLM
///   phase-a  projector only, adapters inactive, until the dev recognizer
///            loss stops improving by phase_a_rel_tol or the epoch cap hits
///   phase-b  projector plus adapters jointly
/// Each sub-phase keeps its best-dev weights. The encoder stays frozen at
/// initialization throughout, and phase-a leaves the base LM bit-exact.
/// On return the phase-b adapters are merged into the base weights and
/// replaced with fresh transparent ones, so adaptation starts from zero
/// adapter deltas and a monitor record with fresh adapters reproduces the
/// returned model's dev metrics exactly.
template <typename S>
PretrainResult pretrain_source(Model<S>& model,
                               const std::vector<Utterance>& train,
                               const std::vector<Utterance>& dev,
                               const RunConfig& cfg,
                               const std::string& out_dir = "") {
  cfg.validate();
  if (train.empty()) throw ConfigError("pretrain: empty training set");
  if (dev.empty()) throw ConfigError("pretrain: empty dev set");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  MetricsWriter metrics(out_dir.empty() ? ""
                                        : join_path(out_dir, kMetricsCsv));
  const json meta = run_meta(cfg, "pretrain");
  PretrainResult res;
  std::int64_t gstep = 0;

  {
    const std::vector<TextSample> text_train = transcripts_of(train);
    const std::vector<TextSample> text_dev = transcripts_of(dev);
    const TrainabilityMask mask =
        mask_for_prefixes(model.params(), {"lm."});
    res.lm_init = detail::run_phase(
        model, "lm-init", "-", text_train, text_dev, mask,
        /*adapters_active=*/false, cfg.pretrain_opt, cfg.train.lm_init_epochs,
        /*rel_tol=*/-1.0, cfg.train, cfg.seed, metrics, gstep, meta, out_dir);
  }

  {
    const TrainabilityMask mask =
        mask_for_prefixes(model.params(), {"projector."});
    res.phase_a = detail::run_phase(
        model, "phase-a", "-", train, dev, mask, /*adapters_active=*/false,
        cfg.pretrain_opt, cfg.train.phase_a_max_epochs,
        cfg.train.phase_a_rel_tol, cfg.train, cfg.seed, metrics, gstep, meta,
        out_dir);
  }

  {
    const TrainabilityMask mask =
        mask_for_prefixes(model.params(), {"projector.", "lora."});
    res.phase_b = detail::run_phase(
        model, "phase-b", "-", train, dev, mask, /*adapters_active=*/true,
        cfg.pretrain_opt, cfg.train.phase_b_epochs, /*rel_tol=*/-1.0,
        cfg.train, cfg.seed, metrics, gstep, meta, out_dir);
  }

  model.merge_adapters_into_base();
  model.reinit_adapters(derive_seed(cfg.seed, "stage2.adapters"));

  res.total_steps = gstep;
  if (!out_dir.empty())
    save_checkpoint(join_path(out_dir, kPretrainCkpt), model.params(), meta);
  return res;
}

// ---------------------------------------------------------------------------
// Stage 2, strategy 1: text-only adaptation under the alignment monitor
// ---------------------------------------------------------------------------

struct TextAdaptResult {
  AlignmentCurve curve;
  DegradationReport report;
  std::int64_t best_step = 0;
  std::int64_t steps = 0;
};

/// Fine-tunes the adapters on target-domain text alone while periodically
/// scoring the full recognizer on paired dev data. The weights kept at the
/// end are those of the best monitor point, which may be the starting
/// point itself if adaptation only hurt. opt_override replaces the
/// configured text fine-tuning optimizer (stress runs use it).
template <typename S>
TextAdaptResult adapt_text_only(Model<S>& model,
                                const std::vector<TextSample>& target_text,
                                const std::vector<Utterance>& monitor_dev,
                                const RunConfig& cfg,
                                const std::string& out_dir = "",
                                const OptimizerConfig* opt_override = nullptr,
                                const std::string& strategy_label = "text") {
  cfg.validate();
  if (target_text.empty())
    throw ConfigError("text adaptation: empty target text corpus");
  if (monitor_dev.empty())
    throw ConfigError(
        "text adaptation: a paired dev set is required for the alignment "
        "monitor; none was given");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  const OptimizerConfig& opt_cfg = opt_override ? *opt_override
                                                : cfg.text_ft_opt;
  opt_cfg.validate();
  const std::string stage = "text-ft";
  MetricsWriter metrics(out_dir.empty() ? ""
                                        : join_path(out_dir, kMetricsCsv));
  json meta = run_meta(cfg, "adapt", strategy_label);

  const TrainabilityMask mask = mask_for_strategy(Strategy::TextOnly,
                                                  model.params());
  GradStore<S> grads(model.params(), mask);
  AdamOptimizer<S> opt(model.params(), mask, opt_cfg);
  const std::vector<std::string> names = mask.trainable_names();
  const std::vector<const TextSample*> text_view = pointer_view(target_text);
  const std::vector<const Utterance*> dev_view = pointer_view(monitor_dev);
  const std::uint64_t order_seed = derive_seed(cfg.seed, "order." + stage);
  const double budget = static_cast<double>(cfg.train.text_epochs) *
                        static_cast<double>(target_text.size());

  TextAdaptResult res;
  std::int64_t samples_seen = 0;
  double span_loss_sum = 0.0;
  std::int64_t span_steps = 0;
  int evals_since_best = 0;
  std::map<std::string, Mat<S>> best_snap;

  auto record = [&](double train_loss) {
    EvalRecord rec = evaluate_alignment(model, dev_view);
    rec.step = opt.step_count();
    rec.lm_train_loss = train_loss;
    rec.text_fraction_consumed =
        static_cast<double>(samples_seen) / budget;
    res.curve.add(rec);
    MetricsRow row;
    row.step = rec.step;
    row.stage = stage;
    row.strategy = strategy_label;
    row.lr = opt_cfg.lr_at(std::max<std::int64_t>(rec.step, 1));
    row.train_loss = train_loss;
    row.has_eval = true;
    row.asr_dev_loss = rec.asr_dev_loss;
    row.ppl = rec.ppl;
    row.token_acc = rec.token_acc;
    metrics.row(row);
    if (res.curve.best_index() ==
        static_cast<int>(res.curve.size()) - 1) {
      evals_since_best = 0;
      best_snap = snapshot_named(model.params(), names);
      if (!out_dir.empty()) {
        json best_meta = meta;
        best_meta["best_step"] = rec.step;
        save_checkpoint(join_path(out_dir, kTextBestCkpt),
                        extract_prefixed(model.params(), "lora."), best_meta);
      }
    } else {
      ++evals_since_best;
    }
  };

  record(model.text_eval(text_view, /*adapters_active=*/true).mean_nll());

  bool stop = false;
  for (int epoch = 0; epoch < cfg.train.text_epochs && !stop; ++epoch) {
    const std::vector<int> perm = epoch_permutation(
        static_cast<int>(target_text.size()), order_seed, epoch);
    for (const auto& batch :
         make_batches(target_text, perm, cfg.train.batch_size)) {
      grads.zero();
      std::mt19937_64 eng(
          derive_seed(cfg.seed, "dropout." + stage, opt.step_count()));
      const double loss = model.text_loss(batch, /*adapters_active=*/true,
                                          &grads, &eng);
      if (!std::isfinite(loss))
        detail::abort_non_finite(model, meta, out_dir, stage,
                                 opt.step_count(), loss);
      auto info = opt.step(model.params(), grads);
      samples_seen += static_cast<std::int64_t>(batch.size());
      span_loss_sum += loss;
      ++span_steps;
      MetricsRow row;
      row.step = opt.step_count();
      row.stage = stage;
      row.strategy = strategy_label;
      row.lr = info.lr;
      row.train_loss = loss;
      metrics.row(row);
      if (opt.step_count() % cfg.train.eval_interval == 0) {
        record(span_loss_sum / static_cast<double>(span_steps));
        span_loss_sum = 0.0;
        span_steps = 0;
        if (cfg.train.patience > 0 &&
            evals_since_best >= cfg.train.patience) {
          stop = true;
          break;
        }
      }
    }
  }

  if (res.curve.back().step < opt.step_count())
    record(span_steps > 0 ? span_loss_sum / static_cast<double>(span_steps)
                          : res.curve.back().lm_train_loss);

  restore_named(model.params(), best_snap);
  res.report = degradation_report(res.curve);
  res.best_step = res.curve.best().step;
  res.steps = opt.step_count();
  metrics.flush();

  if (!out_dir.empty()) {
    write_curve_csv(join_path(out_dir, kCurveCsv), res.curve);
    json final_meta = meta;
    final_meta["best_step"] = res.best_step;
    final_meta["steps"] = res.steps;
    save_checkpoint(join_path(out_dir, kAdaptTextCkpt), model.params(),
                    final_meta);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Stage 2, strategy 2: speech adaptation
// ---------------------------------------------------------------------------

struct SpeechAdaptResult {
  PhaseSummary phase;
};

/// Fine-tunes projector and adapters on paired target speech with per-epoch
/// dev selection. Base LM and encoder are untouched.
template <typename S>
SpeechAdaptResult adapt_speech(Model<S>& model,
                               const std::vector<Utterance>& target_train,
                               const std::vector<Utterance>& dev,
                               const RunConfig& cfg,
                               const std::string& out_dir = "",
                               Strategy strategy = Strategy::Speech) {
  cfg.validate();
  if (strategy == Strategy::TextOnly)
    throw UsageError("adapt_speech: strategy must train on speech");
  if (target_train.empty())
    throw ConfigError("speech adaptation: empty target training set");
  if (dev.empty()) throw ConfigError("speech adaptation: empty dev set");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  const std::string label =
      strategy == Strategy::Speech ? "speech" : "text-then-speech";
  MetricsWriter metrics(out_dir.empty() ? ""
                                        : join_path(out_dir, kMetricsCsv));
  const json meta = run_meta(cfg, "adapt", label);
  const TrainabilityMask mask = mask_for_strategy(strategy, model.params());

  SpeechAdaptResult res;
  std::int64_t gstep = 0;
  res.phase = detail::run_phase(
      model, "speech-ft", label, target_train, dev, mask,
      /*adapters_active=*/true, cfg.pretrain_opt, cfg.train.speech_epochs,
      /*rel_tol=*/-1.0, cfg.train, cfg.seed, metrics, gstep, meta, out_dir);

  if (!out_dir.empty())
    save_checkpoint(join_path(out_dir, kAdaptSpeechCkpt), model.params(),
                    meta);
  return res;
}

// ---------------------------------------------------------------------------
// Stage 2, strategy 3: text first, then speech
// ---------------------------------------------------------------------------

struct TextThenSpeechResult {
  TextAdaptResult text;
  SpeechAdaptResult speech;
};

/// Strategy 3 is the literal composition of the other two: the text phase
/// runs under the monitor and leaves its best adapters in place, then the
/// speech phase continues from them. The text-phase artifacts land under
/// <out_dir>/text-phase; the composed checkpoint records both phases.
template <typename S>
TextThenSpeechResult adapt_text_then_speech(
    Model<S>& model, const std::vector<TextSample>& target_text,
    const std::vector<Utterance>& target_train,
    const std::vector<Utterance>& dev, const RunConfig& cfg,
    const std::string& out_dir = "") {
  TextThenSpeechResult res;
  const std::string text_dir =
      out_dir.empty() ? "" : join_path(out_dir, "text-phase");
  res.text = adapt_text_only(model, target_text, dev, cfg, text_dir,
                             /*opt_override=*/nullptr, "text-then-speech");
  res.speech = adapt_speech(model, target_train, dev, cfg, out_dir,
                            Strategy::TextThenSpeechPhase2);

  if (!out_dir.empty()) {
    json meta = run_meta(cfg, "adapt", "text-then-speech");
    meta["provenance"] = json{{"text_best_step", res.text.best_step},
                              {"text_steps", res.text.steps},
                              {"speech_best_epoch", res.speech.phase.best_epoch},
                              {"speech_steps", res.speech.phase.steps}};
    save_checkpoint(join_path(out_dir, kAdaptComposedCkpt), model.params(),
                    meta);
  }
  return res;
}

}  // namespace slmadapt
