// tools/slmadapt.cpp

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

// Operator surface. One command per process:
//
//   slmadapt generate --out data/
//   slmadapt pretrain --data data/ --out runs/pretrain
//   slmadapt adapt --strategy text --data data/ \
//       --pretrained runs/pretrain/pretrained.ckpt \
//       --monitor-set data/target/dev.jsonl --out runs/text
//   slmadapt eval --ckpt runs/text/adapted-text.ckpt --data data/ \
//       --out runs/text
//   slmadapt report runs/*/report.csv
//   slmadapt plot --curve runs/text/alignment_curve.csv --out curve.svg
//
// Configuration resolves in three layers, later layers winning: built-in
// desk preset (for adapt and eval, the config echoed into the input
// checkpoint), then --config FILE (JSON, partial trees allowed), then
// individual flags. Every artifact directory receives a config.json echo
// listing the keys that differ from the paper presets.
//
// Environment: SLMADAPT_OUT_ROOT prefixes relative --out paths,
// SLMADAPT_THREADS caps Eigen's thread count. Nothing else is read.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slmadapt/checkpoint.hpp"
#include "slmadapt/data.hpp"
#include "slmadapt/eval.hpp"
#include "slmadapt/trainer.hpp"

namespace slmadapt {
namespace {

namespace fs = std::filesystem;
using Scalar = double;

constexpr const char* kBenchmarkJson = "benchmark.json";
constexpr const char* kGenerationLog = "generation.log";
constexpr const char* kConfigJson = "config.json";
constexpr const char* kReportCsv = "report.csv";

// ----- configuration plumbing ----------------------------------------------

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(cat("cannot open '", path, "'"));
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(cat("config '", path, "': ", e.what()));
  }
}

/// Applies the "run" subtree of a config file over `base` and returns the
/// parsed result. Missing keys keep their base values.
RunConfig patch_run_config(const RunConfig& base,
                           const std::string& config_path) {
  json j = base;
  if (!config_path.empty()) {
    json file = read_json_file(config_path);
    if (file.contains("run")) j.merge_patch(file.at("run"));
  }
  try {
    return j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(cat("config '", config_path, "': ", e.what()));
  }
}

BenchmarkSpec patch_bench_spec(const BenchmarkSpec& base,
                               const std::string& config_path) {
  json j = base;
  if (!config_path.empty()) {
    json file = read_json_file(config_path);
    if (file.contains("bench")) j.merge_patch(file.at("bench"));
  }
  try {
    return j.get<BenchmarkSpec>();
  } catch (const json::exception& e) {
    throw ConfigError(cat("config '", config_path, "': ", e.what()));
  }
}

void write_config_echo(const std::string& out_dir, const RunConfig& cfg,
                       const std::string& stage, const std::string& strategy) {
  json echo;
  echo["stage"] = stage;
  echo["strategy"] = strategy;
  echo["config"] = cfg;
  echo["overridden_keys"] = overridden_keys(cfg);
  const std::string path = (fs::path(out_dir) / kConfigJson).string();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(cat("cannot write '", path, "'"));
  os << echo.dump(2) << "\n";
}

std::string apply_out_root(std::string out) {
  const char* root = std::getenv("SLMADAPT_OUT_ROOT");
  if (root && *root && !out.empty() && fs::path(out).is_relative())
    out = (fs::path(root) / out).string();
  return out;
}

// ----- data tree ------------------------------------------------------------

struct SplitFile {
  const char* set_name;
  const char* relpath;
};

constexpr SplitFile kSpeechSplits[] = {
    {"src_train", "source/train.jsonl"}, {"src_dev", "source/dev.jsonl"},
    {"src_test", "source/test.jsonl"},   {"tgt_speech_train",
                                          "target/speech_train.jsonl"},
    {"tgt_dev", "target/dev.jsonl"},     {"tgt_test", "target/test.jsonl"}};

constexpr const char* kTextTrainRel = "target/text_train.txt";

std::string split_path(const std::string& data_dir, const char* rel) {
  return (fs::path(data_dir) / rel).string();
}

const char* split_relpath(const std::string& set_name) {
  for (const SplitFile& s : kSpeechSplits)
    if (set_name == s.set_name) return s.relpath;
  throw UsageError(cat("unknown evaluation set '", set_name,
                       "'; expected one of src_train, src_dev, src_test, "
                       "tgt_speech_train, tgt_dev, tgt_test"));
}

std::vector<Utterance> load_split(const std::string& data_dir,
                                  const char* rel, const ModelConfig& cfg) {
  const std::string path = split_path(data_dir, rel);
  if (!fs::exists(path))
    throw DataError(cat("manifest '", path,
                        "' not found; run `slmadapt generate` first"));
  return read_manifest(path, cfg);
}

Checkpoint<Scalar> load_ckpt_or_explain(const std::string& path,
                                        const std::string& prior_stage) {
  if (!fs::exists(path))
    throw DataError(cat("checkpoint '", path, "' not found; run `slmadapt ",
                        prior_stage, "` first"));
  return load_checkpoint<Scalar>(path);
}

/// Rebuilds the model a checkpoint was trained with, from its config echo.
Model<Scalar> model_from_ckpt(const Checkpoint<Scalar>& ck,
                              const RunConfig& cfg) {
  Model<Scalar> model(cfg.model, cfg.lora, cfg.seed);
  restore_params(ck, model.params());
  return model;
}

RunConfig config_from_ckpt(const Checkpoint<Scalar>& ck,
                           const std::string& path) {
  if (!ck.config_echo.contains("config"))
    throw DataError(cat("checkpoint '", path, "' carries no config echo"));
  try {
    return ck.config_echo.at("config").get<RunConfig>();
  } catch (const json::exception& e) {
    throw DataError(cat("checkpoint '", path, "': bad config echo: ",
                        e.what()));
  }
}

// ----- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::string config;
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> bench_seed;
  std::optional<int> src_train, src_dev, src_test;
  std::optional<int> tgt_text_train, tgt_speech_train, tgt_dev, tgt_test;
  std::optional<double> noise_sigma, accent_shift, specialist_rate;
  std::optional<int> min_words, max_words, fpc_min, fpc_max;
};

int cmd_generate(const GenerateArgs& a) {
  RunConfig rc = patch_run_config(RunConfig::desk_preset(), a.config);
  if (a.seed) rc.seed = *a.seed;
  rc.validate();

  BenchmarkSpec spec = patch_bench_spec(BenchmarkSpec{}, a.config);
  spec.seed = derive_seed(rc.seed, "bench");
  if (a.bench_seed) spec.seed = *a.bench_seed;
  if (a.src_train) spec.src_train = *a.src_train;
  if (a.src_dev) spec.src_dev = *a.src_dev;
  if (a.src_test) spec.src_test = *a.src_test;
  if (a.tgt_text_train) spec.tgt_text_train = *a.tgt_text_train;
  if (a.tgt_speech_train) spec.tgt_speech_train = *a.tgt_speech_train;
  if (a.tgt_dev) spec.tgt_dev = *a.tgt_dev;
  if (a.tgt_test) spec.tgt_test = *a.tgt_test;
  if (a.noise_sigma) spec.noise_sigma = *a.noise_sigma;
  if (a.accent_shift) spec.tgt_accent_shift = *a.accent_shift;
  if (a.specialist_rate) spec.specialist_rate = *a.specialist_rate;
  if (a.min_words) spec.min_words = *a.min_words;
  if (a.max_words) spec.max_words = *a.max_words;
  if (a.fpc_min) spec.fpc_min = *a.fpc_min;
  if (a.fpc_max) spec.fpc_max = *a.fpc_max;
  spec.validate();

  const std::string out = apply_out_root(a.out);
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!a.force)
      throw UsageError(cat("output directory '", out,
                           "' is not empty (pass --force to overwrite)"));
    for (const char* owned :
         {"source", "target", kBenchmarkJson, kGenerationLog, kConfigJson})
      fs::remove_all(fs::path(out) / owned);
  }
  fs::create_directories(out);

  Benchmark b = generate_benchmark(spec, rc.model);

  const RenderSpec src_rs = spec.render_spec();
  const RenderSpec tgt_rs = spec.target_render_spec();
  write_manifest(split_path(out, "source/train.jsonl"), b.src_train, src_rs);
  write_manifest(split_path(out, "source/dev.jsonl"), b.src_dev, src_rs);
  write_manifest(split_path(out, "source/test.jsonl"), b.src_test, src_rs);
  write_manifest(split_path(out, "target/speech_train.jsonl"),
                 b.tgt_speech_train, tgt_rs);
  write_manifest(split_path(out, "target/dev.jsonl"), b.tgt_dev, tgt_rs);
  write_manifest(split_path(out, "target/test.jsonl"), b.tgt_test, tgt_rs);
  write_text_corpus(split_path(out, kTextTrainRel), b.tgt_text_train);

  json echo;
  echo["spec"] = spec;
  echo["model"] = rc.model;
  echo["run_seed"] = rc.seed;
  {
    const std::string path = (fs::path(out) / kBenchmarkJson).string();
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError(cat("cannot write '", path, "'"));
    os << echo.dump(2) << "\n";
  }
  {
    const std::string path = (fs::path(out) / kGenerationLog).string();
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError(cat("cannot write '", path, "'"));
    os << "run_seed=" << rc.seed << " bench_seed=" << spec.seed << "\n";
    os << "noise_sigma=" << spec.noise_sigma
       << " tgt_accent_shift=" << spec.tgt_accent_shift << "\n";
    const auto log_split = [&](const char* name, std::size_t n,
                               const char* rel) {
      os << "split=" << name << " count=" << n << " file=" << rel
         << " seed=" << derive_seed(spec.seed, cat("text.", name)) << "\n";
    };
    log_split("src_train", b.src_train.size(), "source/train.jsonl");
    log_split("src_dev", b.src_dev.size(), "source/dev.jsonl");
    log_split("src_test", b.src_test.size(), "source/test.jsonl");
    log_split("tgt_text_train", b.tgt_text_train.size(), kTextTrainRel);
    log_split("tgt_speech_train", b.tgt_speech_train.size(),
              "target/speech_train.jsonl");
    log_split("tgt_dev", b.tgt_dev.size(), "target/dev.jsonl");
    log_split("tgt_test", b.tgt_test.size(), "target/test.jsonl");
  }
  write_config_echo(out, rc, "generate", "-");

  std::cout << "generated benchmark under " << out << "\n"
            << "  source: " << b.src_train.size() << " train / "
            << b.src_dev.size() << " dev / " << b.src_test.size()
            << " test utterances\n"
            << "  target: " << b.tgt_text_train.size() << " text / "
            << b.tgt_speech_train.size() << " speech train / "
            << b.tgt_dev.size() << " dev / " << b.tgt_test.size()
            << " test\n";
  return 0;
}

// ----- shared training flags ------------------------------------------------

struct TrainFlags {
  std::optional<std::uint64_t> seed;
  std::optional<int> batch_size;
  std::optional<int> lm_init_epochs, phase_a_max_epochs, phase_b_epochs;
  std::optional<int> speech_epochs, text_epochs;
  std::optional<int> eval_interval, patience;
  std::optional<double> pretrain_lr, text_lr;
  std::optional<int> pretrain_warmup, text_warmup;

  void apply(RunConfig& rc) const {
    if (seed) rc.seed = *seed;
    if (batch_size) rc.train.batch_size = *batch_size;
    if (lm_init_epochs) rc.train.lm_init_epochs = *lm_init_epochs;
    if (phase_a_max_epochs) rc.train.phase_a_max_epochs = *phase_a_max_epochs;
    if (phase_b_epochs) rc.train.phase_b_epochs = *phase_b_epochs;
    if (speech_epochs) rc.train.speech_epochs = *speech_epochs;
    if (text_epochs) rc.train.text_epochs = *text_epochs;
    if (eval_interval) rc.train.eval_interval = *eval_interval;
    if (patience) rc.train.patience = *patience;
    if (pretrain_lr) rc.pretrain_opt.base_lr = *pretrain_lr;
    if (pretrain_warmup) rc.pretrain_opt.warmup_steps = *pretrain_warmup;
    if (text_lr) rc.text_ft_opt.base_lr = *text_lr;
    if (text_warmup) rc.text_ft_opt.warmup_steps = *text_warmup;
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--seed", f.seed, "Root RNG seed");
  cmd->add_option("--batch-size", f.batch_size, "Training batch size");
  cmd->add_option("--lm-init-epochs", f.lm_init_epochs,
                  "Base-LM warmstart epochs");
  cmd->add_option("--phase-a-max-epochs", f.phase_a_max_epochs,
                  "Projector-only epoch cap");
  cmd->add_option("--phase-b-epochs", f.phase_b_epochs,
                  "Projector+adapter epochs");
  cmd->add_option("--speech-epochs", f.speech_epochs,
                  "Speech fine-tuning epochs");
  cmd->add_option("--text-epochs", f.text_epochs,
                  "Text fine-tuning epochs");
  cmd->add_option("--eval-interval", f.eval_interval,
                  "Monitor cadence in text fine-tuning steps");
  cmd->add_option("--patience", f.patience,
                  "Monitor evals without a new best before stopping; 0 off");
  cmd->add_option("--pretrain-lr", f.pretrain_lr,
                  "Pretraining base learning rate");
  cmd->add_option("--pretrain-warmup", f.pretrain_warmup,
                  "Pretraining warmup steps");
  cmd->add_option("--text-lr", f.text_lr,
                  "Text fine-tuning base learning rate");
  cmd->add_option("--text-warmup", f.text_warmup,
                  "Text fine-tuning warmup steps");
}

// ----- pretrain -------------------------------------------------------------

struct PretrainArgs {
  std::string data;
  std::string out;
  std::string config;
  TrainFlags flags;
};

int cmd_pretrain(const PretrainArgs& a) {
  RunConfig rc = patch_run_config(RunConfig::desk_preset(), a.config);
  a.flags.apply(rc);
  rc.validate();

  const std::string out = apply_out_root(a.out);
  fs::create_directories(out);

  std::vector<Utterance> train = load_split(a.data, "source/train.jsonl",
                                            rc.model);
  std::vector<Utterance> dev = load_split(a.data, "source/dev.jsonl",
                                          rc.model);

  Model<Scalar> model(rc.model, rc.lora, rc.seed);
  PretrainResult res = pretrain_source(model, train, dev, rc, out);
  write_config_echo(out, rc, "pretrain", "-");

  std::cout << "pretrained on " << train.size() << " source utterances ("
            << res.total_steps << " steps)\n"
            << "  lm-init best dev nll " << res.lm_init.best_dev
            << "\n  phase-a best dev nll " << res.phase_a.best_dev
            << "\n  phase-b best dev nll " << res.phase_b.best_dev << "\n"
            << "checkpoint: " << join_path(out, kPretrainCkpt) << "\n";
  return 0;
}

// ----- adapt ----------------------------------------------------------------

struct AdaptArgs {
  std::string data;
  std::string pretrained;
  std::string out;
  std::string config;
  std::string strategy;
  std::string monitor_set;
  TrainFlags flags;
};

int cmd_adapt(const AdaptArgs& a) {
  Checkpoint<Scalar> ck = load_ckpt_or_explain(a.pretrained, "pretrain");
  RunConfig rc = patch_run_config(config_from_ckpt(ck, a.pretrained),
                                  a.config);
  a.flags.apply(rc);
  rc.validate();

  const bool needs_monitor =
      a.strategy == "text" || a.strategy == "text-then-speech";
  if (needs_monitor && a.monitor_set.empty())
    throw UsageError(cat("adapt --strategy ", a.strategy,
                         " requires --monitor-set: the alignment monitor "
                         "needs a paired dev manifest"));

  const std::string out = apply_out_root(a.out);
  fs::create_directories(out);

  Model<Scalar> model = model_from_ckpt(ck, rc);

  std::vector<Utterance> dev;
  if (needs_monitor) {
    if (!fs::exists(a.monitor_set))
      throw DataError(cat("monitor set '", a.monitor_set, "' not found"));
    dev = read_manifest(a.monitor_set, rc.model);
  } else {
    dev = load_split(a.data, "target/dev.jsonl", rc.model);
  }

  if (a.strategy == "text") {
    const std::string corpus = split_path(a.data, kTextTrainRel);
    if (!fs::exists(corpus))
      throw DataError(cat("text corpus '", corpus,
                          "' not found; run `slmadapt generate` first"));
    std::vector<TextSample> text = read_text_corpus(corpus, rc.model,
                                                    "target");
    TextAdaptResult res = adapt_text_only(model, text, dev, rc, out);
    write_config_echo(out, rc, "adapt", "text");
    std::cout << "text adaptation: " << res.steps << " steps, best at step "
              << res.best_step << " (text fraction "
              << res.report.text_fraction_at_best << ")\n"
              << "  best dev nll " << res.report.best_loss << ", final "
              << res.report.final_loss
              << (res.report.degraded ? " (degraded past best)" : "") << "\n"
              << "checkpoint: " << join_path(out, kAdaptTextCkpt) << "\n"
              << "curve: " << join_path(out, kCurveCsv) << "\n";
    return 0;
  }

  std::vector<Utterance> speech = load_split(
      a.data, "target/speech_train.jsonl", rc.model);
  if (a.strategy == "speech") {
    SpeechAdaptResult res = adapt_speech(model, speech, dev, rc, out);
    write_config_echo(out, rc, "adapt", "speech");
    std::cout << "speech adaptation: best dev nll " << res.phase.best_dev
              << " at epoch " << res.phase.best_epoch << "\n"
              << "checkpoint: " << join_path(out, kAdaptSpeechCkpt) << "\n";
    return 0;
  }
  if (a.strategy == "text-then-speech") {
    const std::string corpus = split_path(a.data, kTextTrainRel);
    if (!fs::exists(corpus))
      throw DataError(cat("text corpus '", corpus,
                          "' not found; run `slmadapt generate` first"));
    std::vector<TextSample> text = read_text_corpus(corpus, rc.model,
                                                    "target");
    TextThenSpeechResult res =
        adapt_text_then_speech(model, text, speech, dev, rc, out);
    write_config_echo(out, rc, "adapt", "text-then-speech");
    std::cout << "text phase: best at step " << res.text.best_step << " of "
              << res.text.steps << "\n"
              << "speech phase: best dev nll " << res.speech.phase.best_dev
              << " at epoch " << res.speech.phase.best_epoch << "\n"
              << "checkpoint: " << join_path(out, kAdaptComposedCkpt) << "\n";
    return 0;
  }
  throw UsageError(cat("unknown strategy '", a.strategy,
                       "'; expected text, speech, or text-then-speech"));
}

// ----- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string sets = "src_test,tgt_test";
};

int cmd_eval(const EvalArgs& a) {
  Checkpoint<Scalar> ck = load_ckpt_or_explain(a.ckpt, "pretrain or adapt");
  RunConfig rc = config_from_ckpt(ck, a.ckpt);
  Model<Scalar> model = model_from_ckpt(ck, rc);

  std::vector<std::string> names;
  for (std::size_t b = 0; b < a.sets.size();) {
    std::size_t e = a.sets.find(',', b);
    if (e == std::string::npos) e = a.sets.size();
    if (e > b) names.push_back(a.sets.substr(b, e - b));
    b = e + 1;
  }
  if (names.empty()) throw UsageError("eval: no sets requested");

  std::vector<std::vector<Utterance>> storage;
  storage.reserve(names.size());
  for (const std::string& n : names)
    storage.push_back(load_split(a.data, split_relpath(n), rc.model));
  std::vector<std::pair<std::string, const std::vector<Utterance>*>> sets;
  for (std::size_t i = 0; i < names.size(); ++i)
    sets.emplace_back(names[i], &storage[i]);

  const std::string model_id = fs::path(a.ckpt).stem().string();
  const std::string strategy =
      ck.config_echo.value("strategy", std::string("-"));
  DomainReport rep = cross_domain_report(model, sets,
                                         /*adapters_active=*/true, model_id,
                                         strategy);
  std::cout << format_report_table(rep);
  if (!a.out.empty()) {
    const std::string out = apply_out_root(a.out);
    fs::create_directories(out);
    write_report_csv(join_path(out, kReportCsv), rep);
    std::cout << "report: " << join_path(out, kReportCsv) << "\n";
  }
  return 0;
}

// ----- report ---------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  std::vector<DomainReport> reps;
  for (const std::string& in : a.inputs) {
    std::string path = in;
    if (fs::is_directory(path)) path = join_path(path, kReportCsv);
    if (!fs::exists(path))
      throw DataError(cat("report '", path,
                          "' not found; run `slmadapt eval` first"));
    reps.push_back(read_report_csv(path));
  }
  const std::string table = format_comparison_table(reps);
  std::cout << table;
  if (!a.out.empty()) {
    const std::string out = apply_out_root(a.out);
    fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw DataError(cat("cannot write '", out, "'"));
    os << table;
  }
  return 0;
}

// ----- plot -----------------------------------------------------------------

struct PlotArgs {
  std::string curve;
  std::string out;
  std::string metric = "loss";
};

int cmd_plot(const PlotArgs& a) {
  if (!fs::exists(a.curve))
    throw DataError(cat("curve '", a.curve,
                        "' not found; run `slmadapt adapt --strategy text` "
                        "first"));
  AlignmentCurve curve = read_curve_csv(a.curve);
  const auto& recs = curve.records();

  const bool use_acc = a.metric == "acc";
  if (!use_acc && a.metric != "loss")
    throw UsageError(cat("unknown metric '", a.metric,
                         "'; expected loss or acc"));
  const auto value = [&](const EvalRecord& r) {
    return use_acc ? r.token_acc : r.asr_dev_loss;
  };

  double lo = value(recs.front()), hi = lo;
  for (const EvalRecord& r : recs) {
    lo = std::min(lo, value(r));
    hi = std::max(hi, value(r));
  }
  const double pad = (hi - lo) < 1e-12 ? 1e-3 : 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double s0 = static_cast<double>(recs.front().step);
  const double s1 = static_cast<double>(recs.back().step);
  const double span = s1 - s0 < 1.0 ? 1.0 : s1 - s0;

  constexpr double kW = 760, kH = 480;
  constexpr double kL = 80, kR = 740, kT = 40, kB = 430;
  const auto sx = [&](double step) {
    return kL + (step - s0) / span * (kR - kL);
  };
  const auto sy = [&](double v) {
    return kB - (v - lo) / (hi - lo) * (kB - kT);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << " " << kH
      << "\">\n"
      << "<rect width=\"" << kW << "\" height=\"" << kH
      << "\" fill=\"white\"/>\n"
      << "<line x1=\"" << kL << "\" y1=\"" << kB << "\" x2=\"" << kR
      << "\" y2=\"" << kB << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL
      << "\" y2=\"" << kB << "\" stroke=\"black\"/>\n";
  svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" "
         "points=\"";
  for (const EvalRecord& r : recs)
    svg << sx(static_cast<double>(r.step)) << "," << sy(value(r)) << " ";
  svg << "\"/>\n";

  const EvalRecord& best = curve.best();
  svg << "<circle cx=\"" << sx(static_cast<double>(best.step)) << "\" cy=\""
      << sy(value(best)) << "\" r=\"5\" fill=\"#d62728\"/>\n";

  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", lo + pad);
  svg << "<text x=\"" << kL - 8 << "\" y=\"" << sy(lo + pad) + 4
      << "\" text-anchor=\"end\" font-size=\"13\">" << buf << "</text>\n";
  std::snprintf(buf, sizeof buf, "%.4g", hi - pad);
  svg << "<text x=\"" << kL - 8 << "\" y=\"" << sy(hi - pad) + 4
      << "\" text-anchor=\"end\" font-size=\"13\">" << buf << "</text>\n";
  svg << "<text x=\"" << kL << "\" y=\"" << kB + 20
      << "\" font-size=\"13\">" << recs.front().step << "</text>\n"
      << "<text x=\"" << kR << "\" y=\"" << kB + 20
      << "\" text-anchor=\"end\" font-size=\"13\">" << recs.back().step
      << "</text>\n"
      << "<text x=\"" << (kL + kR) / 2 << "\" y=\"" << kB + 36
      << "\" text-anchor=\"middle\" font-size=\"14\">step</text>\n"
      << "<text x=\"" << (kL + kR) / 2 << "\" y=\"" << kT - 14
      << "\" text-anchor=\"middle\" font-size=\"15\">"
      << (use_acc ? "token accuracy" : "recognizer dev loss")
      << " (best at step " << best.step << ")</text>\n";
  svg << "</svg>\n";

  const std::string out = apply_out_root(a.out);
  fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw DataError(cat("cannot write '", out, "'"));
  os << svg.str();
  std::cout << "plot: " << out << "\n";
  return 0;
}

// ----- main -----------------------------------------------------------------

int run(int argc, char** argv) {
  if (const char* t = std::getenv("SLMADAPT_THREADS")) {
    const int n = std::atoi(t);
    if (n > 0) Eigen::setNbThreads(n);
  }

  CLI::App app{"Text-only domain adaptation workbench for a small "
               "speech-recognizing language model"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* cgen = app.add_subcommand(
      "generate", "Render the two-domain synthetic benchmark to disk");
  cgen->add_option("--out", gen.out, "Output directory")->required();
  cgen->add_option("--config", gen.config, "JSON config file");
  cgen->add_flag("--force", gen.force, "Overwrite an existing benchmark");
  cgen->add_option("--seed", gen.seed, "Root RNG seed");
  cgen->add_option("--bench-seed", gen.bench_seed,
                   "Benchmark seed (default derived from --seed)");
  cgen->add_option("--src-train", gen.src_train, "Source train sentences");
  cgen->add_option("--src-dev", gen.src_dev, "Source dev sentences");
  cgen->add_option("--src-test", gen.src_test, "Source test sentences");
  cgen->add_option("--tgt-text-train", gen.tgt_text_train,
                   "Target text train sentences");
  cgen->add_option("--tgt-speech-train", gen.tgt_speech_train,
                   "Target speech train sentences");
  cgen->add_option("--tgt-dev", gen.tgt_dev, "Target dev sentences");
  cgen->add_option("--tgt-test", gen.tgt_test, "Target test sentences");
  cgen->add_option("--noise-sigma", gen.noise_sigma,
                   "Per-frame feature noise");
  cgen->add_option("--accent-shift", gen.accent_shift,
                   "Target prototype shift in [0,1)");
  cgen->add_option("--specialist-rate", gen.specialist_rate,
                   "Domain-specialist word rate");
  cgen->add_option("--min-words", gen.min_words, "Minimum sentence length");
  cgen->add_option("--max-words", gen.max_words, "Maximum sentence length");
  cgen->add_option("--fpc-min", gen.fpc_min, "Minimum frames per character");
  cgen->add_option("--fpc-max", gen.fpc_max, "Maximum frames per character");

  PretrainArgs pre;
  CLI::App* cpre = app.add_subcommand(
      "pretrain", "Stage 1: source-domain pretraining");
  cpre->add_option("--data", pre.data, "Benchmark directory")->required();
  cpre->add_option("--out", pre.out, "Run output directory")->required();
  cpre->add_option("--config", pre.config, "JSON config file");
  add_train_flags(cpre, pre.flags);

  AdaptArgs ad;
  CLI::App* cad = app.add_subcommand(
      "adapt", "Stage 2: adapt a pretrained recognizer to the target domain");
  cad->add_option("--strategy", ad.strategy,
                  "text | speech | text-then-speech")->required();
  cad->add_option("--data", ad.data, "Benchmark directory")->required();
  cad->add_option("--pretrained", ad.pretrained,
                  "Stage-1 checkpoint path")->required();
  cad->add_option("--out", ad.out, "Run output directory")->required();
  cad->add_option("--config", ad.config, "JSON config file");
  cad->add_option("--monitor-set", ad.monitor_set,
                  "Paired dev manifest for the alignment monitor "
                  "(required for text strategies)");
  add_train_flags(cad, ad.flags);

  EvalArgs ev;
  CLI::App* cev = app.add_subcommand(
      "eval", "Decode and score a checkpoint on benchmark test sets");
  cev->add_option("--ckpt", ev.ckpt, "Checkpoint to score")->required();
  cev->add_option("--data", ev.data, "Benchmark directory")->required();
  cev->add_option("--out", ev.out, "Directory for report.csv (optional)");
  cev->add_option("--sets", ev.sets,
                  "Comma-separated evaluation sets (default "
                  "src_test,tgt_test)");

  ReportArgs rep;
  CLI::App* crep = app.add_subcommand(
      "report", "Combine per-arm report.csv files into one comparison");
  crep->add_option("inputs", rep.inputs,
                   "report.csv files or run directories")->required();
  crep->add_option("--out", rep.out, "Write the table here too");

  PlotArgs plot;
  CLI::App* cplot = app.add_subcommand(
      "plot", "Render an alignment curve CSV as an SVG chart");
  cplot->add_option("--curve", plot.curve, "alignment_curve.csv")->required();
  cplot->add_option("--out", plot.out, "Output SVG path")->required();
  cplot->add_option("--metric", plot.metric, "loss | acc");

  CLI11_PARSE(app, argc, argv);

  if (cgen->parsed()) return cmd_generate(gen);
  if (cpre->parsed()) return cmd_pretrain(pre);
  if (cad->parsed()) return cmd_adapt(ad);
  if (cev->parsed()) return cmd_eval(ev);
  if (crep->parsed()) return cmd_report(rep);
  if (cplot->parsed()) return cmd_plot(plot);
  return 1;
}

}  // namespace
}  // namespace slmadapt

int main(int argc, char** argv) {
  try {
    return slmadapt::run(argc, argv);
  } catch (const slmadapt::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const slmadapt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const slmadapt::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
