// slmadapt/monitor.hpp

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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "slmadapt/common.hpp"
#include "slmadapt/model.hpp"
#include "slmadapt/types.hpp"

namespace slmadapt {

// ---------------------------------------------------------------------------
// Records and curve
// ---------------------------------------------------------------------------

/// One periodic cross-modal evaluation during text-only fine-tuning: the
/// recognizer is scored on paired dev data with everything frozen except
/// the adapters as they stand at this step.
struct EvalRecord {
  std::int64_t step = 0;
  double lm_train_loss = 0.0;
  double asr_dev_loss = 0.0;
  double ppl = 0.0;  // exp(asr_dev_loss)
  double token_acc = 0.0;
  double text_fraction_consumed = 0.0;
};

/// Eval records in step order plus the running optimum.
class AlignmentCurve {
 public:
  void add(const EvalRecord& rec) {
    if (!records_.empty() && rec.step <= records_.back().step)
      throw UsageError(cat("alignment curve: step ", rec.step,
                           " not after ", records_.back().step));
    records_.push_back(rec);
    if (best_index_ < 0 ||
        rec.asr_dev_loss < records_[static_cast<std::size_t>(best_index_)]
                               .asr_dev_loss)
      best_index_ = static_cast<int>(records_.size()) - 1;
  }

  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  const std::vector<EvalRecord>& records() const { return records_; }

  /// Index of the minimum asr_dev_loss; ties resolve to the earliest record.
  int best_index() const {
    if (records_.empty()) throw UsageError("alignment curve: no records");
    return best_index_;
  }
  const EvalRecord& best() const {
    return records_[static_cast<std::size_t>(best_index())];
  }
  const EvalRecord& back() const {
    if (records_.empty()) throw UsageError("alignment curve: no records");
    return records_.back();
  }

 private:
  std::vector<EvalRecord> records_;
  int best_index_ = -1;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Scores the recognizer on paired dev data: teacher-forced mean NLL,
/// perplexity, and token accuracy, with dropout off and adapters active.
/// The model is read-only for the call; nothing in it changes.
template <typename S>
EvalRecord evaluate_alignment(const Model<S>& model,
                              const std::vector<const Utterance*>& dev) {
  if (dev.empty()) throw UsageError("evaluate_alignment: empty dev set");
  EvalMetrics m = model.asr_eval(dev, /*adapters_active=*/true);
  EvalRecord rec;
  rec.asr_dev_loss = m.mean_nll();
  rec.ppl = m.perplexity();
  rec.token_acc = m.token_accuracy();
  return rec;
}

// ---------------------------------------------------------------------------
// Degradation analysis
// ---------------------------------------------------------------------------

struct DegradationReport {
  int best_index = 0;
  std::int64_t best_step = 0;
  double best_loss = 0.0;
  double final_loss = 0.0;
  double text_fraction_at_best = 0.0;
  bool degraded = false;
  double slope_after_best = 0.0;  // d(asr_dev_loss)/d(step), least squares
};

constexpr double kDegradationRelThreshold = 0.02;

/// Summarizes a finished curve: where the optimum sat, whether the final
/// model is worse than the optimum beyond the relative threshold, and how
/// fast the dev loss moved after the optimum.
inline DegradationReport degradation_report(
    const AlignmentCurve& curve,
    double rel_threshold = kDegradationRelThreshold) {
  if (curve.empty()) throw UsageError("degradation_report: empty curve");
  const auto& recs = curve.records();
  DegradationReport rep;
  rep.best_index = curve.best_index();
  const EvalRecord& best = curve.best();
  rep.best_step = best.step;
  rep.best_loss = best.asr_dev_loss;
  rep.final_loss = recs.back().asr_dev_loss;
  rep.text_fraction_at_best = best.text_fraction_consumed;
  rep.degraded = rep.final_loss > rep.best_loss * (1.0 + rel_threshold);

  const std::size_t b = static_cast<std::size_t>(rep.best_index);
  const std::size_t n = recs.size() - b;
  if (n >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = b; i < recs.size(); ++i) {
      const double x = static_cast<double>(recs[i].step);
      const double y = recs[i].asr_dev_loss;
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double dn = static_cast<double>(n);
    const double denom = dn * sxx - sx * sx;
    rep.slope_after_best = denom == 0.0 ? 0.0 : (dn * sxy - sx * sy) / denom;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Curve CSV
// ---------------------------------------------------------------------------

inline const char* curve_csv_header() {
  return "step,lm_train_loss,asr_dev_loss,ppl,token_acc,"
         "text_fraction_consumed";
}

inline void write_curve_csv(const std::string& path,
                            const AlignmentCurve& curve) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(cat("curve: cannot write '", path, "'"));
  os << curve_csv_header() << "\n";
  os << std::setprecision(17);
  for (const EvalRecord& r : curve.records())
    os << r.step << ',' << r.lm_train_loss << ',' << r.asr_dev_loss << ','
       << r.ppl << ',' << r.token_acc << ',' << r.text_fraction_consumed
       << "\n";
  if (!os) throw DataError(cat("curve: write failed for '", path, "'"));
}

inline AlignmentCurve read_curve_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(cat("curve: cannot open '", path, "'"));
  std::string line;
  if (!std::getline(is, line) || line != curve_csv_header())
    throw DataError(cat("curve: '", path, "' missing expected header"));
  AlignmentCurve curve;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    EvalRecord r;
    char c = 0;
    if (!(ss >> r.step >> c >> r.lm_train_loss >> c >> r.asr_dev_loss >> c >>
          r.ppl >> c >> r.token_acc >> c >> r.text_fraction_consumed))
      throw DataError(cat("curve ", path, ":", lineno, ": malformed row"));
    curve.add(r);
  }
  if (curve.empty()) throw DataError(cat("curve: '", path, "' has no rows"));
  return curve;
}

}  // namespace slmadapt
