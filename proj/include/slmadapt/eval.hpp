// slmadapt/eval.hpp

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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slmadapt/common.hpp"
#include "slmadapt/model.hpp"
#include "slmadapt/types.hpp"
#include "slmadapt/wer.hpp"

namespace slmadapt {

// ---------------------------------------------------------------------------
// Cross-domain WER report: one WerBreakdown per named evaluation set,
// tagged with the model it scored and the adaptation strategy behind it.
// ---------------------------------------------------------------------------

struct DomainReport {
  std::string model_id;
  std::string strategy = "-";
  std::vector<std::pair<std::string, WerBreakdown>> sets;

  void add(const std::string& name, const WerBreakdown& b) {
    for (const auto& [n, unused] : sets)
      if (n == name)
        throw UsageError(cat("report: duplicate set name '", name, "'"));
    sets.emplace_back(name, b);
  }

  const WerBreakdown& at(const std::string& name) const {
    for (const auto& [n, b] : sets)
      if (n == name) return b;
    throw UsageError(cat("report: no set named '", name, "'"));
  }

  bool has(const std::string& name) const {
    for (const auto& [n, unused] : sets)
      if (n == name) return true;
    return false;
  }
};

/// Greedily transcribes every utterance in input order. Decode failures
/// carry the utterance id.
template <typename S>
std::vector<std::string> transcribe_set(const Model<S>& model,
                                        const std::vector<Utterance>& utts,
                                        bool adapters_active) {
  std::vector<std::string> hyps;
  hyps.reserve(utts.size());
  for (const Utterance& u : utts) {
    try {
      hyps.push_back(model.transcribe(u.features, adapters_active));
    } catch (const std::exception& e) {
      throw DataError(cat("decode '", u.id, "': ", e.what()));
    }
  }
  return hyps;
}

template <typename S>
WerBreakdown score_set(const Model<S>& model,
                       const std::vector<Utterance>& utts,
                       bool adapters_active,
                       std::vector<std::string>* hyps_out = nullptr) {
  std::vector<std::string> hyps = transcribe_set(model, utts, adapters_active);
  std::vector<std::string> refs;
  refs.reserve(utts.size());
  for (const Utterance& u : utts) refs.push_back(u.raw_text);
  WerBreakdown b = corpus_wer(refs, hyps);
  if (hyps_out) *hyps_out = std::move(hyps);
  return b;
}

/// Decodes and scores every named set against one model. Set order is
/// preserved into the report.
template <typename S>
DomainReport cross_domain_report(
    const Model<S>& model,
    const std::vector<std::pair<std::string, const std::vector<Utterance>*>>&
        eval_sets,
    bool adapters_active, const std::string& model_id,
    const std::string& strategy) {
  if (eval_sets.empty())
    throw UsageError("cross_domain_report: no evaluation sets");
  DomainReport rep;
  rep.model_id = model_id;
  rep.strategy = strategy;
  for (const auto& [name, utts] : eval_sets) {
    if (utts == nullptr || utts->empty())
      throw UsageError(cat("cross_domain_report: set '", name, "' is empty"));
    rep.add(name, score_set(model, *utts, adapters_active));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization: line-delimited records with a fixed column order, plus a
// fixed-width text table.
// ---------------------------------------------------------------------------

inline const char* report_csv_header() {
  return "set,n_ref,wer,sub_rate,del_rate,ins_rate";
}

inline void write_report_csv(const std::string& path,
                             const DomainReport& rep) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(cat("report: cannot write '", path, "'"));
  os << "# model=" << rep.model_id << " strategy=" << rep.strategy << "\n";
  os << report_csv_header() << "\n";
  os << std::setprecision(17);
  for (const auto& [name, b] : rep.sets)
    os << name << ',' << b.ref_words << ',' << b.wer() << ',' << b.sub_rate()
       << ',' << b.del_rate() << ',' << b.ins_rate() << "\n";
  if (!os) throw DataError(cat("report: write failed for '", path, "'"));
}

inline DomainReport read_report_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(cat("report: cannot open '", path, "'"));
  DomainReport rep;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# model=", 0) != 0)
    throw DataError(cat("report: '", path, "' missing model header"));
  {
    const std::string body = line.substr(8);
    const std::size_t sep = body.rfind(" strategy=");
    if (sep == std::string::npos)
      throw DataError(cat("report: '", path, "' missing strategy header"));
    rep.model_id = body.substr(0, sep);
    rep.strategy = body.substr(sep + 10);
  }
  if (!std::getline(is, line) || line != report_csv_header())
    throw DataError(cat("report: '", path, "' missing expected header"));
  int lineno = 2;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name;
    if (!std::getline(ss, name, ','))
      throw DataError(cat("report ", path, ":", lineno, ": malformed row"));
    long long n_ref = 0;
    double wer = 0, sub = 0, del = 0, ins = 0;
    char c = 0;
    if (!(ss >> n_ref >> c >> wer >> c >> sub >> c >> del >> c >> ins))
      throw DataError(cat("report ", path, ":", lineno, ": malformed row"));
    WerBreakdown b;
    b.ref_words = n_ref;
    b.counts.subs = static_cast<std::int64_t>(
        std::llround(sub * static_cast<double>(n_ref)));
    b.counts.dels = static_cast<std::int64_t>(
        std::llround(del * static_cast<double>(n_ref)));
    b.counts.inss = static_cast<std::int64_t>(
        std::llround(ins * static_cast<double>(n_ref)));
    rep.add(name, b);
  }
  if (rep.sets.empty())
    throw DataError(cat("report: '", path, "' has no rows"));
  return rep;
}

namespace detail {

inline std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * x);
  return buf;
}

inline void pad_to(std::string& s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
}

inline std::string format_rows(const std::vector<std::vector<std::string>>&
                                   rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i)
      width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::string cell = row[i];
      pad_to(cell, width[i]);
      if (i) line += "  ";
      line += cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line;
    out += "\n";
  }
  return out;
}

}  // namespace detail

/// One model's per-set breakdown as a fixed-width table; rates in percent.
inline std::string format_report_table(const DomainReport& rep) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"set", "n_ref", "wer%", "sub%", "del%", "ins%"});
  for (const auto& [name, b] : rep.sets)
    rows.push_back({name, std::to_string(b.ref_words), detail::pct(b.wer()),
                    detail::pct(b.sub_rate()), detail::pct(b.del_rate()),
                    detail::pct(b.ins_rate())});
  return cat("model=", rep.model_id, " strategy=", rep.strategy, "\n",
             detail::format_rows(rows));
}

/// Several arms side by side: one row per model, one WER column per set,
/// set order taken from the first report that mentions each set.
inline std::string format_comparison_table(
    const std::vector<DomainReport>& reps) {
  if (reps.empty()) throw UsageError("comparison table: no reports");
  std::vector<std::string> set_names;
  for (const DomainReport& rep : reps)
    for (const auto& [name, unused] : rep.sets) {
      bool seen = false;
      for (const auto& s : set_names)
        if (s == name) seen = true;
      if (!seen) set_names.push_back(name);
    }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"strategy"};
  for (const auto& s : set_names) header.push_back(cat("wer% ", s));
  rows.push_back(header);
  for (const DomainReport& rep : reps) {
    std::vector<std::string> row = {rep.strategy};
    for (const auto& s : set_names)
      row.push_back(rep.has(s) ? detail::pct(rep.at(s).wer()) : "-");
    rows.push_back(row);
  }
  return detail::format_rows(rows);
}

}  // namespace slmadapt
