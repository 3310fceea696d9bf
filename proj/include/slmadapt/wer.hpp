// slmadapt/wer.hpp

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
#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "slmadapt/common.hpp"

namespace slmadapt {

// ---------------------------------------------------------------------------
// Text normalization
// ---------------------------------------------------------------------------

/// Lowercases, collapses whitespace, and strips edge punctuation from each
/// word. Words reduced to nothing are dropped.
inline std::vector<std::string> normalize_words(const std::string& text) {
  auto is_edge_punct = [](char c) {
    return c == '.' || c == ',' || c == ':' || c == '\'' || c == '-';
  };
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&]() {
    std::size_t b = 0;
    std::size_t e = cur.size();
    while (b < e && is_edge_punct(cur[b])) ++b;
    while (e > b && is_edge_punct(cur[e - 1])) --e;
    if (e > b) words.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return words;
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

enum class EditOp { Match, Sub, Del, Ins };

struct EditCounts {
  std::int64_t matches = 0;
  std::int64_t subs = 0;
  std::int64_t dels = 0;
  std::int64_t inss = 0;

  std::int64_t edits() const { return subs + dels + inss; }

  EditCounts& operator+=(const EditCounts& o) {
    matches += o.matches;
    subs += o.subs;
    dels += o.dels;
    inss += o.inss;
    return *this;
  }
};

struct AlignResult {
  EditCounts counts;
  std::vector<EditOp> ops;  // in reference order
};

/// Levenshtein alignment with unit costs. Among minimum-cost paths the
/// backtrace fixes the one with the most diagonal moves, breaking remaining
/// ties in the order match, substitution, deletion, insertion. Maximizing
/// diagonal moves pins down the operation counts: every minimum-cost path
/// with the same number of diagonal moves has identical match, substitution,
/// deletion, and insertion totals, and that number is invariant under
/// swapping the two inputs. Swapping therefore exchanges deletions with
/// insertions and preserves substitutions exactly.
inline AlignResult align_words(const std::vector<std::string>& ref,
                               const std::vector<std::string>& hyp) {
  const int r = static_cast<int>(ref.size());
  const int h = static_cast<int>(hyp.size());
  const int w = h + 1;
  std::vector<std::int32_t> cost(static_cast<std::size_t>((r + 1) * w));
  std::vector<std::int32_t> diag(static_cast<std::size_t>((r + 1) * w));
  auto at = [w](int i, int j) { return static_cast<std::size_t>(i * w + j); };

  for (int j = 0; j <= h; ++j) {
    cost[at(0, j)] = j;
    diag[at(0, j)] = 0;
  }
  for (int i = 1; i <= r; ++i) {
    cost[at(i, 0)] = i;
    diag[at(i, 0)] = 0;
    for (int j = 1; j <= h; ++j) {
      const bool eq = ref[static_cast<std::size_t>(i - 1)] ==
                      hyp[static_cast<std::size_t>(j - 1)];
      const std::int32_t cd = cost[at(i - 1, j - 1)] + (eq ? 0 : 1);
      const std::int32_t cu = cost[at(i - 1, j)] + 1;
      const std::int32_t cl = cost[at(i, j - 1)] + 1;
      std::int32_t c = std::min(cd, std::min(cu, cl));
      std::int32_t d = -1;
      if (cd == c) d = std::max(d, diag[at(i - 1, j - 1)] + 1);
      if (cu == c) d = std::max(d, diag[at(i - 1, j)]);
      if (cl == c) d = std::max(d, diag[at(i, j - 1)]);
      cost[at(i, j)] = c;
      diag[at(i, j)] = d;
    }
  }

  AlignResult res;
  int i = r;
  int j = h;
  while (i > 0 || j > 0) {
    const std::int32_t c = cost[at(i, j)];
    const std::int32_t d = diag[at(i, j)];
    if (i > 0 && j > 0) {
      const bool eq = ref[static_cast<std::size_t>(i - 1)] ==
                      hyp[static_cast<std::size_t>(j - 1)];
      if (cost[at(i - 1, j - 1)] + (eq ? 0 : 1) == c &&
          diag[at(i - 1, j - 1)] + 1 == d) {
        res.ops.push_back(eq ? EditOp::Match : EditOp::Sub);
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && cost[at(i - 1, j)] + 1 == c && diag[at(i - 1, j)] == d) {
      res.ops.push_back(EditOp::Del);
      --i;
      continue;
    }
    res.ops.push_back(EditOp::Ins);
    --j;
  }
  std::reverse(res.ops.begin(), res.ops.end());
  for (EditOp op : res.ops) switch (op) {
      case EditOp::Match: ++res.counts.matches; break;
      case EditOp::Sub: ++res.counts.subs; break;
      case EditOp::Del: ++res.counts.dels; break;
      case EditOp::Ins: ++res.counts.inss; break;
    }
  return res;
}

// ---------------------------------------------------------------------------
// Corpus-level rates
// ---------------------------------------------------------------------------

/// Aggregated error rates over one evaluation set. All rates share the same
/// denominator, the total reference word count, so wer() always equals
/// sub_rate() + del_rate() + ins_rate().
struct WerBreakdown {
  EditCounts counts;
  std::int64_t ref_words = 0;
  std::int64_t num_utts = 0;

  double wer() const { return ratio(counts.edits()); }
  double sub_rate() const { return ratio(counts.subs); }
  double del_rate() const { return ratio(counts.dels); }
  double ins_rate() const { return ratio(counts.inss); }

 private:
  double ratio(std::int64_t n) const {
    if (ref_words == 0)
      throw UsageError("wer: reference set has no scored words");
    return static_cast<double>(n) / static_cast<double>(ref_words);
  }
};

/// Corpus WER: per-pair alignments are summed before dividing, so long
/// utterances weigh more than short ones.
inline WerBreakdown corpus_wer(const std::vector<std::string>& refs,
                               const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size())
    throw UsageError(cat("corpus_wer: ", refs.size(), " references vs ",
                         hyps.size(), " hypotheses"));
  if (refs.empty()) throw UsageError("corpus_wer: empty reference set");
  WerBreakdown out;
  for (std::size_t n = 0; n < refs.size(); ++n) {
    std::vector<std::string> rw = normalize_words(refs[n]);
    std::vector<std::string> hw = normalize_words(hyps[n]);
    out.counts += align_words(rw, hw).counts;
    out.ref_words += static_cast<std::int64_t>(rw.size());
    out.num_utts += 1;
  }
  return out;
}

/// Single-pair convenience form.
inline WerBreakdown pair_wer(const std::string& ref, const std::string& hyp) {
  return corpus_wer({ref}, {hyp});
}

}  // namespace slmadapt
