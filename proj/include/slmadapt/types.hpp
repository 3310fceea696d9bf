// slmadapt/types.hpp

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

#include <cstdint>
#include <string>

#include "slmadapt/common.hpp"
#include "slmadapt/vocab.hpp"

namespace slmadapt {

/// Acoustic input: a fixed-size padded frame matrix plus the count of
/// non-padding frames. The padding region is all-zero.
struct FeatureSequence {
  Mat<float> frames;  // (num_frames, feature_dim)
  int valid_len = 0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int feature_dim() const { return static_cast<int>(frames.cols()); }

  void validate() const {
    if (valid_len < 0 || valid_len > num_frames())
      throw UsageError(cat("feature sequence: valid_len ", valid_len,
                           " out of range for ", num_frames(), " frames"));
    if (valid_len < num_frames() &&
        frames.bottomRows(num_frames() - valid_len).cwiseAbs().sum() != 0.0f)
      throw UsageError("feature sequence: padding region not all-zero");
  }
};

/// Paired sample: acoustic features plus reference transcript tokens.
struct Utterance {
  std::string id;
  FeatureSequence features;
  TokenSeq text;        // target form: ends with EOS
  std::string raw_text; // original transcript, used for WER scoring
  std::string domain_tag;
  std::uint64_t render_seed = 0;  // per-utterance stream for re-rendering

  void validate() const {
    if (text.empty()) throw UsageError(cat("utterance ", id, ": empty text"));
    if (features.valid_len < 1)
      throw UsageError(cat("utterance ", id, ": no valid frames"));
  }
};

/// Transcript-only sample for text adaptation.
struct TextSample {
  std::string id;
  TokenSeq text;  // target form: ends with EOS
  std::string raw_text;
  std::string domain_tag;

  void validate() const {
    if (text.empty()) throw UsageError(cat("text sample ", id, ": empty text"));
  }
};

/// Leading length of `target` before the trailing PAD run, after checking
/// the training-target invariants: tokens in range, PAD only as a trailing
/// run, and the last real token is EOS.
inline int target_effective_len(const TokenSeq& target, int vocab_size) {
  if (target.empty()) throw UsageError("target: empty token sequence");
  int eff = static_cast<int>(target.size());
  while (eff > 0 && target[static_cast<std::size_t>(eff - 1)] == Vocab::kPad)
    --eff;
  if (eff == 0) throw UsageError("target: all-PAD token sequence");
  for (int i = 0; i < eff; ++i) {
    TokenId t = target[static_cast<std::size_t>(i)];
    if (t < 0 || t >= vocab_size)
      throw UsageError(cat("target: token ", t, " outside vocab of size ",
                           vocab_size));
    if (t == Vocab::kPad)
      throw UsageError("target: PAD before the final PAD run");
  }
  if (target[static_cast<std::size_t>(eff - 1)] != Vocab::kEos)
    throw UsageError("target: last non-PAD token must be EOS");
  return eff;
}

}  // namespace slmadapt
