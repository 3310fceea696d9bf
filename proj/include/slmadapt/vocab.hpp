// slmadapt/vocab.hpp

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

#include <array>
#include <string>

#include "slmadapt/common.hpp"

namespace slmadapt {

/// Character-level vocabulary with reserved PAD/BOS/EOS symbols.
///
/// Token ids: PAD=0, BOS=1, EOS=2, then one id per character of the
/// character table, in table order.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kNumSpecial = 3;

  static const std::string& default_charset() {
    static const std::string cs =
        "abcdefghijklmnopqrstuvwxyz0123456789 '-.,:";
    return cs;
  }

  explicit Vocab(const std::string& charset = default_charset())
      : charset_(charset) {
    if (charset_.empty()) throw ConfigError("vocab: empty character table");
    char_to_id_.fill(-1);
    for (std::size_t i = 0; i < charset_.size(); ++i) {
      unsigned char c = static_cast<unsigned char>(charset_[i]);
      if (char_to_id_[c] != -1)
        throw ConfigError(cat("vocab: duplicate character '", charset_[i],
                              "' in table"));
      char_to_id_[c] = static_cast<TokenId>(kNumSpecial + i);
    }
  }

  int size() const { return kNumSpecial + static_cast<int>(charset_.size()); }
  const std::string& charset() const { return charset_; }

  bool has_char(char c) const {
    return char_to_id_[static_cast<unsigned char>(c)] != -1;
  }

  TokenId char_id(char c) const {
    TokenId id = char_to_id_[static_cast<unsigned char>(c)];
    if (id == -1)
      throw DataError(cat("vocab: character '", c, "' not in table"));
    return id;
  }

  /// Encode text, no BOS/EOS added.
  TokenSeq encode(const std::string& text) const {
    TokenSeq out;
    out.reserve(text.size());
    for (char c : text) out.push_back(char_id(c));
    return out;
  }

  /// Encode text and append EOS: the training-target form.
  TokenSeq encode_target(const std::string& text) const {
    TokenSeq out = encode(text);
    out.push_back(kEos);
    return out;
  }

  /// Decode, skipping PAD/BOS and stopping at the first EOS.
  std::string decode(const TokenSeq& tokens) const {
    std::string out;
    for (TokenId t : tokens) {
      if (t == kEos) break;
      if (t == kPad || t == kBos) continue;
      int idx = t - kNumSpecial;
      if (idx < 0 || idx >= static_cast<int>(charset_.size()))
        throw DataError(cat("vocab: token id ", t, " out of range"));
      out.push_back(charset_[static_cast<std::size_t>(idx)]);
    }
    return out;
  }

 private:
  std::string charset_;
  std::array<TokenId, 256> char_to_id_;
};

}  // namespace slmadapt
