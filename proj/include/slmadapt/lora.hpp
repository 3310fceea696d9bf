// slmadapt/lora.hpp

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
#include <random>
#include <string>
#include <vector>

#include "slmadapt/common.hpp"
#include "slmadapt/params.hpp"
#include "slmadapt/rng.hpp"

namespace slmadapt {

// Low-rank adaptation: a trainable delta (alpha/rank) * B * A attached to a
// frozen weight matrix. B starts at zero so a fresh adapter is an exact
// identity on the model output; A starts uniform in +-1/sqrt(in_dim).

/// Effective delta matrix (out_dim x in_dim).
template <typename S>
Mat<S> lora_delta(const Mat<S>& A, const Mat<S>& B, double alpha, int rank) {
  return (B * A) * static_cast<S>(alpha / rank);
}

/// Elementwise inverted dropout on the adapter input branch. Identity when
/// p == 0 or when no engine is supplied (evaluation mode).
template <typename S>
Mat<S> lora_dropout(const Mat<S>& x, double p, std::mt19937_64* eng) {
  if (eng == nullptr || p <= 0.0) return x;
  Mat<S> out = x;
  std::bernoulli_distribution drop(p);
  const S scale = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) = drop(*eng) ? S(0) : out(i, j) * scale;
  return out;
}

template <typename S>
struct LoraAdapter {
  std::string site;   // attachment site, e.g. "lm.block0.attn.wq"
  int rank = 0;
  double alpha = 1.0;
  double dropout_p = 0.0;
  Mat<S> A;  // (rank, in_dim)
  Mat<S> B;  // (out_dim, rank)

  S scaling() const { return static_cast<S>(alpha / rank); }
  Mat<S> delta() const { return lora_delta(A, B, alpha, rank); }
};

template <typename S>
LoraAdapter<S> init_adapter(int in_dim, int out_dim, int rank, double alpha,
                            double dropout_p, std::uint64_t seed,
                            const std::string& site = "") {
  if (rank < 1 || rank > std::min(in_dim, out_dim))
    throw ConfigError(cat("lora: rank ", rank, " out of range for (", in_dim,
                          ", ", out_dim, ")"));
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ConfigError("lora: dropout_p must be in [0,1)");
  LoraAdapter<S> ad;
  ad.site = site;
  ad.rank = rank;
  ad.alpha = alpha;
  ad.dropout_p = dropout_p;
  ad.A.setZero(rank, in_dim);
  ad.B.setZero(out_dim, rank);
  double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  fill_uniform(ad.A, seed, -bound, bound);
  return ad;
}

/// Column-vector application: base_weight * x + (alpha/rank) * B * (A * drop(x)).
/// x may be a single column or a matrix of columns.
template <typename S>
Mat<S> lora_apply(const Mat<S>& x, const Mat<S>& base_weight,
                  const LoraAdapter<S>& adapter, bool training_mode,
                  std::mt19937_64* eng = nullptr) {
  if (base_weight.cols() != x.rows())
    throw UsageError(cat("lora apply: base weight cols ", base_weight.cols(),
                         " vs input rows ", x.rows()));
  if (adapter.A.cols() != x.rows())
    throw UsageError("lora apply: adapter in_dim mismatch");
  Mat<S> xd = lora_dropout<S>(x, adapter.dropout_p,
                              training_mode ? eng : nullptr);
  Mat<S> out = base_weight * x;
  out.noalias() += adapter.B * (adapter.A * xd) * adapter.scaling();
  return out;
}

/// Fold the adapter into the base weight for deployment.
template <typename S>
Mat<S> lora_merge(const Mat<S>& base_weight, const LoraAdapter<S>& adapter) {
  if (base_weight.rows() != adapter.B.rows() ||
      base_weight.cols() != adapter.A.cols())
    throw UsageError("lora merge: shape mismatch");
  return base_weight + adapter.delta();
}

// ---------------------------------------------------------------------------
// Trainability masks for the three adaptation strategies. Stage 2 never
// trains the encoder or the base LM:
//   TextOnly              -> adapters only
//   Speech                -> projector + adapters
//   TextThenSpeechPhase2  -> projector + adapters (the speech phase of
//                            strategy 3; its text phase reuses TextOnly)
// ---------------------------------------------------------------------------

enum class Strategy { TextOnly, Speech, TextThenSpeechPhase2 };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::TextOnly: return "text";
    case Strategy::Speech: return "speech";
    case Strategy::TextThenSpeechPhase2: return "text-then-speech-phase2";
  }
  return "?";
}

inline Strategy strategy_from_name(const std::string& name) {
  if (name == "text") return Strategy::TextOnly;
  if (name == "speech") return Strategy::Speech;
  if (name == "text-then-speech-phase2" || name == "text-then-speech")
    return Strategy::TextThenSpeechPhase2;
  throw UsageError(cat("unknown strategy '", name, "'"));
}

template <typename S>
TrainabilityMask mask_for_strategy(Strategy strategy,
                                   const ParamStore<S>& params) {
  if (params.names_with_prefix("lora.").empty())
    throw UsageError("mask_for_strategy: params have no adapters attached");
  TrainabilityMask mask;
  for (const auto& [name, tensor] : params) {
    bool adapter = name.rfind("lora.", 0) == 0;
    bool projector = name.rfind("projector.", 0) == 0;
    bool trainable = false;
    switch (strategy) {
      case Strategy::TextOnly:
        trainable = adapter;
        break;
      case Strategy::Speech:
      case Strategy::TextThenSpeechPhase2:
        trainable = adapter || projector;
        break;
    }
    mask.flags[name] = trainable;
  }
  return mask;
}

/// Mask selecting exactly the given name prefixes; stage-1 phases use this
/// ("projector." for phase A, "projector."+"lora." for phase B).
template <typename S>
TrainabilityMask mask_for_prefixes(const ParamStore<S>& params,
                                   const std::vector<std::string>& prefixes) {
  TrainabilityMask mask;
  for (const auto& [name, tensor] : params) {
    bool trainable = false;
    for (const auto& p : prefixes)
      if (name.rfind(p, 0) == 0) trainable = true;
    mask.flags[name] = trainable;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Parameter counting
// ---------------------------------------------------------------------------

struct LoraSiteDims {
  std::string name;
  int in_dim = 0;
  int out_dim = 0;
};

/// Trainable parameters of rank-r adapters over the given sites:
/// sum over sites of r * (in_dim + out_dim).
inline std::int64_t lora_param_count(const std::vector<LoraSiteDims>& sites,
                                     int rank) {
  std::int64_t n = 0;
  for (const auto& s : sites)
    n += static_cast<std::int64_t>(rank) * (s.in_dim + s.out_dim);
  return n;
}

/// Linear-layer dimensions of a 7B-class decoder (28 layers, hidden 3584,
/// grouped KV width 512, MLP width 18944). Rank-64 adapters over all of
/// these give the ~161M trainable-parameter figure reported for the
/// full-scale system.
inline std::vector<LoraSiteDims> full_scale_7b_sites() {
  const int layers = 28;
  const int hidden = 3584;
  const int kv = 512;
  const int inter = 18944;
  std::vector<LoraSiteDims> sites;
  for (int l = 0; l < layers; ++l) {
    std::string p = cat("layer", l, ".");
    sites.push_back({p + "q", hidden, hidden});
    sites.push_back({p + "k", hidden, kv});
    sites.push_back({p + "v", hidden, kv});
    sites.push_back({p + "o", hidden, hidden});
    sites.push_back({p + "gate", hidden, inter});
    sites.push_back({p + "up", hidden, inter});
    sites.push_back({p + "down", inter, hidden});
  }
  return sites;
}

}  // namespace slmadapt
