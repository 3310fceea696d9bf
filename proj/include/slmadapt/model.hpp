// slmadapt/model.hpp

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
#include <random>
#include <string>
#include <vector>

#include "slmadapt/common.hpp"
#include "slmadapt/config.hpp"
#include "slmadapt/lora.hpp"
#include "slmadapt/params.hpp"
#include "slmadapt/rng.hpp"
#include "slmadapt/types.hpp"
#include "slmadapt/vocab.hpp"

namespace slmadapt {

template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

constexpr double kLayerNormEps = 1e-5;

/// Weight init scales. Position tables start at the residual-stream scale
/// rather than the 0.02 used elsewhere: the acoustic-slot rows stay frozen
/// after Stage 1, and downstream attention can only address slots whose
/// positional component is large enough to survive layer norm.
constexpr double kWeightInitStd = 0.02;
constexpr double kPosInitStd = 0.5;

// ---------------------------------------------------------------------------
// Layer norm
// ---------------------------------------------------------------------------

template <typename S>
struct LnCache {
  Mat<S> xhat;
  ColVec<S> inv_sigma;
};

template <typename S>
Mat<S> ln_forward(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta,
                  LnCache<S>* cache) {
  ColVec<S> mu = x.rowwise().mean();
  Mat<S> xc = x.colwise() - mu;
  ColVec<S> var = xc.array().square().rowwise().mean().matrix();
  ColVec<S> inv_sigma =
      (var.array() + static_cast<S>(kLayerNormEps)).rsqrt().matrix();
  Mat<S> xhat = (xc.array().colwise() * inv_sigma.array()).matrix();
  Mat<S> y = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
  y.array().rowwise() += beta.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_sigma = std::move(inv_sigma);
  }
  return y;
}

/// Returns dx; accumulates parameter gradients when the pointers are non-null.
template <typename S>
Mat<S> ln_backward(const Mat<S>& dy, const LnCache<S>& cache,
                   const Mat<S>& gamma, Mat<S>* dgamma, Mat<S>* dbeta) {
  if (dgamma)
    dgamma->row(0) +=
        (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  if (dbeta) dbeta->row(0) += dy.colwise().sum();
  Mat<S> dxhat = (dy.array().rowwise() * gamma.row(0).array()).matrix();
  ColVec<S> m1 = dxhat.rowwise().mean();
  ColVec<S> m2 = (dxhat.array() * cache.xhat.array()).rowwise().mean().matrix();
  Mat<S> dx = dxhat;
  dx.colwise() -= m1;
  dx.array() -= cache.xhat.array().colwise() * m2.array();
  dx.array().colwise() *= cache.inv_sigma.array();
  return dx;
}

// ---------------------------------------------------------------------------
// Linear projection with an optional adapter branch
// ---------------------------------------------------------------------------

template <typename S>
struct LoraBranchCache {
  bool used = false;
  bool dropped = false;
  Mat<S> dropmask;  // entries are 0 or the inverted-dropout scale
  Mat<S> xd;        // adapter-branch input after dropout
  Mat<S> u;         // xd * A^T, (rows, rank)
};

/// y = x W^T [+ (alpha/r) drop(x) A^T B^T]. `adapter` may be null; dropout
/// applies only with a non-null engine, and only to the adapter branch.
template <typename S>
Mat<S> linear_lora_forward(const Mat<S>& x, const Mat<S>& w,
                           const LoraAdapter<S>* adapter,
                           std::mt19937_64* dropout_engine,
                           LoraBranchCache<S>* cache) {
  Mat<S> y = x * w.transpose();
  if (cache) *cache = LoraBranchCache<S>{};
  if (!adapter) return y;
  const Mat<S>* xin = &x;
  Mat<S> dropmask;
  Mat<S> xd;
  bool dropped = false;
  if (dropout_engine && adapter->dropout_p > 0.0) {
    const S scale = static_cast<S>(1.0 / (1.0 - adapter->dropout_p));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    dropmask.setZero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (unif(*dropout_engine) >= adapter->dropout_p) dropmask(i, j) = scale;
    xd = (x.array() * dropmask.array()).matrix();
    xin = &xd;
    dropped = true;
  }
  Mat<S> u = (*xin) * adapter->A.transpose();
  y.noalias() += adapter->scaling() * u * adapter->B.transpose();
  if (cache) {
    cache->used = true;
    cache->dropped = dropped;
    if (dropped) {
      cache->dropmask = std::move(dropmask);
      cache->xd = std::move(xd);
    } else {
      cache->xd = x;
    }
    cache->u = std::move(u);
  }
  return y;
}

/// Returns dx; accumulates base and adapter gradients when non-null.
template <typename S>
Mat<S> linear_lora_backward(const Mat<S>& dy, const Mat<S>& x, const Mat<S>& w,
                            Mat<S>* dw, const LoraAdapter<S>* adapter,
                            const LoraBranchCache<S>& cache, Mat<S>* da,
                            Mat<S>* db) {
  Mat<S> dx = dy * w;
  if (dw) dw->noalias() += dy.transpose() * x;
  if (adapter && cache.used) {
    const S s = adapter->scaling();
    if (db) db->noalias() += s * dy.transpose() * cache.u;
    Mat<S> du = s * dy * adapter->B;
    if (da) da->noalias() += du.transpose() * cache.xd;
    Mat<S> dxd = du * adapter->A;
    if (cache.dropped)
      dx.array() += dxd.array() * cache.dropmask.array();
    else
      dx += dxd;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Transformer block
// ---------------------------------------------------------------------------

template <typename S>
struct BlockCache {
  Mat<S> x_in;
  LnCache<S> ln1;
  Mat<S> x1;
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;  // per head, (T, T); masked entries are zero
  Mat<S> ctx;                 // concatenated head contexts, (T, d)
  Mat<S> x_mid;
  LnCache<S> ln2;
  Mat<S> x2;
  Mat<S> h_pre;
  LoraBranchCache<S> lq, lk, lv, lo;
};

/// Read-only adapter views for one block; entries may be null.
template <typename S>
struct BlockAdapters {
  const LoraAdapter<S>* q = nullptr;
  const LoraAdapter<S>* k = nullptr;
  const LoraAdapter<S>* v = nullptr;
  const LoraAdapter<S>* o = nullptr;
};

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

struct EvalMetrics {
  double nll_sum = 0.0;
  std::int64_t tokens = 0;
  std::int64_t correct = 0;

  double mean_nll() const {
    if (tokens == 0) throw UsageError("eval metrics: no scored tokens");
    return nll_sum / static_cast<double>(tokens);
  }
  double perplexity() const { return std::exp(mean_nll()); }
  double token_accuracy() const {
    if (tokens == 0) throw UsageError("eval metrics: no scored tokens");
    return static_cast<double>(correct) / static_cast<double>(tokens);
  }
};

// ---------------------------------------------------------------------------
// KV cache for incremental decoding
// ---------------------------------------------------------------------------

template <typename S>
struct KvCache {
  std::vector<Mat<S>> k;  // per layer, (capacity, d)
  std::vector<Mat<S>> v;
  int len = 0;
  int capacity = 0;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Recognizer stack: acoustic encoder, frame-folding projector, and a
/// decoder-only language model with low-rank adapters on the attention
/// projections. All parameters live in one named store so that trainability
/// masks, checkpoints, and the optimizer address them uniformly.
template <typename S>
class Model {
 public:
  Model(const ModelConfig& cfg, const LoraConfig& lora, std::uint64_t seed)
      : cfg_(cfg), lora_cfg_(lora), vocab_(cfg.charset) {
    cfg_.validate();
    lora_cfg_.validate();
    prompt_tokens_ = vocab_.encode(cfg_.prompt);
    build_params(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  const LoraConfig& lora_config() const { return lora_cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const ParamStore<S>& params() const { return params_; }
  ParamStore<S>& params() { return params_; }
  const std::vector<std::string>& lora_sites() const { return lora_sites_; }
  int prompt_len() const { return static_cast<int>(prompt_tokens_.size()); }

  // ----- encoder ----------------------------------------------------------

  /// Maps padded features (max_frames, feature_dim) to frame embeddings
  /// (encoder_out_len, model_dim).
  Mat<S> encode(const FeatureSequence& feats) const {
    return encode_cached(feats, nullptr);
  }

  // ----- projector --------------------------------------------------------

  /// Folds every fold_k consecutive frames into one vector and applies the
  /// two-layer projection. Frames past the last full group are dropped.
  Mat<S> project(const Mat<S>& frames) const {
    return project_cached(frames, nullptr);
  }

  // ----- language model ---------------------------------------------------

  /// Teacher-forced logits over the text region. The input layout is
  /// [prompt][prefix rows][BOS, target[0..n-2]]; row t of the result scores
  /// target[t]. `prefix` may be empty for text-only sequences.
  Mat<S> lm_forward(const Mat<S>& prefix, const TokenSeq& target,
                    bool adapters_active) const {
    return lm_forward_cached(prefix, target, adapters_active, nullptr,
                             nullptr);
  }

  // ----- losses -----------------------------------------------------------

  /// Mean NLL over all non-PAD target positions of the batch. With `grads`
  /// non-null, accumulates gradients for every tracked parameter.
  double asr_loss(const std::vector<const Utterance*>& batch,
                  bool adapters_active, GradStore<S>* grads = nullptr,
                  std::mt19937_64* dropout_engine = nullptr) const {
    if (batch.empty()) throw UsageError("asr_loss: empty batch");
    EvalMetrics agg;
    const std::int64_t total = count_tokens_utt(batch);
    for (const Utterance* utt : batch) {
      utt->validate();
      sample_loss(&utt->features, utt->text, adapters_active, grads,
                  dropout_engine, total, &agg);
    }
    return agg.mean_nll();
  }

  /// Text-only variant: no acoustic prefix.
  double text_loss(const std::vector<const TextSample*>& batch,
                   bool adapters_active, GradStore<S>* grads = nullptr,
                   std::mt19937_64* dropout_engine = nullptr) const {
    if (batch.empty()) throw UsageError("text_loss: empty batch");
    EvalMetrics agg;
    const std::int64_t total = count_tokens_text(batch);
    for (const TextSample* ts : batch) {
      ts->validate();
      sample_loss(nullptr, ts->text, adapters_active, grads, dropout_engine,
                  total, &agg);
    }
    return agg.mean_nll();
  }

  /// Forward-only scoring of paired data: loss, perplexity, and
  /// teacher-forced token accuracy in one pass.
  EvalMetrics asr_eval(const std::vector<const Utterance*>& batch,
                       bool adapters_active) const {
    if (batch.empty()) throw UsageError("asr_eval: empty batch");
    EvalMetrics agg;
    for (const Utterance* utt : batch) {
      utt->validate();
      sample_loss(&utt->features, utt->text, adapters_active, nullptr, nullptr,
                  1, &agg);
    }
    return agg;
  }

  EvalMetrics text_eval(const std::vector<const TextSample*>& batch,
                        bool adapters_active) const {
    if (batch.empty()) throw UsageError("text_eval: empty batch");
    EvalMetrics agg;
    for (const TextSample* ts : batch) {
      ts->validate();
      sample_loss(nullptr, ts->text, adapters_active, nullptr, nullptr, 1,
                  &agg);
    }
    return agg;
  }

  // ----- decoding ---------------------------------------------------------

  /// Greedy decoding with an incremental attention cache. Returns the
  /// generated tokens up to (not including) EOS.
  TokenSeq decode_greedy(const FeatureSequence& feats, bool adapters_active,
                         int max_len = -1) const {
    if (max_len < 0) max_len = cfg_.max_text_len;
    Mat<S> enc = encode(feats);
    Mat<S> ac = project(enc);
    const int prefix_rows = prompt_len() + static_cast<int>(ac.rows());
    Mat<S> emb(prefix_rows + 1, cfg_.model_dim);
    embed_prompt(&emb);
    emb.middleRows(prompt_len(), ac.rows()) = ac;
    emb.row(prefix_rows) = token_embedding(Vocab::kBos);
    add_positions(&emb, "lm.pos");

    KvCache<S> kv;
    init_kv(&kv, cfg_.lm_positions());
    Mat<S> logits = prime_kv(&kv, emb, adapters_active);
    TokenSeq out;
    TokenId next = argmax_row(logits.row(logits.rows() - 1));
    for (int step = 0; step < max_len; ++step) {
      if (next == Vocab::kEos) break;
      out.push_back(next);
      if (kv.len >= kv.capacity) break;
      RowVec<S> row = step_row(next, kv.len);
      RowVec<S> z = step_kv(&kv, row, adapters_active);
      next = argmax_row(z);
    }
    return out;
  }

  /// Convenience wrapper: decode and map back to a string.
  std::string transcribe(const FeatureSequence& feats,
                         bool adapters_active) const {
    return vocab_.decode(decode_greedy(feats, adapters_active));
  }

  // ----- adapter handling -------------------------------------------------

  /// Folds every adapter delta into its base weight and zeroes the adapter
  /// B factors, so active and inactive forms agree afterwards.
  void merge_adapters_into_base() {
    for (const std::string& site : lora_sites_) {
      LoraAdapter<S> ad = adapter_at(site);
      Mat<S>& w = params_.at(site);
      w = lora_merge(w, ad);
      params_.at(cat("lora.", site, ".B")).setZero();
    }
  }

  /// Replaces every adapter with a freshly drawn one, as if the model had
  /// just been constructed with this seed: A from the fan-in uniform law,
  /// B zero. The adapters are transparent again afterwards.
  void reinit_adapters(std::uint64_t seed) {
    for (const std::string& site : lora_sites_) {
      Mat<S>& a = params_.at(cat("lora.", site, ".A"));
      Mat<S>& b = params_.at(cat("lora.", site, ".B"));
      LoraAdapter<S> ad = init_adapter<S>(
          static_cast<int>(a.cols()), static_cast<int>(b.rows()),
          lora_cfg_.rank, lora_cfg_.alpha, lora_cfg_.dropout_p,
          derive_seed(seed, "init.lora." + site), site);
      a = ad.A;
      b = ad.B;
    }
  }

 private:
  // ----- construction -----------------------------------------------------

  void build_params(std::uint64_t seed) {
    const int d = cfg_.model_dim;
    const int mh = cfg_.mlp_hidden();
    const int vs = vocab_.size();

    add_normal("encoder.conv.w", d, 3 * cfg_.feature_dim, seed,
               std::sqrt(2.0 / (3.0 * cfg_.feature_dim)));
    add_zeros("encoder.conv.b", 1, d);
    add_normal("encoder.pos", cfg_.encoder_out_len(), d, seed, kPosInitStd);
    for (int i = 0; i < cfg_.encoder_layers; ++i)
      add_block(cat("encoder.block", i, "."), d, mh, seed);
    add_ones("encoder.lnf.g", 1, d);
    add_zeros("encoder.lnf.b", 1, d);

    add_normal("projector.w1", cfg_.proj_hidden, cfg_.fold_k * d, seed,
               std::sqrt(2.0 / (cfg_.fold_k * d)));
    add_zeros("projector.b1", 1, cfg_.proj_hidden);
    add_normal("projector.w2", d, cfg_.proj_hidden, seed,
               std::sqrt(2.0 / cfg_.proj_hidden));
    add_zeros("projector.b2", 1, d);

    add_normal("lm.tok_emb", vs, d, seed, kWeightInitStd);
    add_normal("lm.pos", cfg_.lm_positions(), d, seed, kPosInitStd);
    for (int i = 0; i < cfg_.decoder_layers; ++i)
      add_block(cat("lm.block", i, "."), d, mh, seed);
    add_ones("lm.lnf.g", 1, d);
    add_zeros("lm.lnf.b", 1, d);
    add_normal("lm.head.w", vs, d, seed, kWeightInitStd);
    add_zeros("lm.head.b", 1, vs);

    for (int i = 0; i < cfg_.decoder_layers; ++i)
      for (const char* p : {"wq", "wk", "wv", "wo"}) {
        std::string site = cat("lm.block", i, ".attn.", p);
        LoraAdapter<S> ad =
            init_adapter<S>(d, d, lora_cfg_.rank, lora_cfg_.alpha,
                            lora_cfg_.dropout_p,
                            derive_seed(seed, "init.lora." + site), site);
        params_.add(cat("lora.", site, ".A"), lora_cfg_.rank, d) = ad.A;
        params_.add(cat("lora.", site, ".B"), d, lora_cfg_.rank) = ad.B;
        lora_sites_.push_back(site);
      }
  }

  void add_block(const std::string& prefix, int d, int mh,
                 std::uint64_t seed) {
    add_ones(prefix + "ln1.g", 1, d);
    add_zeros(prefix + "ln1.b", 1, d);
    for (const char* p : {"wq", "wk", "wv", "wo"})
      add_normal(prefix + "attn." + p, d, d, seed, kWeightInitStd);
    add_ones(prefix + "ln2.g", 1, d);
    add_zeros(prefix + "ln2.b", 1, d);
    add_normal(prefix + "mlp.w1", mh, d, seed, kWeightInitStd);
    add_zeros(prefix + "mlp.b1", 1, mh);
    add_normal(prefix + "mlp.w2", d, mh, seed, kWeightInitStd);
    add_zeros(prefix + "mlp.b2", 1, d);
  }

  void add_normal(const std::string& name, int rows, int cols,
                  std::uint64_t seed, double stddev) {
    Mat<S>& m = params_.add(name, rows, cols);
    fill_normal(m, derive_seed(seed, "init." + name), stddev);
  }
  void add_zeros(const std::string& name, int rows, int cols) {
    params_.add(name, rows, cols);
  }
  void add_ones(const std::string& name, int rows, int cols) {
    params_.add(name, rows, cols).setOnes();
  }

  // ----- caches -----------------------------------------------------------

  struct EncCache {
    Mat<S> cols;      // im2col matrix, (enc_len, 3 * feature_dim)
    Mat<S> conv_pre;  // before ReLU
    std::vector<BlockCache<S>> blocks;
    LnCache<S> lnf;
  };

  struct ProjCache {
    Mat<S> folded;  // (out_rows, fold_k * d)
    Mat<S> h_pre;   // (out_rows, proj_hidden)
  };

  struct SeqCache {
    std::vector<BlockCache<S>> blocks;
    LnCache<S> lnf;
    Mat<S> xf_text;  // final-norm output over the text region
    int text_begin = 0;
    int text_len = 0;
    int total = 0;
  };

  // ----- encoder ----------------------------------------------------------

  Mat<S> encode_cached(const FeatureSequence& feats, EncCache* cache) const {
    if (feats.feature_dim() != cfg_.feature_dim)
      throw ConfigError(cat("encode: feature dim ", feats.feature_dim(),
                            " does not match configured ", cfg_.feature_dim));
    if (feats.num_frames() != cfg_.max_frames)
      throw ConfigError(cat("encode: expected ", cfg_.max_frames,
                            " padded frames, got ", feats.num_frames()));
    feats.validate();

    const int out_len = cfg_.encoder_out_len();
    const int fd = cfg_.feature_dim;
    Mat<S> cols = Mat<S>::Zero(out_len, 3 * fd);
    for (int t = 0; t < out_len; ++t)
      for (int k = 0; k < 3; ++k) {
        int src = 2 * t + k - 1;
        if (src < 0 || src >= feats.num_frames()) continue;
        for (int j = 0; j < fd; ++j)
          cols(t, k * fd + j) = static_cast<S>(feats.frames(src, j));
      }

    Mat<S> pre = cols * params_.at("encoder.conv.w").transpose();
    pre.rowwise() += params_.at("encoder.conv.b").row(0);
    Mat<S> x = pre.cwiseMax(S(0));
    x += params_.at("encoder.pos");

    std::vector<BlockCache<S>>* bc = cache ? &cache->blocks : nullptr;
    if (bc) bc->resize(static_cast<std::size_t>(cfg_.encoder_layers));
    for (int i = 0; i < cfg_.encoder_layers; ++i)
      x = block_forward(x, cat("encoder.block", i, "."), BlockAdapters<S>{},
                        /*causal=*/false, nullptr,
                        bc ? &(*bc)[static_cast<std::size_t>(i)] : nullptr);

    if (cache) {
      cache->cols = std::move(cols);
      cache->conv_pre = std::move(pre);
    }
    return ln_forward<S>(x, params_.at("encoder.lnf.g"),
                      params_.at("encoder.lnf.b"),
                      cache ? &cache->lnf : nullptr);
  }

  void encode_backward(const Mat<S>& denc, const EncCache& cache,
                       GradStore<S>& grads) const {
    Mat<S> dx = ln_backward(denc, cache.lnf, params_.at("encoder.lnf.g"),
                            grads.find("encoder.lnf.g"),
                            grads.find("encoder.lnf.b"));
    for (int i = cfg_.encoder_layers - 1; i >= 0; --i)
      dx = block_backward(dx, cat("encoder.block", i, "."),
                          BlockAdapters<S>{},
                          cache.blocks[static_cast<std::size_t>(i)], grads);
    if (Mat<S>* dpos = grads.find("encoder.pos")) *dpos += dx;
    Mat<S> dpre =
        ((cache.conv_pre.array() > S(0)).template cast<S>() * dx.array())
            .matrix();
    if (Mat<S>* dw = grads.find("encoder.conv.w"))
      dw->noalias() += dpre.transpose() * cache.cols;
    if (Mat<S>* db = grads.find("encoder.conv.b"))
      db->row(0) += dpre.colwise().sum();
  }

  // ----- projector --------------------------------------------------------

  Mat<S> project_cached(const Mat<S>& frames, ProjCache* cache) const {
    if (frames.cols() != cfg_.model_dim)
      throw ConfigError(cat("project: input dim ", frames.cols(),
                            " does not match model dim ", cfg_.model_dim));
    const int k = cfg_.fold_k;
    const int out_rows = static_cast<int>(frames.rows()) / k;
    if (out_rows == 0)
      throw UsageError(cat("project: ", frames.rows(),
                           " frames fold to an empty sequence at k=", k));
    const int d = cfg_.model_dim;
    Mat<S> folded(out_rows, k * d);
    for (int r = 0; r < out_rows; ++r)
      for (int j = 0; j < k; ++j)
        folded.row(r).segment(j * d, d) = frames.row(r * k + j);
    Mat<S> h_pre = folded * params_.at("projector.w1").transpose();
    h_pre.rowwise() += params_.at("projector.b1").row(0);
    Mat<S> h = h_pre.cwiseMax(S(0));
    Mat<S> out = h * params_.at("projector.w2").transpose();
    out.rowwise() += params_.at("projector.b2").row(0);
    if (cache) {
      cache->folded = std::move(folded);
      cache->h_pre = std::move(h_pre);
    }
    return out;
  }

  /// Returns d(frames) for the encoder when `want_dframes` is set.
  Mat<S> project_backward(const Mat<S>& dout, const ProjCache& cache,
                          GradStore<S>& grads, bool want_dframes,
                          int enc_rows) const {
    const int k = cfg_.fold_k;
    const int d = cfg_.model_dim;
    Mat<S> h = cache.h_pre.cwiseMax(S(0));
    if (Mat<S>* dw2 = grads.find("projector.w2"))
      dw2->noalias() += dout.transpose() * h;
    if (Mat<S>* db2 = grads.find("projector.b2"))
      db2->row(0) += dout.colwise().sum();
    Mat<S> dh = dout * params_.at("projector.w2");
    Mat<S> dh_pre =
        ((cache.h_pre.array() > S(0)).template cast<S>() * dh.array())
            .matrix();
    if (Mat<S>* dw1 = grads.find("projector.w1"))
      dw1->noalias() += dh_pre.transpose() * cache.folded;
    if (Mat<S>* db1 = grads.find("projector.b1"))
      db1->row(0) += dh_pre.colwise().sum();
    if (!want_dframes) return Mat<S>();
    Mat<S> dfolded = dh_pre * params_.at("projector.w1");
    Mat<S> dframes = Mat<S>::Zero(enc_rows, d);
    const int out_rows = static_cast<int>(dfolded.rows());
    for (int r = 0; r < out_rows; ++r)
      for (int j = 0; j < k; ++j)
        dframes.row(r * k + j) = dfolded.row(r).segment(j * d, d);
    return dframes;
  }

  // ----- transformer block ------------------------------------------------

  Mat<S> block_forward(const Mat<S>& x, const std::string& prefix,
                       const BlockAdapters<S>& ad, bool causal,
                       std::mt19937_64* dropout_engine,
                       BlockCache<S>* cache) const {
    const int heads = cfg_.heads;
    const int hd = cfg_.head_dim();
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    const Eigen::Index t = x.rows();

    LnCache<S> ln1;
    Mat<S> x1 = ln_forward<S>(x, params_.at(prefix + "ln1.g"),
                           params_.at(prefix + "ln1.b"), &ln1);
    LoraBranchCache<S> lq, lk, lv, lo;
    Mat<S> q = linear_lora_forward<S>(x1, params_.at(prefix + "attn.wq"), ad.q,
                                   dropout_engine, cache ? &lq : nullptr);
    Mat<S> k = linear_lora_forward<S>(x1, params_.at(prefix + "attn.wk"), ad.k,
                                   dropout_engine, cache ? &lk : nullptr);
    Mat<S> v = linear_lora_forward<S>(x1, params_.at(prefix + "attn.wv"), ad.v,
                                   dropout_engine, cache ? &lv : nullptr);

    std::vector<Mat<S>> probs(static_cast<std::size_t>(heads));
    Mat<S> ctx(t, cfg_.model_dim);
    for (int h = 0; h < heads; ++h) {
      auto qh = q.middleCols(h * hd, hd);
      auto kh = k.middleCols(h * hd, hd);
      auto vh = v.middleCols(h * hd, hd);
      Mat<S> scores = qh * kh.transpose() * inv_sqrt;
      Mat<S>& p = probs[static_cast<std::size_t>(h)];
      p.setZero(t, t);
      for (Eigen::Index i = 0; i < t; ++i) {
        Eigen::Index lim = causal ? i + 1 : t;
        auto row = scores.row(i).head(lim);
        S m = row.maxCoeff();
        RowVec<S> e = (row.array() - m).exp().matrix();
        p.row(i).head(lim) = e / e.sum();
      }
      ctx.middleCols(h * hd, hd).noalias() = p * vh;
    }

    Mat<S> attn_out =
        linear_lora_forward<S>(ctx, params_.at(prefix + "attn.wo"), ad.o,
                            dropout_engine, cache ? &lo : nullptr);
    Mat<S> x_mid = x + attn_out;

    LnCache<S> ln2;
    Mat<S> x2 = ln_forward<S>(x_mid, params_.at(prefix + "ln2.g"),
                           params_.at(prefix + "ln2.b"), &ln2);
    Mat<S> h_pre = x2 * params_.at(prefix + "mlp.w1").transpose();
    h_pre.rowwise() += params_.at(prefix + "mlp.b1").row(0);
    Mat<S> h = h_pre.cwiseMax(S(0));
    Mat<S> y = h * params_.at(prefix + "mlp.w2").transpose();
    y.rowwise() += params_.at(prefix + "mlp.b2").row(0);
    Mat<S> x_out = x_mid + y;

    if (cache) {
      cache->x_in = x;
      cache->ln1 = std::move(ln1);
      cache->x1 = std::move(x1);
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->probs = std::move(probs);
      cache->ctx = std::move(ctx);
      cache->x_mid = std::move(x_mid);
      cache->ln2 = std::move(ln2);
      cache->x2 = std::move(x2);
      cache->h_pre = std::move(h_pre);
      cache->lq = std::move(lq);
      cache->lk = std::move(lk);
      cache->lv = std::move(lv);
      cache->lo = std::move(lo);
    }
    return x_out;
  }

  Mat<S> block_backward(const Mat<S>& dy, const std::string& prefix,
                        const BlockAdapters<S>& ad, const BlockCache<S>& c,
                        GradStore<S>& grads) const {
    const int heads = cfg_.heads;
    const int hd = cfg_.head_dim();
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    const Eigen::Index t = dy.rows();

    Mat<S> h = c.h_pre.cwiseMax(S(0));
    if (Mat<S>* dw2 = grads.find(prefix + "mlp.w2"))
      dw2->noalias() += dy.transpose() * h;
    if (Mat<S>* db2 = grads.find(prefix + "mlp.b2"))
      db2->row(0) += dy.colwise().sum();
    Mat<S> dh = dy * params_.at(prefix + "mlp.w2");
    Mat<S> dh_pre =
        ((c.h_pre.array() > S(0)).template cast<S>() * dh.array()).matrix();
    if (Mat<S>* dw1 = grads.find(prefix + "mlp.w1"))
      dw1->noalias() += dh_pre.transpose() * c.x2;
    if (Mat<S>* db1 = grads.find(prefix + "mlp.b1"))
      db1->row(0) += dh_pre.colwise().sum();
    Mat<S> dx2 = dh_pre * params_.at(prefix + "mlp.w1");

    Mat<S> dx_mid = ln_backward(dx2, c.ln2, params_.at(prefix + "ln2.g"),
                                grads.find(prefix + "ln2.g"),
                                grads.find(prefix + "ln2.b"));
    dx_mid += dy;

    Mat<S> dctx = linear_lora_backward(
        dx_mid, c.ctx, params_.at(prefix + "attn.wo"),
        grads.find(prefix + "attn.wo"), ad.o, c.lo,
        grads.find(cat("lora.", prefix, "attn.wo.A")),
        grads.find(cat("lora.", prefix, "attn.wo.B")));

    Mat<S> dq = Mat<S>::Zero(t, cfg_.model_dim);
    Mat<S> dk = Mat<S>::Zero(t, cfg_.model_dim);
    Mat<S> dv = Mat<S>::Zero(t, cfg_.model_dim);
    for (int hidx = 0; hidx < heads; ++hidx) {
      const Mat<S>& p = c.probs[static_cast<std::size_t>(hidx)];
      auto kh = c.k.middleCols(hidx * hd, hd);
      auto vh = c.v.middleCols(hidx * hd, hd);
      auto qh = c.q.middleCols(hidx * hd, hd);
      auto dctx_h = dctx.middleCols(hidx * hd, hd);
      Mat<S> dp = dctx_h * vh.transpose();
      dv.middleCols(hidx * hd, hd).noalias() = p.transpose() * dctx_h;
      Mat<S> ds(t, t);
      for (Eigen::Index i = 0; i < t; ++i) {
        S dot = dp.row(i).cwiseProduct(p.row(i)).sum();
        ds.row(i) =
            p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
      }
      dq.middleCols(hidx * hd, hd).noalias() = ds * kh * inv_sqrt;
      dk.middleCols(hidx * hd, hd).noalias() = ds.transpose() * qh * inv_sqrt;
    }

    Mat<S> dx1 = linear_lora_backward(
        dq, c.x1, params_.at(prefix + "attn.wq"),
        grads.find(prefix + "attn.wq"), ad.q, c.lq,
        grads.find(cat("lora.", prefix, "attn.wq.A")),
        grads.find(cat("lora.", prefix, "attn.wq.B")));
    dx1 += linear_lora_backward(
        dk, c.x1, params_.at(prefix + "attn.wk"),
        grads.find(prefix + "attn.wk"), ad.k, c.lk,
        grads.find(cat("lora.", prefix, "attn.wk.A")),
        grads.find(cat("lora.", prefix, "attn.wk.B")));
    dx1 += linear_lora_backward(
        dv, c.x1, params_.at(prefix + "attn.wv"),
        grads.find(prefix + "attn.wv"), ad.v, c.lv,
        grads.find(cat("lora.", prefix, "attn.wv.A")),
        grads.find(cat("lora.", prefix, "attn.wv.B")));

    Mat<S> dx = ln_backward(dx1, c.ln1, params_.at(prefix + "ln1.g"),
                            grads.find(prefix + "ln1.g"),
                            grads.find(prefix + "ln1.b"));
    dx += dx_mid;
    return dx;
  }

  // ----- language model internals -----------------------------------------

  LoraAdapter<S> adapter_at(const std::string& site) const {
    LoraAdapter<S> ad;
    ad.site = site;
    ad.rank = lora_cfg_.rank;
    ad.alpha = lora_cfg_.alpha;
    ad.dropout_p = lora_cfg_.dropout_p;
    ad.A = params_.at(cat("lora.", site, ".A"));
    ad.B = params_.at(cat("lora.", site, ".B"));
    return ad;
  }

  struct BlockAdapterStorage {
    LoraAdapter<S> q, k, v, o;
    BlockAdapters<S> view() const { return {&q, &k, &v, &o}; }
  };

  BlockAdapterStorage block_adapters(int layer) const {
    BlockAdapterStorage s;
    s.q = adapter_at(cat("lm.block", layer, ".attn.wq"));
    s.k = adapter_at(cat("lm.block", layer, ".attn.wk"));
    s.v = adapter_at(cat("lm.block", layer, ".attn.wv"));
    s.o = adapter_at(cat("lm.block", layer, ".attn.wo"));
    return s;
  }

  RowVec<S> token_embedding(TokenId id) const {
    return params_.at("lm.tok_emb").row(id);
  }

  void embed_prompt(Mat<S>* emb) const {
    for (int i = 0; i < prompt_len(); ++i)
      emb->row(i) =
          token_embedding(prompt_tokens_[static_cast<std::size_t>(i)]);
  }

  void add_positions(Mat<S>* emb, const std::string& name) const {
    const Mat<S>& pos = params_.at(name);
    if (emb->rows() > pos.rows())
      throw CapacityError(cat("sequence of ", emb->rows(),
                              " rows exceeds position table of ", pos.rows()));
    *emb += pos.topRows(emb->rows());
  }

  /// Shared forward pass. Returns text-region logits (text_len, vocab).
  /// Text tokens always occupy the position slots [prompt + acoustic_len,
  /// ...), whether or not an acoustic prefix is present, so text-only
  /// training moves exactly the positions the recognizer reads.
  Mat<S> lm_forward_cached(const Mat<S>& prefix, const TokenSeq& target,
                           bool adapters_active,
                           std::mt19937_64* dropout_engine,
                           SeqCache* cache) const {
    if (prefix.size() != 0 && prefix.cols() != cfg_.model_dim)
      throw ConfigError(cat("lm_forward: prefix dim ", prefix.cols(),
                            " does not match model dim ", cfg_.model_dim));
    const int eff = target_effective_len(target, vocab_.size());
    if (eff > cfg_.max_text_len)
      throw CapacityError(cat("lm_forward: target of ", eff,
                              " tokens exceeds max_text_len ",
                              cfg_.max_text_len));
    const int pl = prompt_len();
    const int al = static_cast<int>(prefix.rows());
    const int ab = cfg_.acoustic_len();
    if (al > ab)
      throw CapacityError(cat("lm_forward: acoustic prefix of ", al,
                              " rows exceeds budget ", ab));
    const int total = pl + al + eff;

    Mat<S> emb(total, cfg_.model_dim);
    embed_prompt(&emb);
    if (al > 0) emb.middleRows(pl, al) = prefix;
    emb.row(pl + al) = token_embedding(Vocab::kBos);
    for (int i = 1; i < eff; ++i)
      emb.row(pl + al + i) =
          token_embedding(target[static_cast<std::size_t>(i - 1)]);
    const Mat<S>& pos = params_.at("lm.pos");
    for (int i = 0; i < pl + al; ++i) emb.row(i) += pos.row(i);
    for (int i = 0; i < eff; ++i) emb.row(pl + al + i) += pos.row(pl + ab + i);

    std::vector<BlockAdapterStorage> store;
    if (adapters_active) {
      store.reserve(static_cast<std::size_t>(cfg_.decoder_layers));
      for (int i = 0; i < cfg_.decoder_layers; ++i)
        store.push_back(block_adapters(i));
    }

    if (cache) {
      cache->blocks.resize(static_cast<std::size_t>(cfg_.decoder_layers));
      cache->text_begin = pl + al;
      cache->text_len = eff;
      cache->total = total;
    }
    Mat<S> x = std::move(emb);
    for (int i = 0; i < cfg_.decoder_layers; ++i)
      x = block_forward(
          x, cat("lm.block", i, "."),
          adapters_active ? store[static_cast<std::size_t>(i)].view()
                          : BlockAdapters<S>{},
          /*causal=*/true, dropout_engine,
          cache ? &cache->blocks[static_cast<std::size_t>(i)] : nullptr);

    Mat<S> xf = ln_forward<S>(x, params_.at("lm.lnf.g"), params_.at("lm.lnf.b"),
                           cache ? &cache->lnf : nullptr);
    Mat<S> xf_text = xf.middleRows(pl + al, eff);
    Mat<S> logits = xf_text * params_.at("lm.head.w").transpose();
    logits.rowwise() += params_.at("lm.head.b").row(0);
    if (cache) cache->xf_text = std::move(xf_text);
    return logits;
  }

  /// Softmax cross-entropy over the text region. Fills dlogits (scaled by
  /// 1/total_tokens) when requested and accumulates metrics. The NLL is
  /// formed in log space, so underflowing target probabilities stay finite.
  void ce_and_grad(const Mat<S>& logits, const TokenSeq& target, int eff,
                   std::int64_t total_tokens, EvalMetrics* agg,
                   Mat<S>* dlogits) const {
    if (dlogits) dlogits->resize(logits.rows(), logits.cols());
    const S inv_total =
        static_cast<S>(1.0 / static_cast<double>(total_tokens));
    for (int i = 0; i < eff; ++i) {
      TokenId tgt = target[static_cast<std::size_t>(i)];
      auto row = logits.row(i);
      S m = row.maxCoeff();
      RowVec<S> e = (row.array() - m).exp().matrix();
      double z = static_cast<double>(e.sum());
      agg->nll_sum += std::log(z) + static_cast<double>(m) -
                      static_cast<double>(row(tgt));
      agg->tokens += 1;
      if (argmax_row(row) == tgt) agg->correct += 1;
      if (dlogits) {
        dlogits->row(i) = e * (inv_total / static_cast<S>(z));
        (*dlogits)(i, tgt) -= inv_total;
      }
    }
  }

  /// One sample's loss and, optionally, its gradient contribution.
  /// `feats` null means a text-only sequence.
  void sample_loss(const FeatureSequence* feats, const TokenSeq& target,
                   bool adapters_active, GradStore<S>* grads,
                   std::mt19937_64* dropout_engine, std::int64_t total_tokens,
                   EvalMetrics* agg) const {
    EncCache enc_cache;
    ProjCache proj_cache;
    Mat<S> prefix;
    const bool need_grads = grads != nullptr;
    const bool need_enc =
        feats && need_grads && grads->tracks("encoder.conv.w");
    const bool need_proj =
        feats && (need_enc || (need_grads && grads->tracks("projector.w1")));
    if (feats) {
      Mat<S> enc = encode_cached(*feats, need_enc ? &enc_cache : nullptr);
      prefix = project_cached(enc, need_proj ? &proj_cache : nullptr);
    }

    SeqCache cache;
    Mat<S> logits =
        lm_forward_cached(prefix, target, adapters_active,
                          need_grads ? dropout_engine : nullptr,
                          need_grads ? &cache : nullptr);
    const int eff = target_effective_len(target, vocab_.size());
    Mat<S> dlogits;
    ce_and_grad(logits, target, eff, total_tokens, agg,
                need_grads ? &dlogits : nullptr);
    if (!need_grads) return;
    lm_backward(dlogits, target, cache, adapters_active, *grads,
                need_proj ? &proj_cache : nullptr,
                need_enc ? &enc_cache : nullptr);
  }

  void lm_backward(const Mat<S>& dlogits, const TokenSeq& target,
                   const SeqCache& cache, bool adapters_active,
                   GradStore<S>& grads, const ProjCache* proj_cache,
                   const EncCache* enc_cache) const {
    const int pl = prompt_len();
    const int tb = cache.text_begin;
    const int tl = cache.text_len;
    const int total = cache.total;

    if (Mat<S>* dwh = grads.find("lm.head.w"))
      dwh->noalias() += dlogits.transpose() * cache.xf_text;
    if (Mat<S>* dbh = grads.find("lm.head.b"))
      dbh->row(0) += dlogits.colwise().sum();

    Mat<S> dxf = Mat<S>::Zero(total, cfg_.model_dim);
    dxf.middleRows(tb, tl).noalias() = dlogits * params_.at("lm.head.w");
    Mat<S> dx = ln_backward(dxf, cache.lnf, params_.at("lm.lnf.g"),
                            grads.find("lm.lnf.g"), grads.find("lm.lnf.b"));

    std::vector<BlockAdapterStorage> store;
    if (adapters_active) {
      store.reserve(static_cast<std::size_t>(cfg_.decoder_layers));
      for (int i = 0; i < cfg_.decoder_layers; ++i)
        store.push_back(block_adapters(i));
    }
    for (int i = cfg_.decoder_layers - 1; i >= 0; --i)
      dx = block_backward(
          dx, cat("lm.block", i, "."),
          adapters_active ? store[static_cast<std::size_t>(i)].view()
                          : BlockAdapters<S>{},
          cache.blocks[static_cast<std::size_t>(i)], grads);

    if (Mat<S>* dpos = grads.find("lm.pos")) {
      const int ab = cfg_.acoustic_len();
      for (int i = 0; i < tb; ++i) dpos->row(i) += dx.row(i);
      for (int i = 0; i < tl; ++i) dpos->row(pl + ab + i) += dx.row(tb + i);
    }

    if (Mat<S>* demb = grads.find("lm.tok_emb")) {
      for (int i = 0; i < pl; ++i)
        demb->row(prompt_tokens_[static_cast<std::size_t>(i)]) += dx.row(i);
      demb->row(Vocab::kBos) += dx.row(tb);
      for (int i = 1; i < tl; ++i)
        demb->row(target[static_cast<std::size_t>(i - 1)]) += dx.row(tb + i);
    }

    if (proj_cache) {
      Mat<S> dacoustic = dx.middleRows(pl, tb - pl);
      Mat<S> dframes =
          project_backward(dacoustic, *proj_cache, grads,
                           enc_cache != nullptr, cfg_.encoder_out_len());
      if (enc_cache) encode_backward(dframes, *enc_cache, grads);
    }
  }

  // ----- decoding internals -------------------------------------------------

  void init_kv(KvCache<S>* kv, int capacity) const {
    kv->k.assign(static_cast<std::size_t>(cfg_.decoder_layers),
                 Mat<S>::Zero(capacity, cfg_.model_dim));
    kv->v.assign(static_cast<std::size_t>(cfg_.decoder_layers),
                 Mat<S>::Zero(capacity, cfg_.model_dim));
    kv->len = 0;
    kv->capacity = capacity;
  }

  /// Runs the prefix through the blocks, filling the cache, and returns
  /// head logits for every prefix row.
  Mat<S> prime_kv(KvCache<S>* kv, const Mat<S>& emb,
                  bool adapters_active) const {
    Mat<S> x = emb;
    for (int i = 0; i < cfg_.decoder_layers; ++i) {
      BlockAdapterStorage st;
      if (adapters_active) st = block_adapters(i);
      BlockCache<S> bc;
      x = block_forward(x, cat("lm.block", i, "."),
                        adapters_active ? st.view() : BlockAdapters<S>{},
                        /*causal=*/true, nullptr, &bc);
      kv->k[static_cast<std::size_t>(i)].topRows(emb.rows()) = bc.k;
      kv->v[static_cast<std::size_t>(i)].topRows(emb.rows()) = bc.v;
    }
    kv->len = static_cast<int>(emb.rows());
    Mat<S> xf = ln_forward<S>(x, params_.at("lm.lnf.g"), params_.at("lm.lnf.b"),
                           nullptr);
    Mat<S> logits = xf * params_.at("lm.head.w").transpose();
    logits.rowwise() += params_.at("lm.head.b").row(0);
    return logits;
  }

  RowVec<S> step_row(TokenId tok, int position) const {
    const Mat<S>& pos = params_.at("lm.pos");
    if (position >= pos.rows())
      throw CapacityError(cat("decode: position ", position,
                              " exceeds capacity ", pos.rows()));
    return token_embedding(tok) + pos.row(position);
  }

  /// Appends one row to the cache and returns its head logits.
  RowVec<S> step_kv(KvCache<S>* kv, const RowVec<S>& row,
                    bool adapters_active) const {
    const int heads = cfg_.heads;
    const int hd = cfg_.head_dim();
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    Mat<S> x(1, cfg_.model_dim);
    x.row(0) = row;
    const int n = kv->len;
    for (int i = 0; i < cfg_.decoder_layers; ++i) {
      const std::string prefix = cat("lm.block", i, ".");
      BlockAdapterStorage st;
      BlockAdapters<S> ad;
      if (adapters_active) {
        st = block_adapters(i);
        ad = st.view();
      }
      Mat<S> x1 = ln_forward<S>(x, params_.at(prefix + "ln1.g"),
                             params_.at(prefix + "ln1.b"), nullptr);
      Mat<S> q = linear_lora_forward<S>(x1, params_.at(prefix + "attn.wq"), ad.q,
                                     nullptr, nullptr);
      Mat<S> k = linear_lora_forward<S>(x1, params_.at(prefix + "attn.wk"), ad.k,
                                     nullptr, nullptr);
      Mat<S> v = linear_lora_forward<S>(x1, params_.at(prefix + "attn.wv"), ad.v,
                                     nullptr, nullptr);
      Mat<S>& ck = kv->k[static_cast<std::size_t>(i)];
      Mat<S>& cv = kv->v[static_cast<std::size_t>(i)];
      ck.row(n) = k.row(0);
      cv.row(n) = v.row(0);
      Mat<S> ctx(1, cfg_.model_dim);
      for (int h = 0; h < heads; ++h) {
        auto qh = q.row(0).segment(h * hd, hd);
        auto kh = ck.topRows(n + 1).middleCols(h * hd, hd);
        auto vh = cv.topRows(n + 1).middleCols(h * hd, hd);
        RowVec<S> scores = qh * kh.transpose() * inv_sqrt;
        S m = scores.maxCoeff();
        RowVec<S> e = (scores.array() - m).exp().matrix();
        RowVec<S> p = e / e.sum();
        ctx.row(0).segment(h * hd, hd).noalias() = p * vh;
      }
      Mat<S> attn = linear_lora_forward<S>(ctx, params_.at(prefix + "attn.wo"),
                                        ad.o, nullptr, nullptr);
      Mat<S> x_mid = x + attn;
      Mat<S> x2 = ln_forward<S>(x_mid, params_.at(prefix + "ln2.g"),
                             params_.at(prefix + "ln2.b"), nullptr);
      Mat<S> hpre = x2 * params_.at(prefix + "mlp.w1").transpose();
      hpre.rowwise() += params_.at(prefix + "mlp.b1").row(0);
      Mat<S> hm = hpre.cwiseMax(S(0));
      Mat<S> y = hm * params_.at(prefix + "mlp.w2").transpose();
      y.rowwise() += params_.at(prefix + "mlp.b2").row(0);
      x = x_mid + y;
    }
    kv->len = n + 1;
    Mat<S> xf = ln_forward<S>(x, params_.at("lm.lnf.g"), params_.at("lm.lnf.b"),
                           nullptr);
    RowVec<S> logits = xf.row(0) * params_.at("lm.head.w").transpose();
    logits += params_.at("lm.head.b").row(0);
    return logits;
  }

  // ----- helpers ------------------------------------------------------------

  template <typename Derived>
  static TokenId argmax_row(const Eigen::MatrixBase<Derived>& row) {
    Eigen::Index idx = 0;
    row.maxCoeff(&idx);
    return static_cast<TokenId>(idx);
  }

  std::int64_t count_tokens_utt(const std::vector<const Utterance*>& b) const {
    std::int64_t n = 0;
    for (const Utterance* u : b)
      n += target_effective_len(u->text, vocab_.size());
    return n;
  }
  std::int64_t count_tokens_text(
      const std::vector<const TextSample*>& b) const {
    std::int64_t n = 0;
    for (const TextSample* t : b)
      n += target_effective_len(t->text, vocab_.size());
    return n;
  }

  ModelConfig cfg_;
  LoraConfig lora_cfg_;
  Vocab vocab_;
  TokenSeq prompt_tokens_;
  ParamStore<S> params_;
  std::vector<std::string> lora_sites_;
};

}  // namespace slmadapt
