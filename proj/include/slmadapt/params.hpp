// slmadapt/params.hpp

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

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "slmadapt/common.hpp"
#include "slmadapt/rng.hpp"

namespace slmadapt {

// Named weight collections. Names use dotted paths with fixed prefixes:
//   encoder.*    acoustic encoder
//   projector.*  frame-folding projector
//   lm.*         base language model
//   lora.*       adapters, keyed by attachment site
// The prefix is the unit of freezing: adaptation stages never touch
// encoder.* or lm.*, and serialization keeps lora.* extractable on its own.

template <typename S>
class ParamStore {
 public:
  Mat<S>& add(const std::string& name, int rows, int cols) {
    auto [it, fresh] = tensors_.emplace(name, Mat<S>());
    if (!fresh) throw ConfigError(cat("param '", name, "' already exists"));
    it->second.setZero(rows, cols);
    return it->second;
  }

  bool has(const std::string& name) const { return tensors_.count(name) > 0; }

  Mat<S>& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      throw UsageError(cat("unknown param '", name, "'"));
    return it->second;
  }

  const Mat<S>& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      throw UsageError(cat("unknown param '", name, "'"));
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(tensors_.size());
    for (const auto& [k, v] : tensors_) out.push_back(k);
    return out;
  }

  std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : tensors_)
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
  }

  std::size_t size() const { return tensors_.size(); }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : tensors_) n += v.size();
    return n;
  }

  /// FNV-1a over the raw bytes of every tensor, in name order. Used by the
  /// freeze-guarantee and monitor-purity checks.
  std::uint64_t byte_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [k, v] : tensors_) {
      for (unsigned char c : k) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
      std::size_t n = static_cast<std::size_t>(v.size()) * sizeof(S);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

 private:
  std::map<std::string, Mat<S>> tensors_;
};

/// Map from parameter name to trainable flag. Parameters marked
/// non-trainable receive exactly zero update in every optimizer step.
struct TrainabilityMask {
  std::map<std::string, bool> flags;

  bool is_trainable(const std::string& name) const {
    auto it = flags.find(name);
    return it != flags.end() && it->second;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : flags)
      if (v) out.push_back(k);
    return out;
  }
};

/// Gradient accumulator materialized only for trainable parameters:
/// accumulation against a frozen name is a silent no-op downstream of the
/// mask, so frozen weights can never drift.
template <typename S>
class GradStore {
 public:
  template <typename P>
  GradStore(const ParamStore<P>& params, const TrainabilityMask& mask) {
    for (const auto& [name, tensor] : params) {
      if (!mask.is_trainable(name)) continue;
      grads_.emplace(name, Mat<S>::Zero(tensor.rows(), tensor.cols()));
    }
  }

  void zero() {
    for (auto& [k, g] : grads_) g.setZero();
  }

  bool tracks(const std::string& name) const { return grads_.count(name) > 0; }

  Mat<S>* find(const std::string& name) {
    auto it = grads_.find(name);
    return it == grads_.end() ? nullptr : &it->second;
  }

  const Mat<S>& at(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end())
      throw UsageError(cat("no gradient tracked for '", name, "'"));
    return it->second;
  }

  auto begin() { return grads_.begin(); }
  auto end() { return grads_.end(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

  double global_norm() const {
    double sq = 0;
    for (const auto& [k, g] : grads_)
      sq += static_cast<double>(g.template cast<double>().squaredNorm());
    return std::sqrt(sq);
  }

  void scale(S factor) {
    for (auto& [k, g] : grads_) g *= factor;
  }

  bool all_finite() const {
    for (const auto& [k, g] : grads_)
      if (!g.allFinite()) return false;
    return true;
  }

 private:
  std::map<std::string, Mat<S>> grads_;
};

template <typename S>
void fill_normal(Mat<S>& m, std::uint64_t seed, double stddev) {
  auto eng = make_engine(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = static_cast<S>(dist(eng));
}

template <typename S>
void fill_uniform(Mat<S>& m, std::uint64_t seed, double lo, double hi) {
  auto eng = make_engine(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = static_cast<S>(dist(eng));
}

}  // namespace slmadapt
