// slmadapt/optimizer.hpp

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
#include <map>
#include <string>

#include "slmadapt/common.hpp"
#include "slmadapt/config.hpp"
#include "slmadapt/params.hpp"

namespace slmadapt {

/// Scales the gradients so their global norm does not exceed `max_norm`.
/// Returns the factor applied (1 when no clipping was needed or disabled).
template <typename S>
double clip_global_norm(GradStore<S>& grads, double max_norm) {
  if (max_norm <= 0.0) return 1.0;
  const double norm = grads.global_norm();
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double factor = max_norm / norm;
  grads.scale(static_cast<S>(factor));
  return factor;
}

/// Adam with decoupled weight decay and warmup-then-constant learning rate.
/// Moments exist only for tensors the trainability mask marks trainable;
/// a gradient arriving for any other tensor is a hard error, so a frozen
/// parameter can never move.
template <typename S>
class AdamOptimizer {
 public:
  struct StepInfo {
    std::int64_t step = 0;   // 1-based index of the step just taken
    double lr = 0.0;
    double grad_norm = 0.0;  // before clipping
    double clip_factor = 1.0;
  };

  AdamOptimizer(const ParamStore<S>& params, const TrainabilityMask& mask,
                const OptimizerConfig& cfg)
      : cfg_(cfg) {
    cfg_.validate();
    for (const auto& [name, tensor] : params) {
      if (!mask.is_trainable(name)) continue;
      m_.emplace(name, Mat<S>::Zero(tensor.rows(), tensor.cols()));
      v_.emplace(name, Mat<S>::Zero(tensor.rows(), tensor.cols()));
    }
    if (m_.empty())
      throw UsageError("optimizer: trainability mask selects no tensors");
  }

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  StepInfo step(ParamStore<S>& params, GradStore<S>& grads) {
    for (const auto& [name, g] : grads)
      if (m_.find(name) == m_.end())
        throw UsageError(
            cat("optimizer: gradient supplied for frozen tensor '", name,
                "'"));
    if (!grads.all_finite())
      throw NumericError("optimizer: non-finite gradient");

    StepInfo info;
    info.grad_norm = grads.global_norm();
    info.clip_factor = clip_global_norm(grads, cfg_.clip_norm);
    step_ += 1;
    info.step = step_;
    info.lr = cfg_.lr_at(step_);

    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const S lr = static_cast<S>(info.lr);
    const S wd = static_cast<S>(cfg_.weight_decay);
    const S eps = static_cast<S>(cfg_.eps);
    for (const auto& [name, g] : grads) {
      Mat<S>& m = m_.at(name);
      Mat<S>& v = v_.at(name);
      Mat<S>& w = params.at(name);
      m = b1 * m + (S(1) - b1) * g;
      v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
      Mat<S> mhat = m / static_cast<S>(bc1);
      Mat<S> vhat = v / static_cast<S>(bc2);
      w.array() -= lr * (mhat.array() / (vhat.array().sqrt() + eps) +
                         wd * w.array());
    }
    return info;
  }

  // Checkpoint access.
  const std::map<std::string, Mat<S>>& first_moments() const { return m_; }
  const std::map<std::string, Mat<S>>& second_moments() const { return v_; }
  void restore(std::int64_t step, std::map<std::string, Mat<S>> m,
               std::map<std::string, Mat<S>> v) {
    if (m.size() != m_.size() || v.size() != v_.size())
      throw DataError("optimizer restore: moment set does not match mask");
    for (const auto& [name, t] : m_)
      if (m.find(name) == m.end() || v.find(name) == v.end())
        throw DataError(cat("optimizer restore: missing moments for '", name,
                            "'"));
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  OptimizerConfig cfg_;
  std::int64_t step_ = 0;
  std::map<std::string, Mat<S>> m_;
  std::map<std::string, Mat<S>> v_;
};

}  // namespace slmadapt
