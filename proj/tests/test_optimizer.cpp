// tests/test_optimizer.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "slmadapt/optimizer.hpp"
#include "slmadapt/params.hpp"

namespace slmadapt {
namespace {

OptimizerConfig plain_config() {
  OptimizerConfig cfg;
  cfg.base_lr = 0.1;
  cfg.warmup_steps = 1;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.999;
  cfg.eps = 1e-8;
  cfg.weight_decay = 0.0;
  cfg.clip_norm = 0.0;
  return cfg;
}

TEST_CASE("two adam steps match a hand trace", "[optimizer]") {
  ParamStore<double> params;
  params.add("w", 1, 1)(0, 0) = 1.0;
  TrainabilityMask mask;
  mask.flags["w"] = true;
  OptimizerConfig cfg = plain_config();
  AdamOptimizer<double> opt(params, mask, cfg);

  double w = 1.0;
  double m = 0.0;
  double v = 0.0;
  auto reference_step = [&](double g, int step) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(cfg.beta1, step));
    const double vhat = v / (1.0 - std::pow(cfg.beta2, step));
    w -= cfg.base_lr * mhat / (std::sqrt(vhat) + cfg.eps);
  };

  GradStore<double> grads(params, mask);
  grads.find("w")->setConstant(0.5);
  opt.step(params, grads);
  reference_step(0.5, 1);
  CHECK(params.at("w")(0, 0) == Catch::Approx(w).epsilon(0.0).margin(1e-10));

  grads.zero();
  grads.find("w")->setConstant(-0.25);
  opt.step(params, grads);
  reference_step(-0.25, 2);
  CHECK(params.at("w")(0, 0) == Catch::Approx(w).epsilon(0.0).margin(1e-10));
  CHECK(opt.step_count() == 2);
}

TEST_CASE("decoupled weight decay shrinks weights independently of the "
          "gradient",
          "[optimizer]") {
  ParamStore<double> params;
  params.add("w", 1, 1)(0, 0) = 2.0;
  TrainabilityMask mask;
  mask.flags["w"] = true;
  OptimizerConfig cfg = plain_config();
  cfg.weight_decay = 0.01;
  AdamOptimizer<double> opt(params, mask, cfg);
  GradStore<double> grads(params, mask);
  opt.step(params, grads);
  // Zero gradient leaves the adam update at zero, so only decay acts:
  // w <- w - lr * wd * w.
  CHECK(params.at("w")(0, 0) ==
        Catch::Approx(2.0 - 0.1 * 0.01 * 2.0).epsilon(0.0).margin(1e-12));
}

TEST_CASE("zero gradient and zero decay leave weights unchanged",
          "[optimizer]") {
  ParamStore<double> params;
  params.add("w", 3, 2).setConstant(0.7);
  TrainabilityMask mask;
  mask.flags["w"] = true;
  AdamOptimizer<double> opt(params, mask, plain_config());
  GradStore<double> grads(params, mask);
  opt.step(params, grads);
  CHECK(params.at("w") == Mat<double>::Constant(3, 2, 0.7));
}

TEST_CASE("gradient for a frozen tensor is a hard error", "[optimizer]") {
  ParamStore<double> params;
  params.add("w", 1, 1);
  params.add("frozen", 1, 1);
  TrainabilityMask opt_mask;
  opt_mask.flags["w"] = true;
  AdamOptimizer<double> opt(params, opt_mask, plain_config());

  TrainabilityMask wide_mask;
  wide_mask.flags["w"] = true;
  wide_mask.flags["frozen"] = true;
  GradStore<double> grads(params, wide_mask);
  grads.find("frozen")->setConstant(1.0);
  CHECK_THROWS_AS(opt.step(params, grads), UsageError);
}

TEST_CASE("empty mask is rejected at construction", "[optimizer]") {
  ParamStore<double> params;
  params.add("w", 1, 1);
  TrainabilityMask mask;
  mask.flags["w"] = false;
  CHECK_THROWS_AS(AdamOptimizer<double>(params, mask, plain_config()),
                  UsageError);
}

TEST_CASE("non-finite gradients are rejected before any update",
          "[optimizer]") {
  ParamStore<double> params;
  params.add("w", 1, 1)(0, 0) = 1.0;
  TrainabilityMask mask;
  mask.flags["w"] = true;
  AdamOptimizer<double> opt(params, mask, plain_config());
  GradStore<double> grads(params, mask);
  grads.find("w")->setConstant(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(opt.step(params, grads), NumericError);
  CHECK(params.at("w")(0, 0) == 1.0);
}

TEST_CASE("warmup ramps linearly then holds", "[optimizer]") {
  OptimizerConfig cfg = plain_config();
  cfg.warmup_steps = 4;
  CHECK(cfg.lr_at(1) == Catch::Approx(0.025));
  CHECK(cfg.lr_at(2) == Catch::Approx(0.05));
  CHECK(cfg.lr_at(4) == Catch::Approx(0.1));
  CHECK(cfg.lr_at(5) == Catch::Approx(0.1));
  CHECK(cfg.lr_at(4000) == Catch::Approx(0.1));
  double prev = 0.0;
  for (int s = 1; s <= 8; ++s) {
    CHECK(cfg.lr_at(s) >= prev);
    prev = cfg.lr_at(s);
  }
}

TEST_CASE("optimizer config validation", "[optimizer]") {
  OptimizerConfig cfg = plain_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.base_lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = plain_config();
  cfg.warmup_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = plain_config();
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = plain_config();
  cfg.beta2 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("the step report carries lr and clipping", "[optimizer]") {
  ParamStore<double> params;
  params.add("w", 1, 2);
  TrainabilityMask mask;
  mask.flags["w"] = true;
  OptimizerConfig cfg = plain_config();
  cfg.clip_norm = 1.0;
  AdamOptimizer<double> opt(params, mask, cfg);
  GradStore<double> grads(params, mask);
  grads.find("w")->setConstant(3.0);
  auto info = opt.step(params, grads);
  CHECK(info.step == 1);
  CHECK(info.lr == Catch::Approx(0.1));
  CHECK(info.grad_norm == Catch::Approx(std::sqrt(18.0)));
  CHECK(info.clip_factor == Catch::Approx(1.0 / std::sqrt(18.0)));
}

TEST_CASE("clip_global_norm only acts above the threshold", "[optimizer]") {
  ParamStore<double> params;
  params.add("w", 2, 2);
  TrainabilityMask mask;
  mask.flags["w"] = true;
  GradStore<double> grads(params, mask);
  grads.find("w")->setConstant(0.1);
  CHECK(clip_global_norm(grads, 10.0) == 1.0);
  CHECK(clip_global_norm(grads, 0.0) == 1.0);
  grads.find("w")->setConstant(10.0);
  const double norm = grads.global_norm();
  const double f = clip_global_norm(grads, 1.0);
  CHECK(f == Catch::Approx(1.0 / norm));
  CHECK(grads.global_norm() == Catch::Approx(1.0));
}

TEST_CASE("moment restore validates the tensor set", "[optimizer]") {
  ParamStore<double> params;
  params.add("a", 1, 1);
  params.add("b", 1, 1);
  TrainabilityMask mask;
  mask.flags["a"] = true;
  mask.flags["b"] = true;
  AdamOptimizer<double> opt(params, mask, plain_config());

  auto m = opt.first_moments();
  auto v = opt.second_moments();
  CHECK_NOTHROW(opt.restore(5, m, v));
  CHECK(opt.step_count() == 5);

  auto short_m = m;
  short_m.erase("a");
  CHECK_THROWS_AS(opt.restore(5, short_m, v), DataError);

  auto renamed = m;
  renamed.erase("a");
  renamed["c"] = Mat<double>::Zero(1, 1);
  CHECK_THROWS_AS(opt.restore(5, renamed, v), DataError);
}

}  // namespace
}  // namespace slmadapt
