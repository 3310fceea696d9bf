// tests/test_lora.cpp

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

#include <random>
#include <string>
#include <vector>

#include "slmadapt/lora.hpp"
#include "slmadapt/params.hpp"
#include "slmadapt/rng.hpp"

namespace slmadapt {
namespace {

double rel_diff(const Mat<double>& a, const Mat<double>& b) {
  double denom = std::max(a.norm(), 1e-30);
  return (a - b).norm() / denom;
}

TEST_CASE("fresh adapter is an exact identity on the output", "[lora]") {
  std::mt19937_64 eng(derive_seed(11, "lora.identity"));
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int in = 3 + trial % 5;
    const int out = 2 + trial % 7;
    const int rank = 1 + trial % 2;
    Mat<double> w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = nd(eng);
    Mat<double> x(in, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(eng);
    LoraAdapter<double> ad = init_adapter<double>(
        in, out, rank, 16.0, 0.0, derive_seed(11, "lora.site", trial));
    CHECK(ad.B.isZero(0.0));
    Mat<double> with = lora_apply(x, w, ad, false);
    Mat<double> without = w * x;
    CHECK(rel_diff(without, with) <= 1e-6);
  }
}

TEST_CASE("merged weight reproduces the adapted forward pass", "[lora]") {
  std::mt19937_64 eng(derive_seed(12, "lora.merge"));
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int in = 2 + trial % 9;
    const int out = 2 + trial % 6;
    const int rank = 1 + trial % std::min(in, out);
    LoraAdapter<double> ad = init_adapter<double>(
        in, out, rank, 8.0, 0.0, derive_seed(12, "lora.site", trial));
    for (Eigen::Index i = 0; i < ad.B.size(); ++i) ad.B.data()[i] = nd(eng);
    Mat<double> w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = nd(eng);
    Mat<double> x(in, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(eng);
    Mat<double> adapted = lora_apply(x, w, ad, false);
    Mat<double> merged = lora_merge(w, ad) * x;
    INFO("trial " << trial);
    CHECK(rel_diff(adapted, merged) < 1e-5);
  }
}

TEST_CASE("delta scaling follows alpha over rank", "[lora]") {
  LoraAdapter<double> ad =
      init_adapter<double>(6, 4, 2, 32.0, 0.0, derive_seed(13, "lora.scale"));
  CHECK(ad.scaling() == Catch::Approx(16.0));
  ad.B.setOnes();
  Mat<double> expect = (ad.B * ad.A) * 16.0;
  CHECK(rel_diff(expect, ad.delta()) < 1e-12);
}

TEST_CASE("parameter count formula matches enumeration", "[lora]") {
  std::vector<LoraSiteDims> sites = {
      {"a", 8, 8}, {"b", 8, 4}, {"c", 16, 8}, {"d", 3, 5}};
  for (int rank : {1, 2, 4, 8}) {
    std::int64_t enumerated = 0;
    for (const auto& s : sites) {
      LoraAdapter<double> ad = init_adapter<double>(
          s.in_dim, s.out_dim, std::min(rank, std::min(s.in_dim, s.out_dim)),
          16.0, 0.0, derive_seed(14, s.name));
      (void)ad;
      enumerated += static_cast<std::int64_t>(rank) * s.in_dim +
                    static_cast<std::int64_t>(rank) * s.out_dim;
    }
    CHECK(lora_param_count(sites, rank) == enumerated);
  }
}

TEST_CASE("full scale adapter budget lands at the published figure",
          "[lora]") {
  // 28 decoder layers at rank 64 over every linear site total about 161M
  // trainable scalars.
  std::int64_t n = lora_param_count(full_scale_7b_sites(), 64);
  CHECK(n == 161480704);
  CHECK(static_cast<double>(n) / 1e6 == Catch::Approx(161.5).margin(0.1));
}

TEST_CASE("adapter init validates its config", "[lora]") {
  CHECK_THROWS_AS(init_adapter<double>(4, 4, 0, 16.0, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(init_adapter<double>(4, 4, 5, 16.0, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(init_adapter<double>(4, 4, 2, 16.0, -0.1, 1), ConfigError);
  CHECK_THROWS_AS(init_adapter<double>(4, 4, 2, 16.0, 1.0, 1), ConfigError);
  CHECK_NOTHROW(init_adapter<double>(4, 4, 4, 16.0, 0.5, 1));
}

TEST_CASE("adapter init is deterministic in the seed", "[lora]") {
  LoraAdapter<double> a = init_adapter<double>(6, 5, 2, 16.0, 0.0, 99);
  LoraAdapter<double> b = init_adapter<double>(6, 5, 2, 16.0, 0.0, 99);
  LoraAdapter<double> c = init_adapter<double>(6, 5, 2, 16.0, 0.0, 100);
  CHECK(a.A == b.A);
  CHECK(a.A != c.A);
  const double bound = 1.0 / std::sqrt(6.0);
  CHECK(a.A.maxCoeff() <= bound);
  CHECK(a.A.minCoeff() >= -bound);
}

TEST_CASE("dropout is identity when off and rescales when on", "[lora]") {
  Mat<double> x = Mat<double>::Ones(8, 8);
  CHECK(lora_dropout<double>(x, 0.0, nullptr) == x);
  std::mt19937_64 eng(derive_seed(15, "lora.dropout"));
  CHECK(lora_dropout<double>(x, 0.5, nullptr) == x);
  Mat<double> y = lora_dropout<double>(x, 0.5, &eng);
  int kept = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    REQUIRE((v == 0.0 || v == Catch::Approx(2.0)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 0);
  CHECK(kept < 64);
}

TEST_CASE("apply rejects mismatched shapes", "[lora]") {
  LoraAdapter<double> ad = init_adapter<double>(4, 3, 2, 16.0, 0.0, 7);
  Mat<double> w = Mat<double>::Zero(3, 4);
  Mat<double> x = Mat<double>::Zero(5, 1);
  CHECK_THROWS_AS(lora_apply(x, w, ad, false), UsageError);
  Mat<double> w_bad = Mat<double>::Zero(2, 4);
  CHECK_THROWS_AS(lora_merge(w_bad, ad), UsageError);
}

TEST_CASE("strategy masks pick the right prefixes", "[lora]") {
  ParamStore<double> params;
  params.add("encoder.conv.w", 2, 2);
  params.add("lm.tok_embed", 2, 2);
  params.add("lm.block0.attn.wq", 2, 2);
  params.add("projector.fc1.w", 2, 2);
  params.add("lora.lm.block0.attn.wq.A", 1, 2);
  params.add("lora.lm.block0.attn.wq.B", 2, 1);

  TrainabilityMask text = mask_for_strategy(Strategy::TextOnly, params);
  CHECK(text.trainable_names() ==
        std::vector<std::string>{"lora.lm.block0.attn.wq.A",
                                 "lora.lm.block0.attn.wq.B"});

  for (Strategy s : {Strategy::Speech, Strategy::TextThenSpeechPhase2}) {
    TrainabilityMask m = mask_for_strategy(s, params);
    CHECK(m.trainable_names() ==
          std::vector<std::string>{"lora.lm.block0.attn.wq.A",
                                   "lora.lm.block0.attn.wq.B",
                                   "projector.fc1.w"});
    CHECK_FALSE(m.is_trainable("encoder.conv.w"));
    CHECK_FALSE(m.is_trainable("lm.tok_embed"));
  }
}

TEST_CASE("strategy mask requires attached adapters", "[lora]") {
  ParamStore<double> params;
  params.add("lm.tok_embed", 2, 2);
  CHECK_THROWS_AS(mask_for_strategy(Strategy::TextOnly, params), UsageError);
}

TEST_CASE("prefix masks freeze everything else", "[lora]") {
  ParamStore<double> params;
  params.add("encoder.conv.w", 2, 2);
  params.add("projector.fc1.w", 2, 2);
  params.add("projector.fc2.w", 2, 2);
  params.add("lm.tok_embed", 2, 2);
  TrainabilityMask m = mask_for_prefixes(params, {"projector."});
  CHECK(m.trainable_names() ==
        std::vector<std::string>{"projector.fc1.w", "projector.fc2.w"});
  TrainabilityMask none = mask_for_prefixes(params, {});
  CHECK(none.trainable_names().empty());
}

TEST_CASE("strategy names round trip", "[lora]") {
  for (Strategy s : {Strategy::TextOnly, Strategy::Speech,
                     Strategy::TextThenSpeechPhase2})
    CHECK(strategy_from_name(strategy_name(s)) == s);
  CHECK(strategy_from_name("text-then-speech") ==
        Strategy::TextThenSpeechPhase2);
  CHECK_THROWS_AS(strategy_from_name("both"), UsageError);
}

}  // namespace
}  // namespace slmadapt
