// tests/test_rng_vocab.cpp

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

#include <set>
#include <string>

#include "slmadapt/rng.hpp"
#include "slmadapt/vocab.hpp"

namespace slmadapt {
namespace {

TEST_CASE("derived seeds are stable and well separated", "[rng]") {
  CHECK(derive_seed(7, "data") == derive_seed(7, "data"));
  CHECK(derive_seed(7, "data", 3) == derive_seed(7, "data", 3));

  std::set<std::uint64_t> seen;
  for (std::uint64_t root : {1ULL, 2ULL, 7ULL}) {
    for (const char* name : {"data", "init", "dropout", "order"}) {
      for (std::uint64_t idx = 0; idx < 4; ++idx)
        seen.insert(derive_seed(root, name, idx));
      seen.insert(derive_seed(root, name));
    }
  }
  CHECK(seen.size() == 3 * 4 * 5);
}

TEST_CASE("substreams do not collide with sibling names", "[rng]") {
  CHECK(derive_seed(1, "dropout.a") != derive_seed(1, "dropout.b"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(0, "a", 1));
}

TEST_CASE("engines from equal seeds agree", "[rng]") {
  auto a = make_engine(derive_seed(5, "x"));
  auto b = make_engine(derive_seed(5, "x"));
  for (int i = 0; i < 16; ++i) CHECK(a() == b());
}

TEST_CASE("vocab layout reserves the special ids", "[vocab]") {
  Vocab v;
  CHECK(Vocab::kPad == 0);
  CHECK(Vocab::kBos == 1);
  CHECK(Vocab::kEos == 2);
  CHECK(v.size() ==
        Vocab::kNumSpecial + static_cast<int>(v.charset().size()));
  CHECK(v.char_id('a') == Vocab::kNumSpecial);
}

TEST_CASE("encode and decode round trip", "[vocab]") {
  Vocab v;
  const std::string text = "hello world 42";
  TokenSeq ids = v.encode(text);
  CHECK(ids.size() == text.size());
  CHECK(v.decode(ids) == text);

  TokenSeq target = v.encode_target(text);
  CHECK(target.size() == text.size() + 1);
  CHECK(target.back() == Vocab::kEos);
  CHECK(v.decode(target) == text);
}

TEST_CASE("decode skips pad and bos and stops at eos", "[vocab]") {
  Vocab v;
  TokenSeq ids = {Vocab::kBos, v.char_id('h'), Vocab::kPad, v.char_id('i'),
                  Vocab::kEos, v.char_id('x')};
  CHECK(v.decode(ids) == "hi");
}

TEST_CASE("vocab rejects bad input", "[vocab]") {
  Vocab v;
  CHECK_FALSE(v.has_char('Q'));
  CHECK_THROWS_AS(v.char_id('Q'), DataError);
  CHECK_THROWS_AS(v.encode("UPPER"), DataError);
  CHECK_THROWS_AS(v.decode({999}), DataError);
  CHECK_THROWS_AS(Vocab(""), ConfigError);
  CHECK_THROWS_AS(Vocab("aa"), ConfigError);
}

}  // namespace
}  // namespace slmadapt
