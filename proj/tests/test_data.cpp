// tests/test_data.cpp

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

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "slmadapt/data.hpp"
#include "slmadapt/wer.hpp"

namespace slmadapt {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           fs::path(cat("slmadapt-data-", ::getpid(), "-",
                        std::chrono::steady_clock::now()
                            .time_since_epoch()
                            .count()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.max_frames = 64;
  cfg.max_text_len = 32;
  return cfg;
}

TEST_CASE("char prototypes are fixed per character and seed", "[data]") {
  RowVec<float> a1 = char_prototype('a', 8, 7);
  RowVec<float> a2 = char_prototype('a', 8, 7);
  RowVec<float> b = char_prototype('b', 8, 7);
  RowVec<float> a_other = char_prototype('a', 8, 8);
  CHECK(a1 == a2);
  CHECK((a1 - b).norm() > 0.0);
  CHECK((a1 - a_other).norm() > 0.0);
}

TEST_CASE("render_speech is deterministic and frame exact", "[data]") {
  ModelConfig cfg = small_model();
  RenderSpec rs;
  rs.proto_seed = 3;
  rs.noise_sigma = 0.0;
  rs.fpc_min = 3;
  rs.fpc_max = 3;
  FeatureSequence f1 = render_speech("ab c", cfg, rs, 11);
  FeatureSequence f2 = render_speech("ab c", cfg, rs, 11);
  CHECK(f1.valid_len == 12);
  CHECK(f1.frames == f2.frames);
  // Without noise every frame of a character equals its prototype.
  RowVec<float> pa = char_prototype('a', cfg.feature_dim, rs.proto_seed);
  for (int t = 0; t < 3; ++t) CHECK(f1.frames.row(t) == pa);
  // Rows past valid_len stay zero padded.
  for (int t = f1.valid_len; t < cfg.max_frames; ++t)
    CHECK(f1.frames.row(t).norm() == 0.0f);
}

TEST_CASE("render noise is per utterance and reproducible", "[data]") {
  ModelConfig cfg = small_model();
  RenderSpec rs;
  rs.proto_seed = 3;
  rs.noise_sigma = 0.5;
  rs.fpc_min = 2;
  rs.fpc_max = 2;
  FeatureSequence f1 = render_speech("abc", cfg, rs, 1);
  FeatureSequence f1b = render_speech("abc", cfg, rs, 1);
  FeatureSequence f2 = render_speech("abc", cfg, rs, 2);
  CHECK(f1.frames == f1b.frames);
  CHECK(f1.frames != f2.frames);
}

TEST_CASE("render rejects bad input", "[data]") {
  ModelConfig cfg = small_model();
  RenderSpec rs;
  rs.fpc_min = 2;
  rs.fpc_max = 2;
  CHECK_THROWS_AS(render_speech("", cfg, rs, 1), DataError);
  CHECK_THROWS_AS(render_speech("ABC", cfg, rs, 1), DataError);
  std::string too_long(40, 'a');
  CHECK_THROWS_AS(render_speech(too_long, cfg, rs, 1), CapacityError);
  RenderSpec bad = rs;
  bad.fpc_max = 1;
  CHECK_THROWS_AS(render_speech("a", cfg, bad, 1), ConfigError);
}

TEST_CASE("sampled sentences respect pools and budget", "[data]") {
  auto eng = make_engine(derive_seed(9, "sample"));
  std::set<std::string> spec_pool(target_specialist_words().begin(),
                                  target_specialist_words().end());
  std::set<std::string> shared_pool(shared_words().begin(),
                                    shared_words().end());
  for (int i = 0; i < 200; ++i) {
    std::string s =
        sample_sentence(eng, target_specialist_words(), shared_words(), 0.5,
                        3, 6, 40);
    CHECK(s.size() <= 40);
    std::istringstream is(s);
    std::string w;
    int n = 0;
    while (is >> w) {
      ++n;
      CHECK((spec_pool.count(w) + shared_pool.count(w)) == 1);
    }
    CHECK(n >= 3);
    CHECK(n <= 6);
  }
}

TEST_CASE("specialist slot rate matches the configured rate", "[data]") {
  auto eng = make_engine(derive_seed(10, "rate"));
  std::set<std::string> spec_pool(target_specialist_words().begin(),
                                  target_specialist_words().end());
  int specialist = 0;
  int total = 0;
  for (int i = 0; i < 1000; ++i) {
    std::string s =
        sample_sentence(eng, target_specialist_words(), shared_words(), 0.85,
                        3, 6, 120);
    std::istringstream is(s);
    std::string w;
    while (is >> w) {
      ++total;
      if (spec_pool.count(w)) ++specialist;
    }
  }
  const double rate = static_cast<double>(specialist) / total;
  CHECK(rate == Catch::Approx(0.85).margin(0.05));
}

TEST_CASE("sentence sampling fails loudly when the budget is impossible",
          "[data]") {
  auto eng = make_engine(1);
  CHECK_THROWS_AS(sample_sentence(eng, target_specialist_words(),
                                  shared_words(), 0.85, 5, 6, 8),
                  ConfigError);
}

TEST_CASE("benchmark generation is deterministic", "[data]") {
  BenchmarkSpec bs;
  bs.src_train = 12;
  bs.src_dev = 4;
  bs.src_test = 6;
  bs.tgt_text_train = 8;
  bs.tgt_speech_train = 8;
  bs.tgt_dev = 4;
  bs.tgt_test = 4;
  ModelConfig cfg;
  Benchmark a = generate_benchmark(bs, cfg);
  Benchmark b = generate_benchmark(bs, cfg);
  REQUIRE(a.src_train.size() == 12);
  REQUIRE(a.tgt_text_train.size() == 8);
  for (std::size_t i = 0; i < a.src_train.size(); ++i) {
    CHECK(a.src_train[i].id == b.src_train[i].id);
    CHECK(a.src_train[i].raw_text == b.src_train[i].raw_text);
    CHECK(a.src_train[i].features.frames == b.src_train[i].features.frames);
  }
  CHECK(a.tgt_test[0].raw_text == b.tgt_test[0].raw_text);
}

TEST_CASE("splits are isolated from each other's sizes", "[data]") {
  BenchmarkSpec bs;
  bs.src_train = 10;
  bs.src_dev = 4;
  bs.src_test = 4;
  bs.tgt_text_train = 6;
  bs.tgt_speech_train = 6;
  bs.tgt_dev = 4;
  bs.tgt_test = 4;
  ModelConfig cfg;
  Benchmark a = generate_benchmark(bs, cfg);
  bs.tgt_text_train = 20;
  bs.src_test = 8;
  Benchmark b = generate_benchmark(bs, cfg);
  for (std::size_t i = 0; i < a.src_train.size(); ++i)
    CHECK(a.src_train[i].raw_text == b.src_train[i].raw_text);
  for (std::size_t i = 0; i < a.tgt_dev.size(); ++i)
    CHECK(a.tgt_dev[i].raw_text == b.tgt_dev[i].raw_text);
}

TEST_CASE("benchmark splits carry disjoint ids and the right tags",
          "[data]") {
  BenchmarkSpec bs;
  bs.src_train = 8;
  bs.src_dev = 3;
  bs.src_test = 3;
  bs.tgt_text_train = 5;
  bs.tgt_speech_train = 5;
  bs.tgt_dev = 3;
  bs.tgt_test = 3;
  ModelConfig cfg;
  Benchmark b = generate_benchmark(bs, cfg);

  std::set<std::string> ids;
  auto absorb = [&ids](const auto& split, const char* domain) {
    for (const auto& item : split) {
      CHECK(item.domain_tag == domain);
      CHECK(ids.insert(item.id).second);
    }
  };
  absorb(b.src_train, "source");
  absorb(b.src_dev, "source");
  absorb(b.src_test, "source");
  absorb(b.tgt_speech_train, "target");
  absorb(b.tgt_dev, "target");
  absorb(b.tgt_test, "target");
  absorb(b.tgt_text_train, "target");
  CHECK(ids.size() == 8u + 3 + 3 + 5 + 3 + 3 + 5);

  Vocab v(cfg.charset);
  for (const auto& u : b.src_train)
    CHECK(u.text == v.encode_target(u.raw_text));
}

TEST_CASE("a bag of words classifier separates the domains", "[data]") {
  BenchmarkSpec bs;
  bs.src_train = 100;
  bs.src_dev = 1;
  bs.src_test = 50;
  bs.tgt_text_train = 1;
  bs.tgt_speech_train = 100;
  bs.tgt_dev = 1;
  bs.tgt_test = 50;
  ModelConfig cfg;
  Benchmark b = generate_benchmark(bs, cfg);

  // Multinomial naive Bayes with add-one smoothing, fit on the train
  // splits, scored on the held-out test splits.
  std::map<std::string, int> src_counts;
  std::map<std::string, int> tgt_counts;
  int src_total = 0;
  int tgt_total = 0;
  std::set<std::string> vocab_words;
  for (const auto& u : b.src_train)
    for (const auto& w : normalize_words(u.raw_text)) {
      ++src_counts[w];
      ++src_total;
      vocab_words.insert(w);
    }
  for (const auto& u : b.tgt_speech_train)
    for (const auto& w : normalize_words(u.raw_text)) {
      ++tgt_counts[w];
      ++tgt_total;
      vocab_words.insert(w);
    }
  const double vsize = static_cast<double>(vocab_words.size());
  auto log_lik = [&](const std::string& text,
                     const std::map<std::string, int>& counts, int total) {
    double ll = 0.0;
    for (const auto& w : normalize_words(text)) {
      auto it = counts.find(w);
      const double c = it == counts.end() ? 0.0 : it->second;
      ll += std::log((c + 1.0) / (total + vsize));
    }
    return ll;
  };
  int correct = 0;
  int n = 0;
  for (const auto& u : b.src_test) {
    ++n;
    if (log_lik(u.raw_text, src_counts, src_total) >
        log_lik(u.raw_text, tgt_counts, tgt_total))
      ++correct;
  }
  for (const auto& u : b.tgt_test) {
    ++n;
    if (log_lik(u.raw_text, tgt_counts, tgt_total) >
        log_lik(u.raw_text, src_counts, src_total))
      ++correct;
  }
  CHECK(static_cast<double>(correct) / n > 0.9);
}

TEST_CASE("specialist pools are disjoint", "[data]") {
  std::set<std::string> src(source_specialist_words().begin(),
                            source_specialist_words().end());
  for (const auto& w : target_specialist_words()) CHECK_FALSE(src.count(w));
  std::set<std::string> shared(shared_words().begin(), shared_words().end());
  for (const auto& w : target_specialist_words())
    CHECK_FALSE(shared.count(w));
  for (const auto& w : source_specialist_words())
    CHECK_FALSE(shared.count(w));
}

TEST_CASE("manifest round trip regenerates identical features", "[data]") {
  TempDir tmp;
  ModelConfig cfg;
  BenchmarkSpec bs;
  bs.src_train = 5;
  bs.src_dev = 1;
  bs.src_test = 1;
  bs.tgt_text_train = 1;
  bs.tgt_speech_train = 1;
  bs.tgt_dev = 1;
  bs.tgt_test = 1;
  Benchmark b = generate_benchmark(bs, cfg);

  const std::string path = tmp.file("src-train.jsonl");
  write_manifest(path, b.src_train, bs.render_spec());
  std::vector<Utterance> back = read_manifest(path, cfg);
  REQUIRE(back.size() == b.src_train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == b.src_train[i].id);
    CHECK(back[i].raw_text == b.src_train[i].raw_text);
    CHECK(back[i].domain_tag == b.src_train[i].domain_tag);
    CHECK(back[i].text == b.src_train[i].text);
    CHECK(back[i].features.frames == b.src_train[i].features.frames);
    CHECK(back[i].features.valid_len == b.src_train[i].features.valid_len);
  }
}

TEST_CASE("manifest reader reports the offending line", "[data]") {
  TempDir tmp;
  ModelConfig cfg;

  SECTION("missing file") {
    CHECK_THROWS_AS(read_manifest(tmp.file("absent.jsonl"), cfg), DataError);
  }
  SECTION("empty file gives an empty list") {
    const std::string path = tmp.file("empty.jsonl");
    std::ofstream(path).flush();
    CHECK(read_manifest(path, cfg).empty());
  }
  SECTION("malformed json names the line") {
    const std::string path = tmp.file("bad.jsonl");
    std::ofstream os(path);
    os << R"({"id":"x","text":"a","domain":"source","render":{"utt_seed":1,)"
       << R"("spec":{"proto_seed":1,"noise_sigma":0.0,"fpc_min":2,"fpc_max":2}}})"
       << "\n";
    os << "{oops\n";
    os.close();
    try {
      read_manifest(path, cfg);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SECTION("missing field names the line") {
    const std::string path = tmp.file("field.jsonl");
    std::ofstream os(path);
    os << R"({"id":"x","domain":"source"})" << "\n";
    os.close();
    try {
      read_manifest(path, cfg);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":1:") != std::string::npos);
    }
  }
  SECTION("blank line is rejected") {
    const std::string path = tmp.file("blank.jsonl");
    std::ofstream os(path);
    os << "\n";
    os.close();
    CHECK_THROWS_AS(read_manifest(path, cfg), DataError);
  }
}

TEST_CASE("text corpus round trip skips blank lines", "[data]") {
  TempDir tmp;
  ModelConfig cfg;
  const std::string path = tmp.file("corpus.txt");
  {
    std::ofstream os(path);
    os << "the road to the market\n\nsepsis dosage of insulin\n";
  }
  std::vector<TextSample> got = read_text_corpus(path, cfg, "target");
  REQUIRE(got.size() == 2);
  CHECK(got[0].raw_text == "the road to the market");
  CHECK(got[1].raw_text == "sepsis dosage of insulin");
  CHECK(got[0].domain_tag == "target");
  Vocab v(cfg.charset);
  CHECK(got[1].text == v.encode_target(got[1].raw_text));

  std::vector<TextSample> samples = got;
  const std::string out = tmp.file("corpus-out.txt");
  write_text_corpus(out, samples);
  std::vector<TextSample> again = read_text_corpus(out, cfg, "target");
  REQUIRE(again.size() == 2);
  CHECK(again[0].raw_text == got[0].raw_text);
}

TEST_CASE("text corpus reader rejects bad lines with location", "[data]") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.max_text_len = 8;
  const std::string path = tmp.file("bad.txt");
  {
    std::ofstream os(path);
    os << "ok\n" << "BADCHAR\n";
  }
  try {
    read_text_corpus(path, cfg, "d");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  const std::string long_path = tmp.file("long.txt");
  {
    std::ofstream os(long_path);
    os << "a very long line indeed\n";
  }
  CHECK_THROWS_AS(read_text_corpus(long_path, cfg, "d"), DataError);
  CHECK_THROWS_AS(read_text_corpus(tmp.file("absent.txt"), cfg, "d"),
                  DataError);
}

TEST_CASE("epoch permutations are stable per epoch and differ across epochs",
          "[data]") {
  std::vector<int> p0 = epoch_permutation(50, 9, 0);
  std::vector<int> p0b = epoch_permutation(50, 9, 0);
  std::vector<int> p1 = epoch_permutation(50, 9, 1);
  CHECK(p0 == p0b);
  CHECK(p0 != p1);
  std::set<int> seen(p0.begin(), p0.end());
  CHECK(seen.size() == 50);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 49);
}

TEST_CASE("batches keep the final short batch", "[data]") {
  std::vector<int> data(10);
  std::iota(data.begin(), data.end(), 0);
  std::vector<int> perm = epoch_permutation(10, 1, 0);
  auto batches = make_batches(data, perm, 4);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
  std::set<int> covered;
  for (const auto& b : batches)
    for (const int* p : b) covered.insert(*p);
  CHECK(covered.size() == 10);
  CHECK_THROWS_AS(make_batches(data, perm, 0), UsageError);
}

TEST_CASE("transcripts_of re-badges paired data", "[data]") {
  BenchmarkSpec bs;
  bs.src_train = 3;
  bs.src_dev = 1;
  bs.src_test = 1;
  bs.tgt_text_train = 1;
  bs.tgt_speech_train = 1;
  bs.tgt_dev = 1;
  bs.tgt_test = 1;
  ModelConfig cfg;
  Benchmark b = generate_benchmark(bs, cfg);
  std::vector<TextSample> t = transcripts_of(b.src_train);
  REQUIRE(t.size() == 3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t[i].id == b.src_train[i].id);
    CHECK(t[i].raw_text == b.src_train[i].raw_text);
    CHECK(t[i].text == b.src_train[i].text);
    CHECK(t[i].domain_tag == b.src_train[i].domain_tag);
  }
}

TEST_CASE("max_chars respects both the frame and the text budget", "[data]") {
  BenchmarkSpec bs;
  ModelConfig cfg;
  cfg.max_frames = 64;
  cfg.max_text_len = 100;
  bs.fpc_min = 8;
  bs.fpc_max = 8;
  CHECK(bs.max_chars(cfg) == 8);
  cfg.max_text_len = 5;
  CHECK(bs.max_chars(cfg) == 4);
}

TEST_CASE("benchmark spec validation", "[data]") {
  BenchmarkSpec bs;
  bs.src_train = 0;
  CHECK_THROWS_AS(bs.validate(), ConfigError);
  bs = BenchmarkSpec{};
  bs.specialist_rate = 1.5;
  CHECK_THROWS_AS(bs.validate(), ConfigError);
  bs = BenchmarkSpec{};
  bs.min_words = 4;
  bs.max_words = 3;
  CHECK_THROWS_AS(bs.validate(), ConfigError);
  CHECK_NOTHROW(BenchmarkSpec{}.validate());
}

TEST_CASE("render and benchmark specs serialize round trip", "[data]") {
  RenderSpec rs;
  rs.proto_seed = 42;
  rs.noise_sigma = 0.25;
  rs.fpc_min = 2;
  rs.fpc_max = 5;
  json j = rs;
  RenderSpec back = j.get<RenderSpec>();
  CHECK(back.proto_seed == rs.proto_seed);
  CHECK(back.noise_sigma == rs.noise_sigma);
  CHECK(back.fpc_min == rs.fpc_min);
  CHECK(back.fpc_max == rs.fpc_max);

  BenchmarkSpec bs;
  bs.seed = 11;
  bs.tgt_text_train = 77;
  json k = bs;
  BenchmarkSpec bback = k.get<BenchmarkSpec>();
  CHECK(bback.seed == 11);
  CHECK(bback.tgt_text_train == 77);
  CHECK(bback.noise_sigma == bs.noise_sigma);
}

}  // namespace
}  // namespace slmadapt
