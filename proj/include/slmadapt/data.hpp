// slmadapt/data.hpp

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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "slmadapt/common.hpp"
#include "slmadapt/config.hpp"
#include "slmadapt/rng.hpp"
#include "slmadapt/types.hpp"
#include "slmadapt/vocab.hpp"

namespace slmadapt {

// ---------------------------------------------------------------------------
// Domain vocabularies
// ---------------------------------------------------------------------------

/// Function and filler words common to both domains.
inline const std::vector<std::string>& shared_words() {
  static const std::vector<std::string> w = {
      "the", "a",    "of",   "to",   "and",  "in",   "on",  "with", "for",
      "at",  "is",   "was",  "has",  "had",  "will", "can", "this", "that",
      "it",  "as",   "by",   "from", "but",  "not",  "are", "be"};
  return w;
}

/// Content vocabulary of the general source domain.
inline const std::vector<std::string>& source_specialist_words() {
  static const std::vector<std::string> w = {
      "road",    "train",   "garden",  "market",  "river",   "song",
      "window",  "coffee",  "letter",  "mountain", "dinner",  "ticket",
      "weather", "holiday", "kitchen", "summer",  "evening", "morning",
      "friend",  "family",  "picture", "journey", "village", "bridge",
      "harbor",  "station", "forest",  "island",  "castle",  "museum"};
  return w;
}

/// Content vocabulary of the specialist target domain.
inline const std::vector<std::string>& target_specialist_words() {
  static const std::vector<std::string> w = {
      "dosage",   "lesion",    "biopsy",    "sepsis",   "tumor",
      "cardiac",  "renal",     "hepatic",   "seizure",  "embolism",
      "fracture", "anemia",    "asthma",    "insulin",  "glucose",
      "nausea",   "vertigo",   "migraine",  "thrombus", "stenosis",
      "fibrosis", "edema",     "dyspnea",   "syncope",  "ischemia",
      "nephritis", "cirrhosis", "melanoma", "lymphoma", "aneurysm"};
  return w;
}

// ---------------------------------------------------------------------------
// Speech rendering
// ---------------------------------------------------------------------------

/// How transcripts turn into frames: every character owns a fixed prototype
/// vector (a function of proto_seed and the character alone); each character
/// occupies fpc_min..fpc_max frames; every frame is the prototype plus
/// isotropic Gaussian noise drawn from the utterance stream.
///
/// A nonzero accent_shift rotates every prototype toward a second, equally
/// distributed prototype table (accent_seed): the rendered prototype becomes
/// sqrt(1-s^2) * base + s * accent. This models a domain whose audio differs
/// systematically from the source domain while keeping per-frame statistics
/// identical, so an acoustic front end tuned on one domain mismatches the
/// other in proportion to s.
struct RenderSpec {
  std::uint64_t proto_seed = 0;
  double noise_sigma = 0.5;
  int fpc_min = 8;
  int fpc_max = 8;
  double accent_shift = 0.0;
  std::uint64_t accent_seed = 0;

  void validate() const {
    if (noise_sigma < 0.0) throw ConfigError("render: noise_sigma < 0");
    if (fpc_min < 1 || fpc_max < fpc_min)
      throw ConfigError("render: bad frames-per-character range");
    if (accent_shift < 0.0 || accent_shift > 1.0)
      throw ConfigError("render: accent_shift outside [0,1]");
  }
};

inline void to_json(json& j, const RenderSpec& r) {
  j = json{{"proto_seed", r.proto_seed},
           {"noise_sigma", r.noise_sigma},
           {"fpc_min", r.fpc_min},
           {"fpc_max", r.fpc_max},
           {"accent_shift", r.accent_shift},
           {"accent_seed", r.accent_seed}};
}

inline void from_json(const json& j, RenderSpec& r) {
  j.at("proto_seed").get_to(r.proto_seed);
  j.at("noise_sigma").get_to(r.noise_sigma);
  j.at("fpc_min").get_to(r.fpc_min);
  j.at("fpc_max").get_to(r.fpc_max);
  r.accent_shift = j.value("accent_shift", 0.0);
  r.accent_seed = j.value("accent_seed", std::uint64_t{0});
}

/// Fixed per-character prototype, standard normal entries.
inline RowVec<float> char_prototype(char c, int feature_dim,
                                    std::uint64_t proto_seed) {
  RowVec<float> p(feature_dim);
  auto eng = make_engine(
      derive_seed(proto_seed, "proto", static_cast<std::uint64_t>(
                                           static_cast<unsigned char>(c))));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int j = 0; j < feature_dim; ++j)
    p(j) = static_cast<float>(dist(eng));
  return p;
}

/// Deterministic text-to-frames rendering. The same (text, spec, utt_seed)
/// triple always produces identical features.
inline FeatureSequence render_speech(const std::string& text,
                                     const ModelConfig& cfg,
                                     const RenderSpec& spec,
                                     std::uint64_t utt_seed) {
  spec.validate();
  if (text.empty()) throw DataError("render: empty text");
  Vocab vocab(cfg.charset);
  for (char c : text)
    if (!vocab.has_char(c))
      throw DataError(cat("render: character '", c, "' not in vocab table"));

  auto fpc_eng = make_engine(derive_seed(utt_seed, "fpc"));
  std::uniform_int_distribution<int> fpc_dist(spec.fpc_min, spec.fpc_max);
  auto noise_eng = make_engine(derive_seed(utt_seed, "noise"));
  std::normal_distribution<double> noise(0.0, 1.0);

  FeatureSequence out;
  out.frames = Mat<float>::Zero(cfg.max_frames, cfg.feature_dim);
  int t = 0;
  for (char c : text) {
    RowVec<float> proto = char_prototype(c, cfg.feature_dim, spec.proto_seed);
    if (spec.accent_shift > 0.0) {
      const float s = static_cast<float>(spec.accent_shift);
      const float keep = std::sqrt(1.0f - s * s);
      proto = keep * proto +
              s * char_prototype(c, cfg.feature_dim, spec.accent_seed);
    }
    const int fpc = fpc_dist(fpc_eng);
    for (int r = 0; r < fpc; ++r) {
      if (t >= cfg.max_frames)
        throw CapacityError(cat("render: text of ", text.size(),
                                " characters overflows ", cfg.max_frames,
                                " frames"));
      out.frames.row(t) = proto;
      if (spec.noise_sigma > 0.0)
        for (int j = 0; j < cfg.feature_dim; ++j)
          out.frames(t, j) +=
              static_cast<float>(spec.noise_sigma * noise(noise_eng));
      ++t;
    }
  }
  out.valid_len = t;
  return out;
}

// ---------------------------------------------------------------------------
// Sentence sampling
// ---------------------------------------------------------------------------

/// Draws one sentence: a word count in [min_words, max_words], each slot
/// independently a specialist word with probability specialist_rate, and
/// rejection when the character budget is exceeded. Rejection slightly
/// favors shorter words, so the realized specialist fraction sits a little
/// under the nominal rate.
inline std::string sample_sentence(std::mt19937_64& eng,
                                   const std::vector<std::string>& specialist,
                                   const std::vector<std::string>& shared,
                                   double specialist_rate, int min_words,
                                   int max_words, int max_chars) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> nw(min_words, max_words);
  std::uniform_int_distribution<std::size_t> pick_spec(0,
                                                       specialist.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_shared(0,
                                                         shared.size() - 1);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int n = nw(eng);
    std::string out;
    for (int i = 0; i < n; ++i) {
      const std::string& w = unif(eng) < specialist_rate
                                 ? specialist[pick_spec(eng)]
                                 : shared[pick_shared(eng)];
      if (!out.empty()) out.push_back(' ');
      out += w;
    }
    if (static_cast<int>(out.size()) <= max_chars) return out;
  }
  throw ConfigError("sample_sentence: character budget too tight");
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

/// Corpus sizes and generation knobs for the two-domain benchmark.
struct BenchmarkSpec {
  std::uint64_t seed = 7;
  int src_train = 400;
  int src_dev = 60;
  int src_test = 200;
  int tgt_text_train = 300;
  int tgt_speech_train = 300;
  int tgt_dev = 60;
  int tgt_test = 120;
  double specialist_rate = 0.85;
  double noise_sigma = 0.5;
  double tgt_accent_shift = 0.0;
  int min_words = 3;
  int max_words = 6;
  int fpc_min = 8;
  int fpc_max = 8;

  void validate() const {
    if (src_train < 1 || src_dev < 1 || src_test < 1 || tgt_text_train < 1 ||
        tgt_speech_train < 1 || tgt_dev < 1 || tgt_test < 1)
      throw ConfigError("benchmark: all split sizes must be positive");
    if (specialist_rate < 0.0 || specialist_rate > 1.0)
      throw ConfigError("benchmark: specialist_rate outside [0,1]");
    if (tgt_accent_shift < 0.0 || tgt_accent_shift > 1.0)
      throw ConfigError("benchmark: tgt_accent_shift outside [0,1]");
    if (min_words < 1 || max_words < min_words)
      throw ConfigError("benchmark: bad word-count range");
  }

  RenderSpec render_spec() const {
    RenderSpec r;
    r.proto_seed = derive_seed(seed, "proto-root");
    r.noise_sigma = noise_sigma;
    r.fpc_min = fpc_min;
    r.fpc_max = fpc_max;
    return r;
  }

  /// Target-domain rendering: the source spec plus the accent rotation.
  RenderSpec target_render_spec() const {
    RenderSpec r = render_spec();
    r.accent_shift = tgt_accent_shift;
    r.accent_seed = derive_seed(seed, "accent-root");
    return r;
  }

  /// Longest transcript that always fits the frame budget.
  int max_chars(const ModelConfig& cfg) const {
    int by_frames = cfg.max_frames / fpc_max;
    int by_text = cfg.max_text_len - 1;  // room for EOS
    return std::min(by_frames, by_text);
  }
};

inline void to_json(json& j, const BenchmarkSpec& s) {
  j = json{{"seed", s.seed},
           {"src_train", s.src_train},
           {"src_dev", s.src_dev},
           {"src_test", s.src_test},
           {"tgt_text_train", s.tgt_text_train},
           {"tgt_speech_train", s.tgt_speech_train},
           {"tgt_dev", s.tgt_dev},
           {"tgt_test", s.tgt_test},
           {"specialist_rate", s.specialist_rate},
           {"noise_sigma", s.noise_sigma},
           {"tgt_accent_shift", s.tgt_accent_shift},
           {"min_words", s.min_words},
           {"max_words", s.max_words},
           {"fpc_min", s.fpc_min},
           {"fpc_max", s.fpc_max}};
}

inline void from_json(const json& j, BenchmarkSpec& s) {
  j.at("seed").get_to(s.seed);
  j.at("src_train").get_to(s.src_train);
  j.at("src_dev").get_to(s.src_dev);
  j.at("src_test").get_to(s.src_test);
  j.at("tgt_text_train").get_to(s.tgt_text_train);
  j.at("tgt_speech_train").get_to(s.tgt_speech_train);
  j.at("tgt_dev").get_to(s.tgt_dev);
  j.at("tgt_test").get_to(s.tgt_test);
  j.at("specialist_rate").get_to(s.specialist_rate);
  j.at("noise_sigma").get_to(s.noise_sigma);
  s.tgt_accent_shift = j.value("tgt_accent_shift", 0.0);
  j.at("min_words").get_to(s.min_words);
  j.at("max_words").get_to(s.max_words);
  j.at("fpc_min").get_to(s.fpc_min);
  j.at("fpc_max").get_to(s.fpc_max);
}

struct Benchmark {
  BenchmarkSpec spec;
  std::vector<Utterance> src_train, src_dev, src_test;
  std::vector<Utterance> tgt_speech_train, tgt_dev, tgt_test;
  std::vector<TextSample> tgt_text_train;
};

namespace detail {

inline std::string split_id(const std::string& split, int idx) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", idx);
  return cat(split, "-", buf);
}

inline std::vector<Utterance> generate_speech_split(
    const BenchmarkSpec& spec, const ModelConfig& cfg,
    const std::string& split, int count, const std::string& domain,
    const std::vector<std::string>& specialist) {
  Vocab vocab(cfg.charset);
  RenderSpec rs = domain == "target" ? spec.target_render_spec()
                                     : spec.render_spec();
  auto eng = make_engine(derive_seed(spec.seed, "text." + split));
  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Utterance u;
    u.id = split_id(split, i);
    u.domain_tag = domain;
    u.raw_text = sample_sentence(eng, specialist, shared_words(),
                                 spec.specialist_rate, spec.min_words,
                                 spec.max_words, spec.max_chars(cfg));
    u.text = vocab.encode_target(u.raw_text);
    u.render_seed = derive_seed(spec.seed, "utt." + split,
                                static_cast<std::uint64_t>(i));
    u.features = render_speech(u.raw_text, cfg, rs, u.render_seed);
    out.push_back(std::move(u));
  }
  return out;
}

inline std::vector<TextSample> generate_text_split(
    const BenchmarkSpec& spec, const ModelConfig& cfg,
    const std::string& split, int count, const std::string& domain,
    const std::vector<std::string>& specialist) {
  Vocab vocab(cfg.charset);
  auto eng = make_engine(derive_seed(spec.seed, "text." + split));
  std::vector<TextSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    TextSample t;
    t.id = split_id(split, i);
    t.domain_tag = domain;
    t.raw_text = sample_sentence(eng, specialist, shared_words(),
                                 spec.specialist_rate, spec.min_words,
                                 spec.max_words, spec.max_chars(cfg));
    t.text = vocab.encode_target(t.raw_text);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

/// Two-domain benchmark: paired source corpora, a text-only target training
/// corpus, a paired target training corpus of the same size, and paired
/// dev/test sets for both domains. Each split draws from its own named
/// stream of the root seed, so any one split is stable under changes to the
/// others.
inline Benchmark generate_benchmark(const BenchmarkSpec& spec,
                                    const ModelConfig& cfg) {
  spec.validate();
  cfg.validate();
  Benchmark b;
  b.spec = spec;
  const auto& src = source_specialist_words();
  const auto& tgt = target_specialist_words();
  b.src_train = detail::generate_speech_split(spec, cfg, "src-train",
                                              spec.src_train, "source", src);
  b.src_dev = detail::generate_speech_split(spec, cfg, "src-dev",
                                            spec.src_dev, "source", src);
  b.src_test = detail::generate_speech_split(spec, cfg, "src-test",
                                             spec.src_test, "source", src);
  b.tgt_speech_train = detail::generate_speech_split(
      spec, cfg, "tgt-speech-train", spec.tgt_speech_train, "target", tgt);
  b.tgt_dev = detail::generate_speech_split(spec, cfg, "tgt-dev",
                                            spec.tgt_dev, "target", tgt);
  b.tgt_test = detail::generate_speech_split(spec, cfg, "tgt-test",
                                             spec.tgt_test, "target", tgt);
  b.tgt_text_train = detail::generate_text_split(
      spec, cfg, "tgt-text-train", spec.tgt_text_train, "target", tgt);
  return b;
}

/// Transcripts of a paired split, re-badged as text samples. Used to warm
/// the base language model on source text before paired pretraining.
inline std::vector<TextSample> transcripts_of(
    const std::vector<Utterance>& utts) {
  std::vector<TextSample> out;
  out.reserve(utts.size());
  for (const Utterance& u : utts) {
    TextSample t;
    t.id = u.id;
    t.raw_text = u.raw_text;
    t.text = u.text;
    t.domain_tag = u.domain_tag;
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests and corpora on disk
// ---------------------------------------------------------------------------

/// JSON-lines manifest. Features are not stored; each line carries the
/// render parameters and per-utterance seed needed to regenerate them.
inline void write_manifest(const std::string& path,
                           const std::vector<Utterance>& utts,
                           const RenderSpec& rs) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(cat("manifest: cannot write '", path, "'"));
  for (const Utterance& u : utts) {
    json line = {{"id", u.id},
                 {"text", u.raw_text},
                 {"domain", u.domain_tag},
                 {"render", json{{"utt_seed", u.render_seed},
                                 {"spec", rs}}}};
    os << line.dump() << "\n";
  }
  if (!os) throw DataError(cat("manifest: write failed for '", path, "'"));
}

/// Reads a manifest back and re-renders every utterance's features.
inline std::vector<Utterance> read_manifest(const std::string& path,
                                            const ModelConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw DataError(cat("manifest: cannot open '", path, "'"));
  Vocab vocab(cfg.charset);
  std::vector<Utterance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty())
      throw DataError(cat("manifest ", path, ":", lineno, ": blank line"));
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(cat("manifest ", path, ":", lineno, ": ", e.what()));
    }
    Utterance u;
    try {
      u.id = j.at("id").get<std::string>();
      u.raw_text = j.at("text").get<std::string>();
      u.domain_tag = j.at("domain").get<std::string>();
      const json& r = j.at("render");
      u.render_seed = r.at("utt_seed").get<std::uint64_t>();
      RenderSpec rs = r.at("spec").get<RenderSpec>();
      u.text = vocab.encode_target(u.raw_text);
      u.features = render_speech(u.raw_text, cfg, rs, u.render_seed);
    } catch (const json::exception& e) {
      throw DataError(cat("manifest ", path, ":", lineno, ": ", e.what()));
    }
    out.push_back(std::move(u));
  }
  return out;
}

/// Plain-text corpus, one sentence per line.
inline void write_text_corpus(const std::string& path,
                              const std::vector<TextSample>& samples) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(cat("corpus: cannot write '", path, "'"));
  for (const TextSample& t : samples) os << t.raw_text << "\n";
  if (!os) throw DataError(cat("corpus: write failed for '", path, "'"));
}

inline std::vector<TextSample> read_text_corpus(const std::string& path,
                                                const ModelConfig& cfg,
                                                const std::string& domain) {
  std::ifstream is(path);
  if (!is) throw DataError(cat("corpus: cannot open '", path, "'"));
  Vocab vocab(cfg.charset);
  std::vector<TextSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    TextSample t;
    t.id = detail::split_id("line", lineno);
    t.raw_text = line;
    t.domain_tag = domain;
    try {
      t.text = vocab.encode_target(line);
    } catch (const std::exception& e) {
      throw DataError(cat("corpus ", path, ":", lineno, ": ", e.what()));
    }
    if (static_cast<int>(t.text.size()) > cfg.max_text_len)
      throw DataError(cat("corpus ", path, ":", lineno, ": line of ",
                          line.size(), " characters exceeds max_text_len ",
                          cfg.max_text_len));
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// Epoch shuffle: a pure function of (seed, epoch), so a resumed run walks
/// the identical sample order.
inline std::vector<int> epoch_permutation(int n, std::uint64_t seed,
                                          int epoch) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  auto eng = make_engine(
      derive_seed(seed, "perm", static_cast<std::uint64_t>(epoch)));
  std::shuffle(idx.begin(), idx.end(), eng);
  return idx;
}

/// Pointer batches over a permutation; the final short batch is kept.
template <typename T>
std::vector<std::vector<const T*>> make_batches(const std::vector<T>& data,
                                                const std::vector<int>& perm,
                                                int batch_size) {
  if (batch_size < 1) throw UsageError("make_batches: batch_size < 1");
  std::vector<std::vector<const T*>> out;
  std::vector<const T*> cur;
  for (int i : perm) {
    cur.push_back(&data[static_cast<std::size_t>(i)]);
    if (static_cast<int>(cur.size()) == batch_size) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Whole-set pointer view, for evaluation.
template <typename T>
std::vector<const T*> pointer_view(const std::vector<T>& data) {
  std::vector<const T*> out;
  out.reserve(data.size());
  for (const T& t : data) out.push_back(&t);
  return out;
}

}  // namespace slmadapt
