// tests/test_cli.cpp

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

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "slmadapt/common.hpp"

#ifndef SLMADAPT_CLI_PATH
#error "SLMADAPT_CLI_PATH must point at the built slmadapt binary"
#endif

namespace slmadapt {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           cat("slmadapt-cli-", ::getpid(), "-",
               std::chrono::steady_clock::now().time_since_epoch().count());
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const {
    return (path / name).string();
  }
};

struct RunResult {
  int exit_code = -1;
  std::string output;
};

/// Runs the CLI with the given arguments, capturing combined stdout+stderr.
RunResult run_cli(const TempDir& tmp, const std::string& args) {
  static int counter = 0;
  const std::string log = tmp.sub(cat("cli-", counter++, ".log"));
  const std::string cmd =
      cat(SLMADAPT_CLI_PATH, " ", args, " > ", log, " 2>&1");
  const int raw = std::system(cmd.c_str());
  RunResult res;
  res.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  res.output = ss.str();
  return res;
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string write_micro_config(const TempDir& tmp) {
  const std::string path = tmp.sub("micro.json");
  std::ofstream os(path);
  os << R"({
  "run": {
    "model": {"feature_dim": 8, "encoder_layers": 1, "decoder_layers": 1,
              "model_dim": 16, "heads": 2, "fold_k": 2, "max_frames": 48,
              "proj_hidden": 16, "max_text_len": 16},
    "lora": {"rank": 2},
    "train": {"batch_size": 4, "lm_init_epochs": 2, "phase_a_max_epochs": 1,
              "phase_b_epochs": 2, "speech_epochs": 1, "text_epochs": 2,
              "eval_interval": 5}
  },
  "bench": {"src_train": 12, "src_dev": 4, "src_test": 6,
            "tgt_text_train": 12, "tgt_speech_train": 8, "tgt_dev": 4,
            "tgt_test": 6, "min_words": 1, "max_words": 2,
            "noise_sigma": 0.1, "fpc_min": 3, "fpc_max": 3}
})";
  return path;
}

TEST_CASE("cli generate is reproducible and guards the output dir",
          "[cli]") {
  TempDir tmp;
  const std::string cfg = write_micro_config(tmp);

  RunResult a = run_cli(tmp, cat("generate --out ", tmp.sub("d1"),
                                 " --config ", cfg, " --seed 5"));
  REQUIRE(a.exit_code == 0);
  for (const char* rel :
       {"source/train.jsonl", "source/dev.jsonl", "source/test.jsonl",
        "target/speech_train.jsonl", "target/dev.jsonl", "target/test.jsonl",
        "target/text_train.txt", "benchmark.json", "generation.log",
        "config.json"})
    CHECK(fs::exists(fs::path(tmp.sub("d1")) / rel));

  RunResult b = run_cli(tmp, cat("generate --out ", tmp.sub("d2"),
                                 " --config ", cfg, " --seed 5"));
  REQUIRE(b.exit_code == 0);
  for (const char* rel : {"source/train.jsonl", "target/speech_train.jsonl",
                          "target/text_train.txt"})
    CHECK(file_bytes((fs::path(tmp.sub("d1")) / rel).string()) ==
          file_bytes((fs::path(tmp.sub("d2")) / rel).string()));

  RunResult refuse = run_cli(tmp, cat("generate --out ", tmp.sub("d1"),
                                      " --config ", cfg, " --seed 5"));
  CHECK(refuse.exit_code != 0);
  CHECK(refuse.output.find("--force") != std::string::npos);

  RunResult forced = run_cli(tmp, cat("generate --out ", tmp.sub("d1"),
                                      " --config ", cfg,
                                      " --seed 6 --force"));
  CHECK(forced.exit_code == 0);
  CHECK(file_bytes(tmp.sub("d1") + "/source/train.jsonl") !=
        file_bytes(tmp.sub("d2") + "/source/train.jsonl"));
}

TEST_CASE("cli pipeline runs end to end at micro scale", "[cli][slow]") {
  TempDir tmp;
  const std::string cfg = write_micro_config(tmp);
  const std::string data = tmp.sub("data");

  REQUIRE(run_cli(tmp, cat("generate --out ", data, " --config ", cfg,
                           " --seed 5"))
              .exit_code == 0);

  SECTION("adapt before pretrain names the missing stage") {
    RunResult r = run_cli(
        tmp, cat("adapt --strategy speech --data ", data, " --pretrained ",
                 tmp.sub("none.ckpt"), " --out ", tmp.sub("x")));
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("pretrain") != std::string::npos);
  }

  SECTION("full pipeline") {
    RunResult pre = run_cli(tmp, cat("pretrain --data ", data, " --out ",
                                     tmp.sub("pre"), " --config ", cfg,
                                     " --seed 5"));
    REQUIRE(pre.exit_code == 0);
    const std::string ckpt = tmp.sub("pre") + "/pretrained.ckpt";
    REQUIRE(fs::exists(ckpt));
    CHECK(fs::exists(tmp.sub("pre") + "/metrics.csv"));
    CHECK(fs::exists(tmp.sub("pre") + "/config.json"));

    RunResult no_monitor = run_cli(
        tmp, cat("adapt --strategy text --data ", data, " --pretrained ",
                 ckpt, " --out ", tmp.sub("t0")));
    CHECK(no_monitor.exit_code != 0);
    CHECK(no_monitor.output.find("--monitor-set") != std::string::npos);

    RunResult text = run_cli(
        tmp, cat("adapt --strategy text --data ", data, " --pretrained ",
                 ckpt, " --monitor-set ", data, "/target/dev.jsonl --out ",
                 tmp.sub("text")));
    REQUIRE(text.exit_code == 0);
    CHECK(fs::exists(tmp.sub("text") + "/adapted-text.ckpt"));
    CHECK(fs::exists(tmp.sub("text") + "/text-best.ckpt"));
    REQUIRE(fs::exists(tmp.sub("text") + "/alignment_curve.csv"));

    RunResult speech = run_cli(
        tmp, cat("adapt --strategy speech --data ", data, " --pretrained ",
                 ckpt, " --out ", tmp.sub("speech")));
    REQUIRE(speech.exit_code == 0);
    CHECK(fs::exists(tmp.sub("speech") + "/adapted-speech.ckpt"));

    RunResult tts = run_cli(
        tmp, cat("adapt --strategy text-then-speech --data ", data,
                 " --pretrained ", ckpt, " --monitor-set ", data,
                 "/target/dev.jsonl --out ", tmp.sub("tts")));
    REQUIRE(tts.exit_code == 0);
    CHECK(fs::exists(tmp.sub("tts") + "/adapted-text-then-speech.ckpt"));
    CHECK(fs::exists(tmp.sub("tts") + "/text-phase/alignment_curve.csv"));

    for (const char* arm : {"text", "speech", "tts"}) {
      const std::string ck =
          std::string(arm) == "text"
              ? tmp.sub("text") + "/adapted-text.ckpt"
              : std::string(arm) == "speech"
                    ? tmp.sub("speech") + "/adapted-speech.ckpt"
                    : tmp.sub("tts") + "/adapted-text-then-speech.ckpt";
      RunResult ev = run_cli(tmp, cat("eval --ckpt ", ck, " --data ", data,
                                      " --out ", tmp.sub(arm)));
      REQUIRE(ev.exit_code == 0);
      CHECK(fs::exists(tmp.sub(arm) + "/report.csv"));
    }

    RunResult rep = run_cli(
        tmp, cat("report ", tmp.sub("text"), " ", tmp.sub("speech"), " ",
                 tmp.sub("tts"), " --out ", tmp.sub("comparison.txt")));
    REQUIRE(rep.exit_code == 0);
    CHECK(fs::exists(tmp.sub("comparison.txt")));
    CHECK(rep.output.find("strategy") != std::string::npos);
    CHECK(rep.output.find("text-then-speech") != std::string::npos);
    CHECK(rep.output.find("wer% src_test") != std::string::npos);

    RunResult plot = run_cli(
        tmp, cat("plot --curve ", tmp.sub("text"),
                 "/alignment_curve.csv --out ", tmp.sub("curve.svg")));
    REQUIRE(plot.exit_code == 0);
    const std::string svg = file_bytes(tmp.sub("curve.svg"));
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
  }
}

TEST_CASE("cli rejects unknown strategies and bad sets", "[cli]") {
  TempDir tmp;
  RunResult r = run_cli(tmp, cat("adapt --strategy nonsense --data x "
                                 "--pretrained y --out z"));
  CHECK(r.exit_code != 0);

  RunResult missing = run_cli(tmp, "eval --ckpt nowhere.ckpt --data x");
  CHECK(missing.exit_code != 0);
  CHECK(missing.output.find("not found") != std::string::npos);

  RunResult help = run_cli(tmp, "--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("generate") != std::string::npos);
  CHECK(help.output.find("adapt") != std::string::npos);
}

}  // namespace
}  // namespace slmadapt
