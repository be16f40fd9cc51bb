// Copyright 2026 The claip-emo Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <doctest.h>

#include "claip/checkpoint.hpp"
#include "claip/config.hpp"
#include "claip/model.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

#ifdef CLAIP_EMO_EXE

namespace {

struct Result {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + CLAIP_EMO_EXE + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

// A small shared dataset for every command test.
const fs::path& dataset() {
  static const fs::path dir = [] {
    auto d = fixture::temp_dir("cli_data");
    const auto r = cli("--set run.preset=tiny --set data.clips_per_class=5 --seed 3 --out \"" + (d / "data").string() +
                           "\" generate",
                       d / "gen.log");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    return d / "data";
  }();
  return dir;
}

const std::string kTiny = "--set run.preset=tiny --set train.epochs=1 -q ";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("generate writes the manifest, folds and run record") {
    const auto& d = dataset();
    for (const char* f : {"dataset.manifest", "folds.json", "run.cfg", "stamp.json", "dataset_spec.json"})
      CHECK(fs::exists(d / f));
    std::ifstream man(d / "dataset.manifest");
    std::size_t lines = 0;
    for (std::string l; std::getline(man, l);) ++lines;
    CHECK(lines == 35);
  }

  TEST_CASE("param-report matches an enumeration of the saved model") {
    const auto dir = fixture::temp_dir("cli_params");
    const auto r = cli("param-report", dir / "log");
    REQUIRE(r.code == 0);
    claip::RunConfig cfg = claip::preset_config("desk");
    cfg.resolve();
    claip::ClaipModel<float> m(cfg.model);
    m.save(dir / "m.clpe");
    const auto e = oracle::enumerate_checkpoint(dir / "m.clpe");
    CHECK(r.out.find("total " + std::to_string(e.total) + "\n") != std::string::npos);
    CHECK(r.out.find("trainable " + std::to_string(e.trainable) + "\n") != std::string::npos);
    for (const char* g : {"backbone.visual", "lora.visual", "lora.audio", "aggregator", "head"})
      CHECK(r.out.find(g) != std::string::npos);
  }

  TEST_CASE("train with zero epochs keeps the initial snapshot") {
    const auto dir = fixture::temp_dir("cli_train0");
    const auto r = cli(kTiny + "--set train.epochs=0 --out \"" + (dir / "run").string() + "\" train --data \"" +
                           dataset().string() + "\"",
                       dir / "log");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(claip::file_checksum(dir / "run/init.clpe") == claip::file_checksum(dir / "run/model.clpe"));
    CHECK(fs::exists(dir / "run/run.cfg"));
    CHECK(fs::exists(dir / "run/stamp.json"));
  }

  TEST_CASE("constant baseline reports chance recall") {
    const auto dir = fixture::temp_dir("cli_const");
    const auto r = cli(kTiny + "--set eval.constant_class=2 --out \"" + (dir / "ev").string() + "\" eval --data \"" +
                           dataset().string() + "\"",
                       dir / "log");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto csv = slurp(dir / "ev/report.csv");
    CHECK(csv.rfind("fold,uar,war,trainable_M,ratio", 0) == 0);
    CHECK(csv.find("mean,0.142857") != std::string::npos);
  }

  TEST_CASE("train, evaluate and export a model") {
    const auto dir = fixture::temp_dir("cli_pipeline");
    const auto run = (dir / "run").string();
    REQUIRE(cli(kTiny + "--out \"" + run + "\" train --data \"" + dataset().string() + "\" --fold 0", dir / "l1").code ==
            0);
    const auto h = slurp(dir / "run/history.csv");
    CHECK(h.rfind("epoch,loss,lr,uar,war", 0) == 0);
    CHECK(fs::exists(dir / "run/trainlog.jsonl"));
    const auto ev = cli("-q --out \"" + (dir / "ev").string() + "\" eval --data \"" + dataset().string() +
                            "\" --model \"" + run + "/model.clpe\" --fold 0",
                        dir / "l2");
    REQUIRE_MESSAGE(ev.code == 0, ev.out);
    CHECK(fs::exists(dir / "ev/report.csv"));
    const auto ex = cli("-q --out \"" + (dir / "ex").string() + "\" export-features --data \"" + dataset().string() +
                            "\" --model \"" + run + "/model.clpe\"",
                        dir / "l3");
    REQUIRE_MESSAGE(ex.code == 0, ex.out);
    std::ifstream in(dir / "ex/features.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("id,label,z0,", 0) == 0);
  }

  TEST_CASE("ablate runs a restricted grid") {
    const auto dir = fixture::temp_dir("cli_ablate");
    const auto r = cli(kTiny + "--set data.folds=2 --out \"" + (dir / "ab").string() + "\" ablate --data \"" +
                           dataset().string() + "\" --folds \"" + (dataset() / "folds.json").string() +
                           "\" --only r=0,r=2",
                       dir / "log");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto csv = slurp(dir / "ab/ablation.csv");
    CHECK(csv.find("r=0") != std::string::npos);
    CHECK(csv.find("r=2") != std::string::npos);
    CHECK(fs::exists(dir / "ab/ablation.md"));
  }

  TEST_CASE("errors are single machine-readable lines") {
    const auto dir = fixture::temp_dir("cli_errors");
    const auto r = cli("--set lora.rnak=4 param-report", dir / "log");
    CHECK(r.code == 2);
    CHECK(r.out.rfind("error: ConfigError: ", 0) == 0);
    CHECK(r.out.find("lora.rank") != std::string::npos);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
    const auto missing = cli("-q train --data \"" + (dir / "nope").string() + "\"", dir / "log2");
    CHECK(missing.code == 2);
    CHECK(missing.out.rfind("error: ", 0) == 0);
  }

  TEST_CASE("thread count falls back to the environment") {
    const auto dir = fixture::temp_dir("cli_env");
    setenv("CLAIP_THREADS", "2", 1);
    const auto r = cli(kTiny + "--out \"" + (dir / "g").string() + "\" --set data.clips_per_class=5 generate", dir / "log");
    unsetenv("CLAIP_THREADS");
    REQUIRE(r.code == 0);
    CHECK(slurp(dir / "g/run.cfg").find("threads = 2") != std::string::npos);
  }
}

#endif
