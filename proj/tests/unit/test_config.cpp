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

#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

#include "claip/config.hpp"
#include "claip/error.hpp"
#include "fixtures.hpp"

using namespace claip;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& body) {
  std::ofstream out(dir / name);
  out << body;
  return dir / name;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("global keys and sections load") {
    const auto dir = fixture::temp_dir("cfg_load");
    const auto path = write_file(dir, "a.cfg",
                                 "; comment\n"
                                 "fusion = gated\n"
                                 "modality = V\n"
                                 "[run]\n"
                                 "preset = tiny\n"
                                 "seed = 9\n"
                                 "[agg]\n"
                                 "visual = mean\n"
                                 "[clip]\n"
                                 "frames = 2\n"
                                 "[audio]\n"
                                 "n_mels = 24\n"
                                 "[lora]\n"
                                 "rank = 4\n"
                                 "[train]\n"
                                 "warmup_epochs = auto\n");
    auto cfg = load_config(path, {"lora.alpha=8"});
    cfg.resolve();
    CHECK(cfg.model.fusion == FusionMode::Gated);
    CHECK(cfg.model.modality == Modality::V);
    CHECK(cfg.model.agg_visual == AggregationMode::Mean);
    CHECK(cfg.model.frames == 2);
    CHECK(cfg.model.frontend.n_mels == 24);
    CHECK(cfg.model.audio.input_w == 24);
    CHECK(cfg.model.lora_rank == 4);
    CHECK(cfg.model.lora_alpha == 8.0);
    CHECK(cfg.model.visual.d_model == 48);
    CHECK(cfg.seed == 9);
    CHECK(cfg.data.seed == 9);
    CHECK(cfg.train.seed == 9);
    CHECK_FALSE(cfg.train.warmup_epochs.has_value());
  }

  TEST_CASE("serialized configuration reloads to the same text") {
    const auto dir = fixture::temp_dir("cfg_round");
    RunConfig cfg = preset_config("tiny");
    set_key(cfg, "fusion", "additive");
    set_key(cfg, "audio.sample_rate", "8000");
    set_key(cfg, "audio.f_max", "4000");
    set_key(cfg, "train.warmup_epochs", "3");
    cfg.resolve();
    const std::string text = serialize(cfg);
    CHECK(text.find("fusion = additive") < text.find('['));
    auto back = load_config(write_file(dir, "r.cfg", text));
    back.resolve();
    CHECK(serialize(back) == text);
    CHECK(back.data.sample_rate == 8000);
  }

  TEST_CASE("unknown keys name the nearest valid key") {
    RunConfig cfg;
    CHECK(error_of([&] { set_key(cfg, "lora.rnak", "4"); }).find("lora.rank") != std::string::npos);
    CHECK(error_of([&] { set_key(cfg, "agg.visaul", "mean"); }).find("agg.visual") != std::string::npos);
    CHECK(error_of([&] { set_key(cfg, "fuson", "gated"); }).find("fusion") != std::string::npos);
    const auto dir = fixture::temp_dir("cfg_unknown");
    const auto path = write_file(dir, "u.cfg", "[train]\nepoch = 3\n");
    CHECK(error_of([&] { load_config(path); }).find("train.epochs") != std::string::npos);
  }

  TEST_CASE("typed values are checked") {
    RunConfig cfg;
    CHECK_THROWS_AS(set_key(cfg, "lora.rank", "four"), ConfigError);
    CHECK_THROWS_AS(set_key(cfg, "lora.full_finetune", "maybe"), ConfigError);
    CHECK_THROWS_AS(set_key(cfg, "fusion", "sum"), ConfigError);
    CHECK_THROWS_AS(set_key(cfg, "run.preset", "huge"), ConfigError);
    CHECK_THROWS_AS(apply_overrides(cfg, {"lora.rank"}), ConfigError);
    set_key(cfg, "clip.frames", "99");
    CHECK_THROWS_AS(cfg.resolve(), ConfigError);
  }

  TEST_CASE("every key reads back what was written") {
    RunConfig cfg = preset_config("desk");
    for (const auto& k : config_keys()) {
      const std::string v = get_key(cfg, k);
      RunConfig copy = cfg;
      set_key(copy, k, v);
      CHECK_MESSAGE(get_key(copy, k) == v, k);
    }
  }

  TEST_CASE("presets") {
    CHECK(preset_config("large").model.visual.d_model == 192);
    CHECK(preset_config("desk").model.visual.d_model == 128);
    CHECK(preset_config("desk").train.lr_peak == 1e-5);
    CHECK(preset_config("tiny").model.visual.depth == 1);
    CHECK(edit_distance("kitten", "sitting") == 3);
  }

  TEST_CASE("run record") {
    const auto dir = fixture::temp_dir("cfg_record");
    RunConfig cfg = preset_config("tiny");
    cfg.resolve();
    write_run_record(cfg, dir, "train");
    CHECK(fs::exists(dir / "run.cfg"));
    CHECK(fs::exists(dir / "stamp.json"));
  }
}
