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

// claip-emo command-line driver: generate, train, eval, ablate, param-report, export-features.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "claip/ablation.hpp"
#include "claip/config.hpp"
#include "claip/data.hpp"
#include "claip/error.hpp"
#include "claip/evaluation.hpp"
#include "claip/gradcheck.hpp"
#include "claip/model.hpp"
#include "claip/trainer.hpp"

namespace fs = std::filesystem;
using namespace claip;

namespace {

struct Globals {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::vector<std::string> set;
  bool f64_gradcheck = false;
  bool quiet = false;
};

// Resolution order: preset/file, --set overrides, then the dedicated global flags.
RunConfig resolve_config(const Globals& g, const std::optional<fs::path>& fallback_cfg = std::nullopt) {
  RunConfig cfg;
  if (g.config) {
    cfg = load_config(*g.config, g.set);
  } else if (fallback_cfg && fs::exists(*fallback_cfg)) {
    cfg = load_config(*fallback_cfg, g.set);
  } else {
    cfg = preset_config("desk");
    apply_overrides(cfg, g.set);
  }
  if (g.seed) set_key(cfg, "run.seed", std::to_string(*g.seed));
  if (g.out) cfg.out = *g.out;
  if (g.threads) {
    cfg.threads = *g.threads;
  } else if (const char* env = std::getenv("CLAIP_THREADS")) {
    set_key(cfg, "run.threads", env);
  }
  cfg.resolve();
  return cfg;
}

fs::path manifest_path(const fs::path& data) {
  return fs::is_directory(data) ? data / "dataset.manifest" : data;
}

FoldAssignment folds_for(const RunConfig& cfg, const Dataset& ds, const std::optional<fs::path>& folds_file,
                         const fs::path& data) {
  if (folds_file) return load_folds(*folds_file, ds.clips);
  const fs::path beside = manifest_path(data).parent_path() / "folds.json";
  if (fs::exists(beside)) return load_folds(beside, ds.clips);
  return make_folds(ds.labels(), cfg.folds, cfg.fold_seed);
}

void maybe_gradcheck(const Globals& g, const RunConfig& cfg, const Dataset& ds) {
  if (!g.f64_gradcheck) return;
  const std::size_t n = std::min<std::size_t>(ds.clips.size(), 4);
  const GradcheckReport r = gradcheck(cfg.model, std::span<const ClipSample>(ds.clips.data(), n));
  write_gradcheck_json(r, cfg.out / "gradcheck.json");
  fmt::print("gradcheck: max relative error {:.3e} over {} tensors ({})\n", r.max_rel_error, r.tensors.size(),
             r.passed() ? "pass" : "FAIL");
  if (!r.passed()) throw NumericError(fmt::format("gradient check failed: max relative error {:.3e}", r.max_rel_error));
}

void print_epoch(const Globals& g, const std::string& tag, const EpochRecord& r) {
  if (g.quiet) return;
  fmt::print("{}epoch {:>3} loss {:.5f} lr {:.3e} train_war {:.4f}{}\n", tag, r.epoch, r.loss, r.lr, r.train_war,
             r.val_war ? fmt::format(" val_uar {:.4f} val_war {:.4f}", *r.val_uar, *r.val_war) : std::string());
}

int cmd_generate(const Globals& g) {
  const RunConfig cfg = resolve_config(g);
  const Dataset ds = generate(cfg.data);
  save_dataset(ds, cfg.out);
  const FoldAssignment folds = make_folds(ds.labels(), cfg.folds, cfg.fold_seed);
  save_folds(folds, ds.clips, cfg.out / "folds.json");
  write_run_record(cfg, cfg.out, "generate");
  fmt::print("wrote {} clips ({} classes, {} folds) to {}; checksum {:08x}\n", ds.clips.size(), cfg.data.classes,
             folds.size(), cfg.out.string(), ds.checksum());
  return 0;
}

int cmd_train(const Globals& g, const fs::path& data, const std::optional<fs::path>& folds_file,
              std::optional<std::size_t> fold) {
  const RunConfig cfg = resolve_config(g);
  const Dataset ds = load_dataset(manifest_path(data), cfg.data.sample_rate);
  write_run_record(cfg, cfg.out, "train");
  maybe_gradcheck(g, cfg, ds);
  ClaipModel<float> model(cfg.model);
  const auto prepared = prepare_all<float>(cfg.model, ds.clips, cfg.threads);
  std::vector<std::size_t> train_idx, val_idx;
  if (fold) {
    const FoldAssignment folds = folds_for(cfg, ds, folds_file, data);
    train_idx = complement(folds, *fold);
    val_idx = folds.at(*fold);
  } else {
    for (std::size_t i = 0; i < ds.clips.size(); ++i) train_idx.push_back(i);
  }
  TrainOptions opts;
  opts.out_dir = cfg.out;
  opts.on_epoch = [&g](const EpochRecord& r) { print_epoch(g, "", r); };
  const TrainHistory h = train(model, std::span<const PreparedClip<float>>(prepared), train_idx, val_idx, cfg.train, opts);
  fmt::print("trained {} epochs ({} steps); model checksum {:08x}\n", h.epochs.size(), h.steps,
             file_checksum(cfg.out / "model.clpe"));
  return 0;
}

int cmd_eval(const Globals& g, const fs::path& data, const std::optional<fs::path>& folds_file,
             const std::optional<fs::path>& model_path, std::optional<std::size_t> fold) {
  std::optional<fs::path> beside;
  if (model_path) beside = model_path->parent_path() / "run.cfg";
  RunConfig cfg = resolve_config(g, beside);
  const Dataset ds = load_dataset(manifest_path(data), cfg.data.sample_rate);
  const FoldAssignment folds = folds_for(cfg, ds, folds_file, data);
  write_run_record(cfg, cfg.out, "eval");
  std::vector<std::size_t> which;
  if (fold) {
    which.push_back(*fold);
  } else {
    for (std::size_t f = 0; f < folds.size(); ++f) which.push_back(f);
  }
  CrossValidation cv;
  if (cfg.constant_class >= 0 || model_path) {
    std::vector<FoldReport> reports;
    std::optional<ClaipModel<float>> model;
    std::vector<PreparedClip<float>> prepared;
    if (model_path && cfg.constant_class < 0) {
      model.emplace(cfg.model);
      model->load(*model_path);
      prepared = prepare_all<float>(cfg.model, ds.clips, cfg.threads);
    }
    for (std::size_t f : which) {
      if (model) {
        reports.push_back(evaluate(*model, std::span<const PreparedClip<float>>(prepared), folds.at(f), f));
      } else {
        std::vector<int> labels;
        for (std::size_t i : folds.at(f)) labels.push_back(ds.clips[i].label);
        const std::vector<int> preds(labels.size(), cfg.constant_class);
        reports.push_back(evaluate_predictions(f, cfg.data.classes, labels, preds));
      }
    }
    cv = summarize(std::move(reports));
  } else {
    maybe_gradcheck(g, cfg, ds);
    const auto prepared = prepare_all<float>(cfg.model, ds.clips, cfg.threads);
    CrossValidateOptions opts;
    opts.folds = which;
    opts.threads = cfg.threads;
    opts.out_dir = cfg.out;
    opts.on_epoch = [&g](std::size_t f, const EpochRecord& r) { print_epoch(g, fmt::format("fold {} ", f), r); };
    cv = cross_validate<float>(cfg.model, cfg.train, prepared, folds, opts);
  }
  write_report_csv(cv, cfg.out / "report.csv");
  for (const auto& f : cv.folds) fmt::print("fold {}: UAR {:.4f} WAR {:.4f}\n", f.fold, f.uar, f.war);
  fmt::print("mean UAR {:.4f} ± {:.4f}, WAR {:.4f} ± {:.4f}\n", cv.mean_uar, cv.std_uar, cv.mean_war, cv.std_war);
  return 0;
}

int cmd_ablate(const Globals& g, const fs::path& data, const std::optional<fs::path>& folds_file,
               const std::vector<std::string>& only) {
  const RunConfig cfg = resolve_config(g);
  const Dataset ds = load_dataset(manifest_path(data), cfg.data.sample_rate);
  const FoldAssignment folds = folds_for(cfg, ds, folds_file, data);
  write_run_record(cfg, cfg.out, "ablate");
  maybe_gradcheck(g, cfg, ds);
  AblationOptions opts;
  opts.threads = cfg.threads;
  opts.only = only;
  const auto rows = run_ablation(cfg, ds.clips, folds, opts);
  write_ablation_csv(rows, cfg.out / "ablation.csv");
  write_ablation_markdown(rows, cfg.out / "ablation.md");
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (r.ok) {
      fmt::print("{:<12} {:<16} UAR {:.4f} WAR {:.4f} trainable {}\n", r.group, r.arm, r.uar, r.war, r.trainable);
    } else {
      ++failed;
      fmt::print("{:<12} {:<16} failed: {}\n", r.group, r.arm, r.error);
    }
  }
  fmt::print("{} arms, {} failed; tables in {}\n", rows.size(), failed, cfg.out.string());
  return 0;
}

int cmd_param_report(const Globals& g) {
  const RunConfig cfg = resolve_config(g);
  ClaipModel<float> model(cfg.model);
  const ParamReport r = model.count_params();
  fmt::print("total {}\ntrainable {}\nratio {:.6f}\n\n", r.total, r.trainable, r.ratio);
  fmt::print("{:<18} {:>12} {:>12}\n", "group", "total", "trainable");
  for (const auto& gr : r.groups) fmt::print("{:<18} {:>12} {:>12}\n", gr.name, gr.total, gr.trainable);
  return 0;
}

int cmd_export_features(const Globals& g, const fs::path& data, const fs::path& model_path) {
  RunConfig cfg = resolve_config(g, model_path.parent_path() / "run.cfg");
  const Dataset ds = load_dataset(manifest_path(data), cfg.data.sample_rate);
  ClaipModel<float> model(cfg.model);
  model.load(model_path);
  const auto prepared = prepare_all<float>(cfg.model, ds.clips, cfg.threads);
  fs::create_directories(cfg.out);
  const fs::path path = cfg.out / "features.csv";
  export_features(model, std::span<const PreparedClip<float>>(prepared), path);
  fmt::print("wrote {} feature rows to {}\n", prepared.size(), path.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"claip-emo: parameter-efficient audiovisual emotion recognition at desk scale"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (reseeds data, folds, init and training)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads (falls back to CLAIP_THREADS)");
  app.add_option("--set", g.set, "override a key: section.name=value (repeatable)");
  app.add_flag("--f64-gradcheck", g.f64_gradcheck, "finite-difference check of the configured model in f64 first");
  app.add_flag("-q,--quiet", g.quiet, "suppress per-epoch progress");

  std::string data;
  std::optional<std::string> folds_file, model_path;
  std::optional<std::size_t> fold;
  std::vector<std::string> only;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset, manifest and folds");
  auto* tr = app.add_subcommand("train", "train one model");
  tr->add_option("--data", data, "dataset directory or manifest")->required();
  tr->add_option("--folds", folds_file, "folds.json");
  tr->add_option("--fold", fold, "hold out this fold for validation");
  auto* ev = app.add_subcommand("eval", "evaluate a model, a constant baseline, or cross-validate");
  ev->add_option("--data", data, "dataset directory or manifest")->required();
  ev->add_option("--folds", folds_file, "folds.json");
  ev->add_option("--model", model_path, "trained model.clpe; omitted means train one model per fold");
  ev->add_option("--fold", fold, "evaluate only this fold");
  auto* ab = app.add_subcommand("ablate", "run the ablation grid");
  ab->add_option("--data", data, "dataset directory or manifest")->required();
  ab->add_option("--folds", folds_file, "folds.json");
  ab->add_option("--only", only, "restrict to arm names or groups")->delimiter(',');
  auto* pr = app.add_subcommand("param-report", "print parameter counts");
  auto* ex = app.add_subcommand("export-features", "write fused features as CSV");
  ex->add_option("--data", data, "dataset directory or manifest")->required();
  ex->add_option("--model", model_path, "trained model.clpe")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_generate(g);
    if (*tr) return cmd_train(g, data, folds_file ? std::optional<fs::path>(*folds_file) : std::nullopt, fold);
    if (*ev) {
      return cmd_eval(g, data, folds_file ? std::optional<fs::path>(*folds_file) : std::nullopt,
                      model_path ? std::optional<fs::path>(*model_path) : std::nullopt, fold);
    }
    if (*ab) return cmd_ablate(g, data, folds_file ? std::optional<fs::path>(*folds_file) : std::nullopt, only);
    if (*pr) return cmd_param_report(g);
    if (*ex) return cmd_export_features(g, data, *model_path);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}: {}\n", e.kind(), e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: InternalError: {}\n", e.what());
    return 3;
  }
  return 1;
}
