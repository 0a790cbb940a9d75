// Copyright 2026 The vggdrive-toy Authors
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

#ifndef VGGDRIVE__CLI_HPP_
#define VGGDRIVE__CLI_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vggdrive/errors.hpp"
#include "vggdrive/experiment.hpp"
#include "vggdrive/json_util.hpp"
#include "vggdrive/metrics.hpp"
#include "vggdrive/model/checkpoint.hpp"
#include "vggdrive/scenesynth.hpp"
#include "vggdrive/training.hpp"

namespace vggdrive::cli
{

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace fs = std::filesystem;

/// Flags shared by the experiment subcommands.
struct CommonArgs
{
  std::string config;
  std::uint64_t seed{0};
  bool seed_given{false};
  std::string out{"."};
  std::string data;
};

namespace detail
{

inline experiment::ExperimentConfig load_experiment(const CommonArgs & a)
{
  const nlohmann::json j =
    a.config.empty() ? nlohmann::json::object() : json_util::load_file(a.config);
  auto e = experiment::experiment_from_json(j);
  if (a.seed_given) e.seed = a.seed;
  return e;
}

inline scenesynth::Corpus load_or_generate(
  const experiment::ExperimentConfig & e, const CommonArgs & a)
{
  if (a.data.empty()) return scenesynth::generate_corpus(e.corpus);
  auto corpus = scenesynth::read_corpus(a.data);
  if (scenesynth::to_json(corpus.config) != scenesynth::to_json(e.corpus)) {
    throw ConfigError("corpus in " + a.data + " was generated with a different corpus config");
  }
  return corpus;
}

inline void echo(const fs::path & out, const std::string & command, nlohmann::json resolved)
{
  fs::create_directories(out);
  json_util::save_file((out / "config.echo.json").string(),
                       {{"command", command}, {"config", std::move(resolved)}});
}

inline std::vector<std::string> split_list(const std::string & s)
{
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline void add_common(CLI::App * sub, CommonArgs & a, bool with_data = true)
{
  sub->add_option("--config", a.config, "Experiment JSON config")->check(CLI::ExistingFile);
  sub->add_option("--seed", a.seed, "Base seed override");
  sub->add_option("--out", a.out, "Output directory");
  if (with_data) {
    sub->add_option("--data", a.data, "Corpus directory from gen-data")->check(CLI::ExistingDirectory);
  }
}

}  // namespace detail

inline int gen_data(const CommonArgs & a, std::ostream & log)
{
  auto e = detail::load_experiment(CommonArgs{a.config, 0, false, a.out, ""});
  if (a.seed_given) e.corpus.seed = a.seed;
  const auto corpus = scenesynth::generate_corpus(e.corpus);
  scenesynth::write_corpus(a.out, corpus);
  detail::echo(a.out, "gen-data", {{"corpus", scenesynth::to_json(e.corpus)}});
  log << "wrote " << corpus.train.size() << " train and " << corpus.holdout.size()
      << " held-out scenes to " << a.out << "\n";
  return kExitOk;
}

inline int train(const CommonArgs & a, std::ostream & log)
{
  const auto e = detail::load_experiment(a);
  const fs::path out(a.out);
  detail::echo(out, "train", experiment::to_json(e));
  const experiment::Workspace ws(e, detail::load_or_generate(e, a));
  auto run = experiment::run_one(e, ws, e.scheme, false, 0, [&](const training::HistoryRow & h) {
    log << "epoch " << h.epoch << " stage " << h.stage << " loss " << h.loss << " holdout "
        << h.holdout_acc << "\n";
  });
  model::save_checkpoint(out / "checkpoint.bin", *run.model);
  metrics::write_csv(out / "history.csv", experiment::history_table(run.history));
  metrics::write_csv(
    out / "results.csv",
    metrics::CsvTable{{"split", "accuracy", "mean_ce", "count"},
                      {{"holdout", metrics::format_double(run.holdout.accuracy),
                        metrics::format_double(run.holdout.mean_ce),
                        std::to_string(run.holdout.count)}}});
  log << "held-out accuracy " << run.holdout.accuracy << "\n";
  return kExitOk;
}

inline int eval(const CommonArgs & a, const std::string & checkpoint, const std::string & split,
                std::ostream & log)
{
  auto e = detail::load_experiment(a);
  const std::string bytes = model::read_checkpoint_bytes(checkpoint);
  const auto [mc, sc] = model::checkpoint_configs(bytes);
  e.model = mc;
  e.scheme = sc;
  e.validate();
  const fs::path out(a.out);
  detail::echo(out, "eval", {{"experiment", experiment::to_json(e)}, {"split", split}});
  const experiment::Workspace ws(e, detail::load_or_generate(e, a));
  model::Model m(mc, sc);
  model::deserialize_checkpoint(bytes, m);
  const auto r = training::evaluate(m, split == "train" ? ws.train : ws.holdout);
  metrics::write_csv(out / "results.csv",
                     metrics::CsvTable{{"split", "accuracy", "mean_ce", "count"},
                                       {{split, metrics::format_double(r.accuracy),
                                         metrics::format_double(r.mean_ce),
                                         std::to_string(r.count)}}});
  log << split << " accuracy " << r.accuracy << "\n";
  return kExitOk;
}

inline int ablate(const CommonArgs & a, const std::string & variants, std::ostream & log)
{
  const auto e = detail::load_experiment(a);
  const auto ids =
    variants.empty() ? experiment::default_ablation_ids() : detail::split_list(variants);
  for (const auto & id : ids) model::named_variant(id, e.scheme);
  const fs::path out(a.out);
  detail::echo(out, "ablate", {{"experiment", experiment::to_json(e)}, {"variants", ids}});
  const experiment::Workspace ws(e, detail::load_or_generate(e, a));
  const auto rows =
    experiment::ablate(e, ws, ids, [&](const std::string & msg) { log << msg << "\n"; });
  metrics::write_csv(out / "results.csv", experiment::results_table(rows, e.seeds));
  json_util::save_file((out / "timings.json").string(), experiment::timings_json(rows));
  return kExitOk;
}

inline int sweep_layers(const CommonArgs & a, std::ostream & log)
{
  const auto e = detail::load_experiment(a);
  const fs::path out(a.out);
  detail::echo(out, "sweep-layers", experiment::to_json(e));
  const experiment::Workspace ws(e, detail::load_or_generate(e, a));
  const auto rows =
    experiment::layer_sweep(e, ws, [&](const std::string & msg) { log << msg << "\n"; });
  metrics::write_csv(out / "results.csv", experiment::results_table(rows, e.seeds));
  return kExitOk;
}

/// Composite scores per input row; sub-scores arrive on the 0-100 scale.
inline int score(const std::string & metric, const std::string & input, const std::string & keys,
                 const std::string & out_dir, std::ostream & log)
{
  std::array<std::string, 3> k3 = metrics::kCaptionKeys;
  if (!keys.empty()) {
    const auto parts = detail::split_list(keys);
    if (parts.size() != 3) throw ValidationError("--keys needs exactly three metric names");
    std::copy(parts.begin(), parts.end(), k3.begin());
  }
  const fs::path out(out_dir);
  detail::echo(out, "score", {{"metric", metric}, {"input", input}, {"keys", k3}});
  const auto rows = metrics::metric_rows(metrics::read_csv(input));
  metrics::CsvTable t{{"name", metric}, {}};
  std::vector<metrics::SubScores> scenarios;
  double sum = 0.0;
  for (const auto & r : rows) {
    double v = 0.0;
    if (metric == "pdms") {
      scenarios.push_back(metrics::sub_scores_from_row(r.values));
      v = 100.0 * metrics::pdms(scenarios.back());
    } else if (metric == "avg4") {
      v = metrics::avg_nuinstruct(r.values);
    } else {
      v = metrics::avg3(r.values, k3);
    }
    sum += v;
    t.rows.push_back({r.label, metrics::format_double(v)});
    log << r.label << " " << metric << " " << v << "\n";
  }
  metrics::write_csv(out / "results.csv", t);
  nlohmann::json summary = {{"metric", metric}, {"rows", rows.size()}};
  if (!rows.empty()) summary["mean"] = sum / static_cast<double>(rows.size());
  if (metric == "pdms" && !scenarios.empty()) {
    summary["pdms_aggregate"] = 100.0 * metrics::pdms_aggregate(scenarios);
  }
  json_util::save_file((out / "summary.json").string(), summary);
  return kExitOk;
}

/// Parses `argv` and runs one subcommand; 0 ok, 1 failed validation or run, 2 usage.
inline int run_cli(int argc, const char * const * argv, std::ostream & out = std::cout,
                   std::ostream & err = std::cerr)
{
  CLI::App app{"Toy cross-view geometry injection: data, training, sweeps and scoring"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, ablate_args, sweep_args;
  auto * gen = app.add_subcommand("gen-data", "Generate and write a synthetic corpus");
  detail::add_common(gen, gen_args, false);
  auto * tr = app.add_subcommand("train", "Train one model and write its checkpoint");
  detail::add_common(tr, train_args);
  auto * ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
  detail::add_common(ev, eval_args);
  std::string checkpoint, split = "holdout";
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split, "holdout or train")->check(CLI::IsMember({"holdout", "train"}));
  auto * ab = app.add_subcommand("ablate", "Train and evaluate a list of variants");
  detail::add_common(ab, ablate_args);
  std::string variants;
  ab->add_option("--variants", variants, "Comma-separated variant ids");
  auto * sw = app.add_subcommand("sweep-layers", "Single-layer injection sweep");
  detail::add_common(sw, sweep_args);
  auto * sc = app.add_subcommand("score", "Composite scores from a sub-score CSV");
  std::string metric, input, keys, score_out = ".";
  sc->add_option("--metric", metric, "pdms, avg4 or avg3")
    ->required()
    ->check(CLI::IsMember({"pdms", "avg4", "avg3"}));
  sc->add_option("--input", input, "Sub-score CSV")->required()->check(CLI::ExistingFile);
  sc->add_option("--keys", keys, "Three comma-separated columns for avg3");
  sc->add_option("--out", score_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  gen_args.seed_given = gen->count("--seed") > 0;
  train_args.seed_given = tr->count("--seed") > 0;
  eval_args.seed_given = ev->count("--seed") > 0;
  ablate_args.seed_given = ab->count("--seed") > 0;
  sweep_args.seed_given = sw->count("--seed") > 0;

  try {
    if (gen->parsed()) return gen_data(gen_args, err);
    if (tr->parsed()) return train(train_args, err);
    if (ev->parsed()) return eval(eval_args, checkpoint, split, err);
    if (ab->parsed()) return ablate(ablate_args, variants, err);
    if (sw->parsed()) return sweep_layers(sweep_args, err);
    return score(metric, input, keys, score_out, err);
  } catch (const Error & e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception & e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace vggdrive::cli

#endif  // VGGDRIVE__CLI_HPP_
