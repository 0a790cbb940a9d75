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

#ifndef VGGDRIVE__EXPERIMENT_HPP_
#define VGGDRIVE__EXPERIMENT_HPP_

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vggdrive/errors.hpp"
#include "vggdrive/json_util.hpp"
#include "vggdrive/metrics.hpp"
#include "vggdrive/model/config.hpp"
#include "vggdrive/model/model.hpp"
#include "vggdrive/scenesynth.hpp"
#include "vggdrive/training.hpp"

namespace vggdrive::experiment
{

/// Everything one training run, sweep or ablation needs.
struct ExperimentConfig
{
  scenesynth::CorpusConfig corpus;
  model::ModelConfig model;
  model::SchemeConfig scheme;
  training::TrainConfig train;
  std::size_t seeds{3};
  std::uint64_t seed{0};

  void validate() const
  {
    corpus.scene.validate();
    model.validate();
    train.validate();
    const auto & s = corpus.scene;
    if (model.width != s.width_2d || model.width_3d != s.width_3d || model.views != s.views ||
        model.image_tokens != s.image_tokens || model.registers != s.registers ||
        model.vocab != s.views)
    {
      throw ConfigError("experiment: model dims disagree with the scene config");
    }
    if (seeds == 0) throw ConfigError("experiment: seeds must be positive");
  }
};

inline nlohmann::json to_json(const ExperimentConfig & e)
{
  return {{"corpus", scenesynth::to_json(e.corpus)},
          {"model", model::to_json(e.model)},
          {"scheme", model::to_json(e.scheme)},
          {"train", training::to_json(e.train)},
          {"seeds", e.seeds},
          {"seed", e.seed}};
}

/// Model sizes default to the scene's; explicit model keys override them.
inline ExperimentConfig experiment_from_json(const nlohmann::json & j)
{
  const std::string where = "experiment config";
  json_util::require_known_keys(j, {"corpus", "model", "scheme", "train", "seeds", "seed"}, where);
  ExperimentConfig e;
  e.corpus = scenesynth::corpus_config_from_json(j.value("corpus", nlohmann::json::object()));
  e.model = model::model_config_from_json(
    j.value("model", nlohmann::json::object()), model::ModelConfig::for_scene(e.corpus.scene));
  e.scheme = model::scheme_config_from_json(j.value("scheme", nlohmann::json::object()));
  e.train = training::train_config_from_json(j.value("train", nlohmann::json::object()));
  json_util::read_optional(j, "seeds", e.seeds, where);
  json_util::read_optional(j, "seed", e.seed, where);
  e.validate();
  return e;
}

/// Frozen encoders plus the dense train and held-out splits of a corpus.
struct Workspace
{
  Workspace(const ExperimentConfig & e, const scenesynth::Corpus & corpus)
  : enc(corpus.config.scene), prov(corpus.config.scene)
  {
    if (to_json(corpus.config.scene) != to_json(e.corpus.scene)) {
      throw ConfigError("corpus scene config differs from the experiment's");
    }
    train = scenesynth::build_dataset(corpus.train, e.corpus.scene, enc, prov, e.model.max_length);
    holdout =
      scenesynth::build_dataset(corpus.holdout, e.corpus.scene, enc, prov, e.model.max_length);
  }

  scenesynth::Encoder2D enc;
  scenesynth::Provider3D prov;
  scenesynth::Dataset train;
  scenesynth::Dataset holdout;
};

/// Re-throws library errors with `context` prepended, keeping the error kind.
template <typename F>
auto annotated(const std::string & context, F && f) -> decltype(f())
{
  try {
    return f();
  } catch (const ConfigError & e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const NumericError & e) {
    throw NumericError(context + ": " + e.what());
  } catch (const DimensionError & e) {
    throw DimensionError(context + ": " + e.what());
  } catch (const ContractError & e) {
    throw ContractError(context + ": " + e.what());
  } catch (const Error & e) {
    throw Error(context + ": " + e.what());
  }
}

struct RunOutcome
{
  std::unique_ptr<model::Model> model;
  training::TrainResult history;
  training::EvalResult holdout;
  double seconds{0.0};
};

/// Seed replicate k: init seed split(seed, 2k), shuffle seed split(seed, 2k + 1).
inline RunOutcome run_one(
  const ExperimentConfig & e, const Workspace & ws, const model::SchemeConfig & scheme,
  bool one_stage, std::size_t k,
  const std::function<void(const training::HistoryRow &)> & on_epoch = {})
{
  const auto t0 = std::chrono::steady_clock::now();
  model::ModelConfig mc = e.model;
  mc.init_seed = split_seed(e.seed, 2 * k);
  training::TrainConfig tc = e.train;
  tc.seed = split_seed(e.seed, 2 * k + 1);
  tc.one_stage = tc.one_stage || one_stage;
  RunOutcome out;
  out.model = std::make_unique<model::Model>(mc, scheme);
  out.history = training::train(*out.model, ws.train, ws.holdout, tc, on_epoch);
  out.holdout = training::evaluate(*out.model, ws.holdout);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Middle value; mean of the two middle values for even counts.
inline double median(std::vector<double> v)
{
  if (v.empty()) throw ContractError("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Held-out accuracy of one configuration over every seed replicate.
struct SeedResults
{
  std::string id;
  std::string layers;  // injection layers as written in the CSV
  std::vector<double> accuracy;
  std::vector<double> seconds;

  double median_accuracy() const { return median(accuracy); }
};

using Progress = std::function<void(const std::string &)>;

inline SeedResults run_seeds(
  const ExperimentConfig & e, const Workspace & ws, const std::string & id,
  const model::SchemeConfig & scheme, bool one_stage, const Progress & progress = {})
{
  SeedResults r;
  r.id = id;
  if (scheme.scheme == model::Scheme::baseline || scheme.scheme == model::Scheme::vggt_only ||
      scheme.scheme == model::Scheme::dist || scheme.scheme == model::Scheme::add)
  {
    r.layers = "none";
  } else if (scheme.scheme == model::Scheme::mhca_pre) {
    r.layers = "pre";
  } else {
    const auto layers = scheme.resolved_layers(e.model.layers);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      r.layers += (i ? " " : "") + std::to_string(layers[i]);
    }
  }
  for (std::size_t k = 0; k < e.seeds; ++k) {
    auto out = annotated(id + " seed " + std::to_string(k), [&] {
      return run_one(e, ws, scheme, one_stage, k);
    });
    r.accuracy.push_back(out.holdout.accuracy);
    r.seconds.push_back(out.seconds);
    if (progress) {
      progress(id + " seed " + std::to_string(k) + ": accuracy " +
               metrics::format_double(out.holdout.accuracy));
    }
  }
  return r;
}

/// id, layers, one accuracy column per seed, median.
inline metrics::CsvTable results_table(const std::vector<SeedResults> & rows, std::size_t seeds)
{
  metrics::CsvTable t;
  t.header = {"id", "inject_layers"};
  for (std::size_t k = 0; k < seeds; ++k) t.header.push_back("accuracy_seed" + std::to_string(k));
  t.header.push_back("median_accuracy");
  for (const auto & r : rows) {
    std::vector<std::string> cells{r.id, r.layers};
    for (double a : r.accuracy) cells.push_back(metrics::format_double(a));
    cells.push_back(metrics::format_double(r.median_accuracy()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline nlohmann::json timings_json(const std::vector<SeedResults> & rows)
{
  nlohmann::json j = nlohmann::json::object();
  for (const auto & r : rows) j[r.id] = r.seconds;
  return j;
}

/// Previously computed rows keyed by id ("baseline", "full"), reused instead of retrained.
using ResultCache = std::map<std::string, SeedResults>;

/**
 * @brief Single-layer injection sweep.
 *
 * One row per layer i (inject_layers = {i}), then a baseline row and a
 * full-injection row, all under the experiment's budget and seeds.
 */
inline std::vector<SeedResults> layer_sweep(
  const ExperimentConfig & e, const Workspace & ws, const Progress & progress = {},
  const ResultCache & cache = {})
{
  if (e.scheme.scheme != model::Scheme::vggdrive) {
    throw ConfigError("layer sweep needs the vggdrive scheme, got " +
                      model::scheme_name(e.scheme.scheme));
  }
  std::vector<SeedResults> rows;
  for (std::size_t i = 1; i <= e.model.layers; ++i) {
    model::SchemeConfig sc = e.scheme;
    sc.inject_layers = std::vector<std::size_t>{i};
    rows.push_back(run_seeds(e, ws, "layer" + std::to_string(i), sc, false, progress));
  }
  auto cached_or_run = [&](const std::string & id, const model::SchemeConfig & sc) {
    if (const auto it = cache.find(id); it != cache.end()) {
      SeedResults r = it->second;
      r.id = id;
      return r;
    }
    return run_seeds(e, ws, id, sc, false, progress);
  };
  model::SchemeConfig base = e.scheme;
  base.scheme = model::Scheme::baseline;
  rows.push_back(cached_or_run("baseline", base));
  model::SchemeConfig full = e.scheme;
  full.inject_layers.reset();
  rows.push_back(cached_or_run("full", full));
  return rows;
}

/// The integration-scheme rows of the ablation table.
inline std::vector<std::string> default_ablation_ids()
{
  return {"baseline", "vggt_only", "dist", "add", "mhca_pre", "vggdrive"};
}

inline std::vector<SeedResults> ablate(
  const ExperimentConfig & e, const Workspace & ws, const std::vector<std::string> & ids,
  const Progress & progress = {})
{
  if (ids.empty()) throw ConfigError("ablate: no variants given");
  std::vector<SeedResults> rows;
  for (const auto & id : ids) {
    const auto v = model::named_variant(id, e.scheme);
    rows.push_back(run_seeds(e, ws, id, v.scheme, v.one_stage, progress));
  }
  return rows;
}

/// epoch, stage, loss, holdout_acc.
inline metrics::CsvTable history_table(const training::TrainResult & r)
{
  metrics::CsvTable t;
  t.header = {"epoch", "stage", "loss", "holdout_acc"};
  for (const auto & h : r.history) {
    t.rows.push_back({std::to_string(h.epoch), std::to_string(h.stage),
                      metrics::format_double(h.loss), metrics::format_double(h.holdout_acc)});
  }
  return t;
}

}  // namespace vggdrive::experiment

#endif  // VGGDRIVE__EXPERIMENT_HPP_
