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

// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion ids
// (e.g. "AC4 AC7") as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "test_support.hpp"
#include "vggdrive/cli.hpp"
#include "vggdrive/experiment.hpp"
#include "vggdrive/geometry.hpp"
#include "vggdrive/metrics.hpp"
#include "vggdrive/numerics/grad_check.hpp"
#include "vggdrive/training.hpp"

using namespace vggdrive;
namespace fs = std::filesystem;

namespace
{

using Clock = std::chrono::steady_clock;

const fs::path kConfigs = fs::path(VGGDRIVE_SOURCE_DIR) / "configs";

struct Outcome
{
  bool pass;
  std::string detail;
};

std::string fmt(double v, int digits = 4)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string sci(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void note(const std::string & msg)
{
  std::cerr << "  .. " << msg << std::endl;
}

std::map<std::string, Tensor> snapshot(const ParameterList & ps)
{
  std::map<std::string, Tensor> out;
  for (const auto * p : ps) out.emplace(p->name, p->value);
  return out;
}

bool unchanged(const ParameterList & ps, const std::map<std::string, Tensor> & before)
{
  return std::all_of(ps.begin(), ps.end(), [&](const Parameter * p) {
    return p->value == before.at(p->name);
  });
}

// ---------------------------------------------------------------------------

Outcome ac1()
{
  struct Row
  {
    const char * name;
    double acc, map, bleu, mae, expected;
  };
  const Row rows[] = {{"VGGDrive", 56.37, 37.49, 81.13, 3.08, 42.98},
                      {"Baseline", 47.71, 6.15, 75.75, 4.35, 31.32},
                      {"GPT-4o", 10.64, 0.0, 7.08, 9.93, 1.95},
                      {"LLAVA-OV", 3.75, 0.0, 8.55, 87.04, 0.0}};
  bool ok = true;
  std::string detail;
  for (const auto & r : rows) {
    const double v = metrics::avg_nuinstruct(
      {{"accuracy", r.acc}, {"map", r.map}, {"bleu", r.bleu}, {"mae", r.mae}});
    ok = ok && std::abs(v - r.expected) <= 0.005;
    detail += std::string(detail.empty() ? "" : ", ") + r.name + " " + fmt(v);
  }
  return {ok, detail};
}

Outcome ac2()
{
  const double a = metrics::avg3({{"bleu", 37.58}, {"cider", 86.57}, {"rouge", 34.40}});
  const double b = metrics::avg3({{"bleu", 10.91}, {"cider", 24.42}, {"rouge", 22.34}});
  const bool ok = std::abs(a - 52.85) <= 0.005 && std::abs(b - 19.22) <= 0.005;
  return {ok, "VGGDrive " + fmt(a) + ", GPT-4o " + fmt(b)};
}

Outcome ac3()
{
  using metrics::pdms;
  using metrics::SubScores;
  bool ok = pdms({}) == 1.0;
  ok = ok && pdms({0.0, 1.0, 1.0, 1.0, 1.0}) == 0.0 && pdms({1.0, 0.0, 1.0, 1.0, 1.0}) == 0.0 &&
       pdms({1.0, 1.0, 0.0, 0.0, 0.0}) == 0.0;
  Rng rng(31);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    SubScores s{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    SubScores t = s;
    double * fs[] = {&t.nc, &t.dac, &t.ep, &t.ttc, &t.comfort};
    double * f = fs[rng.uniform_int(0, 4)];
    *f = *f + (1.0 - *f) * rng.uniform();
    const double ps = pdms(s), pt = pdms(t);
    if (pt < ps || ps < 0.0 || pt > 1.0) ++violations;
  }
  const SubScores a{0.0, 1.0, 1.0, 1.0, 1.0}, b{1.0, 0.0, 1.0, 1.0, 1.0};
  const SubScores mean{0.5, 0.5, 1.0, 1.0, 1.0};
  const double agg = metrics::pdms_aggregate({a, b}), of_means = pdms(mean);
  ok = ok && violations == 0 && agg != of_means;
  return {ok, "monotonicity violations " + std::to_string(violations) + "/10000, mean-of-pdms " +
                fmt(agg) + " vs pdms-of-means " + fmt(of_means)};
}

Outcome ac4()
{
  test_support::Fixture fx({}, 100, 4004);
  model::Model vgg(fx.mc, model::SchemeConfig{});
  model::Model base(fx.mc, test_support::scheme_of(model::Scheme::baseline));
  double worst = 0.0;
  for (std::size_t first = 0; first < 100; first += 25) {
    const auto b = fx.batch(first, 25);
    const Tensor x = vgg.forward(b, fx.data.layout).logits.value();
    const Tensor y = base.forward(b, fx.data.layout).logits.value();
    for (std::size_t i = 0; i < x.numel(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  }
  return {worst <= 1e-12, "max |logit diff| " + sci(worst) + " over 100 samples"};
}

Outcome ac5()
{
  test_support::Fixture fx({}, 100, 5005);
  const auto & lay = fx.data.layout;
  std::size_t changed = 0, writes_missing = 0, checked = 0;
  for (const auto & name : model::variant_names()) {
    model::Model m(fx.mc, model::named_variant(name).scheme);
    test_support::wake_up_projections(m, 55);
    std::size_t writes = 0;
    for (std::size_t first = 0; first < 100; first += 50) {
      m.forward(fx.batch(first, 50), lay, [&](const Tensor & before, const Tensor & after) {
        ++writes;
        const std::size_t d = before.dim(2);
        for (std::size_t bi = 0; bi < before.dim(0); ++bi) {
          for (std::size_t p = 0; p < lay.length; ++p) {
            if (lay.mask[p]) continue;
            const std::size_t off = (bi * lay.length + p) * d;
            for (std::size_t k = 0; k < d; ++k) {
              ++checked;
              if (before[off + k] != after[off + k]) ++changed;
            }
          }
        }
      });
    }
    const bool expected = name != "baseline" && name != "dist";
    if ((writes > 0) != expected) ++writes_missing;
  }
  return {changed == 0 && writes_missing == 0 && checked > 0,
          std::to_string(changed) + " of " + std::to_string(checked) +
            " non-image values changed across " + std::to_string(model::variant_names().size()) +
            " variants"};
}

Outcome ac6()
{
  test_support::Fixture fx(test_support::small_scene(), 1, 606);
  model::SchemeConfig sc;
  sc.zero_init_up = false;
  model::Model m(fx.mc, sc);
  const auto b = fx.batch(0, 1);
  ParameterList params = m.parameters();
  ParameterList provider;
  fx.prov.collect(provider);
  params.insert(params.end(), provider.begin(), provider.end());
  auto loss_fn = [&]() {
    model::Batch live = b;
    live.v3d = scenesynth::provide_3d_var(fx.prov, fx.scene, fx.samples[0]);
    return training::ce_loss(m.forward(live, fx.data.layout).logits, live.targets);
  };
  GradCheckOptions opt;
  opt.eps = 1e-5;
  opt.max_coords_per_param = 6;
  opt.seed = 66;
  const auto report = grad_check(loss_fn, params, opt);
  zero_grads(params);
  backward(loss_fn());
  bool provider_zero = true;
  for (const auto * p : provider) {
    for (double g : p->grad.data()) provider_zero = provider_zero && g == 0.0;
  }
  return {fx.data.layout.length <= 32 && report.passed(1e-4) && provider_zero,
          "L=" + std::to_string(fx.data.layout.length) + ", max rel err " +
            sci(report.max_relative_error) + " over " +
            std::to_string(report.coordinates) + " coords, provider grads " +
            (provider_zero ? "exactly zero" : "NONZERO")};
}

Outcome ac7()
{
  using namespace geometry;
  Rng rng(707);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    CameraView v;
    v.rotation = q.toRotationMatrix();
    v.intrinsics << rng.uniform(200, 2000), rng.uniform(-2, 2), rng.uniform(100, 900), 0.0,
      rng.uniform(200, 2000), rng.uniform(100, 600), 0.0, 0.0, 1.0;
    v.translation = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    v.orig_size = {rng.uniform(320, 3200), rng.uniform(240, 2400)};
    v.target_size = {rng.uniform(160, 1600), rng.uniform(120, 1200)};
    CameraRig rig;
    rig.views.push_back(v);
    rig.validate();
    const Mat4 prod = img2lidar(rig, 0) * lidar2img(rig, 0);
    worst = std::max(worst, (prod - Mat4::Identity()).cwiseAbs().maxCoeff());
  }
  const Mat3 id = Mat3::Identity();
  Mat4 translated = Mat4::Identity();
  translated.topRightCorner<3, 1>() = Vec3(-1, -2, -3);
  Mat3 k2 = Mat3::Identity();
  k2(0, 0) = 2;
  k2(1, 1) = 2;
  Mat4 diag = Mat4::Identity();
  diag.diagonal() << 2, 2, 1, 1;
  const bool hand = compose_lidar2img(id, id, Vec3::Zero()) == Mat4::Identity() &&
                    compose_lidar2img(id, id, Vec3(1, 2, 3)) == translated &&
                    compose_lidar2img(k2, id, Vec3::Zero()) == diag;
  return {worst <= 1e-9 && hand, "max |P^-1 P - I| " + sci(worst) +
                                   " over 1000 rigs, hand cases " + (hand ? "exact" : "MISMATCH")};
}

// Shared state of the two training criteria.
struct ToyRuns
{
  std::unique_ptr<experiment::ExperimentConfig> config;
  std::unique_ptr<experiment::Workspace> ws;
  std::map<std::string, Tensor> provider_before;
  experiment::ResultCache cache;
};

ToyRuns & toy_state()
{
  static ToyRuns runs;
  return runs;
}

ToyRuns & toy()
{
  auto & runs = toy_state();
  if (!runs.ws) {
    runs.config = std::make_unique<experiment::ExperimentConfig>(experiment::experiment_from_json(
      json_util::load_file((kConfigs / "default.json").string())));
    note("generating default corpus");
    runs.ws = std::make_unique<experiment::Workspace>(
      *runs.config, scenesynth::generate_corpus(runs.config->corpus));
    ParameterList prov;
    runs.ws->prov.collect(prov);
    runs.provider_before = snapshot(prov);
  }
  return runs;
}

Outcome ac8()
{
  auto & t = toy();
  const auto & e = *t.config;
  const double chance = 1.0 / static_cast<double>(e.corpus.scene.views);
  model::SchemeConfig base = e.scheme;
  base.scheme = model::Scheme::baseline;
  t.cache["baseline"] = experiment::run_seeds(e, *t.ws, "baseline", base, false, note);
  t.cache["full"] = experiment::run_seeds(e, *t.ws, "full", e.scheme, false, note);
  const double b = t.cache["baseline"].median_accuracy();
  const double v = t.cache["full"].median_accuracy();
  const bool ok = e.corpus.scene.views == 3 && b <= chance + 0.10 && v >= 0.90 && v - b >= 0.30;
  return {ok, "C=" + std::to_string(e.corpus.scene.views) + ", median baseline " + fmt(b) +
                " (limit " + fmt(chance + 0.10) + "), vggdrive " + fmt(v) + ", gap " + fmt(v - b)};
}

Outcome ac9()
{
  auto & t = toy();
  const auto rows = experiment::layer_sweep(*t.config, *t.ws, note, t.cache);
  double base = 0.0, full = 0.0, best_single = 0.0, worst_single = 1.0;
  std::string singles;
  for (const auto & r : rows) {
    const double m = r.median_accuracy();
    if (r.id == "baseline") {
      base = m;
    } else if (r.id == "full") {
      full = m;
    } else {
      best_single = std::max(best_single, m);
      worst_single = std::min(worst_single, m);
      singles += (singles.empty() ? "" : " ") + fmt(m, 3);
    }
  }
  const bool ok = rows.size() == t.config->model.layers + 2 && worst_single > base &&
                  full >= best_single - 0.05;
  return {ok, "single layers [" + singles + "], baseline " + fmt(base) + ", full " + fmt(full)};
}

Outcome ac10()
{
  test_support::Fixture fx({}, 40, 1010);
  ParameterList prov;
  fx.prov.collect(prov);
  const auto prov_before = snapshot(prov);

  training::TrainConfig tc;
  tc.stage1.epochs = 1;
  tc.stage2.epochs = 0;
  model::Model m(fx.mc, model::SchemeConfig{});
  const auto init = snapshot(m.parameters());
  const auto h1 = training::train(m, fx.data, fx.data, tc);
  const bool stack_frozen = unchanged(m.stack_parameters(), init);
  const bool cvge_moved = !unchanged(m.injected_parameters(), init);

  for (const auto & id : model::variant_names()) {
    const auto v = model::named_variant(id);
    model::Model other(fx.mc, v.scheme);
    training::TrainConfig all = tc;
    all.stage2.epochs = 1;
    all.one_stage = v.one_stage;
    training::train(other, fx.data, fx.data, all);
  }
  bool provider_frozen = unchanged(prov, prov_before);
  if (auto & t = toy_state(); t.ws) {
    ParameterList shared;
    t.ws->prov.collect(shared);
    provider_frozen = provider_frozen && unchanged(shared, t.provider_before);
  }

  training::TrainConfig one = tc;
  one.stage2.epochs = 1;
  one.one_stage = true;
  model::Model single(fx.mc, model::SchemeConfig{});
  std::vector<training::HistoryRow> rows;
  const auto after_first = [&](const training::HistoryRow & r) { rows.push_back(r); };
  training::train(single, fx.data, fx.data, one, after_first);
  const bool one_phase = rows.size() == 2 &&
                         std::all_of(rows.begin(), rows.end(), [](auto & r) { return r.stage == 1; }) &&
                         !unchanged(single.stack_parameters(), init);

  const bool ok = h1.history.size() == 1 && stack_frozen && cvge_moved && provider_frozen &&
                  one_phase;
  return {ok, std::string("stack frozen in stage 1: ") + (stack_frozen ? "yes" : "NO") +
                ", cvge updated: " + (cvge_moved ? "yes" : "NO") +
                ", provider bit-equal: " + (provider_frozen ? "yes" : "NO") +
                ", one_stage single phase: " + (one_phase ? "yes" : "NO")};
}

std::string slurp(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome ac11()
{
  const auto root = fs::temp_directory_path() / "vggdrive_acceptance_ac11";
  fs::remove_all(root);
  const std::string cfg = (kConfigs / "tiny.json").string();
  std::ostringstream sink;
  auto cli = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "vggdrive");
    std::vector<const char *> argv;
    for (const auto & a : args) argv.push_back(a.c_str());
    return cli::run_cli(static_cast<int>(argv.size()), argv.data(), sink, sink);
  };
  const auto data = root / "data";
  if (cli({"gen-data", "--config", cfg, "--seed", "11", "--out", (root / "gen_a").string()}) != 0 ||
      cli({"gen-data", "--config", cfg, "--out", data.string()}) != 0)
  {
    return {false, "gen-data failed"};
  }
  const std::string ckpt = (root / "train_a" / "checkpoint.bin").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
    {"gen", {"gen-data", "--config", cfg, "--seed", "11"}},
    {"train", {"train", "--config", cfg, "--seed", "11", "--data", data.string()}},
    {"eval", {"eval", "--config", cfg, "--data", data.string(), "--checkpoint", ckpt}},
    {"ablate", {"ablate", "--config", cfg, "--seed", "11", "--variants", "baseline,vggdrive,s2"}},
    {"sweep", {"sweep-layers", "--config", cfg, "--seed", "11"}},
    {"score",
     {"score", "--metric", "avg4", "--input", (kConfigs / "nuinstruct_scores.csv").string()}}};
  std::size_t compared = 0, differing = 0;
  for (const auto & [tag, args] : commands) {
    for (const char * run : {"_a", "_b"}) {
      auto full = args;
      full.push_back("--out");
      full.push_back((root / (tag + run)).string());
      if (tag == "gen" && std::string(run) == "_a") continue;
      if (cli(full) != 0) return {false, tag + " failed: " + sink.str()};
    }
    for (const auto & entry : fs::directory_iterator(root / (tag + "_a"))) {
      const auto ext = entry.path().extension();
      if (ext != ".csv" && ext != ".bin") continue;
      ++compared;
      if (slurp(entry.path()) != slurp(root / (tag + "_b") / entry.path().filename())) ++differing;
    }
  }
  return {compared >= 7 && differing == 0, std::to_string(compared) + " output files compared over " +
                                             std::to_string(commands.size()) + " subcommands, " +
                                             std::to_string(differing) + " differ"};
}

struct Criterion
{
  const char * id;
  const char * title;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char ** argv)
{
  const std::vector<Criterion> criteria{
    {"AC1", "nuinstruct composite reproduces published averages", 1.0, ac1},
    {"AC2", "caption composite reproduces published averages", 1.0, ac2},
    {"AC3", "planning score identity, gates, monotonicity, aggregation", 5.0, ac3},
    {"AC4", "zero-initialized injection equals baseline", 10.0, ac4},
    {"AC5", "injection leaves non-image positions untouched", 10.0, ac5},
    {"AC6", "finite-difference gradient integrity", 60.0, ac6},
    {"AC7", "camera projection round trip and hand cases", 5.0, ac7},
    {"AC8", "synthetic-task separation over 3 seeds", 600.0, ac8},
    {"AC9", "single-layer sweep vs baseline and full injection", 1800.0, ac9},
    {"AC10", "stage discipline and frozen provider", 120.0, ac10},
    {"AC11", "repeated CLI runs are byte-identical", 120.0, ac11},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto & c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o{false, ""};
    try {
      o = c.run();
    } catch (const std::exception & e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_budget = secs < c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failures += pass ? 0 : 1;
    std::cout << (pass ? "PASS " : "FAIL ") << c.id << "  " << c.title << "  | " << o.detail
              << "  | " << fmt(secs, 2) << " s (budget " << fmt(c.budget_seconds, 0) << " s"
              << (in_budget ? "" : ", EXCEEDED") << ")" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
