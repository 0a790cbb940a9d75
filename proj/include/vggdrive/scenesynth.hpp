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

#ifndef VGGDRIVE__SCENESYNTH_HPP_
#define VGGDRIVE__SCENESYNTH_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vggdrive/errors.hpp"
#include "vggdrive/geometry.hpp"
#include "vggdrive/json_util.hpp"
#include "vggdrive/numerics/autograd.hpp"
#include "vggdrive/numerics/ops.hpp"
#include "vggdrive/numerics/random.hpp"
#include "vggdrive/numerics/tensor.hpp"

namespace vggdrive::scenesynth
{

/// Scene sampler, token sizes and the seeds of the frozen encoders.
struct SceneConfig
{
  std::size_t views{3};
  geometry::CameraRig rig{geometry::default_surround_rig(3)};
  std::size_t min_objects{3};
  std::size_t max_objects{3};
  double min_radius{2.0};
  double max_radius{20.0};
  double min_height{0.0};
  double max_height{1.0};
  double margin{1.0};  // meters between nearest and second-nearest object
  std::size_t appearance_count{8};
  std::size_t max_attempts{1000};

  std::size_t image_tokens{16};  // per view
  std::size_t registers{1};
  std::size_t width_2d{64};
  std::size_t width_3d{64};
  double noise_sigma{0.01};
  double coord_scale{0.1};  // per meter, before the 3D lift
  std::size_t special_tokens{2};
  std::size_t text_tokens{4};

  std::uint64_t encoder_seed{0x2d};
  std::uint64_t provider_seed{0x3d};

  std::size_t tokens_3d() const { return 1 + registers + image_tokens; }

  void validate() const
  {
    auto fail = [](const std::string & m) { throw ConfigError("scene config: " + m); };
    if (views == 0) fail("views must be positive");
    if (rig.size() != views) {
      fail("rig has " + std::to_string(rig.size()) + " views, config says " + std::to_string(views));
    }
    rig.validate();
    if (min_objects == 0 || max_objects < min_objects) fail("object count range is empty");
    if (min_objects < views) fail("need at least one object per view (min_objects >= views)");
    if (!(min_radius > 0.0) || !(max_radius > min_radius)) fail("radius range is empty");
    if (max_height < min_height) fail("height range is empty");
    if (!(margin >= 0.0)) fail("margin must be non-negative");
    if (appearance_count == 0) fail("appearance_count must be positive");
    if (max_attempts == 0) fail("max_attempts must be positive");
    if (image_tokens == 0 || width_2d == 0 || width_3d == 0) fail("token sizes must be positive");
    if (!(noise_sigma >= 0.0)) fail("noise_sigma must be non-negative");
    if (!(coord_scale > 0.0)) fail("coord_scale must be positive");
    if (special_tokens < 1) fail("need at least one special token");
  }
};

inline nlohmann::json to_json(const SceneConfig & c)
{
  return {
    {"views", c.views},
    {"rig", geometry::rig_to_json(c.rig)},
    {"min_objects", c.min_objects},
    {"max_objects", c.max_objects},
    {"min_radius", c.min_radius},
    {"max_radius", c.max_radius},
    {"min_height", c.min_height},
    {"max_height", c.max_height},
    {"margin", c.margin},
    {"appearance_count", c.appearance_count},
    {"max_attempts", c.max_attempts},
    {"image_tokens", c.image_tokens},
    {"registers", c.registers},
    {"width_2d", c.width_2d},
    {"width_3d", c.width_3d},
    {"noise_sigma", c.noise_sigma},
    {"coord_scale", c.coord_scale},
    {"special_tokens", c.special_tokens},
    {"text_tokens", c.text_tokens},
    {"encoder_seed", c.encoder_seed},
    {"provider_seed", c.provider_seed},
  };
}

/// Missing keys keep their defaults; a missing rig becomes the surround rig for `views`.
inline SceneConfig scene_config_from_json(const nlohmann::json & j)
{
  const std::string where = "scene config";
  json_util::require_known_keys(
    j,
    {"views", "rig", "min_objects", "max_objects", "min_radius", "max_radius", "min_height",
     "max_height", "margin", "appearance_count", "max_attempts", "image_tokens", "registers",
     "width_2d", "width_3d", "noise_sigma", "coord_scale", "special_tokens", "text_tokens",
     "encoder_seed", "provider_seed"},
    where);
  SceneConfig c;
  json_util::read_optional(j, "views", c.views, where);
  c.min_objects = c.max_objects = c.views;
  json_util::read_optional(j, "min_objects", c.min_objects, where);
  json_util::read_optional(j, "max_objects", c.max_objects, where);
  json_util::read_optional(j, "min_radius", c.min_radius, where);
  json_util::read_optional(j, "max_radius", c.max_radius, where);
  json_util::read_optional(j, "min_height", c.min_height, where);
  json_util::read_optional(j, "max_height", c.max_height, where);
  json_util::read_optional(j, "margin", c.margin, where);
  json_util::read_optional(j, "appearance_count", c.appearance_count, where);
  json_util::read_optional(j, "max_attempts", c.max_attempts, where);
  json_util::read_optional(j, "image_tokens", c.image_tokens, where);
  json_util::read_optional(j, "registers", c.registers, where);
  json_util::read_optional(j, "width_2d", c.width_2d, where);
  json_util::read_optional(j, "width_3d", c.width_3d, where);
  json_util::read_optional(j, "noise_sigma", c.noise_sigma, where);
  json_util::read_optional(j, "coord_scale", c.coord_scale, where);
  json_util::read_optional(j, "special_tokens", c.special_tokens, where);
  json_util::read_optional(j, "text_tokens", c.text_tokens, where);
  json_util::read_optional(j, "encoder_seed", c.encoder_seed, where);
  json_util::read_optional(j, "provider_seed", c.provider_seed, where);
  if (c.views == 0) throw ConfigError(where + ": views must be positive");
  c.rig = j.contains("rig") ? geometry::rig_from_json(j.at("rig"))
                            : geometry::default_surround_rig(c.views);
  c.validate();
  return c;
}

struct SceneObject
{
  geometry::Vec3 position{geometry::Vec3::Zero()};
  std::size_t appearance{0};
};

struct SceneSample
{
  std::vector<SceneObject> objects;
  // visibility[o][c] != 0 when object o is seen by view c
  std::vector<std::vector<std::uint8_t>> visibility;
  std::size_t label{0};
  std::uint64_t seed{0};

  std::size_t view_count() const { return visibility.empty() ? 0 : visibility.front().size(); }

  /// Objects seen by view c, in object order.
  std::vector<std::size_t> visible_in(std::size_t view) const
  {
    std::vector<std::size_t> out;
    for (std::size_t o = 0; o < objects.size(); ++o) {
      if (visibility[o][view]) out.push_back(o);
    }
    return out;
  }
};

/// View holding the object nearest the origin; that object must be seen by exactly one view.
inline std::size_t nearest_view_label(
  const std::vector<SceneObject> & objects,
  const std::vector<std::vector<std::uint8_t>> & visibility)
{
  if (objects.empty() || visibility.size() != objects.size()) {
    throw GenerationError("label needs objects with one visibility row each");
  }
  std::size_t best = 0;
  for (std::size_t o = 1; o < objects.size(); ++o) {
    if (objects[o].position.norm() < objects[best].position.norm()) best = o;
  }
  std::size_t count = 0;
  std::size_t view = 0;
  for (std::size_t c = 0; c < visibility[best].size(); ++c) {
    if (visibility[best][c]) {
      ++count;
      view = c;
    }
  }
  if (count != 1) {
    throw GenerationError(
      "nearest object is visible in " + std::to_string(count) + " views, need exactly one");
  }
  return view;
}

/// View with the smallest horizontal angle to p.
inline std::size_t assign_view(const geometry::CameraRig & rig, const geometry::Vec3 & p)
{
  std::size_t best = 0;
  double best_angle = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < rig.size(); ++c) {
    const double a = std::abs(geometry::horizontal_angle(rig.views[c], p));
    if (a < best_angle) {
      best_angle = a;
      best = c;
    }
  }
  return best;
}

/**
 * @brief Rejection-samples a scene from `seed`.
 *
 * Objects are uniform in angle, radius and height. A draw is kept when every
 * view sees at least one object and the nearest object leads the runner-up by
 * at least `margin` meters.
 */
inline SceneSample generate_scene(const SceneConfig & cfg, std::uint64_t seed)
{
  cfg.validate();
  Rng rng(seed);
  for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    SceneSample s;
    s.seed = seed;
    const auto n = static_cast<std::size_t>(rng.uniform_int(cfg.min_objects, cfg.max_objects));
    std::vector<std::size_t> per_view(cfg.views, 0);
    for (std::size_t o = 0; o < n; ++o) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double radius = rng.uniform(cfg.min_radius, cfg.max_radius);
      const double z = rng.uniform(cfg.min_height, cfg.max_height);
      SceneObject obj;
      obj.position = geometry::Vec3(radius * std::cos(angle), radius * std::sin(angle), z);
      obj.appearance = static_cast<std::size_t>(rng.uniform_int(0, cfg.appearance_count - 1));
      std::vector<std::uint8_t> vis(cfg.views, 0);
      const std::size_t c = assign_view(cfg.rig, obj.position);
      vis[c] = 1;
      ++per_view[c];
      s.objects.push_back(obj);
      s.visibility.push_back(std::move(vis));
    }
    if (std::find(per_view.begin(), per_view.end(), 0u) != per_view.end()) continue;
    std::vector<double> dist;
    for (const auto & o : s.objects) dist.push_back(o.position.norm());
    std::sort(dist.begin(), dist.end());
    if (dist.size() > 1 && dist[1] - dist[0] < cfg.margin) continue;
    s.label = nearest_view_label(s.objects, s.visibility);
    return s;
  }
  throw GenerationError(
    "no valid scene after " + std::to_string(cfg.max_attempts) + " attempts (seed " +
    std::to_string(seed) + ")");
}

// ---------------------------------------------------------------------------
// frozen encoders

/**
 * @brief Fixed embedding tables of the 2D path.
 *
 * Image tokens combine an appearance row and a within-view slot row. Nothing
 * in them depends on where an object is.
 */
struct Encoder2D
{
  explicit Encoder2D(const SceneConfig & cfg)
  {
    Rng rng(cfg.encoder_seed);
    appearance = rng.normal_tensor({cfg.appearance_count, cfg.width_2d}, 1.0);
    slot = rng.normal_tensor({cfg.image_tokens, cfg.width_2d}, 1.0);
    special = rng.normal_tensor({cfg.special_tokens, cfg.width_2d}, 1.0);
    text = rng.normal_tensor({std::max<std::size_t>(cfg.text_tokens, 1), cfg.width_2d}, 1.0);
  }

  Tensor appearance;
  Tensor slot;
  Tensor special;
  Tensor text;
};

/// [1, C*N2, D2] image tokens; slot j of view c shows that view's (j mod k)-th visible object.
inline Tensor encode_2d(const Encoder2D & enc, const SceneConfig & cfg, const SceneSample & s)
{
  const std::size_t c_views = cfg.views, n2 = cfg.image_tokens, d = cfg.width_2d;
  if (s.view_count() != c_views) {
    throw ContractError("sample has " + std::to_string(s.view_count()) + " views, config " +
                        std::to_string(c_views));
  }
  Tensor out({1, c_views * n2, d});
  for (std::size_t c = 0; c < c_views; ++c) {
    const auto vis = s.visible_in(c);
    if (vis.empty()) {
      throw ContractError("view " + std::to_string(c) + " sees no object");
    }
    for (std::size_t j = 0; j < n2; ++j) {
      const std::size_t app = s.objects[vis[j % vis.size()]].appearance;
      if (app >= enc.appearance.dim(0)) {
        throw GenerationError(
          "appearance id " + std::to_string(app) + " outside table of " +
          std::to_string(enc.appearance.dim(0)));
      }
      double * row = out.raw() + (c * n2 + j) * d;
      for (std::size_t k = 0; k < d; ++k) {
        row[k] = enc.appearance[app * d + k] + enc.slot[j * d + k];
      }
    }
  }
  return out;
}

/// Output of the 3D provider: [B, C, N1, D1], token 0 camera, 1..r registers, then patches.
struct Feature3D
{
  Tensor values;
  std::size_t registers{1};

  std::size_t batch() const { return values.dim(0); }
  std::size_t views() const { return values.dim(1); }
  std::size_t tokens() const { return values.dim(2); }
  std::size_t width() const { return values.dim(3); }
  std::size_t patches() const { return tokens() - 1 - registers; }
};

/**
 * @brief Frozen stand-in for the 3D geometry model.
 *
 * Patch tokens are a fixed linear lift of scaled lidar coordinates plus
 * Gaussian noise. The camera slot lifts the flattened img2lidar transform.
 */
struct Provider3D
{
  explicit Provider3D(const SceneConfig & cfg)
  : noise_sigma(cfg.noise_sigma), coord_scale(cfg.coord_scale), seed(cfg.provider_seed)
  {
    Rng rng(cfg.provider_seed);
    const std::size_t d = cfg.width_3d;
    lift = Parameter("provider.lift", rng.normal_tensor({3, d}, 1.0), false);
    camera_lift = Parameter("provider.camera_lift", rng.normal_tensor({16, d}, 0.25), false);
    registers = Parameter("provider.registers", rng.normal_tensor({cfg.registers, d}, 1.0), false);
  }

  void collect(ParameterList & out)
  {
    out.push_back(&lift);
    out.push_back(&camera_lift);
    out.push_back(&registers);
  }

  double noise_sigma;
  double coord_scale;
  std::uint64_t seed;
  Parameter lift;
  Parameter camera_lift;
  Parameter registers;
};

/// Flattened img2lidar transform of every view: [C, 16].
inline Tensor camera_token_tensor(const geometry::CameraRig & rig)
{
  Tensor out({rig.size(), 16});
  for (std::size_t c = 0; c < rig.size(); ++c) {
    const auto tok = geometry::camera_token(geometry::img2lidar(rig, c));
    std::copy(tok.begin(), tok.end(), out.raw() + c * 16);
  }
  return out;
}

/// Provider output for one sample as a graph value of shape [1, C, N1, D1].
inline Var provide_3d_var(const Provider3D & p, const SceneConfig & cfg, const SceneSample & s)
{
  const std::size_t c_views = cfg.views, n2 = cfg.image_tokens, d = cfg.width_3d;
  if (s.view_count() != c_views) {
    throw ContractError("provide_3d: sample/config view count mismatch");
  }
  if (p.lift.value.dim(1) != d || p.registers.value.dim(0) != cfg.registers) {
    throw ContractError("provide_3d: provider built for a different config");
  }
  Rng noise(split_seed(s.seed, p.seed));
  const Var lift = Var::param(p.lift);
  const Var cam_lift = Var::param(p.camera_lift);
  const Var regs = Var::param(p.registers);
  const Tensor cams = camera_token_tensor(cfg.rig);
  std::vector<Var> views;
  for (std::size_t c = 0; c < c_views; ++c) {
    const auto vis = s.visible_in(c);
    if (vis.empty()) {
      throw ContractError("provide_3d: view " + std::to_string(c) + " sees no object");
    }
    Tensor coords({n2, 3});
    for (std::size_t j = 0; j < n2; ++j) {
      const auto & pos = s.objects[vis[j % vis.size()]].position;
      for (int k = 0; k < 3; ++k) coords[j * 3 + static_cast<std::size_t>(k)] = p.coord_scale * pos(k);
    }
    Var patches = add(
      matmul(Var::constant(std::move(coords)), lift),
      Var::constant(noise.normal_tensor({n2, d}, p.noise_sigma)));
    Tensor cam_row({1, 16});
    std::copy(cams.raw() + c * 16, cams.raw() + (c + 1) * 16, cam_row.raw());
    Var cam = matmul(Var::constant(std::move(cam_row)), cam_lift);
    views.push_back(concat({cam, regs, patches}, 0));
  }
  Var stacked = concat(views, 0);  // [C*N1, D1]
  return reshape(stacked, {1, c_views, cfg.tokens_3d(), d});
}

inline Feature3D provide_3d(const Provider3D & p, const SceneConfig & cfg, const SceneSample & s)
{
  return {provide_3d_var(p, cfg, s).value(), cfg.registers};
}

// ---------------------------------------------------------------------------
// token sequence

struct TokenLayout
{
  std::size_t views{0};
  std::size_t image_tokens{0};  // per view
  std::size_t special_tokens{0};
  std::size_t text_tokens{0};
  std::size_t length{0};
  std::vector<std::uint8_t> mask;  // 1 at image-token positions
  std::size_t answer_position{0};

  /// Image positions in sequence order.
  std::vector<std::size_t> image_positions() const
  {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) out.push_back(i);
    }
    return out;
  }

  /// [special_0, view blocks, special_1.., text..]; the answer is read at the last slot.
  static TokenLayout make(const SceneConfig & cfg)
  {
    TokenLayout t;
    t.views = cfg.views;
    t.image_tokens = cfg.image_tokens;
    t.special_tokens = cfg.special_tokens;
    t.text_tokens = cfg.text_tokens;
    t.length = cfg.views * cfg.image_tokens + cfg.special_tokens + cfg.text_tokens;
    t.mask.assign(t.length, 0);
    for (std::size_t i = 0; i < cfg.views * cfg.image_tokens; ++i) t.mask[1 + i] = 1;
    t.answer_position = t.length - 1;
    if (t.mask[t.answer_position]) {
      throw ConfigError("layout: answer slot would fall on an image token");
    }
    return t;
  }
};

struct SequenceExample
{
  Tensor tokens;  // [1, L, D2]
  TokenLayout layout;
  std::size_t target{0};
};

inline SequenceExample build_sequence(
  const Encoder2D & enc, const SceneConfig & cfg, const SceneSample & s, std::size_t max_length)
{
  SequenceExample ex;
  ex.layout = TokenLayout::make(cfg);
  if (ex.layout.length > max_length) {
    throw ConfigError(
      "sequence length " + std::to_string(ex.layout.length) + " exceeds model maximum " +
      std::to_string(max_length));
  }
  const std::size_t d = cfg.width_2d;
  const Tensor img = encode_2d(enc, cfg, s);
  ex.tokens = Tensor({1, ex.layout.length, d});
  auto put = [&](std::size_t pos, const double * src) {
    std::copy(src, src + d, ex.tokens.raw() + pos * d);
  };
  put(0, enc.special.raw());
  const std::size_t n_img = cfg.views * cfg.image_tokens;
  for (std::size_t i = 0; i < n_img; ++i) put(1 + i, img.raw() + i * d);
  std::size_t pos = 1 + n_img;
  for (std::size_t k = 1; k < cfg.special_tokens; ++k) put(pos++, enc.special.raw() + k * d);
  for (std::size_t k = 0; k < cfg.text_tokens; ++k) put(pos++, enc.text.raw() + k * d);
  ex.target = s.label;
  return ex;
}

// ---------------------------------------------------------------------------
// corpus

struct CorpusConfig
{
  SceneConfig scene;
  std::size_t train_size{2000};
  std::size_t holdout_size{500};
  std::uint64_t seed{1};
};

inline nlohmann::json to_json(const CorpusConfig & c)
{
  return {{"scene", to_json(c.scene)},
          {"train_size", c.train_size},
          {"holdout_size", c.holdout_size},
          {"seed", c.seed}};
}

inline CorpusConfig corpus_config_from_json(const nlohmann::json & j)
{
  const std::string where = "corpus config";
  json_util::require_known_keys(j, {"scene", "train_size", "holdout_size", "seed"}, where);
  CorpusConfig c;
  c.scene = scene_config_from_json(j.value("scene", nlohmann::json::object()));
  json_util::read_optional(j, "train_size", c.train_size, where);
  json_util::read_optional(j, "holdout_size", c.holdout_size, where);
  json_util::read_optional(j, "seed", c.seed, where);
  return c;
}

struct Corpus
{
  CorpusConfig config;
  std::vector<SceneSample> train;
  std::vector<SceneSample> holdout;
};

/// Sample i uses seed split_seed(config.seed, i); holdout indices follow the train ones.
inline Corpus generate_corpus(const CorpusConfig & cfg)
{
  cfg.scene.validate();
  Corpus corpus;
  corpus.config = cfg;
  const std::size_t total = cfg.train_size + cfg.holdout_size;
  for (std::size_t i = 0; i < total; ++i) {
    auto s = generate_scene(cfg.scene, split_seed(cfg.seed, i));
    (i < cfg.train_size ? corpus.train : corpus.holdout).push_back(std::move(s));
  }
  return corpus;
}

inline constexpr std::uint32_t kCorpusVersion = 1;

namespace detail
{

static_assert(std::endian::native == std::endian::little, "corpus IO assumes a little-endian host");

template <typename T>
void put(std::string & buf, T v)
{
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader
{
public:
  explicit Reader(const std::string & buf) : buf_(buf) {}

  template <typename T>
  T get()
  {
    if (pos_ + sizeof(T) > buf_.size()) {
      throw IoError("corpus file truncated at byte " + std::to_string(pos_));
    }
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  bool done() const { return pos_ == buf_.size(); }

private:
  const std::string & buf_;
  std::size_t pos_{0};
};

}  // namespace detail

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string & bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string serialize_corpus(const Corpus & corpus)
{
  std::string buf = "CVGE";
  detail::put<std::uint32_t>(buf, kCorpusVersion);
  detail::put<std::uint64_t>(buf, corpus.train.size());
  detail::put<std::uint64_t>(buf, corpus.holdout.size());
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(corpus.config.scene.views));
  for (const auto * split : {&corpus.train, &corpus.holdout}) {
    for (const auto & s : *split) {
      detail::put<std::uint64_t>(buf, s.seed);
      detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.label));
      detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.objects.size()));
      for (std::size_t o = 0; o < s.objects.size(); ++o) {
        for (int k = 0; k < 3; ++k) detail::put<double>(buf, s.objects[o].position(k));
        detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.objects[o].appearance));
        for (auto v : s.visibility[o]) detail::put<std::uint8_t>(buf, v);
      }
    }
  }
  return buf;
}

inline Corpus deserialize_corpus(const std::string & buf, const CorpusConfig & cfg)
{
  if (buf.size() < 4 || buf.compare(0, 4, "CVGE") != 0) {
    throw IoError("not a corpus file (bad magic)");
  }
  detail::Reader r(buf);
  r.get<std::uint32_t>();
  if (const auto v = r.get<std::uint32_t>(); v != kCorpusVersion) {
    throw IoError("unsupported corpus version " + std::to_string(v));
  }
  const auto n_train = r.get<std::uint64_t>();
  const auto n_hold = r.get<std::uint64_t>();
  const auto views = r.get<std::uint32_t>();
  if (views != cfg.scene.views) {
    throw ConfigError("corpus has " + std::to_string(views) + " views, config " +
                      std::to_string(cfg.scene.views));
  }
  Corpus corpus;
  corpus.config = cfg;
  for (std::uint64_t i = 0; i < n_train + n_hold; ++i) {
    SceneSample s;
    s.seed = r.get<std::uint64_t>();
    s.label = r.get<std::uint32_t>();
    const auto n_obj = r.get<std::uint32_t>();
    for (std::uint32_t o = 0; o < n_obj; ++o) {
      SceneObject obj;
      for (int k = 0; k < 3; ++k) obj.position(k) = r.get<double>();
      obj.appearance = r.get<std::uint32_t>();
      std::vector<std::uint8_t> vis(views);
      for (auto & v : vis) v = r.get<std::uint8_t>();
      s.objects.push_back(obj);
      s.visibility.push_back(std::move(vis));
    }
    if (s.label >= views) throw IoError("corpus label out of range");
    (i < n_train ? corpus.train : corpus.holdout).push_back(std::move(s));
  }
  if (!r.done()) throw IoError("trailing bytes after corpus records");
  return corpus;
}

inline std::string checksum_hex(std::uint64_t h)
{
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// Writes `<dir>/corpus.bin` and `<dir>/manifest.json` (config echo + checksum).
inline void write_corpus(const std::filesystem::path & dir, const Corpus & corpus)
{
  std::filesystem::create_directories(dir);
  const std::string buf = serialize_corpus(corpus);
  {
    std::ofstream out(dir / "corpus.bin", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "corpus.bin").string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  nlohmann::json manifest = {
    {"format", "CVGE"},
    {"version", kCorpusVersion},
    {"train_size", corpus.train.size()},
    {"holdout_size", corpus.holdout.size()},
    {"checksum_fnv1a64", checksum_hex(fnv1a(buf))},
    {"config", to_json(corpus.config)},
  };
  json_util::save_file((dir / "manifest.json").string(), manifest);
}

inline Corpus read_corpus(const std::filesystem::path & dir)
{
  const auto manifest = json_util::load_file((dir / "manifest.json").string());
  std::ifstream in(dir / "corpus.bin", std::ios::binary);
  if (!in) throw IoError("cannot open " + (dir / "corpus.bin").string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string expected = manifest.value("checksum_fnv1a64", "");
  if (checksum_hex(fnv1a(buf)) != expected) {
    throw IoError("corpus checksum mismatch in " + dir.string());
  }
  return deserialize_corpus(buf, corpus_config_from_json(manifest.at("config")));
}

// ---------------------------------------------------------------------------
// dense views for training

/// Stacked model inputs of a split.
struct Dataset
{
  Tensor tokens;   // [S, L, D2]
  Tensor v3d;      // [S, C, N1, D1]
  Tensor cams;     // [S, C, 16]
  std::vector<std::size_t> targets;
  TokenLayout layout;
  std::size_t registers{1};

  std::size_t size() const { return targets.size(); }
};

inline Dataset build_dataset(
  const std::vector<SceneSample> & samples, const SceneConfig & cfg, const Encoder2D & enc,
  const Provider3D & prov, std::size_t max_length)
{
  if (samples.empty()) {
    throw ConfigError("dataset split is empty");
  }
  Dataset ds;
  ds.layout = TokenLayout::make(cfg);
  ds.registers = cfg.registers;
  const std::size_t n = samples.size(), l = ds.layout.length, d2 = cfg.width_2d;
  const std::size_t c_views = cfg.views, n1 = cfg.tokens_3d(), d1 = cfg.width_3d;
  ds.tokens = Tensor({n, l, d2});
  ds.v3d = Tensor({n, c_views, n1, d1});
  ds.cams = Tensor({n, c_views, 16});
  const Tensor cams = camera_token_tensor(cfg.rig);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ex = build_sequence(enc, cfg, samples[i], max_length);
    std::copy(ex.tokens.raw(), ex.tokens.raw() + l * d2, ds.tokens.raw() + i * l * d2);
    const auto f = provide_3d(prov, cfg, samples[i]);
    const std::size_t fsz = c_views * n1 * d1;
    std::copy(f.values.raw(), f.values.raw() + fsz, ds.v3d.raw() + i * fsz);
    std::copy(cams.raw(), cams.raw() + c_views * 16, ds.cams.raw() + i * c_views * 16);
    ds.targets.push_back(ex.target);
  }
  return ds;
}

}  // namespace vggdrive::scenesynth

#endif  // VGGDRIVE__SCENESYNTH_HPP_
