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

#ifndef VGGDRIVE__MODEL__CONFIG_HPP_
#define VGGDRIVE__MODEL__CONFIG_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vggdrive/errors.hpp"
#include "vggdrive/json_util.hpp"
#include "vggdrive/scenesynth.hpp"

namespace vggdrive::model
{

enum class Scheme { baseline, vggt_only, dist, add, mhca_pre, vggdrive };

inline constexpr std::array<Scheme, 6> kAllSchemes{
  Scheme::baseline, Scheme::vggt_only, Scheme::dist, Scheme::add, Scheme::mhca_pre,
  Scheme::vggdrive};

inline std::string scheme_name(Scheme s)
{
  switch (s) {
    case Scheme::baseline: return "baseline";
    case Scheme::vggt_only: return "vggt_only";
    case Scheme::dist: return "dist";
    case Scheme::add: return "add";
    case Scheme::mhca_pre: return "mhca_pre";
    case Scheme::vggdrive: return "vggdrive";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string & name)
{
  for (auto s : kAllSchemes) {
    if (scheme_name(s) == name) return s;
  }
  throw ConfigError("unknown scheme '" + name + "'");
}

/// Decoder sizes plus the token geometry it is wired for.
struct ModelConfig
{
  std::size_t width{64};     // decoder width
  std::size_t width_3d{64};  // provider feature width
  std::size_t layers{4};
  std::size_t heads{4};  // decoder self-attention
  std::size_t ffn{128};
  std::size_t max_length{64};
  std::size_t vocab{3};
  std::size_t views{3};
  std::size_t image_tokens{16};
  std::size_t registers{1};
  double position_std{1.0};
  std::uint64_t init_seed{1};

  std::size_t tokens_3d() const { return 1 + registers + image_tokens; }

  static ModelConfig for_scene(const scenesynth::SceneConfig & s)
  {
    ModelConfig m;
    m.width = s.width_2d;
    m.width_3d = s.width_3d;
    m.vocab = s.views;
    m.views = s.views;
    m.image_tokens = s.image_tokens;
    m.registers = s.registers;
    return m;
  }

  void validate() const
  {
    if (width == 0 || width_3d == 0 || layers == 0 || ffn == 0 || vocab == 0 || views == 0 ||
        image_tokens == 0 || max_length == 0)
    {
      throw ConfigError("model config: sizes must be positive");
    }
    if (heads == 0 || width % heads != 0) {
      throw ConfigError("model config: width " + std::to_string(width) +
                        " not divisible by decoder heads " + std::to_string(heads));
    }
  }
};

/// Integration scheme and component switches.
struct SchemeConfig
{
  Scheme scheme{Scheme::vggdrive};
  bool use_residual{true};
  bool share_cvge{false};
  bool use_mhca{true};
  bool use_cam{true};
  std::optional<std::vector<std::size_t>> inject_layers;  // 1-based; unset = every layer
  std::size_t s{4};
  std::size_t heads{8};
  bool zero_init_up{true};

  /// Sorted, de-duplicated injection layers resolved against `n`.
  std::vector<std::size_t> resolved_layers(std::size_t n) const
  {
    std::vector<std::size_t> out;
    if (!inject_layers) {
      for (std::size_t i = 1; i <= n; ++i) out.push_back(i);
      return out;
    }
    out = *inject_layers;
    for (auto i : out) {
      if (i < 1 || i > n) {
        throw ConfigError("inject layer " + std::to_string(i) + " outside 1.." + std::to_string(n));
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Reduced CVGE width D1 / s; must divide exactly and split over the heads.
  std::size_t reduced_width(std::size_t width_3d) const
  {
    if (s == 0 || width_3d % s != 0) {
      throw ConfigError("scale factor s=" + std::to_string(s) + " does not divide width " +
                        std::to_string(width_3d));
    }
    const std::size_t ds = width_3d / s;
    if (heads == 0 || ds % heads != 0) {
      throw ConfigError("reduced width " + std::to_string(ds) + " not divisible by " +
                        std::to_string(heads) + " heads");
    }
    return ds;
  }
};

/// A named ablation row: scheme switches plus the single-phase training flag.
struct Variant
{
  std::string id;
  SchemeConfig scheme;
  bool one_stage{false};
};

/// Integration schemes, then component ablations, then camera/scale ablations.
inline const std::vector<std::string> & variant_names()
{
  static const std::vector<std::string> names{
    "baseline",    "vggt_only",   "dist",      "add",    "mhca_pre", "vggdrive", "no_mhca",
    "shared_cvge", "no_residual", "one_stage", "no_cam", "s2",       "s4",       "s8"};
  return names;
}

/// Variant `id` applied on top of `base`; component rows run on the vggdrive scheme.
inline Variant named_variant(const std::string & id, const SchemeConfig & base = {})
{
  Variant v;
  v.id = id;
  v.scheme = base;
  auto & sc = v.scheme;
  sc.scheme = Scheme::vggdrive;
  if (id == "no_mhca") {
    sc.use_mhca = false;
  } else if (id == "shared_cvge") {
    sc.share_cvge = true;
  } else if (id == "no_residual") {
    sc.use_residual = false;
  } else if (id == "one_stage") {
    v.one_stage = true;
  } else if (id == "no_cam") {
    sc.use_cam = false;
  } else if (id == "s2" || id == "s4" || id == "s8") {
    sc.s = static_cast<std::size_t>(id[1] - '0');
  } else {
    try {
      sc.scheme = parse_scheme(id);
    } catch (const ConfigError &) {
      throw ConfigError("unknown variant '" + id + "'");
    }
  }
  return v;
}

inline nlohmann::json to_json(const ModelConfig & m)
{
  return {{"width", m.width},       {"width_3d", m.width_3d},
          {"layers", m.layers},     {"heads", m.heads},
          {"ffn", m.ffn},           {"max_length", m.max_length},
          {"vocab", m.vocab},       {"views", m.views},
          {"image_tokens", m.image_tokens}, {"registers", m.registers},
          {"position_std", m.position_std}, {"init_seed", m.init_seed}};
}

inline nlohmann::json to_json(const SchemeConfig & c)
{
  nlohmann::json j = {{"scheme", scheme_name(c.scheme)}, {"use_residual", c.use_residual},
                      {"share_cvge", c.share_cvge},      {"use_mhca", c.use_mhca},
                      {"use_cam", c.use_cam},            {"s", c.s},
                      {"heads", c.heads},                {"zero_init_up", c.zero_init_up}};
  j["inject_layers"] = c.inject_layers ? nlohmann::json(*c.inject_layers) : nlohmann::json("all");
  return j;
}

inline SchemeConfig scheme_config_from_json(const nlohmann::json & j)
{
  const std::string where = "scheme config";
  json_util::require_known_keys(
    j,
    {"scheme", "use_residual", "share_cvge", "use_mhca", "use_cam", "inject_layers", "s", "heads",
     "zero_init_up"},
    where);
  SchemeConfig c;
  if (j.contains("scheme")) c.scheme = parse_scheme(j.at("scheme").get<std::string>());
  json_util::read_optional(j, "use_residual", c.use_residual, where);
  json_util::read_optional(j, "share_cvge", c.share_cvge, where);
  json_util::read_optional(j, "use_mhca", c.use_mhca, where);
  json_util::read_optional(j, "use_cam", c.use_cam, where);
  json_util::read_optional(j, "s", c.s, where);
  json_util::read_optional(j, "heads", c.heads, where);
  json_util::read_optional(j, "zero_init_up", c.zero_init_up, where);
  if (j.contains("inject_layers") && !(j.at("inject_layers").is_string() &&
                                       j.at("inject_layers").get<std::string>() == "all"))
  {
    std::vector<std::size_t> layers;
    json_util::read_optional(j, "inject_layers", layers, where);
    c.inject_layers = layers;
  }
  return c;
}

inline ModelConfig model_config_from_json(const nlohmann::json & j, ModelConfig base)
{
  const std::string where = "model config";
  json_util::require_known_keys(
    j,
    {"width", "width_3d", "layers", "heads", "ffn", "max_length", "vocab", "views",
     "image_tokens", "registers", "position_std", "init_seed"},
    where);
  json_util::read_optional(j, "width", base.width, where);
  json_util::read_optional(j, "width_3d", base.width_3d, where);
  json_util::read_optional(j, "layers", base.layers, where);
  json_util::read_optional(j, "heads", base.heads, where);
  json_util::read_optional(j, "ffn", base.ffn, where);
  json_util::read_optional(j, "max_length", base.max_length, where);
  json_util::read_optional(j, "vocab", base.vocab, where);
  json_util::read_optional(j, "views", base.views, where);
  json_util::read_optional(j, "image_tokens", base.image_tokens, where);
  json_util::read_optional(j, "registers", base.registers, where);
  json_util::read_optional(j, "position_std", base.position_std, where);
  json_util::read_optional(j, "init_seed", base.init_seed, where);
  base.validate();
  return base;
}

}  // namespace vggdrive::model

#endif  // VGGDRIVE__MODEL__CONFIG_HPP_
