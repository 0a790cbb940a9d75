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

#ifndef VGGDRIVE_TESTS__TEST_SUPPORT_HPP_
#define VGGDRIVE_TESTS__TEST_SUPPORT_HPP_

#include <vector>

#include "vggdrive/model/model.hpp"
#include "vggdrive/scenesynth.hpp"

namespace vggdrive::test_support
{

/// Scene, frozen encoders and a few stacked samples.
struct Fixture
{
  explicit Fixture(scenesynth::SceneConfig cfg = {}, std::size_t n = 4, std::uint64_t seed = 3)
  : scene(std::move(cfg)), enc(scene), prov(scene), mc(model::ModelConfig::for_scene(scene))
  {
    for (std::size_t i = 0; i < n; ++i) samples.push_back(scenesynth::generate_scene(scene, split_seed(seed, i)));
    data = scenesynth::build_dataset(samples, scene, enc, prov, mc.max_length);
  }

  model::Batch batch(std::size_t first, std::size_t count) const
  {
    const std::size_t l = data.layout.length, d2 = scene.width_2d;
    const std::size_t v3 = scene.views * scene.tokens_3d() * scene.width_3d;
    Tensor tok({count, l, d2}), v3d({count, scene.views, scene.tokens_3d(), scene.width_3d});
    Tensor cams({count, scene.views, 16});
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(data.tokens.raw() + (first + i) * l * d2, data.tokens.raw() + (first + i + 1) * l * d2,
                tok.raw() + i * l * d2);
      std::copy(data.v3d.raw() + (first + i) * v3, data.v3d.raw() + (first + i + 1) * v3,
                v3d.raw() + i * v3);
      std::copy(data.cams.raw() + (first + i) * scene.views * 16,
                data.cams.raw() + (first + i + 1) * scene.views * 16, cams.raw() + i * scene.views * 16);
    }
    model::Batch b;
    b.tokens = Var::constant(tok);
    b.v3d = Var::constant(v3d);
    b.cams = cams;
    b.targets.assign(data.targets.begin() + static_cast<std::ptrdiff_t>(first),
                     data.targets.begin() + static_cast<std::ptrdiff_t>(first + count));
    return b;
  }

  scenesynth::SceneConfig scene;
  scenesynth::Encoder2D enc;
  scenesynth::Provider3D prov;
  model::ModelConfig mc;
  std::vector<scenesynth::SceneSample> samples;
  scenesynth::Dataset data;
};

inline model::SchemeConfig scheme_of(model::Scheme s)
{
  model::SchemeConfig c;
  c.scheme = s;
  return c;
}

/// Two views of eight image tokens: sequence length 22.
inline scenesynth::SceneConfig small_scene()
{
  scenesynth::SceneConfig s;
  s.views = 2;
  s.rig = geometry::default_surround_rig(2);
  s.min_objects = s.max_objects = 2;
  s.image_tokens = 8;
  return s;
}

/// Randomizes every up-projection so injections are not no-ops.
inline void wake_up_projections(model::Model & m, std::uint64_t seed = 9)
{
  Rng rng(seed);
  for (auto & c : m.cvge) {
    for (auto * p : {&c.up.fc2.weight, &c.up.fc2.bias}) {
      for (auto & v : p->value.data()) v = 0.3 * rng.normal();
    }
  }
}

}  // namespace vggdrive::test_support

#endif  // VGGDRIVE_TESTS__TEST_SUPPORT_HPP_
