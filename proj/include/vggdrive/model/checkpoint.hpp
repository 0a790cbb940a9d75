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

#ifndef VGGDRIVE__MODEL__CHECKPOINT_HPP_
#define VGGDRIVE__MODEL__CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "vggdrive/errors.hpp"
#include "vggdrive/model/model.hpp"
#include "vggdrive/scenesynth.hpp"

namespace vggdrive::model
{

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Config echo stored in, and compared against, every checkpoint.
inline nlohmann::json checkpoint_config(const Model & m)
{
  return {{"model", to_json(m.config())}, {"scheme", to_json(m.scheme())}};
}

/// "VGDC", version, config JSON, then (name, shape, f64 data) per parameter.
inline std::string serialize_checkpoint(Model & m)
{
  namespace sd = scenesynth::detail;
  std::string buf = "VGDC";
  sd::put<std::uint32_t>(buf, kCheckpointVersion);
  const std::string cfg = checkpoint_config(m).dump();
  sd::put<std::uint64_t>(buf, cfg.size());
  buf += cfg;
  const ParameterList params = m.parameters();
  sd::put<std::uint64_t>(buf, params.size());
  for (const auto * p : params) {
    sd::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p->name.size()));
    buf += p->name;
    sd::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) sd::put<std::uint64_t>(buf, d);
    for (double v : p->value.data()) sd::put<double>(buf, v);
  }
  return buf;
}

namespace detail
{
/// Validates the header and returns the stored config; `r` is left at the parameter block.
inline nlohmann::json read_header(const std::string & buf, scenesynth::detail::Reader & r)
{
  if (buf.size() < 4 || buf.compare(0, 4, "VGDC") != 0) {
    throw IoError("not a checkpoint (bad magic)");
  }
  r.get<std::uint32_t>();
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(v));
  }
  const auto cfg_len = r.get<std::uint64_t>();
  std::string cfg;
  for (std::uint64_t i = 0; i < cfg_len; ++i) cfg.push_back(static_cast<char>(r.get<char>()));
  try {
    return nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::exception & e) {
    throw IoError(std::string("checkpoint config is not JSON: ") + e.what());
  }
}
}  // namespace detail

/// Model and scheme configs stored in a checkpoint buffer.
inline std::pair<ModelConfig, SchemeConfig> checkpoint_configs(const std::string & buf)
{
  scenesynth::detail::Reader r(buf);
  const auto stored = detail::read_header(buf, r);
  if (!stored.contains("model") || !stored.contains("scheme")) {
    throw IoError("checkpoint config lacks model or scheme");
  }
  return {model_config_from_json(stored.at("model"), ModelConfig{}),
          scheme_config_from_json(stored.at("scheme"))};
}

/// Loads parameter values into `m`; refuses when the stored config differs from m's.
inline void deserialize_checkpoint(const std::string & buf, Model & m)
{
  scenesynth::detail::Reader r(buf);
  const auto stored = detail::read_header(buf, r);
  if (stored != checkpoint_config(m)) {
    throw ConfigError("checkpoint config mismatch: stored " + stored.dump() + ", model " +
                      checkpoint_config(m).dump());
  }
  const ParameterList params = m.parameters();
  if (r.get<std::uint64_t>() != params.size()) {
    throw IoError("checkpoint parameter count mismatch");
  }
  for (auto * p : params) {
    const auto len = r.get<std::uint32_t>();
    std::string name;
    for (std::uint32_t i = 0; i < len; ++i) name.push_back(r.get<char>());
    if (name != p->name) {
      throw IoError("checkpoint holds '" + name + "' where '" + p->name + "' was expected");
    }
    Shape shape(r.get<std::uint32_t>());
    for (auto & d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (shape != p->value.shape()) {
      throw IoError("checkpoint shape mismatch for " + name);
    }
    for (auto & v : p->value.data()) v = r.get<double>();
  }
  if (!r.done()) throw IoError("trailing bytes in checkpoint");
}

inline void save_checkpoint(const std::filesystem::path & path, Model & m)
{
  const std::string buf = serialize_checkpoint(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::string read_checkpoint_bytes(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {(std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()};
}

inline void load_checkpoint(const std::filesystem::path & path, Model & m)
{
  deserialize_checkpoint(read_checkpoint_bytes(path), m);
}

}  // namespace vggdrive::model

#endif  // VGGDRIVE__MODEL__CHECKPOINT_HPP_
