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

#ifndef VGGDRIVE__JSON_UTIL_HPP_
#define VGGDRIVE__JSON_UTIL_HPP_

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "vggdrive/errors.hpp"

namespace vggdrive::json_util
{

/// Rejects keys of `j` outside `allowed`; `where` prefixes the message.
inline void require_known_keys(
  const nlohmann::json & j, std::initializer_list<const char *> allowed, const std::string & where)
{
  if (!j.is_object()) {
    throw ConfigError(where + ": expected a JSON object");
  }
  for (const auto & item : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char * k) {
      return item.key() == k;
    });
    if (!ok) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

/// Reads j[key] into `out` when present; type mismatches become ConfigError.
template <typename T>
void read_optional(const nlohmann::json & j, const char * key, T & out, const std::string & where)
{
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception & e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

inline nlohmann::json load_file(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception & e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void save_file(const std::string & path, const nlohmann::json & j)
{
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << j.dump(2) << "\n";
}

}  // namespace vggdrive::json_util

#endif  // VGGDRIVE__JSON_UTIL_HPP_
