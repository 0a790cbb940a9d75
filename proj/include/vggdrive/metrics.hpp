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

#ifndef VGGDRIVE__METRICS_HPP_
#define VGGDRIVE__METRICS_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vggdrive/errors.hpp"

namespace vggdrive::metrics
{

/// Per-scenario planning sub-metrics, each a fraction in [0, 1].
struct SubScores
{
  double nc{1.0};
  double dac{1.0};
  double ep{1.0};
  double ttc{1.0};
  double comfort{1.0};

  void validate() const
  {
    const std::array<std::pair<const char *, double>, 5> fields{
      {{"nc", nc}, {"dac", dac}, {"ep", ep}, {"ttc", ttc}, {"comfort", comfort}}};
    for (const auto & [name, v] : fields) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw ValidationError(std::string("sub-score '") + name + "' = " + std::to_string(v) +
                              " outside [0, 1]");
      }
    }
  }
};

/// NC * DAC * (5 EP + 5 TTC + 2 C) / 12.
inline double pdms(const SubScores & s)
{
  s.validate();
  return s.nc * s.dac * (5.0 * s.ep + 5.0 * s.ttc + 2.0 * s.comfort) / 12.0;
}

/// Mean of per-scenario scores; not the score of averaged sub-metrics.
inline double pdms_aggregate(const std::vector<SubScores> & scenarios)
{
  if (scenarios.empty()) throw ValidationError("pdms_aggregate: no scenarios");
  double sum = 0.0;
  for (const auto & s : scenarios) sum += pdms(s);
  return sum / static_cast<double>(scenarios.size());
}

/// Named sub-metric values on the 0-100 display scale.
using MetricRow = std::map<std::string, double>;

inline double require(const MetricRow & r, const std::string & key)
{
  const auto it = r.find(key);
  if (it == r.end()) throw ValidationError("missing metric '" + key + "'");
  if (!std::isfinite(it->second)) throw ValidationError("metric '" + key + "' is not finite");
  return it->second;
}

/// max((accuracy + map + bleu - mae) / 4, 0).
inline double avg_nuinstruct(const MetricRow & r)
{
  const double v =
    (require(r, "accuracy") + require(r, "map") + require(r, "bleu") - require(r, "mae")) / 4.0;
  return std::max(v, 0.0);
}

inline const std::array<std::string, 3> kCaptionKeys{"bleu", "cider", "rouge"};

inline double avg3(const MetricRow & r, const std::array<std::string, 3> & keys = kCaptionKeys)
{
  return (require(r, keys[0]) + require(r, keys[1]) + require(r, keys[2])) / 3.0;
}

/// Sub-scores from a row given on a `scale` (100 for the display convention).
inline SubScores sub_scores_from_row(const MetricRow & r, double scale = 100.0)
{
  SubScores s{require(r, "nc") / scale, require(r, "dac") / scale, require(r, "ep") / scale,
              require(r, "ttc") / scale, require(r, "comfort") / scale};
  s.validate();
  return s;
}

// CSV --------------------------------------------------------------------

/// Shortest-safe decimal form: 17 significant digits round-trips any double.
inline std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string & text, const std::string & where)
{
  double v = 0.0;
  const char * first = text.data();
  const char * last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw ValidationError(where + ": '" + text + "' is not a number");
  }
  if (!std::isfinite(v)) throw ValidationError(where + ": value is not finite");
  return v;
}

/// Header plus rows of plain comma-separated cells (no quoting).
struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string & name) const
  {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

namespace detail
{
inline std::string trim(const std::string & s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split(const std::string & line)
{
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace detail

inline CsvTable parse_csv(std::istream & in)
{
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (line.find('"') != std::string::npos) {
      throw ValidationError("csv line " + std::to_string(line_no) + ": quoted cells unsupported");
    }
    auto cells = detail::split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ValidationError("csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " cells, got " +
                            std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw ValidationError("csv: no header row");
  return t;
}

inline CsvTable read_csv(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in);
}

inline void write_csv(std::ostream & out, const CsvTable & t)
{
  auto put = [&](const std::vector<std::string> & cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  put(t.header);
  for (const auto & r : t.rows) put(r);
}

inline void write_csv(const std::filesystem::path & path, const CsvTable & t)
{
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(out, t);
  if (!out) throw IoError("write failed for " + path.string());
}

/// Columns treated as row labels rather than metric values.
inline bool is_label_column(const std::string & name)
{
  return name == "name" || name == "system" || name == "scenario";
}

struct LabeledRow
{
  std::string label;
  MetricRow values;
};

/// Lower-cased metric columns parsed as numbers; a label column is optional.
inline std::vector<LabeledRow> metric_rows(const CsvTable & t)
{
  std::vector<std::string> keys;
  for (const auto & h : t.header) {
    std::string k = h;
    std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
    keys.push_back(k);
  }
  std::vector<LabeledRow> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    LabeledRow row;
    row.label = std::to_string(r);
    for (std::size_t c = 0; c < keys.size(); ++c) {
      if (is_label_column(keys[c])) {
        row.label = t.rows[r][c];
        continue;
      }
      row.values[keys[c]] =
        parse_double(t.rows[r][c], "row " + std::to_string(r + 1) + " column '" + t.header[c] + "'");
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace vggdrive::metrics

#endif  // VGGDRIVE__METRICS_HPP_
