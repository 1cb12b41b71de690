// Copyright 2026 The aqc Authors
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

#include "aqc/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "aqc/error.hpp"

namespace aqc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view token) {
  if (token == "train") return Split::train;
  if (token == "val") return Split::val;
  if (token == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(token) + "' (expected train, val or test)");
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_fields(t);
    if (f.size() != 5 && f.size() != 6)
      throw ParseError(where + ": expected 5 or 6 comma-separated fields, found " + std::to_string(f.size()));
    ManifestEntry e;
    e.subject_id = f[0];
    if (e.subject_id.empty()) throw ParseError(where + ": empty subject_id");
    if (f[1].empty()) throw ParseError(where + ": empty path");
    e.path = std::filesystem::path(f[1]);
    if (e.path.is_relative()) e.path = base / e.path;
    if (f[2] == "0" || f[2] == "1") {
      e.label = f[2] == "1" ? 1 : 0;
    } else if (!f[2].empty()) {
      throw ValidationError(where + ": label must be 0, 1 or empty, got '" + f[2] + "'");
    }
    e.site_id = f[3];
    try {
      e.split = parse_split(f[4]);
    } catch (const ValidationError& err) {
      throw ValidationError(where + ": " + err.what());
    }
    if (f.size() == 6 && !f[5].empty()) {
      if (f[5] != "0" && f[5] != "1" && f[5] != "2")
        throw ValidationError(where + ": axial_axis must be 0, 1 or 2, got '" + f[5] + "'");
      e.axial_axis = static_cast<std::size_t>(f[5][0] - '0');
    }
    if (!seen.insert(e.subject_id).second)
      throw ValidationError(where + ": duplicate subject_id '" + e.subject_id + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  out << "# subject_id,path,label,site_id,split\n";
  for (const auto& e : entries) {
    auto p = e.path;
    if (!base.empty()) {
      const auto rel = e.path.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out << e.subject_id << ',' << p.generic_string() << ',' << (e.label ? std::to_string(*e.label) : "") << ','
        << e.site_id << ',' << split_name(e.split);
    if (e.axial_axis) out << ',' << *e.axial_axis;
    out << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries, Split split) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

}  // namespace aqc
