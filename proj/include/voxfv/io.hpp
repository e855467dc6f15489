// Copyright 2026 the voxfv authors
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

#ifndef VOXFV_IO_HPP_
#define VOXFV_IO_HPP_

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "voxfv/common.hpp"
#include "voxfv/types.hpp"

namespace voxfv {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// FMX1 feature cache: "FMX1", u32 T, u32 D (little-endian), u8 kind code,
// then T*D float64 values row-major.
// ---------------------------------------------------------------------------

inline void write_fmx(const std::string& path, const Mat& m, FeatureKind kind) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kFormat, "cannot open '" + path + "' for writing");
  out.write("FMX1", 4);
  const std::uint32_t t = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t d = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&t), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  const std::uint8_t code = static_cast<std::uint8_t>(kind);
  out.write(reinterpret_cast<const char*>(&code), 1);
  // Mat is row-major, so the coefficient buffer already has the on-disk order.
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
  require(out.good(), ErrorKind::kInternal, "failed writing '" + path + "'");
}

inline void write_fmx(const std::string& path, const FrameMatrix& fm) {
  write_fmx(path, fm.data, fm.kind);
}

inline FrameMatrix read_fmx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kFormat, "cannot open feature file '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "FMX1", 4) == 0, ErrorKind::kFormat,
          "'" + path + "' is not an FMX1 file");
  std::uint32_t t = 0, d = 0;
  std::uint8_t code = 0;
  in.read(reinterpret_cast<char*>(&t), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  in.read(reinterpret_cast<char*>(&code), 1);
  require(in.good() && code <= static_cast<std::uint8_t>(FeatureKind::kGeneric),
          ErrorKind::kFormat, "bad FMX1 header in '" + path + "'");
  FrameMatrix fm;
  fm.kind = static_cast<FeatureKind>(code);
  fm.data.resize(t, d);
  in.read(reinterpret_cast<char*>(fm.data.data()),
          static_cast<std::streamsize>(sizeof(double) * fm.data.size()));
  require(in.good(), ErrorKind::kFormat, "truncated FMX1 payload in '" + path + "'");
  return fm;
}

// ---------------------------------------------------------------------------
// Manifest CSV: header "id,path,label,split", UTF-8, LF line endings.
// ---------------------------------------------------------------------------

struct ManifestRecord {
  std::string id;
  std::string path;   // resolved against the manifest directory on load
  std::string label;  // task label or synthetic speaker id
  std::string split;  // train | devel | test
};

struct Manifest {
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split(const std::string& name) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records) {
      if (r.split == name) out.push_back(r);
    }
    return out;
  }
};

inline Manifest read_manifest(const std::string& path, bool check_paths = true) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kFormat, "cannot open manifest '" + path + "'");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kFormat,
          "manifest '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "id,path,label,split", ErrorKind::kFormat,
          "manifest '" + path + "' has unexpected header '" + line + "'");

  Manifest manifest;
  std::set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ManifestRecord rec;
    std::size_t start = 0;
    std::string* fields[4] = {&rec.id, &rec.path, &rec.label, &rec.split};
    for (int f = 0; f < 4; ++f) {
      const std::size_t comma = line.find(',', start);
      require(f == 3 ? comma == std::string::npos : comma != std::string::npos,
              ErrorKind::kFormat,
              "manifest '" + path + "' line " + std::to_string(line_no) +
                  " does not have 4 fields");
      *fields[f] = line.substr(start, comma == std::string::npos ? comma : comma - start);
      start = comma + 1;
    }
    require(!rec.id.empty(), ErrorKind::kFormat,
            "empty id at line " + std::to_string(line_no));
    require(seen.insert(rec.id).second, ErrorKind::kData,
            "duplicate utterance id '" + rec.id + "' in manifest");
    require(rec.split == "train" || rec.split == "devel" || rec.split == "test",
            ErrorKind::kFormat, "unknown split '" + rec.split + "' for id '" + rec.id + "'");
    std::filesystem::path p(rec.path);
    if (p.is_relative()) p = base / p;
    if (check_paths) {
      require(std::filesystem::exists(p), ErrorKind::kData,
              "audio path '" + p.string() + "' for id '" + rec.id + "' does not exist");
    }
    rec.path = p.string();
    manifest.records.push_back(std::move(rec));
  }
  require(!manifest.records.empty(), ErrorKind::kData,
          "manifest '" + path + "' has no records");
  return manifest;
}

inline void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF line endings
  require(out.good(), ErrorKind::kFormat, "cannot open '" + path + "' for writing");
  out << "id,path,label,split\n";
  for (const auto& r : manifest.records) {
    out << r.id << ',' << r.path << ',' << r.label << ',' << r.split << '\n';
  }
  require(out.good(), ErrorKind::kInternal, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Posteriors CSV: "id,p_class0,p_class1"
// ---------------------------------------------------------------------------

// Shortest decimal representation that round-trips the double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_posteriors(const std::string& path, const PosteriorSet& set) {
  set.validate();
  require(set.probs.cols() == 2, ErrorKind::kShape, "posterior CSV is binary only");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kFormat, "cannot open '" + path + "' for writing");
  out << "id,p_class0,p_class1\n";
  for (int i = 0; i < set.size(); ++i) {
    out << set.ids[i] << ',' << format_double(set.probs(i, 0)) << ','
        << format_double(set.probs(i, 1)) << '\n';
  }
  require(out.good(), ErrorKind::kInternal, "failed writing '" + path + "'");
}

inline PosteriorSet read_posteriors(const std::string& path, const std::string& system = "") {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kFormat, "cannot open posteriors '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kFormat,
          "posteriors '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "id,p_class0,p_class1", ErrorKind::kFormat,
          "posteriors '" + path + "' has unexpected header");
  std::vector<std::string> ids;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    require(c1 != std::string::npos && c2 != std::string::npos, ErrorKind::kFormat,
            "malformed posterior row '" + line + "'");
    ids.push_back(line.substr(0, c1));
    for (const std::string& tok :
         {line.substr(c1 + 1, c2 - c1 - 1), line.substr(c2 + 1)}) {
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      require(res.ec == std::errc{} && res.ptr == tok.data() + tok.size(),
              ErrorKind::kFormat, "bad posterior value '" + tok + "'");
      values.push_back(v);
    }
  }
  PosteriorSet set;
  set.system = system.empty() ? std::filesystem::path(path).stem().string() : system;
  set.ids = std::move(ids);
  set.probs.resize(static_cast<int>(set.ids.size()), 2);
  for (int i = 0; i < set.probs.rows(); ++i) {
    set.probs(i, 0) = values[2 * i];
    set.probs(i, 1) = values[2 * i + 1];
  }
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// JSON files
// ---------------------------------------------------------------------------

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kFormat, "cannot open json file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw_error(ErrorKind::kFormat, "cannot parse '" + path + "': " + e.what());
  }
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kFormat, "cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  require(out.good(), ErrorKind::kInternal, "failed writing '" + path + "'");
}

}  // namespace voxfv

#endif  // VOXFV_IO_HPP_
