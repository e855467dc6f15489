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

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>

#include "voxfv/io.hpp"
#include "voxfv/rng.hpp"

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("voxfv_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("fmx round trips every feature kind") {
  TempDir dir;
  voxfv::Rng rng(3);
  for (voxfv::FeatureKind kind :
       {voxfv::FeatureKind::kMfcc, voxfv::FeatureKind::kMfccHires, voxfv::FeatureKind::kPlp,
        voxfv::FeatureKind::kFisherVector, voxfv::FeatureKind::kXvector,
        voxfv::FeatureKind::kGeneric}) {
    voxfv::Mat m(5, 4);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
    const std::string path = dir.file("feat.fmx");
    voxfv::write_fmx(path, m, kind);
    const voxfv::FrameMatrix back = voxfv::read_fmx(path);
    CHECK(back.kind == kind);
    REQUIRE(back.data.rows() == 5);
    REQUIRE(back.data.cols() == 4);
    CHECK(back.data == m);  // bit-exact: the payload is raw float64
  }
}

TEST_CASE("fmx rejects bad magic, bad kind codes, and truncation") {
  TempDir dir;
  const std::string path = dir.file("bad.fmx");

  write_text(path, "NOPE");
  CHECK_THROWS_MATCHES(voxfv::read_fmx(path), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("not an FMX1 file")));

  voxfv::Mat m = voxfv::Mat::Ones(2, 2);
  voxfv::write_fmx(path, m, voxfv::FeatureKind::kMfcc);
  std::string bytes = read_bytes(path);
  bytes[12] = 0x7f;  // kind code out of range
  write_text(path, bytes);
  CHECK_THROWS_MATCHES(voxfv::read_fmx(path), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("bad FMX1 header")));

  voxfv::write_fmx(path, m, voxfv::FeatureKind::kMfcc);
  bytes = read_bytes(path);
  write_text(path, bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_MATCHES(voxfv::read_fmx(path), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("truncated")));

  CHECK_THROWS_AS(voxfv::read_fmx(dir.file("missing.fmx")), voxfv::Error);
}

TEST_CASE("manifest round trips and resolves relative paths") {
  TempDir dir;
  fs::create_directories(dir.path / "wav");
  write_text(dir.file("wav/a.wav"), "x");
  write_text(dir.file("wav/b.wav"), "x");

  voxfv::Manifest m;
  m.records.push_back({"utt_a", "wav/a.wav", "mask", "train"});
  m.records.push_back({"utt_b", "wav/b.wav", "no-mask", "test"});
  const std::string path = dir.file("manifest.csv");
  voxfv::write_manifest(path, m);

  const voxfv::Manifest back = voxfv::read_manifest(path);
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[0].id == "utt_a");
  CHECK(back.records[0].label == "mask");
  CHECK(back.records[0].split == "train");
  CHECK(back.records[0].path == (dir.path / "wav" / "a.wav").string());
  CHECK(back.split("test").size() == 1);
  CHECK(back.split("devel").empty());
}

TEST_CASE("manifest validation failures") {
  TempDir dir;
  const std::string path = dir.file("manifest.csv");

  write_text(path, "id,path,label\nx,y,z\n");
  CHECK_THROWS_MATCHES(voxfv::read_manifest(path), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("unexpected header")));

  write_text(path, "id,path,label,split\nu1,p,mask\n");
  CHECK_THROWS_MATCHES(voxfv::read_manifest(path, false), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("4 fields")));

  write_text(path, "id,path,label,split\nu1,p,mask,train\nu1,q,mask,test\n");
  CHECK_THROWS_MATCHES(voxfv::read_manifest(path, false), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("duplicate utterance id")));

  write_text(path, "id,path,label,split\nu1,p,mask,eval\n");
  CHECK_THROWS_MATCHES(voxfv::read_manifest(path, false), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("unknown split")));

  write_text(path, "id,path,label,split\nu1,/nonexistent/file.wav,mask,train\n");
  CHECK_THROWS_MATCHES(voxfv::read_manifest(path), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("does not exist")));
  CHECK_NOTHROW(voxfv::read_manifest(path, false));

  write_text(path, "id,path,label,split\n");
  CHECK_THROWS_MATCHES(voxfv::read_manifest(path), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("no records")));
}

TEST_CASE("format_double round trips exactly") {
  voxfv::Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::exp(rng.uniform(-20.0, 20.0)) * (rng.uniform() < 0.5 ? -1 : 1);
    const std::string s = voxfv::format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(voxfv::format_double(0.5) == "0.5");
  CHECK(voxfv::format_double(1.0) == "1");
}

TEST_CASE("posterior csv round trips bit-exactly") {
  TempDir dir;
  voxfv::PosteriorSet set;
  set.system = "sysA";
  set.ids = {"u1", "u2", "u3"};
  set.probs.resize(3, 2);
  voxfv::Rng rng(23);
  for (int i = 0; i < 3; ++i) {
    const double p = rng.uniform(0.001, 0.999);
    set.probs(i, 0) = p;
    set.probs(i, 1) = 1.0 - p;
  }
  const std::string path = dir.file("post.csv");
  voxfv::write_posteriors(path, set);

  const voxfv::PosteriorSet back = voxfv::read_posteriors(path, "sysA");
  CHECK(back.system == "sysA");
  REQUIRE(back.ids == set.ids);
  CHECK(back.probs == set.probs);

  // default system name is the file stem
  CHECK(voxfv::read_posteriors(path).system == "post");

  // rewriting what was read reproduces the file byte for byte
  const std::string again = dir.file("post2.csv");
  voxfv::write_posteriors(again, back);
  CHECK(read_bytes(again) == read_bytes(path));
}

TEST_CASE("posterior validation rejects rows that do not sum to one") {
  TempDir dir;
  const std::string path = dir.file("post.csv");
  write_text(path, "id,p_class0,p_class1\nu1,0.7,0.4\n");
  CHECK_THROWS_AS(voxfv::read_posteriors(path), voxfv::Error);

  write_text(path, "id,p_class0,p_class1\nu1,0.7,0.3\nu1,0.2,0.8\n");
  CHECK_THROWS_AS(voxfv::read_posteriors(path), voxfv::Error);  // duplicate id

  write_text(path, "id,p_class0,p_class1\nu1,0.7,oops\n");
  CHECK_THROWS_AS(voxfv::read_posteriors(path), voxfv::Error);
}

TEST_CASE("json files save and load with stable key order") {
  TempDir dir;
  voxfv::Json j;
  j["zeta"] = 1;
  j["alpha"] = {1, 2, 3};
  j["nested"]["x"] = 0.25;
  const std::string path = dir.file("doc.json");
  voxfv::save_json(path, j);

  const voxfv::Json back = voxfv::load_json(path);
  CHECK(back == j);
  // insertion order survives the round trip
  CHECK(back.begin().key() == "zeta");
  const std::string bytes = read_bytes(path);
  CHECK(bytes.find("\"zeta\"") < bytes.find("\"alpha\""));
  CHECK(bytes.back() == '\n');

  write_text(path, "{not json");
  CHECK_THROWS_MATCHES(voxfv::load_json(path), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("cannot parse")));
}
