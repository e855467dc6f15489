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

#include <algorithm>
#include <map>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "voxfv/eval.hpp"
#include "voxfv/rng.hpp"

namespace {

voxfv::PosteriorSet make_set(const std::string& system,
                             const std::vector<std::string>& ids,
                             const std::vector<double>& p1) {
  voxfv::PosteriorSet s;
  s.system = system;
  s.ids = ids;
  s.probs.resize(static_cast<int>(ids.size()), 2);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    s.probs(static_cast<int>(i), 0) = 1.0 - p1[i];
    s.probs(static_cast<int>(i), 1) = p1[i];
  }
  return s;
}

}  // namespace

TEST_CASE("the default cost grid is seven ascending decades") {
  const std::vector<double> grid = voxfv::default_c_grid();
  REQUIRE(grid.size() == 7);
  CHECK(grid.front() == 1e-5);
  CHECK(grid.back() == 10.0);
  CHECK(std::is_sorted(grid.begin(), grid.end()));
}

TEST_CASE("stratified folds balance every class to within one") {
  voxfv::Rng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    const int num_classes = 2 + static_cast<int>(rng.uniform_int(2));
    std::vector<std::string> labels;
    for (int c = 0; c < num_classes; ++c) {
      const int count = k + static_cast<int>(rng.uniform_int(15));
      for (int i = 0; i < count; ++i) labels.push_back("class" + std::to_string(c));
    }
    rng.shuffle(labels);

    const std::vector<int> fold_of = voxfv::stratified_kfold(labels, k, trial);
    REQUIRE(fold_of.size() == labels.size());

    std::map<std::string, std::vector<int>> per_class;
    std::vector<int> overall(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      REQUIRE(fold_of[i] >= 0);
      REQUIRE(fold_of[i] < k);
      auto& counts = per_class[labels[i]];
      counts.resize(k, 0);
      ++counts[fold_of[i]];
      ++overall[fold_of[i]];
    }
    CAPTURE(trial, k, num_classes);
    for (const auto& [label, counts] : per_class) {
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      REQUIRE(*hi - *lo <= 1);
    }
    const auto [lo, hi] = std::minmax_element(overall.begin(), overall.end());
    REQUIRE(*hi - *lo <= 1);
  }
}

TEST_CASE("a class smaller than k folds is rejected") {
  const std::vector<std::string> labels = {"a", "a", "a", "b", "b", "b", "b"};
  CHECK_THROWS_MATCHES(voxfv::stratified_kfold(labels, 4, 0), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("class 'a'")));
  CHECK_NOTHROW(voxfv::stratified_kfold(labels, 3, 0));
  CHECK_THROWS_AS(voxfv::stratified_kfold(labels, 1, 0), voxfv::Error);
}

TEST_CASE("fold assignment is deterministic in the seed") {
  std::vector<std::string> labels;
  for (int i = 0; i < 60; ++i) labels.push_back(i % 2 == 0 ? "x" : "y");
  const std::vector<int> a = voxfv::stratified_kfold(labels, 5, 9);
  const std::vector<int> b = voxfv::stratified_kfold(labels, 5, 9);
  CHECK(a == b);
  const std::vector<int> c = voxfv::stratified_kfold(labels, 5, 10);
  CHECK(a != c);
}

TEST_CASE("a balanced hundred splits ten folds of five and five") {
  std::vector<std::string> labels;
  for (int i = 0; i < 50; ++i) labels.push_back("m");
  for (int i = 0; i < 50; ++i) labels.push_back("n");
  const std::vector<int> fold_of = voxfv::stratified_kfold(labels, 10, 3);
  std::map<int, std::map<std::string, int>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[fold_of[i]][labels[i]];
  for (int f = 0; f < 10; ++f) {
    CHECK(table[f]["m"] == 5);
    CHECK(table[f]["n"] == 5);
  }
}

TEST_CASE("uar is the mean per-class recall") {
  CHECK(voxfv::uar({"a", "a", "b", "b"}, {"a", "a", "b", "a"}) == 0.75);
  CHECK(voxfv::uar({"a", "a", "b", "b"}, {"a", "a", "a", "a"}) == 0.5);
  CHECK(voxfv::uar({"a", "b"}, {"a", "b"}) == 1.0);
  // imbalance does not tilt the score: recall per class, then average
  CHECK(voxfv::uar({"a", "a", "a", "a", "a", "a", "b", "b"},
                   {"a", "a", "a", "a", "a", "a", "b", "a"}) == 0.75);

  // invariant under any reordering of the pairs
  voxfv::Rng rng(62);
  std::vector<std::string> truth, pred;
  for (int i = 0; i < 30; ++i) {
    truth.push_back(i % 3 == 0 ? "p" : "q");
    pred.push_back(rng.uniform() < 0.5 ? "p" : "q");
  }
  const double base = voxfv::uar(truth, pred);
  std::vector<int> perm(30);
  for (int i = 0; i < 30; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<std::string> truth2(30), pred2(30);
  for (int i = 0; i < 30; ++i) {
    truth2[i] = truth[perm[i]];
    pred2[i] = pred[perm[i]];
  }
  CHECK(voxfv::uar(truth2, pred2) == base);

  CHECK_THROWS_AS(voxfv::uar({"a"}, {}), voxfv::Error);
  CHECK_THROWS_AS(voxfv::uar({}, {}), voxfv::Error);
}

TEST_CASE("grid search solves separable data and breaks ties downward") {
  voxfv::Rng rng(63);
  const int per_class = 20;
  voxfv::Mat x(2 * per_class, 2);
  std::vector<std::string> labels;
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool pos = i % 2 == 1;
    x(i, 0) = (pos ? 4.0 : -4.0) + 0.3 * rng.gaussian();
    x(i, 1) = rng.gaussian();
    labels.push_back(pos ? "pos" : "neg");
  }

  const voxfv::GridSearchResult r =
      voxfv::grid_search_c(x, labels, 5, voxfv::default_c_grid(), 11);
  REQUIRE(r.points.size() == 7);
  CHECK(r.classes == std::vector<std::string>{"neg", "pos"});
  CHECK(r.best_mean_uar == 1.0);
  // with a wide margin every cost ties at 1.0, so the smallest must win
  CHECK(r.best_c == 1e-5);
  for (const voxfv::GridPoint& p : r.points) {
    CHECK(p.fold_uars.size() == 5);
  }

  // out-of-fold predictions cover every row and match the truth here
  REQUIRE(r.cv_predicted.size() == labels.size());
  CHECK(r.cv_predicted == labels);
  for (int i = 0; i < r.cv_posteriors.rows(); ++i) {
    CHECK(r.cv_posteriors.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("per-fold scalers see only that fold's training rows") {
  voxfv::Rng rng(64);
  voxfv::Mat x(30, 3);
  std::vector<std::string> labels;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.gaussian() + (i % 2) * 2.0;
    labels.push_back(i % 2 == 0 ? "a" : "b");
  }
  const voxfv::GridSearchResult r =
      voxfv::grid_search_c(x, labels, 3, {0.1, 1.0}, 5);
  REQUIRE(r.fold_scalers.size() == 3);
  for (int f = 0; f < 3; ++f) {
    std::vector<int> rows;
    for (int i = 0; i < 30; ++i) {
      if (r.fold_of[i] != f) rows.push_back(i);
    }
    voxfv::Mat xt(static_cast<int>(rows.size()), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) xt.row(static_cast<int>(i)) = x.row(rows[i]);
    const voxfv::Scaler expect = voxfv::Scaler::fit(xt);
    // bit-exact match proves the held-out rows never touched the scaler
    REQUIRE(r.fold_scalers[f].mean == expect.mean);
    REQUIRE(r.fold_scalers[f].inv_std == expect.inv_std);
  }
}

TEST_CASE("grid search rejects malformed grids") {
  voxfv::Mat x = voxfv::Mat::Random(12, 2);
  std::vector<std::string> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(i % 2 == 0 ? "a" : "b");
  CHECK_THROWS_MATCHES(voxfv::grid_search_c(x, labels, 3, {1.0, 0.1}, 0), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("ascending")));
  CHECK_THROWS_AS(voxfv::grid_search_c(x, labels, 3, {}, 0), voxfv::Error);
}

TEST_CASE("late fusion averages posteriors and renormalizes") {
  const std::vector<std::string> ids = {"u1", "u2"};
  const voxfv::PosteriorSet a = make_set("a", ids, {0.6, 0.9});
  const voxfv::PosteriorSet b = make_set("b", ids, {0.4, 0.7});
  const voxfv::PosteriorSet fused = voxfv::late_fuse({a, b});

  CHECK(fused.system == "fusion:a+b");
  REQUIRE(fused.ids == ids);
  CHECK(fused.probs(0, 1) == Catch::Approx(0.5).margin(1e-12));
  CHECK(fused.probs(0, 0) == Catch::Approx(0.5).margin(1e-12));
  CHECK(fused.probs(1, 1) == Catch::Approx(0.8).margin(1e-12));

  // fusing a system with itself changes nothing
  const voxfv::PosteriorSet self = voxfv::late_fuse({a, a});
  CHECK((self.probs - a.probs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("late fusion aligns systems by id, not by row order") {
  const voxfv::PosteriorSet a = make_set("a", {"u1", "u2", "u3"}, {0.2, 0.5, 0.8});
  const voxfv::PosteriorSet b = make_set("b", {"u3", "u1", "u2"}, {0.6, 0.4, 0.5});
  const voxfv::PosteriorSet fused = voxfv::late_fuse({a, b});
  REQUIRE(fused.ids == std::vector<std::string>{"u1", "u2", "u3"});
  CHECK(fused.probs(0, 1) == Catch::Approx(0.3).margin(1e-12));   // (0.2 + 0.4) / 2
  CHECK(fused.probs(1, 1) == Catch::Approx(0.5).margin(1e-12));
  CHECK(fused.probs(2, 1) == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("late fusion validates its inputs") {
  const voxfv::PosteriorSet a = make_set("a", {"u1", "u2"}, {0.2, 0.8});
  CHECK_THROWS_AS(voxfv::late_fuse({a}), voxfv::Error);
  const voxfv::PosteriorSet mismatched = make_set("b", {"u1", "u9"}, {0.2, 0.8});
  CHECK_THROWS_AS(voxfv::late_fuse({a, mismatched}), voxfv::Error);
  const voxfv::PosteriorSet shorter = make_set("c", {"u1"}, {0.2});
  CHECK_THROWS_AS(voxfv::late_fuse({a, shorter}), voxfv::Error);
}

TEST_CASE("posterior labels use the 0.5 tie rule") {
  const voxfv::PosteriorSet s = make_set("s", {"u1", "u2", "u3"}, {0.4, 0.5, 0.6});
  const std::vector<std::string> out = voxfv::posterior_labels(s, {"lo", "hi"});
  CHECK(out == std::vector<std::string>{"lo", "lo", "hi"});
  CHECK_THROWS_AS(voxfv::posterior_labels(s, {"only"}), voxfv::Error);
}
