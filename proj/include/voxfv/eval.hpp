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

#ifndef VOXFV_EVAL_HPP_
#define VOXFV_EVAL_HPP_

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "voxfv/common.hpp"
#include "voxfv/rng.hpp"
#include "voxfv/svm.hpp"
#include "voxfv/types.hpp"

namespace voxfv {

// Canonical grid of cost values swept during cross validation.
inline std::vector<double> default_c_grid() {
  return {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
}

// ---------------------------------------------------------------------------
// Stratified k-fold assignment
// ---------------------------------------------------------------------------

// Returns the fold index per row. Each class is shuffled independently and
// dealt round robin, so per-class fold counts differ by at most one; the
// deal position carries across classes to balance overall fold sizes too.
inline std::vector<int> stratified_kfold(const std::vector<std::string>& labels, int k,
                                         std::uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  require(k >= 2, ErrorKind::kParam, "need at least two folds");
  std::map<std::string, std::vector<int>> by_class;
  for (int i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, indices] : by_class) {
    require(static_cast<int>(indices.size()) >= k, ErrorKind::kData,
            "class '" + label + "' has " + std::to_string(indices.size()) +
                " members, fewer than " + std::to_string(k) + " folds");
  }

  std::vector<int> fold_of(n, -1);
  Rng rng(mix_seed(seed, 0xf01d5ULL));
  int position = 0;
  for (auto& [label, indices] : by_class) {
    rng.shuffle(indices);
    for (int idx : indices) {
      fold_of[idx] = position % k;
      ++position;
    }
  }
  return fold_of;
}

// ---------------------------------------------------------------------------
// Unweighted average recall
// ---------------------------------------------------------------------------

// Mean of per-class recalls over the classes present in the truth labels.
inline double uar(const std::vector<std::string>& truth,
                  const std::vector<std::string>& predicted) {
  require(truth.size() == predicted.size(), ErrorKind::kShape,
          "truth and prediction counts differ");
  require(!truth.empty(), ErrorKind::kData, "no labels to score");
  std::map<std::string, int> total, correct;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    total[truth[i]] += 1;
    if (predicted[i] == truth[i]) correct[truth[i]] += 1;
  }
  double sum = 0.0;
  for (const auto& [label, count] : total) {
    sum += static_cast<double>(correct[label]) / static_cast<double>(count);
  }
  return sum / static_cast<double>(total.size());
}

// ---------------------------------------------------------------------------
// Cross-validated cost search
// ---------------------------------------------------------------------------

struct GridPoint {
  double c = 0.0;
  double mean_uar = 0.0;
  std::vector<double> fold_uars;
};

struct GridSearchResult {
  std::vector<GridPoint> points;
  double best_c = 0.0;
  double best_mean_uar = 0.0;
  std::vector<int> fold_of;
  std::vector<Scaler> fold_scalers;  // fitted on each fold's training rows only
  std::vector<std::string> classes;
  // out-of-fold predictions at the winning cost, aligned with the input rows
  std::vector<std::string> cv_predicted;
  Mat cv_posteriors;
};

// Sweeps the cost grid with stratified k-fold cross validation, scoring
// each cost by the mean out-of-fold recall average. Ties go to the smaller
// cost. Per-fold scalers depend only on the split and are fitted once.
inline GridSearchResult grid_search_c(const Mat& features,
                                      const std::vector<std::string>& labels, int k,
                                      const std::vector<double>& c_grid,
                                      std::uint64_t seed, bool balanced = true) {
  const int n = static_cast<int>(features.rows());
  require(static_cast<int>(labels.size()) == n, ErrorKind::kShape,
          "label count does not match row count");
  require(!c_grid.empty(), ErrorKind::kParam, "empty cost grid");
  require(std::is_sorted(c_grid.begin(), c_grid.end()), ErrorKind::kParam,
          "cost grid must be ascending");
  GridSearchResult r;
  r.classes = sorted_classes(labels);
  r.fold_of = stratified_kfold(labels, k, seed);

  std::vector<std::vector<int>> train_idx(k), test_idx(k);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < k; ++f) {
      (r.fold_of[i] == f ? test_idx : train_idx)[f].push_back(i);
    }
  }
  for (int f = 0; f < k; ++f) {
    require(!train_idx[f].empty() && !test_idx[f].empty(), ErrorKind::kData,
            "fold " + std::to_string(f) + " is degenerate");
    std::set<std::string> seen;
    for (int idx : train_idx[f]) seen.insert(labels[idx]);
    require(seen.size() == r.classes.size(), ErrorKind::kData,
            "fold " + std::to_string(f) + " training portion misses a class");
    Mat xt(static_cast<int>(train_idx[f].size()), features.cols());
    for (std::size_t i = 0; i < train_idx[f].size(); ++i) {
      xt.row(static_cast<int>(i)) = features.row(train_idx[f][i]);
    }
    r.fold_scalers.push_back(Scaler::fit(xt));
  }

  int best_index = -1;
  for (std::size_t ci = 0; ci < c_grid.size(); ++ci) {
    GridPoint point;
    point.c = c_grid[ci];
    std::vector<std::string> oof_predicted(n);
    Mat oof_posteriors(n, 2);
    for (int f = 0; f < k; ++f) {
      Mat xt(static_cast<int>(train_idx[f].size()), features.cols());
      std::vector<std::string> lt(train_idx[f].size());
      for (std::size_t i = 0; i < train_idx[f].size(); ++i) {
        xt.row(static_cast<int>(i)) = features.row(train_idx[f][i]);
        lt[i] = labels[train_idx[f][i]];
      }
      const auto trained = train_classifier(xt, lt, point.c,
                                            mix_seed(seed, ci, static_cast<std::uint64_t>(f)),
                                            balanced);
      std::vector<std::string> fold_truth, fold_pred;
      for (int idx : test_idx[f]) {
        const double dec = trained.model.decision(features.row(idx).transpose());
        const double p1 = platt_posterior(trained.model.platt, dec);
        oof_posteriors(idx, 0) = 1.0 - p1;
        oof_posteriors(idx, 1) = p1;
        oof_predicted[idx] = trained.model.label_for(p1);
        fold_truth.push_back(labels[idx]);
        fold_pred.push_back(oof_predicted[idx]);
      }
      point.fold_uars.push_back(uar(fold_truth, fold_pred));
    }
    point.mean_uar = 0.0;
    for (double u : point.fold_uars) point.mean_uar += u;
    point.mean_uar /= static_cast<double>(point.fold_uars.size());
    if (best_index < 0 || point.mean_uar > r.best_mean_uar) {
      best_index = static_cast<int>(ci);
      r.best_mean_uar = point.mean_uar;
      r.cv_predicted = oof_predicted;
      r.cv_posteriors = oof_posteriors;
    }
    r.points.push_back(std::move(point));
  }
  r.best_c = c_grid[best_index];
  return r;
}

// ---------------------------------------------------------------------------
// Late fusion
// ---------------------------------------------------------------------------

// Arithmetic mean of per-system posteriors, renormalized per row. Systems
// are aligned by utterance id; the first system fixes the output order.
inline PosteriorSet late_fuse(const std::vector<PosteriorSet>& systems) {
  require(systems.size() >= 2, ErrorKind::kParam, "fusion needs at least two systems");
  const PosteriorSet& first = systems.front();
  const int n = static_cast<int>(first.ids.size());
  PosteriorSet out;
  out.ids = first.ids;
  out.probs = Mat::Zero(n, first.probs.cols());
  std::string tag = "fusion:" + first.system;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    const PosteriorSet& ps = systems[s];
    ps.validate();
    require(ps.probs.cols() == first.probs.cols(), ErrorKind::kShape,
            "posterior class counts differ");
    std::map<std::string, int> row_of;
    for (int i = 0; i < static_cast<int>(ps.ids.size()); ++i) row_of[ps.ids[i]] = i;
    require(static_cast<int>(row_of.size()) == n && ps.ids.size() == first.ids.size(),
            ErrorKind::kData, "fusion id sets differ");
    for (int i = 0; i < n; ++i) {
      const auto it = row_of.find(first.ids[i]);
      require(it != row_of.end(), ErrorKind::kData,
              "id '" + first.ids[i] + "' missing from system '" + ps.system + "'");
      out.probs.row(i) += ps.probs.row(it->second);
    }
    if (s > 0) tag += "+" + ps.system;
  }
  for (int i = 0; i < n; ++i) {
    out.probs.row(i) /= out.probs.row(i).sum();
  }
  out.system = tag;
  out.validate();
  return out;
}

// Labels from two-class posteriors; exactly 0.5 resolves to the first class.
inline std::vector<std::string> posterior_labels(const PosteriorSet& ps,
                                                 const std::vector<std::string>& classes) {
  require(classes.size() == 2 && ps.probs.cols() == 2, ErrorKind::kShape,
          "expected two-class posteriors");
  std::vector<std::string> out;
  out.reserve(ps.ids.size());
  for (int i = 0; i < ps.probs.rows(); ++i) {
    out.push_back(ps.probs(i, 1) > 0.5 ? classes[1] : classes[0]);
  }
  return out;
}

}  // namespace voxfv

#endif  // VOXFV_EVAL_HPP_
