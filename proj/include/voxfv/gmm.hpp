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

#ifndef VOXFV_GMM_HPP_
#define VOXFV_GMM_HPP_

#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "voxfv/common.hpp"
#include "voxfv/io.hpp"
#include "voxfv/rng.hpp"
#include "voxfv/types.hpp"

namespace voxfv {

// Diagonal-covariance Gaussian mixture.
struct GmmModel {
  Vec weights;    // K, simplex
  Mat means;      // K x D
  Mat variances;  // K x D, diagonal covariances

  int k() const { return static_cast<int>(weights.size()); }
  int d() const { return static_cast<int>(means.cols()); }

  void validate() const {
    require(weights.size() > 0 && means.rows() == weights.size() &&
                variances.rows() == weights.size() && variances.cols() == means.cols(),
            ErrorKind::kShape, "inconsistent gmm shapes");
    require(weights.minCoeff() >= 0.0, ErrorKind::kData, "negative mixture weight");
    require(std::abs(weights.sum() - 1.0) < 1e-9, ErrorKind::kData,
            "mixture weights do not sum to 1");
    require(variances.minCoeff() > 0.0, ErrorKind::kData, "non-positive variance");
  }
};

namespace detail {

// Per-component log w_k N(x; mu_k, diag sigma_k^2) for every frame; T x K.
inline Mat component_log_probs(const GmmModel& model, const Mat& frames) {
  require(frames.cols() == model.d(), ErrorKind::kShape,
          "frame dim " + std::to_string(frames.cols()) + " != gmm dim " +
              std::to_string(model.d()));
  const int t = static_cast<int>(frames.rows());
  const int k = model.k();
  Mat logp(t, k);
  const double log2pi = std::log(2.0 * M_PI);
  for (int c = 0; c < k; ++c) {
    const auto var = model.variances.row(c).array();
    const double constant = std::log(model.weights[c]) -
                            0.5 * (var.log().sum() + model.d() * log2pi);
    logp.col(c) =
        (((frames.rowwise() - model.means.row(c)).array().square().rowwise() / var)
             .rowwise()
             .sum() *
             -0.5 +
         constant)
            .matrix();
  }
  return logp;
}

inline double log_sum_exp_row(const Mat& m, int row) {
  const double mx = m.row(row).maxCoeff();
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (int c = 0; c < m.cols(); ++c) acc += std::exp(m(row, c) - mx);
  return mx + std::log(acc);
}

}  // namespace detail

// log sum_k w_k N(x; mu_k, diag sigma_k^2), via log-sum-exp.
inline double log_likelihood(const GmmModel& model, const Vec& x) {
  require(x.size() == model.d(), ErrorKind::kShape, "dimension mismatch");
  Mat frame(1, model.d());
  frame.row(0) = x.transpose();
  const Mat logp = detail::component_log_probs(model, frame);
  return detail::log_sum_exp_row(logp, 0);
}

inline double mean_log_likelihood(const GmmModel& model, const Mat& frames) {
  const Mat logp = detail::component_log_probs(model, frames);
  double acc = 0.0;
  for (int t = 0; t < frames.rows(); ++t) acc += detail::log_sum_exp_row(logp, t);
  return acc / static_cast<double>(frames.rows());
}

// Posterior gamma(k) = w_k N_k(x) / sum_j w_j N_j(x), computed in the log
// domain; sums to 1.
inline Vec responsibilities(const GmmModel& model, const Vec& x) {
  require(x.size() == model.d(), ErrorKind::kShape, "dimension mismatch");
  Mat frame(1, model.d());
  frame.row(0) = x.transpose();
  const Mat logp = detail::component_log_probs(model, frame);
  const double lse = detail::log_sum_exp_row(logp, 0);
  Vec gamma(model.k());
  for (int c = 0; c < model.k(); ++c) gamma[c] = std::exp(logp(0, c) - lse);
  return gamma;
}

// Per-dimension absolute variance floor: rel * global variance, with a tiny
// absolute minimum so constant dimensions stay positive.
inline Vec variance_floor(const Mat& frames, double rel = 1e-3) {
  const Vec mean = frames.colwise().mean().transpose();
  Vec var(frames.cols());
  for (int d = 0; d < frames.cols(); ++d) {
    var[d] = (frames.col(d).array() - mean[d]).square().mean();
  }
  return (var * rel).cwiseMax(1e-10);
}

// k-means++ seeding followed by at most 20 Lloyd iterations; the returned
// model has cluster centroids as means, floored within-cluster diagonal
// variances, and cluster proportions as weights.
inline GmmModel kmeans_init(const Mat& frames, int num_components, std::uint64_t seed,
                            double floor_rel = 1e-3) {
  const int t = static_cast<int>(frames.rows());
  const int d = static_cast<int>(frames.cols());
  require(num_components >= 1, ErrorKind::kParam, "need at least one component");
  require(t >= num_components, ErrorKind::kData,
          "fewer frames than components (" + std::to_string(t) + " < " +
              std::to_string(num_components) + ")");
  Rng rng(seed);
  const Vec floor = variance_floor(frames, floor_rel);

  Mat centers(num_components, d);
  centers.row(0) = frames.row(static_cast<int>(rng.uniform_int(t)));
  Vec min_dist2 = (frames.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < num_components; ++c) {
    const double total = min_dist2.sum();
    require(total > 0.0, ErrorKind::kData,
            "fewer distinct frames than components (degenerate initialization)");
    double u = rng.uniform() * total;
    int pick = t - 1;
    for (int i = 0; i < t; ++i) {
      u -= min_dist2[i];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.row(c) = frames.row(pick);
    min_dist2 = min_dist2.cwiseMin(
        (frames.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(t, -1);
  for (int iter = 0; iter < 20; ++iter) {
    bool changed = false;
    for (int i = 0; i < t; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < num_components; ++c) {
        const double dist = (frames.row(i) - centers.row(c)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Mat sums = Mat::Zero(num_components, d);
    std::vector<int> counts(num_components, 0);
    for (int i = 0; i < t; ++i) {
      sums.row(assign[i]) += frames.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < num_components; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        // revive an empty cluster at the frame farthest from its center
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < t; ++i) {
          const double dist = (frames.row(i) - centers.row(assign[i])).squaredNorm();
          if (dist > far_d) {
            far_d = dist;
            far = i;
          }
        }
        centers.row(c) = frames.row(far);
        assign[far] = c;
      }
    }
  }

  GmmModel model;
  model.means = centers;
  model.weights.resize(num_components);
  model.variances.resize(num_components, d);
  std::vector<int> counts(num_components, 0);
  Mat sq = Mat::Zero(num_components, d);
  for (int i = 0; i < t; ++i) {
    ++counts[assign[i]];
    sq.row(assign[i]) +=
        (frames.row(i) - centers.row(assign[i])).array().square().matrix();
  }
  for (int c = 0; c < num_components; ++c) {
    model.weights[c] = static_cast<double>(std::max(counts[c], 1)) / t;
    const int n = std::max(counts[c], 1);
    model.variances.row(c) =
        (sq.row(c) / n).cwiseMax(floor.transpose());
  }
  model.weights /= model.weights.sum();
  model.validate();
  return model;
}

struct EmStepResult {
  GmmModel model;
  double input_mean_ll = 0.0;          // mean log-likelihood of the input model
  std::vector<int> empty_components;   // components with vanishing responsibility
};

// One EM iteration (E-step on the input model, M-step with variance floor).
// Empty components are reported, not repaired.
inline EmStepResult em_step(const GmmModel& model, const Mat& frames, const Vec& floor) {
  model.validate();
  const int t = static_cast<int>(frames.rows());
  const int k = model.k();
  const Mat logp = detail::component_log_probs(model, frames);

  EmStepResult out;
  Vec nk = Vec::Zero(k);
  Mat first = Mat::Zero(k, model.d());
  Mat second = Mat::Zero(k, model.d());
  double total_ll = 0.0;
  Vec gamma(k);
  for (int i = 0; i < t; ++i) {
    const double lse = detail::log_sum_exp_row(logp, i);
    total_ll += lse;
    for (int c = 0; c < k; ++c) gamma[c] = std::exp(logp(i, c) - lse);
    nk += gamma;
    first += gamma * frames.row(i);
    second += gamma * frames.row(i).array().square().matrix();
  }
  out.input_mean_ll = total_ll / t;

  out.model.weights.resize(k);
  out.model.means.resize(k, model.d());
  out.model.variances.resize(k, model.d());
  for (int c = 0; c < k; ++c) {
    if (nk[c] < 1e-10) {
      out.empty_components.push_back(c);
      // keep the old parameters; the caller decides how to re-seed
      out.model.weights[c] = 1.0 / t;
      out.model.means.row(c) = model.means.row(c);
      out.model.variances.row(c) = model.variances.row(c).cwiseMax(floor.transpose());
      continue;
    }
    out.model.weights[c] = nk[c] / t;
    out.model.means.row(c) = first.row(c) / nk[c];
    out.model.variances.row(c) =
        (second.row(c) / nk[c] - out.model.means.row(c).array().square().matrix())
            .cwiseMax(floor.transpose());
  }
  out.model.weights /= out.model.weights.sum();
  return out;
}

struct EmOptions {
  int max_iters = 100;
  double tol = 1e-4;       // stop when per-frame mean LL improves by less
  double floor_rel = 1e-3; // variance floor as a fraction of global variance
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;
};

struct EmResult {
  GmmModel model;
  std::vector<double> ll_trace;  // per-frame mean LL, one entry per E-step
  int reseeds = 0;
};

// Full GMM-UBM fit: k-means++ initialization, then EM with variance
// flooring. Components that lose all responsibility are re-seeded at the
// lowest-likelihood frame; more than K re-seed events is a convergence
// failure.
inline EmResult em_fit(const Mat& frames, int num_components, const EmOptions& opts = {}) {
  require(opts.max_iters >= 1, ErrorKind::kParam, "max_iters must be >= 1");
  const Vec floor = variance_floor(frames, opts.floor_rel);
  EmResult result;
  result.model = kmeans_init(frames, num_components, opts.seed, opts.floor_rel);
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    EmStepResult step = em_step(result.model, frames, floor);
    result.ll_trace.push_back(step.input_mean_ll);
    for (int c : step.empty_components) {
      int worst = 0;
      double worst_ll = std::numeric_limits<double>::infinity();
      for (int i = 0; i < frames.rows(); ++i) {
        const double ll = log_likelihood(step.model, frames.row(i).transpose());
        if (ll < worst_ll) {
          worst_ll = ll;
          worst = i;
        }
      }
      step.model.means.row(c) = frames.row(worst);
      step.model.variances.row(c) = variance_floor(frames, 1.0).transpose();
      ++result.reseeds;
      if (opts.log != nullptr) {
        (*opts.log) << "gmm: re-seeded empty component " << c << " at frame " << worst
                    << " (iteration " << iter << ")\n";
      }
      require(result.reseeds <= num_components, ErrorKind::kConvergence,
              "EM re-seeded empty components more than K times");
    }
    step.model.weights /= step.model.weights.sum();
    result.model = std::move(step.model);
    const int n = static_cast<int>(result.ll_trace.size());
    if (n >= 2 && result.ll_trace[n - 1] - result.ll_trace[n - 2] < opts.tol) break;
  }
  result.model.validate();
  return result;
}

// ---------------------------------------------------------------------------
// Persistence (gmm-v1)
// ---------------------------------------------------------------------------

inline Json gmm_to_json(const GmmModel& model) {
  model.validate();
  Json j;
  j["format"] = "gmm-v1";
  j["k"] = model.k();
  j["d"] = model.d();
  j["weights"] = std::vector<double>(model.weights.begin(), model.weights.end());
  for (int c = 0; c < model.k(); ++c) {
    j["means"].push_back(
        std::vector<double>(model.means.row(c).begin(), model.means.row(c).end()));
    j["variances"].push_back(std::vector<double>(model.variances.row(c).begin(),
                                                 model.variances.row(c).end()));
  }
  return j;
}

inline GmmModel gmm_from_json(const Json& j) {
  require(j.value("format", "") == "gmm-v1", ErrorKind::kFormat,
          "not a gmm-v1 document");
  const int k = j.at("k").get<int>();
  const int d = j.at("d").get<int>();
  GmmModel model;
  model.weights.resize(k);
  model.means.resize(k, d);
  model.variances.resize(k, d);
  for (int c = 0; c < k; ++c) {
    model.weights[c] = j.at("weights").at(c).get<double>();
    for (int i = 0; i < d; ++i) {
      model.means(c, i) = j.at("means").at(c).at(i).get<double>();
      model.variances(c, i) = j.at("variances").at(c).at(i).get<double>();
    }
  }
  model.validate();
  return model;
}

}  // namespace voxfv

#endif  // VOXFV_GMM_HPP_
