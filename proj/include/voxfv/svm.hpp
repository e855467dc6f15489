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

#ifndef VOXFV_SVM_HPP_
#define VOXFV_SVM_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "voxfv/common.hpp"
#include "voxfv/io.hpp"
#include "voxfv/rng.hpp"
#include "voxfv/types.hpp"

namespace voxfv {

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

// Below this population std a column counts as constant and maps to zero.
inline constexpr double kScalerStdFloor = 1e-12;

struct Scaler {
  Vec mean;
  Vec inv_std;  // 0 marks a constant column

  int dim() const { return static_cast<int>(mean.size()); }

  static Scaler fit(const Mat& x) {
    require(x.rows() >= 1, ErrorKind::kData, "scaler needs at least one row");
    Scaler s;
    s.mean = x.colwise().mean().transpose();
    s.inv_std.resize(x.cols());
    for (int j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean[j]).square().mean();
      const double stddev = std::sqrt(var);
      s.inv_std[j] = stddev <= kScalerStdFloor ? 0.0 : 1.0 / stddev;
    }
    return s;
  }

  Mat apply(const Mat& x) const {
    require(x.cols() == dim(), ErrorKind::kShape, "scaler dim mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() *
           inv_std.transpose().array();
  }

  Vec apply_row(const Vec& x) const {
    require(x.size() == dim(), ErrorKind::kShape, "scaler dim mismatch");
    return (x - mean).cwiseProduct(inv_std);
  }
};

// n / (num_classes * n_c) per label value, keeping the total cost budget
// independent of the class balance.
inline std::map<std::string, double> balanced_class_weights(
    const std::vector<std::string>& labels) {
  require(!labels.empty(), ErrorKind::kData, "no labels");
  std::map<std::string, double> counts;
  for (const auto& l : labels) counts[l] += 1.0;
  const double n = static_cast<double>(labels.size());
  const double k = static_cast<double>(counts.size());
  std::map<std::string, double> weights;
  for (const auto& [label, count] : counts) weights[label] = n / (k * count);
  return weights;
}

// ---------------------------------------------------------------------------
// Linear SVM, dual coordinate descent on the L1 hinge loss
// ---------------------------------------------------------------------------

struct SvmTrainOptions {
  double c = 1.0;
  std::vector<double> cost_scale;  // optional per-sample multiplier on c
  double tol = 1e-4;               // stop when max |projected gradient| < tol
  int max_epochs = 1000;
  std::uint64_t seed = 0;
};

struct SvmTrainResult {
  Vec w;        // weights on the input features
  double bias;  // learned through an implicit constant-one feature
  Vec alpha;
  int epochs = 0;
  bool converged = false;
  std::vector<double> dual_objective;  // f(a) = 0.5 ||w||^2 - sum a, per epoch
  double primal_objective = 0.0;
  double duality_gap = 0.0;
};

// One-coordinate updates over shuffled rows; each update solves its
// single-variable subproblem exactly, so the dual objective never increases.
inline SvmTrainResult svm_train(const Mat& x, const std::vector<int>& y,
                                const SvmTrainOptions& opts) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  require(n >= 1 && d >= 1, ErrorKind::kData, "empty training matrix");
  require(static_cast<int>(y.size()) == n, ErrorKind::kShape,
          "label count does not match row count");
  require(opts.c > 0.0, ErrorKind::kParam, "c must be positive");
  for (int yi : y) {
    require(yi == 1 || yi == -1, ErrorKind::kData, "labels must be +1 or -1");
  }
  Vec upper = Vec::Constant(n, opts.c);
  if (!opts.cost_scale.empty()) {
    require(static_cast<int>(opts.cost_scale.size()) == n, ErrorKind::kShape,
            "cost_scale size mismatch");
    for (int i = 0; i < n; ++i) upper[i] *= opts.cost_scale[i];
  }

  // the constant-one bias feature contributes +1 to every diagonal entry
  Vec q_diag(n);
  for (int i = 0; i < n; ++i) q_diag[i] = x.row(i).squaredNorm() + 1.0;

  SvmTrainResult r;
  r.w = Vec::Zero(d);
  r.bias = 0.0;
  r.alpha = Vec::Zero(n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(opts.seed, 0x73766dULL));

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    rng.shuffle(order);
    double max_pg = 0.0;
    for (int i : order) {
      const double yi = static_cast<double>(y[i]);
      const double g = yi * (r.w.dot(x.row(i)) + r.bias) - 1.0;
      double pg = g;
      if (r.alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (r.alpha[i] >= upper[i]) {
        pg = std::max(g, 0.0);
      }
      max_pg = std::max(max_pg, std::abs(pg));
      if (pg != 0.0) {
        const double old = r.alpha[i];
        r.alpha[i] = std::clamp(old - g / q_diag[i], 0.0, upper[i]);
        const double delta = (r.alpha[i] - old) * yi;
        r.w += delta * x.row(i).transpose();
        r.bias += delta;
      }
    }
    const double dual =
        0.5 * (r.w.squaredNorm() + r.bias * r.bias) - r.alpha.sum();
    r.dual_objective.push_back(dual);
    r.epochs = epoch + 1;
    if (max_pg < opts.tol) {
      r.converged = true;
      break;
    }
  }

  double hinge = 0.0;
  for (int i = 0; i < n; ++i) {
    const double margin = y[i] * (r.w.dot(x.row(i)) + r.bias);
    hinge += upper[i] * std::max(0.0, 1.0 - margin);
  }
  r.primal_objective = 0.5 * (r.w.squaredNorm() + r.bias * r.bias) + hinge;
  // dual value of the maximization form is sum a - 0.5 ||w||^2
  r.duality_gap = r.primal_objective + r.dual_objective.back();
  return r;
}

// ---------------------------------------------------------------------------
// Platt calibration
// ---------------------------------------------------------------------------

struct PlattParams {
  double a = 0.0;
  double b = 0.0;
};

// Probability of the +1 class for a raw decision value.
inline double platt_posterior(const PlattParams& p, double decision) {
  const double f = p.a * decision + p.b;
  return f >= 0.0 ? std::exp(-f) / (1.0 + std::exp(-f)) : 1.0 / (1.0 + std::exp(f));
}

// Sigmoid fit of p(+1 | decision) by Newton's method with backtracking line
// search on regularized targets; throws on non-convergence.
inline PlattParams platt_fit(const Vec& decisions, const std::vector<int>& y,
                             int max_iters = 100) {
  const int n = static_cast<int>(decisions.size());
  require(static_cast<int>(y.size()) == n, ErrorKind::kShape,
          "label count does not match decision count");
  double prior1 = 0.0, prior0 = 0.0;
  for (int yi : y) (yi > 0 ? prior1 : prior0) += 1.0;
  require(prior1 > 0.0 && prior0 > 0.0, ErrorKind::kData,
          "calibration needs both classes");

  const double hi_target = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo_target = 1.0 / (prior0 + 2.0);
  Vec t(n);
  for (int i = 0; i < n; ++i) t[i] = y[i] > 0 ? hi_target : lo_target;

  const double min_step = 1e-10;
  const double sigma = 1e-12;  // Hessian ridge
  const double eps = 1e-5;

  double a = 0.0;
  double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  auto objective = [&](double aa, double bb) {
    double f = 0.0;
    for (int i = 0; i < n; ++i) {
      const double fapb = decisions[i] * aa + bb;
      if (fapb >= 0.0) {
        f += t[i] * fapb + std::log1p(std::exp(-fapb));
      } else {
        f += (t[i] - 1.0) * fapb + std::log1p(std::exp(fapb));
      }
    }
    return f;
  };
  double fval = objective(a, b);

  for (int iter = 0; iter < max_iters; ++iter) {
    double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double fapb = decisions[i] * a + b;
      double p, q;
      if (fapb >= 0.0) {
        p = std::exp(-fapb) / (1.0 + std::exp(-fapb));
        q = 1.0 / (1.0 + std::exp(-fapb));
      } else {
        p = 1.0 / (1.0 + std::exp(fapb));
        q = std::exp(fapb) / (1.0 + std::exp(fapb));
      }
      const double d2 = p * q;
      h11 += decisions[i] * decisions[i] * d2;
      h22 += d2;
      h21 += decisions[i] * d2;
      const double d1 = t[i] - p;
      g1 += decisions[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < eps && std::abs(g2) < eps) return {a, b};

    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool accepted = false;
    while (step >= min_step) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        accepted = true;
        break;
      }
      step /= 2.0;
    }
    require(accepted, ErrorKind::kConvergence, "calibration line search failed");
  }
  throw_error(ErrorKind::kConvergence,
              "calibration did not converge in " + std::to_string(max_iters) +
                  " iterations");
}

// ---------------------------------------------------------------------------
// Two-class classifier bundle
// ---------------------------------------------------------------------------

// classes are sorted label strings; classes[0] plays -1, classes[1] plays +1.
struct SvmModel {
  std::vector<std::string> classes;
  Scaler scaler;
  Vec w;
  double bias = 0.0;
  PlattParams platt;
  double c = 1.0;

  int feature_dim() const { return static_cast<int>(w.size()); }

  double decision(const Vec& raw_features) const {
    return w.dot(scaler.apply_row(raw_features)) + bias;
  }

  // Posterior columns follow the sorted class order.
  PosteriorSet predict(const Mat& features, const std::vector<std::string>& ids,
                       const std::string& system) const {
    require(static_cast<int>(ids.size()) == features.rows(), ErrorKind::kShape,
            "id count does not match row count");
    const Mat xs = scaler.apply(features);
    PosteriorSet out;
    out.ids = ids;
    out.system = system;
    out.probs.resize(features.rows(), 2);
    for (int i = 0; i < features.rows(); ++i) {
      const double dec = w.dot(xs.row(i)) + bias;
      const double p1 = platt_posterior(platt, dec);
      out.probs(i, 0) = 1.0 - p1;
      out.probs(i, 1) = p1;
    }
    out.validate();
    return out;
  }

  // Exactly 0.5 resolves to the first class in sorted order.
  const std::string& label_for(double p_class1) const {
    return p_class1 > 0.5 ? classes[1] : classes[0];
  }
};

inline std::vector<int> signed_labels(const std::vector<std::string>& labels,
                                      const std::vector<std::string>& classes) {
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == classes[0]) {
      y[i] = -1;
    } else if (labels[i] == classes[1]) {
      y[i] = 1;
    } else {
      throw_error(ErrorKind::kData, "unknown label '" + labels[i] + "'");
    }
  }
  return y;
}

inline std::vector<std::string> sorted_classes(const std::vector<std::string>& labels) {
  std::vector<std::string> classes(labels);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  require(classes.size() == 2, ErrorKind::kData,
          "expected exactly two classes, found " + std::to_string(classes.size()));
  return classes;
}

struct ClassifierTrainResult {
  SvmModel model;
  SvmTrainResult diagnostics;
};

// Standardize, train with balanced per-class costs, then calibrate on the
// training decision values.
inline ClassifierTrainResult train_classifier(const Mat& features,
                                              const std::vector<std::string>& labels,
                                              double c, std::uint64_t seed,
                                              bool balanced = true) {
  require(static_cast<int>(labels.size()) == features.rows(), ErrorKind::kShape,
          "label count does not match row count");
  ClassifierTrainResult r;
  r.model.classes = sorted_classes(labels);
  r.model.scaler = Scaler::fit(features);
  r.model.c = c;
  const Mat xs = r.model.scaler.apply(features);
  const std::vector<int> y = signed_labels(labels, r.model.classes);

  SvmTrainOptions opts;
  opts.c = c;
  opts.seed = seed;
  if (balanced) {
    const auto weights = balanced_class_weights(labels);
    opts.cost_scale.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      opts.cost_scale[i] = weights.at(labels[i]);
    }
  }
  r.diagnostics = svm_train(xs, y, opts);
  r.model.w = r.diagnostics.w;
  r.model.bias = r.diagnostics.bias;

  Vec decisions(xs.rows());
  for (int i = 0; i < xs.rows(); ++i) {
    decisions[i] = r.model.w.dot(xs.row(i)) + r.model.bias;
  }
  r.model.platt = platt_fit(decisions, y);
  return r;
}

// ---------------------------------------------------------------------------
// Persistence (svm-v1)
// ---------------------------------------------------------------------------

inline Json svm_to_json(const SvmModel& m) {
  Json j;
  j["format"] = "svm-v1";
  j["classes"] = m.classes;
  j["c"] = m.c;
  j["scaler"] = {{"mean", std::vector<double>(m.scaler.mean.begin(), m.scaler.mean.end())},
                 {"inv_std", std::vector<double>(m.scaler.inv_std.begin(),
                                                 m.scaler.inv_std.end())}};
  j["weights"] = std::vector<double>(m.w.begin(), m.w.end());
  j["bias"] = m.bias;
  j["platt"] = {{"a", m.platt.a}, {"b", m.platt.b}};
  return j;
}

inline SvmModel svm_from_json(const Json& j) {
  require(j.value("format", "") == "svm-v1", ErrorKind::kFormat,
          "not an svm-v1 document");
  SvmModel m;
  m.classes = j.at("classes").get<std::vector<std::string>>();
  require(m.classes.size() == 2, ErrorKind::kFormat, "svm-v1 needs two classes");
  m.c = j.at("c").get<double>();
  const auto mean = j.at("scaler").at("mean").get<std::vector<double>>();
  const auto inv_std = j.at("scaler").at("inv_std").get<std::vector<double>>();
  require(mean.size() == inv_std.size(), ErrorKind::kFormat,
          "svm-v1 scaler size mismatch");
  m.scaler.mean = Eigen::Map<const Vec>(mean.data(), static_cast<int>(mean.size()));
  m.scaler.inv_std =
      Eigen::Map<const Vec>(inv_std.data(), static_cast<int>(inv_std.size()));
  const auto w = j.at("weights").get<std::vector<double>>();
  require(w.size() == mean.size(), ErrorKind::kFormat, "svm-v1 weight size mismatch");
  m.w = Eigen::Map<const Vec>(w.data(), static_cast<int>(w.size()));
  m.bias = j.at("bias").get<double>();
  m.platt.a = j.at("platt").at("a").get<double>();
  m.platt.b = j.at("platt").at("b").get<double>();
  return m;
}

}  // namespace voxfv

#endif  // VOXFV_SVM_HPP_
