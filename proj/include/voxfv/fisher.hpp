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

#ifndef VOXFV_FISHER_HPP_
#define VOXFV_FISHER_HPP_

#include <cmath>
#include <string>

#include "voxfv/common.hpp"
#include "voxfv/gmm.hpp"
#include "voxfv/types.hpp"

namespace voxfv {

enum class FvState { kRaw, kPowerNormalized, kPowerThenL2 };

inline const char* fv_state_name(FvState s) {
  switch (s) {
    case FvState::kRaw: return "raw";
    case FvState::kPowerNormalized: return "power_normalized";
    case FvState::kPowerThenL2: return "power_then_l2";
  }
  return "unknown";
}

// Block order: weight block [K] (optional), mean block [K x D, component
// major], variance block [K x D, component major].
struct FvLayout {
  int num_components = 0;
  int dim = 0;
  bool include_weight_block = true;

  int length() const {
    return include_weight_block ? (2 * dim + 1) * num_components
                                : 2 * dim * num_components;
  }
  int weight_offset() const { return 0; }
  int mean_offset() const { return include_weight_block ? num_components : 0; }
  int variance_offset() const { return mean_offset() + num_components * dim; }

  bool operator==(const FvLayout&) const = default;
};

struct FisherVector {
  Vec values;
  FvLayout layout;
  FvState state = FvState::kRaw;
};

// Fisher vector of one utterance under a diagonal GMM: the averaged
// per-frame score, scaled by the closed-form diagonal normalizer. With
// gamma_t(k) the posterior of component k for frame t and T the frame
// count:
//   weight block    (1/sqrt(w_k))   (1/T) sum_t (gamma_t(k) - w_k)
//   mean block      (1/sqrt(w_k))   (1/T) sum_t gamma_t(k) (x_t - mu_k) / sigma_k
//   variance block  (1/sqrt(2 w_k)) (1/T) sum_t gamma_t(k) ((x_t - mu_k)^2 / sigma_k^2 - 1)
// All divisions are elementwise; sigma_k is the per-dimension standard
// deviation. The result is in the raw state.
inline FisherVector encode_fv(const GmmModel& model, const FrameMatrix& frames,
                              bool include_weight_block = true) {
  model.validate();
  require(frames.num_frames() > 0, ErrorKind::kData,
          "cannot encode empty utterance '" + frames.utterance_id + "'");
  require(frames.dim() == model.d(), ErrorKind::kShape,
          "frame dim " + std::to_string(frames.dim()) + " != gmm dim " +
              std::to_string(model.d()));

  const int t = frames.num_frames();
  const int k = model.k();
  const int d = model.d();

  FisherVector fv;
  fv.layout = FvLayout{k, d, include_weight_block};
  fv.state = FvState::kRaw;
  fv.values = Vec::Zero(fv.layout.length());

  const Mat logp = detail::component_log_probs(model, frames.data);
  Vec gamma_sum = Vec::Zero(k);      // sum_t gamma_t(k)
  Mat mean_acc = Mat::Zero(k, d);    // sum_t gamma_t(k) (x_t - mu_k) / sigma_k
  Mat var_acc = Mat::Zero(k, d);     // sum_t gamma_t(k) ((x_t - mu_k)^2/sigma_k^2 - 1)
  const Mat sigma = model.variances.cwiseSqrt();
  Vec gamma(k);
  for (int i = 0; i < t; ++i) {
    const double lse = detail::log_sum_exp_row(logp, i);
    for (int c = 0; c < k; ++c) gamma[c] = std::exp(logp(i, c) - lse);
    gamma_sum += gamma;
    for (int c = 0; c < k; ++c) {
      const auto centered =
          (frames.data.row(i) - model.means.row(c)).array() / sigma.row(c).array();
      mean_acc.row(c) += gamma[c] * centered.matrix();
      var_acc.row(c) += gamma[c] * (centered.square() - 1.0).matrix();
    }
  }

  const double inv_t = 1.0 / static_cast<double>(t);
  for (int c = 0; c < k; ++c) {
    const double w = model.weights[c];
    if (include_weight_block) {
      fv.values[fv.layout.weight_offset() + c] =
          (gamma_sum[c] - t * w) * inv_t / std::sqrt(w);
    }
    for (int j = 0; j < d; ++j) {
      fv.values[fv.layout.mean_offset() + c * d + j] =
          mean_acc(c, j) * inv_t / std::sqrt(w);
      fv.values[fv.layout.variance_offset() + c * d + j] =
          var_acc(c, j) * inv_t / std::sqrt(2.0 * w);
    }
  }
  return fv;
}

// Elementwise sign(z) |z|^alpha. Normalizations apply once, in order:
// raw -> power_normalized -> power_then_l2.
inline FisherVector power_normalize(const FisherVector& fv, double alpha = 0.5) {
  require(fv.state == FvState::kRaw, ErrorKind::kState,
          std::string("power_normalize expects a raw vector, got ") +
              fv_state_name(fv.state));
  require(alpha > 0.0 && alpha <= 1.0, ErrorKind::kParam, "alpha must lie in (0, 1]");
  FisherVector out;
  out.layout = fv.layout;
  out.state = FvState::kPowerNormalized;
  out.values.resize(fv.values.size());
  for (int i = 0; i < fv.values.size(); ++i) {
    const double z = fv.values[i];
    out.values[i] = z == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(z), alpha), z);
  }
  return out;
}

// v / ||v||_2; the zero vector passes through unchanged.
inline FisherVector l2_normalize(const FisherVector& fv) {
  require(fv.state == FvState::kPowerNormalized, ErrorKind::kState,
          std::string("l2_normalize expects a power-normalized vector, got ") +
              fv_state_name(fv.state));
  FisherVector out;
  out.layout = fv.layout;
  out.state = FvState::kPowerThenL2;
  const double norm = fv.values.norm();
  out.values = norm > 0.0 ? (fv.values / norm).eval() : fv.values;
  return out;
}

inline FisherVector encode_fv_normalized(const GmmModel& model, const FrameMatrix& frames,
                                         bool include_weight_block = true,
                                         double alpha = 0.5) {
  return l2_normalize(power_normalize(encode_fv(model, frames, include_weight_block), alpha));
}

// Fisher kernel between two fully normalized encodings: the Euclidean dot
// product. In [-1, 1] for unit-norm inputs.
inline double fisher_kernel(const FisherVector& a, const FisherVector& b) {
  require(a.layout == b.layout, ErrorKind::kShape, "fisher kernel layout mismatch");
  require(a.state == FvState::kPowerThenL2 && b.state == FvState::kPowerThenL2,
          ErrorKind::kState, "fisher kernel needs fully normalized vectors");
  return a.values.dot(b.values);
}

}  // namespace voxfv

#endif  // VOXFV_FISHER_HPP_
