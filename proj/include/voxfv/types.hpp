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

#ifndef VOXFV_TYPES_HPP_
#define VOXFV_TYPES_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "voxfv/common.hpp"

namespace voxfv {

// Frames are rows; row-major keeps a frame contiguous in memory and
// matches the on-disk matrix layout.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

enum class FeatureKind : std::uint8_t {
  kMfcc = 0,
  kMfccHires = 1,
  kPlp = 2,
  kFisherVector = 3,
  kXvector = 4,
  kGeneric = 5,
};

inline const char* feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMfcc: return "mfcc";
    case FeatureKind::kMfccHires: return "mfcc_hires";
    case FeatureKind::kPlp: return "plp";
    case FeatureKind::kFisherVector: return "fv";
    case FeatureKind::kXvector: return "xvector";
    case FeatureKind::kGeneric: return "generic";
  }
  return "unknown";
}

inline FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "mfcc") return FeatureKind::kMfcc;
  if (name == "mfcc_hires") return FeatureKind::kMfccHires;
  if (name == "plp") return FeatureKind::kPlp;
  if (name == "fv") return FeatureKind::kFisherVector;
  if (name == "xvector") return FeatureKind::kXvector;
  if (name == "generic") return FeatureKind::kGeneric;
  throw_error(ErrorKind::kConfig, "unknown feature kind '" + name + "'");
}

// T x D matrix of frame-level features for one utterance.
struct FrameMatrix {
  Mat data;
  FeatureKind kind = FeatureKind::kGeneric;
  std::string utterance_id;

  int num_frames() const { return static_cast<int>(data.rows()); }
  int dim() const { return static_cast<int>(data.cols()); }
};

using VadMask = std::vector<bool>;

// Per-utterance class-posterior rows for one system; the unit of scoring
// and late fusion.
struct PosteriorSet {
  std::vector<std::string> ids;
  Mat probs;  // one row per id, one column per class
  std::string system;

  int size() const { return static_cast<int>(ids.size()); }

  void validate() const {
    require(static_cast<int>(ids.size()) == probs.rows(), ErrorKind::kShape,
            "posterior row count does not match id count");
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
            ErrorKind::kData, "duplicate utterance ids in posterior set");
    for (int i = 0; i < probs.rows(); ++i) {
      require(std::abs(probs.row(i).sum() - 1.0) < 1e-9, ErrorKind::kData,
              "posterior row for '" + ids[i] + "' does not sum to 1");
    }
  }
};

}  // namespace voxfv

#endif  // VOXFV_TYPES_HPP_
