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

#ifndef VOXFV_TDNN_HPP_
#define VOXFV_TDNN_HPP_

#include <array>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "voxfv/common.hpp"
#include "voxfv/io.hpp"
#include "voxfv/rng.hpp"
#include "voxfv/types.hpp"

namespace voxfv {

// Variance floor inside statistics pooling; keeps the std branch and its
// gradient finite on constant input.
inline constexpr double kPoolingVarianceFloor = 1e-10;

// Frame-layer splice offsets. frame1 splices a dense window, frame2/frame3
// subsample it; the receptive field grows to 15 frames (7 on each side).
inline const std::vector<int>& splice_offsets(int layer) {
  static const std::array<std::vector<int>, 5> kOffsets = {{
      {-2, -1, 0, 1, 2},  // frame1
      {-2, 0, 2},         // frame2
      {-3, 0, 3},         // frame3
      {0},                // frame4
      {0},                // frame5
  }};
  return kOffsets.at(layer);
}

inline constexpr int kTotalContext = 15;  // 7 left + 1 + 7 right

struct TdnnTrainOptions {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int epochs = 30;
  int minibatch = 16;
  int segment_len = 150;    // frames per training segment, clipped to length
  int lr_halve_every = 10;  // epochs between halvings of the learning rate
};

struct TdnnConfig {
  int input_dim = 0;
  int frame_dim = 512;    // frame1..frame4 output width
  int frame5_dim = 1500;  // frame5 output width; pooling doubles it
  int segment_dim = 512;  // segment6/segment7 width (the embedding size)
  int num_classes = 0;
  std::uint64_t seed = 0;
  TdnnTrainOptions train;

  int frame1_input_dim() const { return 5 * input_dim; }
  int pooled_dim() const { return 2 * frame5_dim; }

  void validate() const {
    require(input_dim > 0, ErrorKind::kConfig, "input_dim must be positive");
    require(frame_dim > 0 && frame5_dim > 0 && segment_dim > 0, ErrorKind::kConfig,
            "layer widths must be positive");
    require(num_classes >= 2, ErrorKind::kConfig, "need at least two classes");
    require(train.minibatch >= 1 && train.epochs >= 1 && train.segment_len >= kTotalContext,
            ErrorKind::kConfig, "invalid training options");
  }
};

struct AffineLayer {
  Mat w;  // in x out
  Vec b;  // out
};

struct TdnnParams {
  TdnnConfig config;
  // frame1..frame5, segment6, segment7, softmax
  std::vector<AffineLayer> layers;

  static constexpr int kNumLayers = 8;

  static const std::vector<std::string>& layer_names() {
    static const std::vector<std::string> names = {"frame1",   "frame2",   "frame3",
                                                   "frame4",   "frame5",   "segment6",
                                                   "segment7", "softmax"};
    return names;
  }
};

inline std::vector<std::pair<int, int>> layer_shapes(const TdnnConfig& c) {
  return {{c.frame1_input_dim(), c.frame_dim},
          {3 * c.frame_dim, c.frame_dim},
          {3 * c.frame_dim, c.frame_dim},
          {c.frame_dim, c.frame_dim},
          {c.frame_dim, c.frame5_dim},
          {c.pooled_dim(), c.segment_dim},
          {c.segment_dim, c.segment_dim},
          {c.segment_dim, c.num_classes}};
}

// Gaussian init scaled by 1/sqrt(fan_in), zero biases; deterministic in
// config.seed.
inline TdnnParams init_tdnn(const TdnnConfig& config) {
  config.validate();
  TdnnParams params;
  params.config = config;
  Rng rng(mix_seed(config.seed, 0x74646e6eULL));
  for (const auto& [in, out] : layer_shapes(config)) {
    AffineLayer layer;
    layer.w.resize(in, out);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (int i = 0; i < in; ++i) {
      for (int j = 0; j < out; ++j) layer.w(i, j) = scale * rng.gaussian();
    }
    layer.b = Vec::Zero(out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace detail {

// Concatenates rows at the given offsets; valid positions only, so the
// output loses (max - min) rows.
inline Mat splice_rows(const Mat& h, const std::vector<int>& offsets) {
  const int lo = *std::min_element(offsets.begin(), offsets.end());
  const int hi = *std::max_element(offsets.begin(), offsets.end());
  const int t_out = static_cast<int>(h.rows()) - (hi - lo);
  require(t_out >= 1, ErrorKind::kData, "utterance too short for splice");
  const int w = static_cast<int>(h.cols());
  Mat out(t_out, static_cast<int>(offsets.size()) * w);
  for (int i = 0; i < t_out; ++i) {
    for (std::size_t j = 0; j < offsets.size(); ++j) {
      out.block(i, static_cast<int>(j) * w, 1, w) = h.row(i + offsets[j] - lo);
    }
  }
  return out;
}

// Adjoint of splice_rows: scatter-adds the spliced gradient back.
inline Mat splice_rows_backward(const Mat& d_spliced, const std::vector<int>& offsets,
                                int t_in, int width) {
  const int lo = *std::min_element(offsets.begin(), offsets.end());
  Mat dh = Mat::Zero(t_in, width);
  for (int i = 0; i < d_spliced.rows(); ++i) {
    for (std::size_t j = 0; j < offsets.size(); ++j) {
      dh.row(i + offsets[j] - lo) +=
          d_spliced.block(i, static_cast<int>(j) * width, 1, width);
    }
  }
  return dh;
}

template <typename Derived>
typename Derived::PlainObject relu(const Eigen::MatrixBase<Derived>& a) {
  return a.cwiseMax(0.0);
}

}  // namespace detail

// Columnwise mean concatenated with columnwise population standard
// deviation (variance floored before the square root).
inline Vec stats_pooling(const Mat& h) {
  require(h.rows() >= 1, ErrorKind::kData, "stats pooling needs at least one frame");
  const int m = static_cast<int>(h.cols());
  Vec out(2 * m);
  const Vec mean = h.colwise().mean().transpose();
  out.head(m) = mean;
  for (int j = 0; j < m; ++j) {
    const double var = (h.col(j).array() - mean[j]).square().mean();
    out[m + j] = std::sqrt(std::max(var, kPoolingVarianceFloor));
  }
  return out;
}

struct TdnnForward {
  // spliced layer inputs (kept for the weight gradients)
  Mat s1, s2, s3;
  // post-ReLU frame-layer outputs
  Mat h1, h2, h3, h4, h5;
  Vec pooled;            // mean || std of h5
  Vec seg6_pre;          // segment6 pre-activation: the embedding
  Vec h6, seg7_pre, h7;
  Vec logits;
  Vec log_probs;
};

// Full forward pass. Frame layers are valid (no padding), so frame5 emits
// T - 14 frames; requires T >= 15.
inline TdnnForward tdnn_forward(const TdnnParams& params, const Mat& features) {
  require(features.cols() == params.config.input_dim, ErrorKind::kShape,
          "feature dim does not match network input dim");
  require(features.rows() >= kTotalContext, ErrorKind::kData,
          "utterance too short: " + std::to_string(features.rows()) + " < " +
              std::to_string(kTotalContext) + " frames");
  const auto& l = params.layers;
  TdnnForward f;
  f.s1 = detail::splice_rows(features, splice_offsets(0));
  f.h1 = detail::relu(((f.s1 * l[0].w).rowwise() + l[0].b.transpose()).eval());
  f.s2 = detail::splice_rows(f.h1, splice_offsets(1));
  f.h2 = detail::relu(((f.s2 * l[1].w).rowwise() + l[1].b.transpose()).eval());
  f.s3 = detail::splice_rows(f.h2, splice_offsets(2));
  f.h3 = detail::relu(((f.s3 * l[2].w).rowwise() + l[2].b.transpose()).eval());
  f.h4 = detail::relu(((f.h3 * l[3].w).rowwise() + l[3].b.transpose()).eval());
  f.h5 = detail::relu(((f.h4 * l[4].w).rowwise() + l[4].b.transpose()).eval());
  f.pooled = stats_pooling(f.h5);
  f.seg6_pre = l[5].w.transpose() * f.pooled + l[5].b;
  f.h6 = detail::relu(f.seg6_pre);
  f.seg7_pre = l[6].w.transpose() * f.h6 + l[6].b;
  f.h7 = detail::relu(f.seg7_pre);
  f.logits = l[7].w.transpose() * f.h7 + l[7].b;
  const double mx = f.logits.maxCoeff();
  const double lse = mx + std::log((f.logits.array() - mx).exp().sum());
  f.log_probs = f.logits.array() - lse;
  return f;
}

// Multi-class cross entropy, summed over the batch: -sum_n ln P(class_n).
inline double cross_entropy_loss(const Mat& log_probs, const std::vector<int>& labels) {
  require(static_cast<int>(labels.size()) == log_probs.rows(), ErrorKind::kShape,
          "label count does not match batch size");
  double loss = 0.0;
  for (int n = 0; n < log_probs.rows(); ++n) {
    require(labels[n] >= 0 && labels[n] < log_probs.cols(), ErrorKind::kData,
            "label " + std::to_string(labels[n]) + " out of range");
    loss -= log_probs(n, labels[n]);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

using TdnnGradients = std::vector<AffineLayer>;

inline TdnnGradients zero_gradients(const TdnnConfig& config) {
  TdnnGradients grads;
  for (const auto& [in, out] : layer_shapes(config)) {
    grads.push_back({Mat::Zero(in, out), Vec::Zero(out)});
  }
  return grads;
}

// Accumulates d(cross entropy)/d(params) for one segment into grads and
// returns the segment loss. Exact analytic gradients, including the std
// branch of the pooling layer (frozen where the variance floor is active).
inline double tdnn_backward(const TdnnParams& params, const Mat& features, int label,
                            TdnnGradients& grads) {
  require(label >= 0 && label < params.config.num_classes, ErrorKind::kData,
          "label out of range");
  const TdnnForward f = tdnn_forward(params, features);
  const auto& l = params.layers;
  const int t5 = static_cast<int>(f.h5.rows());
  const int m = params.config.frame5_dim;

  // softmax + cross entropy
  Vec dlogits = f.log_probs.array().exp();
  dlogits[label] -= 1.0;

  grads[7].w += f.h7 * dlogits.transpose();
  grads[7].b += dlogits;
  Vec dh7 = l[7].w * dlogits;
  Vec da7 = (f.seg7_pre.array() > 0.0).select(dh7, 0.0);

  grads[6].w += f.h6 * da7.transpose();
  grads[6].b += da7;
  Vec dh6 = l[6].w * da7;
  Vec da6 = (f.seg6_pre.array() > 0.0).select(dh6, 0.0);

  grads[5].w += f.pooled * da6.transpose();
  grads[5].b += da6;
  const Vec dpooled = l[5].w * da6;

  // pooling backward: mean part spreads evenly, std part follows the
  // centered activation unless the variance floor clipped it
  const Vec mean = f.pooled.head(m);
  const Vec stddev = f.pooled.tail(m);
  Mat dh5(t5, m);
  for (int j = 0; j < m; ++j) {
    const double var = (f.h5.col(j).array() - mean[j]).square().mean();
    const bool floored = var <= kPoolingVarianceFloor;
    for (int i = 0; i < t5; ++i) {
      double g = dpooled[j] / t5;
      if (!floored) {
        g += dpooled[m + j] * (f.h5(i, j) - mean[j]) / (t5 * stddev[j]);
      }
      dh5(i, j) = g;
    }
  }

  const Mat da5 = (f.h5.array() > 0.0).select(dh5, 0.0);
  grads[4].w += f.h4.transpose() * da5;
  grads[4].b += da5.colwise().sum().transpose();
  const Mat dh4 = da5 * l[4].w.transpose();

  const Mat da4 = (f.h4.array() > 0.0).select(dh4, 0.0);
  grads[3].w += f.h3.transpose() * da4;
  grads[3].b += da4.colwise().sum().transpose();
  const Mat dh3 = da4 * l[3].w.transpose();

  const Mat da3 = (f.h3.array() > 0.0).select(dh3, 0.0);
  grads[2].w += f.s3.transpose() * da3;
  grads[2].b += da3.colwise().sum().transpose();
  const Mat dh2 = detail::splice_rows_backward(da3 * l[2].w.transpose(), splice_offsets(2),
                                               static_cast<int>(f.h2.rows()),
                                               params.config.frame_dim);

  const Mat da2 = (f.h2.array() > 0.0).select(dh2, 0.0);
  grads[1].w += f.s2.transpose() * da2;
  grads[1].b += da2.colwise().sum().transpose();
  const Mat dh1 = detail::splice_rows_backward(da2 * l[1].w.transpose(), splice_offsets(1),
                                               static_cast<int>(f.h1.rows()),
                                               params.config.frame_dim);

  const Mat da1 = (f.h1.array() > 0.0).select(dh1, 0.0);
  grads[0].w += f.s1.transpose() * da1;
  grads[0].b += da1.colwise().sum().transpose();

  return -f.log_probs[label];
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TdnnTrainResult {
  TdnnParams params;
  std::vector<double> loss_trace;  // mean segment loss per epoch
};

// Minibatch SGD with momentum over fixed-length segments sampled from the
// pool. One segment per pool utterance per epoch; utterances shorter than
// the total context are rejected up front. Deterministic given config.seed.
inline TdnnTrainResult train_tdnn(const std::vector<FrameMatrix>& pool,
                                  const std::vector<int>& labels,
                                  const TdnnConfig& config) {
  config.validate();
  require(pool.size() == labels.size(), ErrorKind::kShape,
          "pool and label counts differ");
  std::vector<int> usable;
  std::set<int> classes_seen;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < config.num_classes, ErrorKind::kData,
            "label out of range for utterance '" + pool[i].utterance_id + "'");
    if (pool[i].num_frames() >= kTotalContext) {
      usable.push_back(static_cast<int>(i));
      classes_seen.insert(labels[i]);
    }
  }
  require(static_cast<int>(classes_seen.size()) == config.num_classes, ErrorKind::kData,
          "some class has no utterance with at least " +
              std::to_string(kTotalContext) + " frames");

  TdnnTrainResult result;
  result.params = init_tdnn(config);
  TdnnGradients velocity = zero_gradients(config);
  Rng rng(mix_seed(config.seed, 0x747261696eULL));
  const TdnnTrainOptions& opts = config.train;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr =
        opts.learning_rate * std::pow(0.5, epoch / std::max(opts.lr_halve_every, 1));
    std::vector<int> order = usable;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.minibatch) {
      const std::size_t stop = std::min(start + opts.minibatch, order.size());
      TdnnGradients grads = zero_gradients(config);
      for (std::size_t s = start; s < stop; ++s) {
        const FrameMatrix& fm = pool[order[s]];
        const int t = fm.num_frames();
        const int seg = std::min(opts.segment_len, t);
        const int offset = static_cast<int>(rng.uniform_int(t - seg + 1));
        epoch_loss += tdnn_backward(result.params, fm.data.middleRows(offset, seg),
                                    labels[order[s]], grads);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (int li = 0; li < TdnnParams::kNumLayers; ++li) {
        velocity[li].w = opts.momentum * velocity[li].w - lr * scale * grads[li].w;
        velocity[li].b = opts.momentum * velocity[li].b - lr * scale * grads[li].b;
        result.params.layers[li].w += velocity[li].w;
        result.params.layers[li].b += velocity[li].b;
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

enum class EmbeddingLayer { kSegment6, kSegment7 };

inline EmbeddingLayer embedding_layer_from_name(const std::string& name) {
  if (name == "segment6") return EmbeddingLayer::kSegment6;
  if (name == "segment7") return EmbeddingLayer::kSegment7;
  throw_error(ErrorKind::kParam, "unknown embedding layer '" + name + "'");
}

// The x-vector: the chosen segment layer's affine pre-activation.
// Independent of the softmax layer by construction.
inline Vec extract_embedding(const TdnnParams& params, const FrameMatrix& frames,
                             EmbeddingLayer layer = EmbeddingLayer::kSegment6) {
  const TdnnForward f = tdnn_forward(params, frames.data);
  return layer == EmbeddingLayer::kSegment6 ? f.seg6_pre : f.seg7_pre;
}

// Cyclic frame repetition up to the minimum usable length; applied at
// extraction time only, never during training.
inline FrameMatrix pad_by_repetition(const FrameMatrix& frames, int min_frames = kTotalContext) {
  require(frames.num_frames() > 0, ErrorKind::kData,
          "cannot pad empty utterance '" + frames.utterance_id + "'");
  if (frames.num_frames() >= min_frames) return frames;
  FrameMatrix out;
  out.kind = frames.kind;
  out.utterance_id = frames.utterance_id;
  out.data.resize(min_frames, frames.dim());
  for (int i = 0; i < min_frames; ++i) {
    out.data.row(i) = frames.data.row(i % frames.num_frames());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence (tdnn-v1)
// ---------------------------------------------------------------------------

inline Json tdnn_to_json(const TdnnParams& params) {
  Json j;
  j["format"] = "tdnn-v1";
  j["config"] = {{"input_dim", params.config.input_dim},
                 {"frame_dim", params.config.frame_dim},
                 {"frame5_dim", params.config.frame5_dim},
                 {"segment_dim", params.config.segment_dim},
                 {"num_classes", params.config.num_classes}};
  for (int li = 0; li < TdnnParams::kNumLayers; ++li) {
    const AffineLayer& layer = params.layers[li];
    Json lj;
    lj["name"] = TdnnParams::layer_names()[li];
    lj["in"] = static_cast<int>(layer.w.rows());
    lj["out"] = static_cast<int>(layer.w.cols());
    lj["w"] = std::vector<double>(layer.w.data(), layer.w.data() + layer.w.size());
    lj["b"] = std::vector<double>(layer.b.begin(), layer.b.end());
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

inline TdnnParams tdnn_from_json(const Json& j) {
  require(j.value("format", "") == "tdnn-v1", ErrorKind::kFormat,
          "not a tdnn-v1 document");
  TdnnParams params;
  const Json& c = j.at("config");
  params.config.input_dim = c.at("input_dim").get<int>();
  params.config.frame_dim = c.at("frame_dim").get<int>();
  params.config.frame5_dim = c.at("frame5_dim").get<int>();
  params.config.segment_dim = c.at("segment_dim").get<int>();
  params.config.num_classes = c.at("num_classes").get<int>();
  const auto shapes = layer_shapes(params.config);
  require(j.at("layers").size() == shapes.size(), ErrorKind::kFormat,
          "tdnn-v1 layer count mismatch");
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    const Json& lj = j.at("layers").at(li);
    const int in = lj.at("in").get<int>();
    const int out = lj.at("out").get<int>();
    require(in == shapes[li].first && out == shapes[li].second, ErrorKind::kFormat,
            "tdnn-v1 layer shape mismatch at " + TdnnParams::layer_names()[li]);
    AffineLayer layer;
    layer.w.resize(in, out);
    const auto w = lj.at("w").get<std::vector<double>>();
    require(static_cast<int>(w.size()) == in * out, ErrorKind::kFormat,
            "tdnn-v1 weight size mismatch");
    std::copy(w.begin(), w.end(), layer.w.data());
    const auto b = lj.at("b").get<std::vector<double>>();
    require(static_cast<int>(b.size()) == out, ErrorKind::kFormat,
            "tdnn-v1 bias size mismatch");
    layer.b = Eigen::Map<const Vec>(b.data(), out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

}  // namespace voxfv

#endif  // VOXFV_TDNN_HPP_
