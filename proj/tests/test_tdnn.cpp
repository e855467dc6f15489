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

#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "voxfv/rng.hpp"
#include "voxfv/tdnn.hpp"

namespace {

voxfv::TdnnConfig tiny_config(int input_dim = 3, int num_classes = 3) {
  voxfv::TdnnConfig c;
  c.input_dim = input_dim;
  c.frame_dim = 4;
  c.frame5_dim = 4;
  c.segment_dim = 4;
  c.num_classes = num_classes;
  c.seed = 1;
  c.train.segment_len = voxfv::kTotalContext;
  return c;
}

voxfv::Mat random_features(int t, int d, voxfv::Rng& rng) {
  voxfv::Mat x(t, d);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  return x;
}

double loss_at(const voxfv::TdnnParams& p, const voxfv::Mat& x, int label) {
  return -voxfv::tdnn_forward(p, x).log_probs[label];
}

// Checks every weight and bias of every layer against central differences.
void check_gradients(const voxfv::TdnnParams& params, const voxfv::Mat& x, int label) {
  voxfv::TdnnGradients grads = voxfv::zero_gradients(params.config);
  voxfv::tdnn_backward(params, x, label, grads);
  const double h = 1e-5;
  for (int li = 0; li < voxfv::TdnnParams::kNumLayers; ++li) {
    voxfv::TdnnParams probe = params;
    double diff2 = 0.0, fd2 = 0.0;
    auto fd_at = [&](double* slot) {
      const double saved = *slot;
      *slot = saved + h;
      const double up = loss_at(probe, x, label);
      *slot = saved - h;
      const double down = loss_at(probe, x, label);
      *slot = saved;
      return (up - down) / (2.0 * h);
    };
    for (int i = 0; i < probe.layers[li].w.size(); ++i) {
      const double fd = fd_at(probe.layers[li].w.data() + i);
      const double an = grads[li].w.data()[i];
      diff2 += (fd - an) * (fd - an);
      fd2 += fd * fd;
    }
    for (int i = 0; i < probe.layers[li].b.size(); ++i) {
      const double fd = fd_at(probe.layers[li].b.data() + i);
      const double an = grads[li].b.data()[i];
      diff2 += (fd - an) * (fd - an);
      fd2 += fd * fd;
    }
    CAPTURE(li, voxfv::TdnnParams::layer_names()[li]);
    REQUIRE(std::sqrt(diff2) <= 1e-4 * (std::sqrt(fd2) + 1e-8));
  }
}

}  // namespace

TEST_CASE("analytic gradients match finite differences") {
  voxfv::Rng rng(41);
  const voxfv::TdnnParams params = voxfv::init_tdnn(tiny_config());
  const voxfv::Mat x = random_features(20, 3, rng);
  check_gradients(params, x, 1);
}

TEST_CASE("gradients stay exact when the variance floor engages") {
  // Constant input keeps every frame-layer activation constant over time, so
  // the pooled variance sits on the floor. The std branch must then carry no
  // gradient, and finite differences agree because no perturbation of the
  // parameters can lift a time-constant signal off the floor.
  const voxfv::TdnnParams params = voxfv::init_tdnn(tiny_config());
  voxfv::Mat x(20, 3);
  for (int i = 0; i < 20; ++i) x.row(i) << 0.4, -0.2, 0.9;

  const voxfv::TdnnForward f = voxfv::tdnn_forward(params, x);
  for (int j = 0; j < 4; ++j) {
    CHECK(f.pooled[4 + j] == std::sqrt(voxfv::kPoolingVarianceFloor));
  }
  check_gradients(params, x, 0);
}

TEST_CASE("frame layers emit t - 14 rows and pooling doubles frame5") {
  voxfv::Rng rng(42);
  const voxfv::TdnnParams params = voxfv::init_tdnn(tiny_config());
  for (int t : {15, 20, 40}) {
    const voxfv::TdnnForward f = voxfv::tdnn_forward(params, random_features(t, 3, rng));
    CHECK(f.h1.rows() == t - 4);
    CHECK(f.h2.rows() == t - 8);
    CHECK(f.h3.rows() == t - 14);
    CHECK(f.h5.rows() == t - 14);
    CHECK(f.pooled.size() == 8);
    CHECK(f.seg6_pre.size() == 4);
    CHECK(f.log_probs.size() == 3);
    CHECK(std::abs(f.log_probs.array().exp().sum() - 1.0) < 1e-12);
  }
  CHECK_THROWS_MATCHES(voxfv::tdnn_forward(params, random_features(14, 3, rng)),
                       voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("too short")));
  CHECK_THROWS_AS(voxfv::tdnn_forward(params, random_features(20, 5, rng)), voxfv::Error);
}

TEST_CASE("full-width layer shapes give a 3000-dim pooled and 512-dim embedding") {
  voxfv::TdnnConfig c;
  c.input_dim = 40;
  c.num_classes = 8;
  const auto shapes = voxfv::layer_shapes(c);
  CHECK(shapes[0] == std::pair<int, int>{200, 512});
  CHECK(shapes[1] == std::pair<int, int>{1536, 512});
  CHECK(shapes[4] == std::pair<int, int>{512, 1500});
  CHECK(c.pooled_dim() == 3000);
  CHECK(shapes[5] == std::pair<int, int>{3000, 512});
  CHECK(shapes[7] == std::pair<int, int>{512, 8});

  voxfv::Rng rng(43);
  const voxfv::TdnnParams params = voxfv::init_tdnn(c);
  const voxfv::TdnnForward f = voxfv::tdnn_forward(params, random_features(20, 40, rng));
  CHECK(f.pooled.size() == 3000);
  CHECK(f.seg6_pre.size() == 512);
  CHECK(f.seg7_pre.size() == 512);
}

TEST_CASE("each output frame sees exactly 15 input frames") {
  voxfv::Rng rng(44);
  const voxfv::TdnnParams params = voxfv::init_tdnn(tiny_config());
  const int t = 40;
  const voxfv::Mat x = random_features(t, 3, rng);
  voxfv::Mat y = x;
  const int poked = 20;
  y.row(poked) += voxfv::Vec::Constant(3, 0.5).transpose();

  const voxfv::TdnnForward fx = voxfv::tdnn_forward(params, x);
  const voxfv::TdnnForward fy = voxfv::tdnn_forward(params, y);
  for (int i = 0; i < t - 14; ++i) {
    const bool inside = poked >= i && poked <= i + 14;
    if (inside) continue;
    // same shapes mean the same instruction order, so equality is exact
    REQUIRE(fx.h5.row(i) == fy.h5.row(i));
  }
  CHECK(fx.h5.row(poked - 14) != fy.h5.row(poked - 14));
  CHECK(fx.h5.row(poked) != fy.h5.row(poked));
}

TEST_CASE("frame layers are translation covariant") {
  voxfv::Rng rng(45);
  const voxfv::TdnnParams params = voxfv::init_tdnn(tiny_config());
  const voxfv::Mat x = random_features(34, 3, rng);
  const voxfv::Mat shifted = x.middleRows(3, 31);

  const voxfv::TdnnForward fx = voxfv::tdnn_forward(params, x);
  const voxfv::TdnnForward fs = voxfv::tdnn_forward(params, shifted);
  REQUIRE(fs.h5.rows() == 17);
  for (int i = 0; i < 17; ++i) {
    REQUIRE((fs.h5.row(i) - fx.h5.row(i + 3)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("cross entropy is summed over the batch") {
  voxfv::Mat log_probs(2, 2);
  log_probs << std::log(0.5), std::log(0.5), std::log(0.25), std::log(0.75);
  CHECK(voxfv::cross_entropy_loss(log_probs, {0, 1}) ==
        Catch::Approx(-std::log(0.5) - std::log(0.75)).epsilon(1e-12));
  CHECK_THROWS_AS(voxfv::cross_entropy_loss(log_probs, {0}), voxfv::Error);
  CHECK_THROWS_AS(voxfv::cross_entropy_loss(log_probs, {0, 2}), voxfv::Error);
}

TEST_CASE("stats pooling concatenates mean and population std") {
  voxfv::Mat h(2, 2);
  h << 1.0, 2.0, 3.0, 6.0;
  const voxfv::Vec pooled = voxfv::stats_pooling(h);
  REQUIRE(pooled.size() == 4);
  CHECK(pooled[0] == 2.0);
  CHECK(pooled[1] == 4.0);
  CHECK(pooled[2] == Catch::Approx(1.0));
  CHECK(pooled[3] == Catch::Approx(2.0));
}

TEST_CASE("training separates an easy two-class pool") {
  voxfv::Rng rng(46);
  std::vector<voxfv::FrameMatrix> pool;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {
    voxfv::FrameMatrix fm;
    fm.utterance_id = "u" + std::to_string(i);
    fm.data = random_features(30, 3, rng) * 0.1;
    const int label = i % 2;
    fm.data.col(0).array() += label == 0 ? 1.0 : -1.0;
    pool.push_back(std::move(fm));
    labels.push_back(label);
  }
  voxfv::TdnnConfig c = tiny_config(3, 2);
  c.train.epochs = 20;
  c.train.minibatch = 4;
  c.train.segment_len = 20;
  const voxfv::TdnnTrainResult result = voxfv::train_tdnn(pool, labels, c);
  REQUIRE(result.loss_trace.size() == 20);
  CHECK(result.loss_trace.back() < result.loss_trace.front());
  CHECK(result.loss_trace.back() < std::log(2.0));

  // training is deterministic in the seed
  const voxfv::TdnnTrainResult again = voxfv::train_tdnn(pool, labels, c);
  CHECK(result.loss_trace == again.loss_trace);
  for (int li = 0; li < voxfv::TdnnParams::kNumLayers; ++li) {
    REQUIRE(result.params.layers[li].w == again.params.layers[li].w);
  }
}

TEST_CASE("training drops short utterances and demands coverage of every class") {
  voxfv::Rng rng(47);
  std::vector<voxfv::FrameMatrix> pool(3);
  pool[0].data = random_features(30, 3, rng);
  pool[1].data = random_features(10, 3, rng);  // below the receptive field
  pool[2].data = random_features(30, 3, rng);
  const voxfv::TdnnConfig c = tiny_config(3, 2);

  CHECK_THROWS_MATCHES(voxfv::train_tdnn(pool, {0, 1, 0}, c), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("no utterance")));
  voxfv::TdnnConfig quick = c;
  quick.train.epochs = 1;
  CHECK_NOTHROW(voxfv::train_tdnn(pool, {0, 1, 1}, quick));
  CHECK_THROWS_AS(voxfv::train_tdnn(pool, {0, 1}, quick), voxfv::Error);
  CHECK_THROWS_AS(voxfv::train_tdnn(pool, {0, 1, 2}, quick), voxfv::Error);
}

TEST_CASE("embeddings are the segment pre-activations and ignore the softmax layer") {
  voxfv::Rng rng(48);
  voxfv::TdnnParams params = voxfv::init_tdnn(tiny_config());
  voxfv::FrameMatrix fm;
  fm.data = random_features(25, 3, rng);

  const voxfv::TdnnForward f = voxfv::tdnn_forward(params, fm.data);
  const voxfv::Vec e6 = voxfv::extract_embedding(params, fm, voxfv::EmbeddingLayer::kSegment6);
  const voxfv::Vec e7 = voxfv::extract_embedding(params, fm, voxfv::EmbeddingLayer::kSegment7);
  CHECK(e6 == f.seg6_pre);
  CHECK(e7 == f.seg7_pre);

  params.layers[7].w.setRandom();
  params.layers[7].b.setConstant(3.0);
  CHECK(voxfv::extract_embedding(params, fm, voxfv::EmbeddingLayer::kSegment6) == e6);
  CHECK(voxfv::extract_embedding(params, fm, voxfv::EmbeddingLayer::kSegment7) == e7);

  CHECK(voxfv::embedding_layer_from_name("segment6") == voxfv::EmbeddingLayer::kSegment6);
  CHECK(voxfv::embedding_layer_from_name("segment7") == voxfv::EmbeddingLayer::kSegment7);
  CHECK_THROWS_AS(voxfv::embedding_layer_from_name("segment8"), voxfv::Error);
}

TEST_CASE("padding repeats frames cyclically, only when needed") {
  voxfv::FrameMatrix fm;
  fm.utterance_id = "short";
  fm.data.resize(4, 2);
  fm.data << 1, 2, 3, 4, 5, 6, 7, 8;
  const voxfv::FrameMatrix padded = voxfv::pad_by_repetition(fm);
  REQUIRE(padded.num_frames() == voxfv::kTotalContext);
  for (int i = 0; i < padded.num_frames(); ++i) {
    REQUIRE(padded.data.row(i) == fm.data.row(i % 4));
  }
  CHECK(padded.utterance_id == "short");

  voxfv::FrameMatrix longer;
  longer.data.resize(20, 2);
  longer.data.setConstant(1.0);
  CHECK(voxfv::pad_by_repetition(longer).num_frames() == 20);

  voxfv::FrameMatrix empty;
  empty.utterance_id = "none";
  empty.data.resize(0, 2);
  CHECK_THROWS_MATCHES(voxfv::pad_by_repetition(empty), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("none")));
}

TEST_CASE("tdnn-v1 json round trip is exact") {
  const voxfv::TdnnParams params = voxfv::init_tdnn(tiny_config());
  const voxfv::Json j = voxfv::tdnn_to_json(params);
  CHECK(j.at("format") == "tdnn-v1");
  CHECK(j.at("layers").size() == 8);
  CHECK(j.at("layers").at(0).at("name") == "frame1");

  const voxfv::TdnnParams back = voxfv::tdnn_from_json(j);
  CHECK(back.config.input_dim == 3);
  CHECK(back.config.num_classes == 3);
  for (int li = 0; li < voxfv::TdnnParams::kNumLayers; ++li) {
    REQUIRE(back.layers[li].w == params.layers[li].w);
    REQUIRE(back.layers[li].b == params.layers[li].b);
  }

  voxfv::Json wrong = j;
  wrong["format"] = "cnn-v1";
  CHECK_THROWS_AS(voxfv::tdnn_from_json(wrong), voxfv::Error);
  voxfv::Json tampered = j;
  tampered["layers"][2]["in"] = 7;
  CHECK_THROWS_AS(voxfv::tdnn_from_json(tampered), voxfv::Error);
}
