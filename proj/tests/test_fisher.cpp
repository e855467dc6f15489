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

#include "voxfv/fisher.hpp"
#include "voxfv/rng.hpp"

namespace {

voxfv::GmmModel random_model(int k, int d, voxfv::Rng& rng) {
  voxfv::GmmModel m;
  m.weights.resize(k);
  m.means.resize(k, d);
  m.variances.resize(k, d);
  voxfv::Vec alpha(k);
  for (int c = 0; c < k; ++c) alpha[c] = rng.uniform(-1.0, 1.0);
  m.weights = (alpha.array() - alpha.maxCoeff()).exp();
  m.weights /= m.weights.sum();
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < d; ++j) {
      m.means(c, j) = rng.uniform(-2.0, 2.0);
      m.variances(c, j) = rng.uniform(0.5, 2.0);
    }
  }
  return m;
}

voxfv::FrameMatrix frames_near_means(const voxfv::GmmModel& m, int t, voxfv::Rng& rng) {
  voxfv::FrameMatrix fm;
  fm.kind = voxfv::FeatureKind::kGeneric;
  fm.data.resize(t, m.d());
  for (int i = 0; i < t; ++i) {
    const int c = static_cast<int>(rng.uniform_int(m.k()));
    for (int j = 0; j < m.d(); ++j) {
      fm.data(i, j) =
          m.means(c, j) + 0.3 * std::sqrt(m.variances(c, j)) * rng.gaussian();
    }
  }
  return fm;
}

voxfv::GmmModel with_softmax_weights(voxfv::GmmModel m, const voxfv::Vec& alpha) {
  voxfv::Vec w = (alpha.array() - alpha.maxCoeff()).exp();
  m.weights = w / w.sum();
  return m;
}

double block_rel_error(const voxfv::Vec& got, const voxfv::Vec& want) {
  return (got - want).norm() / (want.norm() + 1e-12);
}

voxfv::FisherVector random_raw_fv(int k, int d, voxfv::Rng& rng) {
  voxfv::FisherVector fv;
  fv.layout = voxfv::FvLayout{k, d, true};
  fv.state = voxfv::FvState::kRaw;
  fv.values.resize(fv.layout.length());
  for (int i = 0; i < fv.values.size(); ++i) fv.values[i] = rng.uniform(-2.0, 2.0);
  return fv;
}

}  // namespace

TEST_CASE("encoding matches finite differences of the average log likelihood") {
  // The encoding must equal the gradient of (1/T) sum_t log p(x_t) in the
  // scaled coordinates: means via sigma/sqrt(w), sigmas via sigma/sqrt(2w),
  // weights via softmax logits and 1/sqrt(w).
  voxfv::Rng rng(31);
  const double h = 1e-4;
  for (int trial = 0; trial < 60; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_int(3));
    const int d = 1 + static_cast<int>(rng.uniform_int(2));
    const int t = 1 + static_cast<int>(rng.uniform_int(5));
    const voxfv::GmmModel model = random_model(k, d, rng);
    const voxfv::FrameMatrix x = frames_near_means(model, t, rng);
    const voxfv::FisherVector fv = voxfv::encode_fv(model, x);
    const voxfv::FvLayout& lay = fv.layout;

    voxfv::Vec want_w(k), want_mean(k * d), want_var(k * d);
    for (int c = 0; c < k; ++c) {
      const voxfv::Vec alpha = model.weights.array().log();
      voxfv::Vec ap = alpha, am = alpha;
      ap[c] += h;
      am[c] -= h;
      const double fd =
          (voxfv::mean_log_likelihood(with_softmax_weights(model, ap), x.data) -
           voxfv::mean_log_likelihood(with_softmax_weights(model, am), x.data)) /
          (2.0 * h);
      want_w[c] = fd / std::sqrt(model.weights[c]);
      for (int j = 0; j < d; ++j) {
        voxfv::GmmModel mp = model, mm = model;
        mp.means(c, j) += h;
        mm.means(c, j) -= h;
        const double fd_mu = (voxfv::mean_log_likelihood(mp, x.data) -
                              voxfv::mean_log_likelihood(mm, x.data)) /
                             (2.0 * h);
        const double sigma = std::sqrt(model.variances(c, j));
        want_mean[c * d + j] = fd_mu * sigma / std::sqrt(model.weights[c]);

        voxfv::GmmModel sp = model, sm = model;
        sp.variances(c, j) = (sigma + h) * (sigma + h);
        sm.variances(c, j) = (sigma - h) * (sigma - h);
        const double fd_sigma = (voxfv::mean_log_likelihood(sp, x.data) -
                                 voxfv::mean_log_likelihood(sm, x.data)) /
                                (2.0 * h);
        want_var[c * d + j] = fd_sigma * sigma / std::sqrt(2.0 * model.weights[c]);
      }
    }

    const voxfv::Vec got_w = fv.values.segment(lay.weight_offset(), k);
    const voxfv::Vec got_mean = fv.values.segment(lay.mean_offset(), k * d);
    const voxfv::Vec got_var = fv.values.segment(lay.variance_offset(), k * d);
    CAPTURE(trial, k, d, t);
    CHECK(block_rel_error(got_mean, want_mean) < 1e-5);
    CHECK(block_rel_error(got_var, want_var) < 1e-5);
    if (k > 1) CHECK(block_rel_error(got_w, want_w) < 1e-5);
    // a single-component softmax is flat, so both sides must vanish
    if (k == 1) CHECK(std::abs(got_w[0]) < 1e-12);
  }
}

TEST_CASE("encoded length follows (2d+1)k with the weight block") {
  for (int k : {2, 4, 8, 16, 32, 64, 128, 256, 512}) {
    for (int d : {13, 40}) {
      const voxfv::FvLayout with{k, d, true};
      CHECK(with.length() == (2 * d + 1) * k);
      const voxfv::FvLayout without{k, d, false};
      CHECK(without.length() == 2 * d * k);
      CHECK(without.mean_offset() == 0);
      CHECK(with.mean_offset() == k);
      CHECK(with.variance_offset() == k + k * d);
    }
  }
  CHECK(voxfv::FvLayout{512, 13, true}.length() == 13824);

  // the encoder honors the layout for a real model
  voxfv::Rng rng(32);
  voxfv::GmmModel big;
  big.weights = voxfv::Vec::Constant(512, 1.0 / 512.0);
  big.means.resize(512, 13);
  big.variances = voxfv::Mat::Ones(512, 13);
  for (int c = 0; c < 512; ++c) {
    for (int j = 0; j < 13; ++j) big.means(c, j) = rng.uniform(-1.0, 1.0);
  }
  voxfv::FrameMatrix x;
  x.data.resize(3, 13);
  for (int i = 0; i < x.data.size(); ++i) x.data.data()[i] = rng.gaussian();
  CHECK(voxfv::encode_fv(big, x).values.size() == 13824);
  CHECK(voxfv::encode_fv(big, x, false).values.size() == 2 * 13 * 512);
}

TEST_CASE("encoding is invariant to duplicating the frames") {
  voxfv::Rng rng(33);
  const voxfv::GmmModel model = random_model(3, 2, rng);
  voxfv::FrameMatrix x = frames_near_means(model, 5, rng);
  voxfv::FrameMatrix xx;
  xx.data.resize(10, 2);
  xx.data.topRows(5) = x.data;
  xx.data.bottomRows(5) = x.data;
  const voxfv::FisherVector a = voxfv::encode_fv(model, x);
  const voxfv::FisherVector b = voxfv::encode_fv(model, xx);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical components share responsibility and zero the weight block") {
  voxfv::GmmModel m;
  m.weights = voxfv::Vec::Constant(2, 0.5);
  m.means = voxfv::Mat::Zero(2, 2);
  m.variances = voxfv::Mat::Ones(2, 2);
  voxfv::FrameMatrix x;
  x.data.resize(4, 2);
  x.data << 0.3, -0.2, 1.0, 0.5, -0.7, 0.1, 0.2, 0.9;
  const voxfv::FisherVector fv = voxfv::encode_fv(m, x);
  CHECK(std::abs(fv.values[0]) < 1e-12);
  CHECK(std::abs(fv.values[1]) < 1e-12);
  // twin components produce twin mean blocks
  const voxfv::Vec m0 = fv.values.segment(fv.layout.mean_offset(), 2);
  const voxfv::Vec m1 = fv.values.segment(fv.layout.mean_offset() + 2, 2);
  CHECK((m0 - m1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode rejects empty or mismatched frames") {
  voxfv::Rng rng(34);
  const voxfv::GmmModel model = random_model(2, 2, rng);
  voxfv::FrameMatrix empty;
  empty.utterance_id = "empty_utt";
  empty.data.resize(0, 2);
  CHECK_THROWS_MATCHES(voxfv::encode_fv(model, empty), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("empty_utt")));
  voxfv::FrameMatrix wrong;
  wrong.data.resize(3, 5);
  CHECK_THROWS_AS(voxfv::encode_fv(model, wrong), voxfv::Error);
}

TEST_CASE("power normalization is odd, fixes zero, and tracks alpha") {
  voxfv::Rng rng(35);
  voxfv::FisherVector fv = random_raw_fv(2, 3, rng);
  fv.values[4] = 0.0;
  const voxfv::FisherVector pn = voxfv::power_normalize(fv);
  CHECK(pn.state == voxfv::FvState::kPowerNormalized);
  CHECK(pn.values[4] == 0.0);
  for (int i = 0; i < fv.values.size(); ++i) {
    const double z = fv.values[i];
    CHECK(pn.values[i] ==
          Catch::Approx(std::copysign(std::sqrt(std::abs(z)), z)).margin(1e-15));
  }

  voxfv::FisherVector neg = fv;
  neg.values = -fv.values;
  const voxfv::FisherVector pn_neg = voxfv::power_normalize(neg);
  CHECK((pn_neg.values + pn.values).cwiseAbs().maxCoeff() == 0.0);

  // alpha = 1 is the identity
  const voxfv::FisherVector id = voxfv::power_normalize(fv, 1.0);
  CHECK((id.values - fv.values).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(voxfv::power_normalize(fv, 0.0), voxfv::Error);
  CHECK_THROWS_AS(voxfv::power_normalize(fv, 1.5), voxfv::Error);
}

TEST_CASE("normalization states apply once and in order") {
  voxfv::Rng rng(36);
  const voxfv::FisherVector raw = random_raw_fv(2, 2, rng);
  CHECK_THROWS_MATCHES(voxfv::l2_normalize(raw), voxfv::Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("power-normalized")));
  const voxfv::FisherVector pn = voxfv::power_normalize(raw);
  CHECK_THROWS_AS(voxfv::power_normalize(pn), voxfv::Error);
  const voxfv::FisherVector done = voxfv::l2_normalize(pn);
  CHECK(done.state == voxfv::FvState::kPowerThenL2);
  CHECK_THROWS_AS(voxfv::l2_normalize(done), voxfv::Error);
}

TEST_CASE("a thousand random encodings come out unit length") {
  voxfv::Rng rng(37);
  for (int i = 0; i < 1000; ++i) {
    const voxfv::FisherVector raw = random_raw_fv(1 + static_cast<int>(rng.uniform_int(4)),
                                                  1 + static_cast<int>(rng.uniform_int(5)), rng);
    const voxfv::FisherVector out = voxfv::l2_normalize(voxfv::power_normalize(raw));
    REQUIRE(std::abs(out.values.norm() - 1.0) < 1e-9);
  }

  // the zero vector passes through rather than dividing by zero
  voxfv::FisherVector zero;
  zero.layout = voxfv::FvLayout{1, 1, true};
  zero.state = voxfv::FvState::kRaw;
  zero.values = voxfv::Vec::Zero(3);
  const voxfv::FisherVector out = voxfv::l2_normalize(voxfv::power_normalize(zero));
  CHECK(out.values.norm() == 0.0);
}

TEST_CASE("fisher kernel is the dot product of normalized encodings") {
  voxfv::Rng rng(38);
  const voxfv::GmmModel model = random_model(2, 2, rng);
  const voxfv::FrameMatrix xa = frames_near_means(model, 6, rng);
  const voxfv::FrameMatrix xb = frames_near_means(model, 4, rng);
  const voxfv::FisherVector a = voxfv::encode_fv_normalized(model, xa);
  const voxfv::FisherVector b = voxfv::encode_fv_normalized(model, xb);

  CHECK(voxfv::fisher_kernel(a, a) == Catch::Approx(1.0).margin(1e-12));
  const double k = voxfv::fisher_kernel(a, b);
  CHECK(k >= -1.0 - 1e-12);
  CHECK(k <= 1.0 + 1e-12);
  CHECK(k == Catch::Approx(a.values.dot(b.values)));

  const voxfv::FisherVector c = voxfv::encode_fv_normalized(model, xa, false);
  CHECK_THROWS_AS(voxfv::fisher_kernel(a, c), voxfv::Error);  // layouts differ
  const voxfv::FisherVector raw = voxfv::encode_fv(model, xa);
  CHECK_THROWS_AS(voxfv::fisher_kernel(raw, raw), voxfv::Error);
}
