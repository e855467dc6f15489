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

#ifndef VOXFV_DSP_HPP_
#define VOXFV_DSP_HPP_

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "voxfv/common.hpp"
#include "voxfv/types.hpp"

namespace voxfv {

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT. Size must be a power of two.
// inverse=true gives the unscaled inverse transform (divide by n yourself).
inline void fft(std::vector<std::complex<double>>& a, bool inverse = false) {
  const std::size_t n = a.size();
  require(n > 0 && (n & (n - 1)) == 0, ErrorKind::kParam, "fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Power spectrum |X_k|^2 for k = 0..nfft/2, from a real frame zero-padded
// to nfft samples.
inline std::vector<double> power_spectrum(std::span<const double> frame, int nfft) {
  require(static_cast<int>(frame.size()) <= nfft, ErrorKind::kParam,
          "frame longer than fft size");
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(nfft));
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i];
  fft(buf);
  std::vector<double> power(static_cast<std::size_t>(nfft / 2 + 1));
  for (int k = 0; k <= nfft / 2; ++k) power[k] = std::norm(buf[k]);
  return power;
}

// Orthonormal DCT-II matrix (rows_out x cols_in): row k, column m holds
// s_k cos(pi k (2m+1) / (2M)) with s_0 = sqrt(1/M), s_k = sqrt(2/M).
// When square, D D^T = I.
inline Mat dct_matrix(int rows_out, int cols_in) {
  require(rows_out > 0 && cols_in > 0 && rows_out <= cols_in, ErrorKind::kParam,
          "dct matrix needs 0 < rows_out <= cols_in");
  Mat d(rows_out, cols_in);
  const double m = static_cast<double>(cols_in);
  for (int k = 0; k < rows_out; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / m);
    for (int j = 0; j < cols_in; ++j) {
      d(k, j) = scale * std::cos(M_PI * k * (2 * j + 1) / (2.0 * m));
    }
  }
  return d;
}

struct LevinsonResult {
  std::vector<double> lpc;         // a_1..a_p of A(z) = 1 + sum a_k z^-k
  std::vector<double> reflection;  // k_1..k_p
  double error = 0.0;              // final prediction error
};

// Levinson-Durbin recursion on autocorrelation r[0..order].
inline LevinsonResult levinson_durbin(std::span<const double> autocorr, int order) {
  require(static_cast<int>(autocorr.size()) >= order + 1, ErrorKind::kParam,
          "need order+1 autocorrelation lags");
  require(autocorr[0] > 0.0, ErrorKind::kConvergence,
          "autocorrelation is singular (zero energy)");
  LevinsonResult res;
  res.lpc.assign(static_cast<std::size_t>(order), 0.0);
  res.reflection.assign(static_cast<std::size_t>(order), 0.0);
  res.error = autocorr[0];
  std::vector<double> prev(static_cast<std::size_t>(order), 0.0);
  for (int i = 0; i < order; ++i) {
    double acc = autocorr[i + 1];
    for (int j = 0; j < i; ++j) acc += res.lpc[j] * autocorr[i - j];
    const double k = -acc / res.error;
    res.reflection[i] = k;
    prev = res.lpc;
    res.lpc[i] = k;
    for (int j = 0; j < i; ++j) res.lpc[j] = prev[j] + k * prev[i - 1 - j];
    res.error *= (1.0 - k * k);
    require(res.error > 0.0, ErrorKind::kConvergence,
            "autocorrelation is numerically singular at stage " + std::to_string(i + 1));
  }
  return res;
}

// Full linear convolution via FFT. Output length is a.size()+b.size()-1.
inline std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::kParam, "convolve needs nonempty inputs");
  const std::size_t out_len = a.size() + b.size() - 1;
  const int nfft = next_pow2(static_cast<int>(out_len));
  std::vector<std::complex<double>> fa(nfft), fb(nfft);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
  fft(fa);
  fft(fb);
  for (int i = 0; i < nfft; ++i) fa[i] *= fb[i];
  fft(fa, /*inverse=*/true);
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real() / nfft;
  return out;
}

}  // namespace voxfv

#endif  // VOXFV_DSP_HPP_
