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

#ifndef VOXFV_FRONTEND_HPP_
#define VOXFV_FRONTEND_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "voxfv/audio.hpp"
#include "voxfv/common.hpp"
#include "voxfv/dsp.hpp"
#include "voxfv/types.hpp"

namespace voxfv {

// Floor applied to filterbank energies before the log, and to per-frame
// energies before the log. Keeps all-zero input finite.
inline constexpr double kLogFloor = 1e-10;

struct FrontendConfig {
  double frame_len_ms = 25.0;
  double hop_ms = 3.0;
  int num_ceps = 13;
  int num_mel_bins = 23;
  double low_cutoff_hz = 20.0;
  // > 0: literal Hz; 0: Nyquist; -c: Nyquist - c.
  double high_cutoff_hz = 0.0;
  double pre_emphasis = 0.97;
  FeatureKind feature_kind = FeatureKind::kMfcc;
  int plp_order = 12;

  int frame_samples(int sample_rate) const {
    return static_cast<int>(std::lround(frame_len_ms * sample_rate / 1000.0));
  }
  int hop_samples(int sample_rate) const {
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  }
  double resolved_high_cutoff(int sample_rate) const {
    const double nyquist = sample_rate / 2.0;
    if (high_cutoff_hz > 0.0) return high_cutoff_hz;
    return nyquist + high_cutoff_hz;  // 0 maps to Nyquist, -c to Nyquist - c
  }

  void validate(int sample_rate) const {
    require(frame_len_ms > hop_ms && hop_ms > 0.0, ErrorKind::kConfig,
            "need frame_len_ms > hop_ms > 0");
    require(num_ceps > 0 && num_ceps <= num_mel_bins, ErrorKind::kConfig,
            "need 0 < num_ceps <= num_mel_bins");
    const double high = resolved_high_cutoff(sample_rate);
    require(low_cutoff_hz >= 0.0 && high > low_cutoff_hz, ErrorKind::kConfig,
            "need resolved high cutoff > low cutoff >= 0");
    require(high <= sample_rate / 2.0, ErrorKind::kConfig,
            "high cutoff exceeds Nyquist");
    require(pre_emphasis >= 0.0 && pre_emphasis < 1.0, ErrorKind::kConfig,
            "pre_emphasis must lie in [0, 1)");
    require(plp_order >= 1, ErrorKind::kConfig, "plp_order must be >= 1");
  }
};

inline FrontendConfig mfcc_config() { return FrontendConfig{}; }

inline FrontendConfig mfcc_hires_config() {
  FrontendConfig c;
  c.feature_kind = FeatureKind::kMfccHires;
  c.num_ceps = 40;
  c.num_mel_bins = 40;
  c.low_cutoff_hz = 20.0;
  c.high_cutoff_hz = -400.0;
  return c;
}

inline FrontendConfig plp_config() {
  FrontendConfig c;
  c.feature_kind = FeatureKind::kPlp;
  return c;
}

inline FrontendConfig config_for_kind(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMfcc: return mfcc_config();
    case FeatureKind::kMfccHires: return mfcc_hires_config();
    case FeatureKind::kPlp: return plp_config();
    default:
      throw_error(ErrorKind::kConfig, "no frontend config for this feature kind");
  }
}

inline int num_frames_for(int num_samples, int frame_samples, int hop_samples) {
  if (num_samples < frame_samples) return 0;
  return (num_samples - frame_samples) / hop_samples + 1;
}

namespace detail {

// Frames without pre-emphasis or windowing, one frame per row.
inline Mat raw_frames(const AudioSignal& signal, const FrontendConfig& config) {
  config.validate(signal.sample_rate);
  const int flen = config.frame_samples(signal.sample_rate);
  const int hop = config.hop_samples(signal.sample_rate);
  const int t = num_frames_for(static_cast<int>(signal.samples.size()), flen, hop);
  require(t >= 1, ErrorKind::kData,
          "signal shorter than one frame (" + std::to_string(signal.samples.size()) +
              " < " + std::to_string(flen) + " samples)");
  Mat frames(t, flen);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < flen; ++j) frames(i, j) = signal.samples[i * hop + j];
  }
  return frames;
}

inline std::vector<double> hamming_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (n - 1));
  }
  return w;
}

// In-frame pre-emphasis; the first sample is emphasized against itself.
inline void pre_emphasize(Mat& frames, double coeff) {
  if (coeff == 0.0) return;
  for (int i = 0; i < frames.rows(); ++i) {
    for (int j = static_cast<int>(frames.cols()) - 1; j > 0; --j) {
      frames(i, j) -= coeff * frames(i, j - 1);
    }
    frames(i, 0) -= coeff * frames(i, 0);
  }
}

}  // namespace detail

// Pre-emphasized, Hamming-windowed frames; frame count follows
// floor((num_samples - frame_samples) / hop_samples) + 1.
inline Mat frame_signal(const AudioSignal& signal, const FrontendConfig& config) {
  Mat frames = detail::raw_frames(signal, config);
  detail::pre_emphasize(frames, config.pre_emphasis);
  const std::vector<double> window = detail::hamming_window(static_cast<int>(frames.cols()));
  for (int i = 0; i < frames.rows(); ++i) {
    for (int j = 0; j < frames.cols(); ++j) frames(i, j) *= window[j];
  }
  return frames;
}

// Per-frame log energies on the PCM integer scale (samples x 32768),
// measured on raw frames. This is the quantity the VAD thresholds are
// calibrated against.
inline std::vector<double> frame_log_energies(const AudioSignal& signal,
                                              const FrontendConfig& config) {
  const Mat frames = detail::raw_frames(signal, config);
  std::vector<double> energies(frames.rows());
  for (int i = 0; i < frames.rows(); ++i) {
    double e = 0.0;
    for (int j = 0; j < frames.cols(); ++j) {
      const double s = frames(i, j) * 32768.0;
      e += s * s;
    }
    energies[i] = std::log(std::max(e, kLogFloor));
  }
  return energies;
}

// Triangular mel filterbank over FFT power bins.
class MelFilterbank {
 public:
  MelFilterbank(int num_bins, int nfft, int sample_rate, double low_hz, double high_hz)
      : num_bins_(num_bins), nfft_(nfft) {
    require(num_bins >= 1, ErrorKind::kConfig, "need at least one mel bin");
    require(high_hz > low_hz && low_hz >= 0.0, ErrorKind::kConfig,
            "mel filterbank needs high > low >= 0");
    require(high_hz <= sample_rate / 2.0, ErrorKind::kConfig,
            "mel filterbank high cutoff exceeds Nyquist");
    const double mel_low = hz_to_mel(low_hz);
    const double mel_high = hz_to_mel(high_hz);
    const double mel_step = (mel_high - mel_low) / (num_bins + 1);
    centers_hz_.resize(num_bins);
    weights_.assign(num_bins, std::vector<double>(nfft / 2 + 1, 0.0));
    for (int m = 0; m < num_bins; ++m) {
      const double left = mel_low + m * mel_step;
      const double center = mel_low + (m + 1) * mel_step;
      const double right = mel_low + (m + 2) * mel_step;
      centers_hz_[m] = mel_to_hz(center);
      for (int k = 0; k <= nfft / 2; ++k) {
        const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / nfft);
        double w = 0.0;
        if (mel > left && mel < right) {
          w = mel < center ? (mel - left) / (center - left)
                           : (right - mel) / (right - center);
        }
        weights_[m][k] = w;
      }
    }
  }

  int num_bins() const { return num_bins_; }
  int nfft() const { return nfft_; }
  double center_freq_hz(int m) const { return centers_hz_.at(m); }

  std::vector<double> apply(std::span<const double> power) const {
    require(static_cast<int>(power.size()) == nfft_ / 2 + 1, ErrorKind::kShape,
            "power spectrum size does not match filterbank");
    std::vector<double> out(num_bins_, 0.0);
    for (int m = 0; m < num_bins_; ++m) {
      out[m] = std::inner_product(weights_[m].begin(), weights_[m].end(), power.begin(), 0.0);
    }
    return out;
  }

  static double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
  static double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

 private:
  int num_bins_;
  int nfft_;
  std::vector<double> centers_hz_;
  std::vector<std::vector<double>> weights_;
};

// MFCC: power spectrum -> mel filterbank -> floored log -> DCT-II, keeping
// num_ceps coefficients (coefficient 0 carries the energy term). The hires
// configuration keeps all 40 cepstra.
inline FrameMatrix mfcc(const AudioSignal& signal, const FrontendConfig& config) {
  require(config.feature_kind == FeatureKind::kMfcc ||
              config.feature_kind == FeatureKind::kMfccHires,
          ErrorKind::kConfig, "mfcc() called with a non-MFCC feature kind");
  const Mat frames = frame_signal(signal, config);
  const int nfft = next_pow2(static_cast<int>(frames.cols()));
  const MelFilterbank bank(config.num_mel_bins, nfft, signal.sample_rate,
                           config.low_cutoff_hz,
                           config.resolved_high_cutoff(signal.sample_rate));
  const Mat dct = dct_matrix(config.num_ceps, config.num_mel_bins);

  FrameMatrix out;
  out.kind = config.feature_kind;
  out.data.resize(frames.rows(), config.num_ceps);
  std::vector<double> frame(frames.cols());
  for (int t = 0; t < frames.rows(); ++t) {
    for (int j = 0; j < frames.cols(); ++j) frame[j] = frames(t, j);
    const std::vector<double> power = power_spectrum(frame, nfft);
    std::vector<double> mel = bank.apply(power);
    Vec logmel(config.num_mel_bins);
    for (int m = 0; m < config.num_mel_bins; ++m) {
      logmel[m] = std::log(std::max(mel[m], kLogFloor));
    }
    out.data.row(t) = (dct * logmel).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// PLP
// ---------------------------------------------------------------------------

inline double hz_to_bark(double hz) {
  const double x = hz / 600.0;
  return 6.0 * std::log(x + std::sqrt(x * x + 1.0));
}

inline double bark_to_hz(double bark) { return 600.0 * std::sinh(bark / 6.0); }

// Critical-band integration with the standard trapezoidal masking curve:
// flat within +-0.5 Bark of the center, +10 dB/Bark rising skirt,
// -25 dB/Bark falling skirt.
class BarkFilterbank {
 public:
  BarkFilterbank(int nfft, int sample_rate, double low_hz, double high_hz)
      : nfft_(nfft) {
    require(high_hz > low_hz && low_hz >= 0.0, ErrorKind::kConfig,
            "bark filterbank needs high > low >= 0");
    const double min_bark = hz_to_bark(low_hz);
    const double bark_range = hz_to_bark(high_hz) - min_bark;
    num_bands_ = static_cast<int>(std::ceil(bark_range)) + 1;
    const double step = bark_range / (num_bands_ - 1);
    centers_hz_.resize(num_bands_);
    weights_.assign(num_bands_, std::vector<double>(nfft / 2 + 1, 0.0));
    for (int i = 0; i < num_bands_; ++i) {
      const double center = min_bark + i * step;
      centers_hz_[i] = bark_to_hz(center);
      for (int k = 0; k <= nfft / 2; ++k) {
        const double dz = hz_to_bark(static_cast<double>(k) * sample_rate / nfft) - center;
        const double expo = std::min(0.0, std::min(dz + 0.5, -2.5 * (dz - 0.5)));
        weights_[i][k] = std::pow(10.0, expo);
      }
    }
  }

  int num_bands() const { return num_bands_; }
  double center_freq_hz(int i) const { return centers_hz_.at(i); }

  std::vector<double> apply(std::span<const double> power) const {
    require(static_cast<int>(power.size()) == nfft_ / 2 + 1, ErrorKind::kShape,
            "power spectrum size does not match filterbank");
    std::vector<double> out(num_bands_, 0.0);
    for (int i = 0; i < num_bands_; ++i) {
      out[i] = std::inner_product(weights_[i].begin(), weights_[i].end(), power.begin(), 0.0);
    }
    return out;
  }

 private:
  int nfft_;
  int num_bands_ = 0;
  std::vector<double> centers_hz_;
  std::vector<std::vector<double>> weights_;
};

// Hermansky equal-loudness weight at frequency f (Hz form).
inline double equal_loudness(double hz) {
  const double fsq = hz * hz;
  const double t = fsq / (fsq + 1.6e5);
  return t * t * (fsq + 1.44e6) / (fsq + 9.61e6);
}

// Equal-loudness weighting, cube-root compression, and the usual edge-band
// fix (first and last bands copied from their neighbors).
inline std::vector<double> plp_auditory_postprocess(const BarkFilterbank& bank,
                                                    std::span<const double> bands) {
  require(static_cast<int>(bands.size()) == bank.num_bands(), ErrorKind::kShape,
          "band count mismatch");
  std::vector<double> out(bands.size());
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const double e = equal_loudness(bank.center_freq_hz(static_cast<int>(i)));
    out[i] = std::pow(std::max(bands[i] * e, kLogFloor), 1.0 / 3.0);
  }
  if (out.size() >= 3) {
    out.front() = out[1];
    out.back() = out[out.size() - 2];
  }
  return out;
}

// Autoregressive fit of the auditory spectrum and conversion to cepstra.
// Returns order+1 coefficients; c0 = log(prediction error).
inline std::vector<double> plp_cepstra_from_auditory(std::span<const double> auditory,
                                                     int order) {
  const int m = static_cast<int>(auditory.size());
  require(m >= 2, ErrorKind::kParam, "need at least two auditory bands");
  require(order < m, ErrorKind::kConfig,
          "plp order must be below the number of critical bands");
  // Inverse DFT of the symmetrically extended auditory spectrum gives the
  // autocorrelation of the implied signal.
  std::vector<double> autocorr(order + 1, 0.0);
  for (int k = 0; k <= order; ++k) {
    double acc = auditory[0] + (k % 2 == 0 ? 1.0 : -1.0) * auditory[m - 1];
    for (int j = 1; j < m - 1; ++j) {
      acc += 2.0 * auditory[j] * std::cos(M_PI * j * k / (m - 1));
    }
    autocorr[k] = acc / (2.0 * (m - 1));
  }
  const LevinsonResult lp = levinson_durbin(autocorr, order);
  std::vector<double> cep(order + 1, 0.0);
  cep[0] = std::log(lp.error);
  for (int n = 1; n <= order; ++n) {
    double acc = -lp.lpc[n - 1];
    for (int k = 1; k < n; ++k) acc -= k * cep[k] * lp.lpc[n - k - 1] / n;
    cep[n] = acc;
  }
  return cep;
}

// PLP cepstra, plp_order + 1 dimensions per frame.
inline FrameMatrix plp(const AudioSignal& signal, const FrontendConfig& config) {
  require(config.feature_kind == FeatureKind::kPlp, ErrorKind::kConfig,
          "plp() called with a non-PLP feature kind");
  const Mat frames = frame_signal(signal, config);
  const int nfft = next_pow2(static_cast<int>(frames.cols()));
  const BarkFilterbank bank(nfft, signal.sample_rate, config.low_cutoff_hz,
                            config.resolved_high_cutoff(signal.sample_rate));

  FrameMatrix out;
  out.kind = FeatureKind::kPlp;
  out.data.resize(frames.rows(), config.plp_order + 1);
  std::vector<double> frame(frames.cols());
  for (int t = 0; t < frames.rows(); ++t) {
    for (int j = 0; j < frames.cols(); ++j) frame[j] = frames(t, j);
    const std::vector<double> power = power_spectrum(frame, nfft);
    const std::vector<double> bands = bank.apply(power);
    const std::vector<double> auditory = plp_auditory_postprocess(bank, bands);
    std::vector<double> cep;
    try {
      cep = plp_cepstra_from_auditory(auditory, config.plp_order);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kConvergence) {
        throw_error(ErrorKind::kConvergence,
                    "degenerate frame " + std::to_string(t) + ": " + e.what());
      }
      throw;
    }
    for (int d = 0; d <= config.plp_order; ++d) out.data(t, d) = cep[d];
  }
  return out;
}

// ---------------------------------------------------------------------------
// VAD
// ---------------------------------------------------------------------------

struct VadConfig {
  bool enabled = true;
  double threshold_offset = 5.5;  // on PCM-scale log energy
  double mean_scale = 0.5;
};

// Frame t is speech iff log_energy(t) > offset + mean_scale * mean(log_energy).
inline VadMask energy_vad(std::span<const double> log_energies,
                          double threshold_offset = 5.5, double mean_scale = 0.5) {
  require(!log_energies.empty(), ErrorKind::kData, "energy_vad needs at least one frame");
  const double mean =
      std::accumulate(log_energies.begin(), log_energies.end(), 0.0) /
      static_cast<double>(log_energies.size());
  const double threshold = threshold_offset + mean_scale * mean;
  VadMask mask(log_energies.size());
  for (std::size_t t = 0; t < log_energies.size(); ++t) {
    mask[t] = log_energies[t] > threshold;
  }
  return mask;
}

// Keeps exactly the masked-true rows, order preserved. An all-false mask is
// an error: downstream encoders cannot consume an empty utterance.
inline FrameMatrix apply_vad(const FrameMatrix& frames, const VadMask& mask) {
  require(static_cast<int>(mask.size()) == frames.num_frames(), ErrorKind::kShape,
          "vad mask length does not match frame count");
  const int kept = static_cast<int>(std::count(mask.begin(), mask.end(), true));
  require(kept > 0, ErrorKind::kData,
          "vad removed every frame of utterance '" + frames.utterance_id + "'");
  FrameMatrix out;
  out.kind = frames.kind;
  out.utterance_id = frames.utterance_id;
  out.data.resize(kept, frames.dim());
  int r = 0;
  for (int t = 0; t < frames.num_frames(); ++t) {
    if (mask[t]) out.data.row(r++) = frames.data.row(t);
  }
  return out;
}

// Feature extraction as the pipeline runs it: cepstra by kind, then energy
// VAD computed from the same framing.
inline FrameMatrix extract_features(const AudioSignal& signal, const FrontendConfig& config,
                                    const VadConfig& vad = {},
                                    const std::string& utterance_id = "") {
  FrameMatrix feats = config.feature_kind == FeatureKind::kPlp ? plp(signal, config)
                                                               : mfcc(signal, config);
  feats.utterance_id = utterance_id;
  if (!vad.enabled) return feats;
  const std::vector<double> energies = frame_log_energies(signal, config);
  const VadMask mask = energy_vad(energies, vad.threshold_offset, vad.mean_scale);
  return apply_vad(feats, mask);
}

}  // namespace voxfv

#endif  // VOXFV_FRONTEND_HPP_
