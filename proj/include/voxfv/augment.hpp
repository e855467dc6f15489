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

#ifndef VOXFV_AUGMENT_HPP_
#define VOXFV_AUGMENT_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "voxfv/audio.hpp"
#include "voxfv/common.hpp"
#include "voxfv/dsp.hpp"
#include "voxfv/rng.hpp"

namespace voxfv {

enum class AugmentKind { kBabble, kMusic, kNoise, kReverb };

inline const char* augment_kind_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::kBabble: return "babble";
    case AugmentKind::kMusic: return "music";
    case AugmentKind::kNoise: return "noise";
    case AugmentKind::kReverb: return "reverb";
  }
  return "unknown";
}

inline AugmentKind augment_kind_from_name(const std::string& name) {
  if (name == "babble") return AugmentKind::kBabble;
  if (name == "music") return AugmentKind::kMusic;
  if (name == "noise") return AugmentKind::kNoise;
  if (name == "reverb") return AugmentKind::kReverb;
  throw_error(ErrorKind::kParam, "unknown augmentation kind '" + name + "'");
}

struct AugmentParams {
  double snr_db = 10.0;       // additive kinds; must lie in [0, 30]
  double decay_time_s = 0.3;  // reverb: time to decay by 60 dB
};

namespace detail {

inline double mean_power(const std::vector<double>& samples) {
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

// A slowly amplitude-modulated harmonic series; the shared shape of the
// babble voices and music tones.
inline void add_modulated_harmonics(std::vector<double>& out, int sample_rate,
                                    double fundamental, int num_harmonics,
                                    double band_limit_hz, double mod_rate_hz,
                                    double mod_phase, double gain, Rng& rng) {
  for (int h = 1; h <= num_harmonics; ++h) {
    const double freq = fundamental * h;
    if (freq > band_limit_hz) break;
    const double amp = gain / h;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double mod = 0.55 + 0.45 * std::sin(2.0 * M_PI * mod_rate_hz * t + mod_phase);
      out[i] += amp * mod * std::sin(2.0 * M_PI * freq * t + phase);
    }
  }
}

inline std::vector<double> make_babble_bed(std::size_t n, int sample_rate, Rng& rng) {
  std::vector<double> bed(n, 0.0);
  const int voices = 6;
  for (int v = 0; v < voices; ++v) {
    const double f0 = rng.uniform(90.0, 280.0);
    const double mod_rate = rng.uniform(2.0, 6.0);  // syllabic-rate envelope
    add_modulated_harmonics(bed, sample_rate, f0, 24, 3800.0, mod_rate,
                            rng.uniform(0.0, 2.0 * M_PI), 1.0, rng);
  }
  return bed;
}

inline std::vector<double> make_music_bed(std::size_t n, int sample_rate, Rng& rng) {
  std::vector<double> bed(n, 0.0);
  const int tones = 5;
  for (int v = 0; v < tones; ++v) {
    // semitone grid between A2 and A6
    const int semitone = static_cast<int>(rng.uniform_int(49));
    const double f0 = 110.0 * std::pow(2.0, semitone / 12.0);
    const double mod_rate = rng.uniform(0.3, 2.0);
    add_modulated_harmonics(bed, sample_rate, f0, 8, 6000.0, mod_rate,
                            rng.uniform(0.0, 2.0 * M_PI), 1.0, rng);
  }
  return bed;
}

inline std::vector<double> make_white_bed(std::size_t n, Rng& rng) {
  std::vector<double> bed(n);
  for (double& s : bed) s = rng.gaussian();
  return bed;
}

}  // namespace detail

// Synthetic room impulse response: unit direct path followed by a noise
// tail whose envelope decays by 60 dB over decay_time_s.
inline std::vector<double> make_reverb_ir(int sample_rate, double decay_time_s,
                                          std::uint64_t seed) {
  require(decay_time_s > 0.0, ErrorKind::kParam, "reverb decay time must be > 0");
  Rng rng(seed);
  const int len = std::max(2, static_cast<int>(std::lround(decay_time_s * sample_rate)));
  const double rate = 6.9077552789821368 / (decay_time_s * sample_rate);  // ln(1e3)
  std::vector<double> ir(len);
  ir[0] = 1.0;
  for (int i = 1; i < len; ++i) {
    ir[i] = 0.5 * rng.gaussian() * std::exp(-rate * i);
  }
  return ir;
}

// Mixes a generated noise bed at the requested SNR (measured over the whole
// signal), or convolves with a synthetic impulse response for reverb. The
// output is renormalized so its peak stays at or below 1. Deterministic
// given (kind, params, seed).
inline AudioSignal augment(const AudioSignal& signal, AugmentKind kind,
                           const AugmentParams& params, std::uint64_t seed) {
  AudioSignal out;
  out.sample_rate = signal.sample_rate;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(kind)));

  if (kind == AugmentKind::kReverb) {
    const std::vector<double> ir = make_reverb_ir(signal.sample_rate, params.decay_time_s,
                                                  mix_seed(seed, 0x72657662ULL));
    std::vector<double> wet = convolve(signal.samples, ir);
    wet.resize(signal.samples.size());  // keep the original length
    out.samples = std::move(wet);
  } else {
    require(params.snr_db >= 0.0 && params.snr_db <= 30.0, ErrorKind::kParam,
            "snr must lie in [0, 30] dB");
    std::vector<double> bed;
    switch (kind) {
      case AugmentKind::kBabble:
        bed = detail::make_babble_bed(signal.samples.size(), signal.sample_rate, rng);
        break;
      case AugmentKind::kMusic:
        bed = detail::make_music_bed(signal.samples.size(), signal.sample_rate, rng);
        break;
      default:
        bed = detail::make_white_bed(signal.samples.size(), rng);
        break;
    }
    const double signal_power = detail::mean_power(signal.samples);
    const double bed_power = detail::mean_power(bed);
    double scale = 0.0;
    if (signal_power > 0.0 && bed_power > 0.0) {
      scale = std::sqrt(signal_power / (bed_power * std::pow(10.0, params.snr_db / 10.0)));
    }
    out.samples.resize(signal.samples.size());
    for (std::size_t i = 0; i < signal.samples.size(); ++i) {
      out.samples[i] = signal.samples[i] + scale * bed[i];
    }
  }

  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0) {
    for (double& s : out.samples) s /= peak;
  }
  return out;
}

}  // namespace voxfv

#endif  // VOXFV_AUGMENT_HPP_
