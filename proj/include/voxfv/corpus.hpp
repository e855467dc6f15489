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

#ifndef VOXFV_CORPUS_HPP_
#define VOXFV_CORPUS_HPP_

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "voxfv/audio.hpp"
#include "voxfv/common.hpp"
#include "voxfv/dsp.hpp"
#include "voxfv/io.hpp"
#include "voxfv/rng.hpp"

namespace voxfv {

inline const std::string kLabelMask = "mask";
inline const std::string kLabelNoMask = "no-mask";

struct CorpusSpec {
  int num_speakers = 8;
  int utterances_per_speaker_per_class = 10;
  double duration_s = 1.0;
  int sample_rate = 16000;
  // the mask class attenuates everything above the cutoff by this many dB
  double lowpass_cutoff_hz = 2000.0;
  double hf_attenuation_db = 12.0;
  double noise_floor = 0.01;  // white-noise amplitude relative to full scale
  std::uint64_t seed = 0;

  void validate() const {
    require(num_speakers >= 4, ErrorKind::kParam,
            "need at least 4 speakers to populate all splits");
    require(utterances_per_speaker_per_class > 0, ErrorKind::kParam,
            "utterance count must be positive");
    require(duration_s > 0.0, ErrorKind::kParam, "duration must be positive");
    require(sample_rate > 0, ErrorKind::kParam, "sample rate must be positive");
    require(lowpass_cutoff_hz > 0.0 && lowpass_cutoff_hz < 0.5 * sample_rate,
            ErrorKind::kParam, "cutoff must lie below the Nyquist frequency");
    require(hf_attenuation_db > 0.0, ErrorKind::kParam,
            "attenuation must be positive");
    require(noise_floor >= 0.0, ErrorKind::kParam, "noise floor must be >= 0");
  }
};

inline CorpusSpec corpus_spec_from_json(const Json& j) {
  CorpusSpec s;
  s.num_speakers = j.value("num_speakers", s.num_speakers);
  s.utterances_per_speaker_per_class =
      j.value("utterances_per_speaker_per_class", s.utterances_per_speaker_per_class);
  s.duration_s = j.value("duration_s", s.duration_s);
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  s.lowpass_cutoff_hz = j.value("lowpass_cutoff_hz", s.lowpass_cutoff_hz);
  s.hf_attenuation_db = j.value("hf_attenuation_db", s.hf_attenuation_db);
  s.noise_floor = j.value("noise_floor", s.noise_floor);
  s.seed = j.value("seed", s.seed);
  return s;
}

namespace detail {

// Three resonance bumps plus a gentle downward tilt shape the harmonic
// amplitudes; parameters vary per speaker.
struct VoiceProfile {
  double f0 = 0.0;
  double formant_hz[3] = {0.0, 0.0, 0.0};
  double formant_bw[3] = {90.0, 140.0, 220.0};
  double formant_gain[3] = {1.0, 0.7, 0.45};

  double envelope(double freq_hz) const {
    double amp = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double d = (freq_hz - formant_hz[j]) / formant_bw[j];
      amp += formant_gain[j] / (1.0 + d * d);
    }
    return amp / (1.0 + freq_hz / 3000.0);
  }
};

// Fundamentals are spread evenly over ~100..240 Hz with a small jitter so
// speakers stay distinct at any count.
inline VoiceProfile make_voice(const CorpusSpec& spec, int speaker) {
  Rng rng(mix_seed(spec.seed, 0x766f696365ULL, static_cast<std::uint64_t>(speaker)));
  VoiceProfile v;
  const double spread =
      spec.num_speakers > 1
          ? static_cast<double>(speaker) / static_cast<double>(spec.num_speakers - 1)
          : 0.5;
  v.f0 = 100.0 + 140.0 * spread + rng.uniform(-4.0, 4.0);
  v.formant_hz[0] = rng.uniform(320.0, 760.0);
  v.formant_hz[1] = rng.uniform(1050.0, 2100.0);
  v.formant_hz[2] = rng.uniform(2350.0, 3300.0);
  return v;
}

// Harmonic-plus-noise rendering with vibrato and a syllable-rate amplitude
// wobble; phases accumulate per harmonic so pitch drift stays continuous.
inline AudioSignal render_utterance(const CorpusSpec& spec, const VoiceProfile& voice,
                                    int speaker, int utterance) {
  Rng rng(mix_seed(spec.seed, 0x757474ULL,
                   static_cast<std::uint64_t>(speaker) * 100003ULL +
                       static_cast<std::uint64_t>(utterance)));
  const int fs = spec.sample_rate;
  const int n = static_cast<int>(std::lround(spec.duration_s * fs));
  const double f0 = voice.f0 * (1.0 + rng.uniform(-0.02, 0.02));
  const double vib_rate = rng.uniform(3.0, 6.0);
  const double vib_depth = rng.uniform(0.005, 0.02);
  const double vib_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double syl_rate = rng.uniform(2.0, 5.0);
  const double syl_phase = rng.uniform(0.0, 2.0 * M_PI);

  const int num_harmonics = static_cast<int>(std::floor(7600.0 / f0));
  std::vector<double> amp(num_harmonics), phase(num_harmonics);
  for (int h = 0; h < num_harmonics; ++h) {
    amp[h] = voice.envelope((h + 1) * f0);
    phase[h] = rng.uniform(0.0, 2.0 * M_PI);
  }

  AudioSignal sig;
  sig.sample_rate = fs;
  sig.samples.resize(n);
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double inst_f0 =
        f0 * (1.0 + vib_depth * std::sin(2.0 * M_PI * vib_rate * t + vib_phase));
    double s = 0.0;
    for (int h = 0; h < num_harmonics; ++h) {
      s += amp[h] * std::sin(phase[h]);
      phase[h] += 2.0 * M_PI * (h + 1) * inst_f0 / fs;
    }
    const double env = 0.55 + 0.45 * std::sin(2.0 * M_PI * syl_rate * t + syl_phase);
    sig.samples[i] = env * s + spec.noise_floor * rng.gaussian();
    peak = std::max(peak, std::abs(sig.samples[i]));
  }
  if (peak > 0.0) {
    const double gain = 0.3 / peak;
    for (double& s : sig.samples) s *= gain;
  }
  return sig;
}

// Linear-phase windowed-sinc low pass, unity DC gain, applied with the
// group delay compensated so the output aligns with the input.
inline std::vector<double> fir_lowpass_same(const std::vector<double>& x,
                                            double cutoff_hz, int sample_rate,
                                            int num_taps = 101) {
  const int m = num_taps - 1;
  const double fc = cutoff_hz / sample_rate;
  std::vector<double> h(num_taps);
  double sum = 0.0;
  for (int i = 0; i < num_taps; ++i) {
    const double k = i - m / 2.0;
    const double sinc =
        k == 0.0 ? 2.0 * fc : std::sin(2.0 * M_PI * fc * k) / (M_PI * k);
    const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / m);
    h[i] = sinc * w;
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  const std::vector<double> full = convolve(x, h);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = full[i + m / 2];
  return out;
}

}  // namespace detail

// Mask-class effect: keep the band below the cutoff, attenuate everything
// above it by the configured dB amount.
inline AudioSignal apply_mask_effect(const AudioSignal& clean, const CorpusSpec& spec) {
  const std::vector<double> lp =
      detail::fir_lowpass_same(clean.samples, spec.lowpass_cutoff_hz, clean.sample_rate);
  const double gain = std::pow(10.0, -spec.hf_attenuation_db / 20.0);
  AudioSignal out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    out.samples[i] = lp[i] + gain * (clean.samples[i] - lp[i]);
  }
  return out;
}

// Speakers sorted by index fill train, then devel, then test; no speaker
// crosses splits.
inline std::string split_for_speaker(int speaker, int num_speakers) {
  const int train = (num_speakers + 1) / 2;
  const int devel = (num_speakers - train + 1) / 2;
  if (speaker < train) return "train";
  if (speaker < train + devel) return "devel";
  return "test";
}

struct CorpusOutput {
  Manifest classes;   // labels mask / no-mask
  Manifest speakers;  // labels spk00..spkNN, same rows otherwise
};

// Writes wav/<id>.wav plus manifest.csv and speakers.csv under corpus_dir.
// Mask utterances are filtered twins of their no-mask counterparts.
// Deterministic per seed, including the emitted bytes.
inline CorpusOutput synth_corpus(const std::filesystem::path& corpus_dir,
                                 const CorpusSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(corpus_dir / "wav");

  CorpusOutput out;
  char buf[64];
  for (int s = 0; s < spec.num_speakers; ++s) {
    const detail::VoiceProfile voice = detail::make_voice(spec, s);
    const std::string split = split_for_speaker(s, spec.num_speakers);
    std::snprintf(buf, sizeof(buf), "spk%02d", s);
    const std::string speaker_id = buf;
    for (int u = 0; u < spec.utterances_per_speaker_per_class; ++u) {
      const AudioSignal clean = detail::render_utterance(spec, voice, s, u);
      const AudioSignal masked = apply_mask_effect(clean, spec);
      for (int cls = 0; cls < 2; ++cls) {
        const bool is_mask = cls == 1;
        std::snprintf(buf, sizeof(buf), "%s_u%02d_%s", speaker_id.c_str(), u,
                      is_mask ? "mask" : "nomask");
        const std::string id = buf;
        const std::string rel_path = "wav/" + id + ".wav";
        write_wav((corpus_dir / rel_path).string(), is_mask ? masked : clean);
        ManifestRecord rec;
        rec.id = id;
        rec.path = rel_path;  // relative to the manifest location
        rec.label = is_mask ? kLabelMask : kLabelNoMask;
        rec.split = split;
        out.classes.records.push_back(rec);
        rec.label = speaker_id;
        out.speakers.records.push_back(rec);
      }
    }
  }
  write_manifest((corpus_dir / "manifest.csv").string(), out.classes);
  write_manifest((corpus_dir / "speakers.csv").string(), out.speakers);
  return out;
}

}  // namespace voxfv

#endif  // VOXFV_CORPUS_HPP_
