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

#ifndef VOXFV_AUDIO_HPP_
#define VOXFV_AUDIO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "voxfv/common.hpp"

namespace voxfv {

// Mono waveform, samples in [-1, 1].
struct AudioSignal {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace detail {

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace detail

// Reads a RIFF/WAVE file. Only PCM16 mono is accepted; anything else is
// reported, never silently downmixed. Samples are scaled by 1/32768.
inline AudioSignal read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kFormat, "cannot open wav file '" + path + "'");

  char tag[4];
  in.read(tag, 4);
  require(in.good() && std::memcmp(tag, "RIFF", 4) == 0, ErrorKind::kFormat,
          "'" + path + "' is not a RIFF file");
  detail::read_u32(in);  // riff chunk size, unused
  in.read(tag, 4);
  require(in.good() && std::memcmp(tag, "WAVE", 4) == 0, ErrorKind::kFormat,
          "'" + path + "' is not a WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  AudioSignal signal;

  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = detail::read_u32(in);
    require(in.good(), ErrorKind::kFormat, "truncated chunk header in '" + path + "'");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      require(chunk_size >= 16, ErrorKind::kFormat, "fmt chunk too small in '" + path + "'");
      format = detail::read_u16(in);
      channels = detail::read_u16(in);
      sample_rate = detail::read_u32(in);
      detail::read_u32(in);  // byte rate
      detail::read_u16(in);  // block align
      bits = detail::read_u16(in);
      in.ignore(chunk_size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      require(have_fmt, ErrorKind::kFormat, "data chunk before fmt in '" + path + "'");
      require(format == 1 && bits == 16, ErrorKind::kFormat,
              "'" + path + "' is not PCM16 (unsupported format)");
      require(channels == 1, ErrorKind::kFormat,
              "'" + path + "' has " + std::to_string(channels) +
                  " channels; only mono is supported");
      const std::size_t n = chunk_size / 2;
      std::vector<char> raw(chunk_size);
      in.read(raw.data(), chunk_size);
      require(in.gcount() == static_cast<std::streamsize>(chunk_size), ErrorKind::kFormat,
              "truncated data chunk in '" + path + "'");
      signal.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t v = static_cast<std::int16_t>(
            static_cast<unsigned char>(raw[2 * i]) |
            (static_cast<unsigned char>(raw[2 * i + 1]) << 8));
        signal.samples[i] = static_cast<double>(v) / 32768.0;
      }
      signal.sample_rate = static_cast<int>(sample_rate);
      require(signal.sample_rate > 0, ErrorKind::kFormat,
              "invalid sample rate in '" + path + "'");
      return signal;
    } else {
      // skip unknown chunk (word-aligned)
      in.ignore(chunk_size + (chunk_size & 1));
    }
  }
  throw_error(ErrorKind::kFormat, "no data chunk found in '" + path + "'");
}

// Writes PCM16 mono. Values are clipped to [-1, 32767/32768].
inline void write_wav(const std::string& path, const AudioSignal& signal) {
  require(signal.sample_rate > 0, ErrorKind::kParam, "sample rate must be positive");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kFormat, "cannot open '" + path + "' for writing");

  const std::uint32_t data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
  out.write("RIFF", 4);
  detail::write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::write_u32(out, 16);
  detail::write_u16(out, 1);  // PCM
  detail::write_u16(out, 1);  // mono
  detail::write_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
  detail::write_u32(out, static_cast<std::uint32_t>(signal.sample_rate * 2));
  detail::write_u16(out, 2);
  detail::write_u16(out, 16);
  out.write("data", 4);
  detail::write_u32(out, data_bytes);
  for (double s : signal.samples) {
    double v = std::round(s * 32768.0);
    v = std::clamp(v, -32768.0, 32767.0);
    detail::write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  require(out.good(), ErrorKind::kInternal, "failed writing '" + path + "'");
}

}  // namespace voxfv

#endif  // VOXFV_AUDIO_HPP_
