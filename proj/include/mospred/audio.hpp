// Copyright 2026 The mospred Authors
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

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mospred/common.hpp"
#include "mospred/fft.hpp"

namespace mospred {

struct Waveform {
  std::vector<float> samples;  // mono
  int sample_rate = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

constexpr int kTargetSampleRate = 16000;
constexpr double kPeakTarget = 0.95;

// ---------------------------------------------------------------------------
// WAV I/O
//
// Reader accepts PCM 8/16/24/32-bit and IEEE float32, any rate, any channel
// count (channels are averaged down to mono). Writer emits 16-bit PCM.
// ---------------------------------------------------------------------------

namespace detail {

inline uint32_t read_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16le(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open audio file: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw UsageError("not a RIFF/WAVE file: " + path.string());

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* tag = reinterpret_cast<const char*>(buf.data() + pos);
    uint32_t len = detail::read_u32le(buf.data() + pos + 4);
    size_t body = pos + 8;
    if (std::memcmp(tag, "fmt ", 4) == 0 && body + 16 <= buf.size()) {
      format = detail::read_u16le(buf.data() + body);
      channels = detail::read_u16le(buf.data() + body + 2);
      rate = detail::read_u32le(buf.data() + body + 4);
      bits = detail::read_u16le(buf.data() + body + 14);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<size_t>(len, buf.size() - body);
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (rate == 0 || channels == 0 || data_off == 0)
    throw UsageError("missing fmt/data chunk in WAV: " + path.string());
  const bool is_float = (format == 3);
  if (format != 1 && !is_float)
    throw UsageError("unsupported WAV format tag " + std::to_string(format) +
                     " in " + path.string());

  const size_t bytes_per = bits / 8;
  if (bytes_per == 0 || (is_float && bits != 32) ||
      (!is_float && bits != 8 && bits != 16 && bits != 24 && bits != 32))
    throw UsageError("unsupported WAV bit depth " + std::to_string(bits) +
                     " in " + path.string());

  const size_t n_frames = data_len / (bytes_per * channels);
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n_frames);
  const unsigned char* d = buf.data() + data_off;
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = d + (i * channels + c) * bytes_per;
      double v = 0.0;
      if (is_float) {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        int16_t s = static_cast<int16_t>(p[0] | (p[1] << 8));
        v = s / 32768.0;
      } else if (bits == 24) {
        int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = s / 8388608.0;
      } else {  // 32-bit int
        int32_t s;
        std::memcpy(&s, p, 4);
        v = s / 2147483648.0;
      }
      acc += v;
    }
    w.samples[i] = static_cast<float>(acc / channels);
  }
  return w;
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write audio file: " + path.string());
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_len = n * 2;
  const uint32_t rate = static_cast<uint32_t>(w.sample_rate);
  const uint32_t byte_rate = rate * 2;

  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 2);
  };

  out.write("RIFF", 4);
  put_u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(rate);
  put_u32(byte_rate);
  put_u16(2);   // block align
  put_u16(16);  // bits
  out.write("data", 4);
  put_u32(data_len);
  for (float s : w.samples) {
    const long q = std::lrint(static_cast<double>(s) * 32768.0);
    const int16_t clamped =
        static_cast<int16_t>(std::max(-32768L, std::min(32767L, q)));
    put_u16(static_cast<uint16_t>(clamped));
  }
  if (!out) throw UsageError("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// Resampling: windowed-sinc interpolation with a Hann window.
// Output length is round(n_in * to_rate / from_rate).
// ---------------------------------------------------------------------------

inline std::vector<float> resample_samples(const std::vector<float>& in,
                                           int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0)
    throw std::invalid_argument("resample: rates must be positive");
  if (from_rate == to_rate || in.empty()) return in;

  const double ratio = static_cast<double>(to_rate) / from_rate;
  const size_t n_out =
      static_cast<size_t>(std::llround(static_cast<double>(in.size()) * ratio));
  // When downsampling, the kernel is stretched so its cutoff sits at the
  // output Nyquist.
  const double scale = std::min(1.0, ratio);
  const int zero_crossings = 32;
  const double half_width = zero_crossings / scale;

  std::vector<float> out(n_out);
  const auto n_in = static_cast<long>(in.size());
  for (size_t k = 0; k < n_out; ++k) {
    const double t = static_cast<double>(k) / ratio;
    const long lo = static_cast<long>(std::ceil(t - half_width));
    const long hi = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long m = std::max(0L, lo); m <= std::min(n_in - 1, hi); ++m) {
      const double u = (t - m) * scale;
      double sinc = (u == 0.0) ? 1.0 : std::sin(M_PI * u) / (M_PI * u);
      const double frac = (t - m) / half_width;  // in [-1, 1]
      const double win = 0.5 * (1.0 + std::cos(M_PI * frac));
      acc += in[m] * scale * sinc * win;
    }
    out[k] = static_cast<float>(acc);
  }
  return out;
}

inline Waveform resample(const Waveform& w, int to_rate) {
  Waveform out;
  out.sample_rate = to_rate;
  out.samples = resample_samples(w.samples, w.sample_rate, to_rate);
  return out;
}

// Scales the waveform so the peak absolute amplitude equals `target`.
// A silent input has no defined normalization and is rejected.
inline void peak_normalize(std::vector<float>& samples, double target = kPeakTarget) {
  float peak = 0.0f;
  for (float s : samples) peak = std::max(peak, std::abs(s));
  if (samples.empty() || peak <= 0.0f)
    throw UsageError("peak_normalize: silent or empty audio");
  const float g = static_cast<float>(target) / peak;
  for (float& s : samples) s *= g;
}

// ---------------------------------------------------------------------------
// Spectral peak estimation (Hann window + zero-padded FFT + parabolic
// interpolation). Used to verify frequency contracts of DSP transforms.
// ---------------------------------------------------------------------------

inline double dominant_frequency_hz(const std::vector<float>& samples,
                                    int sample_rate) {
  if (samples.size() < 16)
    throw std::invalid_argument("dominant_frequency_hz: signal too short");
  const size_t n = samples.size();
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) {
    const double win =
        0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(n - 1));
    x[i] = samples[i] * win;
  }
  const size_t nfft = next_pow2(n) * 4;
  auto spec = rfft(x, nfft);
  size_t best = 1;
  double best_mag = 0.0;
  for (size_t k = 1; k + 1 < nfft / 2; ++k) {
    const double m = std::abs(spec[k]);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  // Parabolic refinement on log magnitudes.
  const double m0 = std::log(std::abs(spec[best - 1]) + 1e-30);
  const double m1 = std::log(std::abs(spec[best]) + 1e-30);
  const double m2 = std::log(std::abs(spec[best + 1]) + 1e-30);
  const double denom = m0 - 2.0 * m1 + m2;
  const double delta = (denom == 0.0) ? 0.0 : 0.5 * (m0 - m2) / denom;
  return (static_cast<double>(best) + delta) * sample_rate /
         static_cast<double>(nfft);
}

}  // namespace mospred
