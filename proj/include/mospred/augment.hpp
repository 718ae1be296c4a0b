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

#include <cmath>
#include <complex>
#include <vector>

#include "mospred/audio.hpp"
#include "mospred/common.hpp"
#include "mospred/fft.hpp"

namespace mospred {

// Label-preserving augmentation parameters. f_t is drawn from
// [1 - F_t, 1 + F_t], f_p (cents) from [-F_p, F_p].
struct AugmentConfig {
  double F_t = 0.1;
  double F_p = 300.0;
  bool enabled = true;
};

inline void validate(const AugmentConfig& cfg) {
  if (cfg.F_t < 0 || cfg.F_t >= 1)
    throw std::invalid_argument("augment config: F_t must be in [0, 1)");
  if (cfg.F_p < 0)
    throw std::invalid_argument("augment config: F_p must be >= 0");
}

constexpr int kVocoderWindow = 1024;
constexpr int kVocoderHop = 256;  // synthesis hop

namespace detail {

inline double wrap_phase(double x) {
  x = std::fmod(x + M_PI, 2.0 * M_PI);
  if (x < 0) x += 2.0 * M_PI;
  return x - M_PI;
}

// Phase-vocoder time stretch: output duration = input duration * stretch,
// pitch preserved. Hann analysis/synthesis windows, weighted overlap-add.
// The input is zero-padded by one window on each side so every real sample
// gets full overlap coverage; the pad maps to an output offset of
// round(window * stretch).
inline std::vector<float> time_stretch(const std::vector<float>& in,
                                       double stretch) {
  if (stretch <= 0) throw std::invalid_argument("time_stretch: factor <= 0");
  if (in.empty()) throw std::invalid_argument("time_stretch: empty input");

  const int N = kVocoderWindow;
  const int hs = kVocoderHop;
  const double ha = hs / stretch;  // analysis hop
  const size_t n_in = in.size();
  const size_t n_out =
      static_cast<size_t>(std::llround(static_cast<double>(n_in) * stretch));
  const size_t out_offset =
      static_cast<size_t>(std::llround(static_cast<double>(N) * stretch));

  std::vector<double> window(N);
  for (int i = 0; i < N; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / N);

  const size_t n_frames = (out_offset + n_out) / hs + 2;
  const size_t last_analysis =
      static_cast<size_t>(std::llround(static_cast<double>(n_frames - 1) * ha));
  std::vector<double> padded(std::max(last_analysis + N, N + n_in + N), 0.0);
  for (size_t i = 0; i < n_in; ++i) padded[N + i] = in[i];

  std::vector<double> out(n_frames * hs + N, 0.0);
  std::vector<double> wsum(out.size(), 0.0);

  std::vector<double> prev_phase(N / 2 + 1, 0.0);
  std::vector<double> synth_phase(N / 2 + 1, 0.0);
  long prev_pos = 0;

  std::vector<std::complex<double>> frame(N);
  for (size_t k = 0; k < n_frames; ++k) {
    const long pos = std::min(std::lround(static_cast<double>(k) * ha),
                              static_cast<long>(padded.size()) - N);
    for (int i = 0; i < N; ++i) frame[i] = {padded[pos + i] * window[i], 0.0};
    fft(frame);

    for (int b = 0; b <= N / 2; ++b) {
      const double mag = std::abs(frame[b]);
      const double phase = std::arg(frame[b]);
      if (k == 0) {
        synth_phase[b] = phase;
      } else {
        const double hop_actual = static_cast<double>(pos - prev_pos);
        const double omega = 2.0 * M_PI * b / N;
        const double dev = wrap_phase(phase - prev_phase[b] - omega * hop_actual);
        const double inst = omega + (hop_actual > 0 ? dev / hop_actual : 0.0);
        synth_phase[b] = wrap_phase(synth_phase[b] + inst * hs);
      }
      prev_phase[b] = phase;
      frame[b] = std::polar(mag, synth_phase[b]);
    }
    for (int b = N / 2 + 1; b < N; ++b) frame[b] = std::conj(frame[N - b]);

    fft(frame, /*inverse=*/true);
    const size_t spos = k * hs;
    for (int i = 0; i < N; ++i) {
      out[spos + i] += frame[i].real() * window[i];
      wsum[spos + i] += window[i] * window[i];
    }
    prev_pos = pos;
  }

  double wmax = 0.0;
  for (double w : wsum) wmax = std::max(wmax, w);
  const double floor = std::max(1e-6, 1e-3 * wmax);
  std::vector<float> result(n_out, 0.0f);
  for (size_t i = 0; i < n_out && out_offset + i < out.size(); ++i)
    result[i] =
        static_cast<float>(out[out_offset + i] / std::max(wsum[out_offset + i], floor));
  return result;
}

// Output k maps to input position k * factor (windowed-sinc interpolation),
// so frequencies scale by `factor` and length by 1/factor.
inline std::vector<float> resample_by_factor(const std::vector<float>& in,
                                             double factor) {
  if (factor <= 0) throw std::invalid_argument("resample_by_factor: factor <= 0");
  const size_t n_out =
      static_cast<size_t>(std::llround(static_cast<double>(in.size()) / factor));
  const double scale = std::min(1.0, 1.0 / factor);
  const int zero_crossings = 32;
  const double half_width = zero_crossings / scale;
  std::vector<float> out(n_out);
  const long n_in = static_cast<long>(in.size());
  for (size_t k = 0; k < n_out; ++k) {
    const double t = static_cast<double>(k) * factor;
    const long lo = static_cast<long>(std::ceil(t - half_width));
    const long hi = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long m = std::max(0L, lo); m <= std::min(n_in - 1, hi); ++m) {
      const double u = (t - m) * scale;
      const double sinc = (u == 0.0) ? 1.0 : std::sin(M_PI * u) / (M_PI * u);
      const double win = 0.5 * (1.0 + std::cos(M_PI * (t - m) / half_width));
      acc += in[m] * scale * sinc * win;
    }
    out[k] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace detail

// Speeds the audio up (f_t > 1) or slows it down (f_t < 1) without changing
// pitch. Output duration is input duration / f_t.
inline Waveform change_speed(const Waveform& w, double f_t) {
  if (f_t <= 0) throw std::invalid_argument("change_speed: f_t must be > 0");
  if (w.samples.empty())
    throw std::invalid_argument("change_speed: empty waveform");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = detail::time_stretch(w.samples, 1.0 / f_t);
  return out;
}

// Shifts pitch by f_p cents, preserving duration: time-stretch by
// 2^(f_p/1200) then resample back.
inline Waveform shift_pitch(const Waveform& w, double f_p_cents) {
  if (w.samples.empty())
    throw std::invalid_argument("shift_pitch: empty waveform");
  const double s = std::exp2(f_p_cents / 1200.0);
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (f_p_cents == 0.0) {
    out.samples = w.samples;
    return out;
  }
  const auto stretched = detail::time_stretch(w.samples, s);
  out.samples = detail::resample_by_factor(stretched, s);
  // Resampling rounding can leave the length off by a sample; pin it.
  out.samples.resize(w.samples.size(), 0.0f);
  return out;
}

// Uniform draws of (f_t, f_p) from the configured ranges.
inline std::pair<double, double> sample_augmentation(const AugmentConfig& cfg,
                                                     Rng& rng) {
  validate(cfg);
  const double f_t = rng.uniform(1.0 - cfg.F_t, 1.0 + cfg.F_t);
  const double f_p = rng.uniform(-cfg.F_p, cfg.F_p);
  return {f_t, f_p};
}

// Speed change followed by pitch shift with randomized parameters. The MOS
// label of the input carries over unchanged; that contract lives with the
// caller.
inline Waveform augment(const Waveform& w, const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled)
    throw std::invalid_argument("augment: called with disabled config");
  const auto [f_t, f_p] = sample_augmentation(cfg, rng);
  return shift_pitch(change_speed(w, f_t), f_p);
}

}  // namespace mospred
