// Copyright 2026 The patchasd Authors.
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
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "patchasd/dsp.hpp"
#include "patchasd/wav.hpp"
#include "test_util.hpp"

using namespace patchasd;

namespace {

Waveform sine(double freq, double amp, std::size_t n, double sr = 16000.0) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / sr);
  return w;
}

// Plain O(N^2) DFT of one Hann-windowed, zero-padded frame.
std::vector<std::complex<double>> direct_dft(const std::vector<double>& x, std::size_t start,
                                             std::size_t win, std::size_t n_fft) {
  std::vector<std::complex<double>> out(n_fft / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < win; ++n) {
      const double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * double(n) / double(win)));
      const double ang = -2.0 * std::numbers::pi * double(k) * double(n) / double(n_fft);
      acc += x[start + n] * hann * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

double htk_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double htk_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

TEST_CASE("stft of silence is zero") {
  Waveform w;
  w.samples.assign(4000, 0.0);
  const auto s = stft(w, 400, 160, 512);
  for (const auto& c : s.data) CHECK(c == std::complex<double>(0.0, 0.0));
}

TEST_CASE("stft of a bin-centred sinusoid matches the direct DFT") {
  const std::size_t n_fft = 512, win = 400, hop = 160, k0 = 37;
  const double freq = k0 * 16000.0 / n_fft;
  const Waveform w = sine(freq, 0.5, 4000);
  const auto s = stft(w, win, hop, n_fft);
  REQUIRE(s.frames == frame_count(4000, win, hop));
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto ref = direct_dft(w.samples, f * hop, win, n_fft);
    std::size_t peak = 0;
    for (std::size_t b = 0; b < s.bins; ++b) {
      CHECK(std::abs(s.at(f, b) - ref[b]) < 1e-9);
      if (std::abs(s.at(f, b)) > std::abs(s.at(f, peak))) peak = b;
    }
    CHECK(peak == k0);
  }
}

TEST_CASE("frame counts") {
  CHECK(frame_count(16000, 400, 160) == 98);
  CHECK(frame_count(160000, 400, 160) == 998);
  CHECK(frame_count(400, 400, 160) == 1);
  CHECK_THROWS_AS(frame_count(399, 400, 160), Error);
  Waveform w;
  w.samples.assign(100, 0.0);
  CHECK_THROWS_AS(stft(w, 400, 160, 512), Error);
  w.samples.assign(1000, 0.0);
  CHECK_THROWS_AS(stft(w, 600, 160, 512), Error);
}

TEST_CASE("mel filterbank construction properties") {
  const std::size_t n_fft = 512, n_mels = 128;
  const double sr = 16000.0, f_min = FrontendConfig{}.f_min, f_max = 8000.0;
  const Tensor fb = mel_filterbank(n_fft, n_mels, sr, f_min, f_max);
  REQUIRE(fb.shape() == Shape{n_mels, n_fft / 2 + 1});

  std::vector<std::size_t> peaks;
  for (std::size_t m = 0; m < n_mels; ++m) {
    double sum = 0.0, best = -1.0;
    std::size_t arg = 0, n_best = 0;
    for (std::size_t b = 0; b < fb.cols(); ++b) {
      CHECK(fb.at(m, b) >= 0.0);
      sum += fb.at(m, b);
      if (fb.at(m, b) > best) {
        best = fb.at(m, b);
        arg = b;
      }
    }
    for (std::size_t b = 0; b < fb.cols(); ++b) n_best += fb.at(m, b) == best;
    CHECK(sum > 0.0);
    CHECK(n_best == 1);
    peaks.push_back(arg);
  }
  for (std::size_t m = 1; m < n_mels; ++m) CHECK(peaks[m] >= peaks[m - 1]);

  for (std::size_t b = 0; b < fb.cols(); ++b) {
    const double f = b * sr / n_fft;
    if (f <= f_min || f >= f_max) continue;
    double cover = 0.0;
    for (std::size_t m = 0; m < n_mels; ++m) cover += fb.at(m, b);
    CHECK(cover > 0.0);
  }
}

TEST_CASE("mel filterbank equals an independently computed HTK grid") {
  for (std::size_t n_mels : {40u, 64u, 128u}) {
    const std::size_t n_fft = 512;
    const double sr = 16000.0, lo = 10.0, hi = 8000.0;
    const Tensor fb = mel_filterbank(n_fft, n_mels, sr, lo, hi);
    const double step = (htk_mel(hi) - htk_mel(lo)) / double(n_mels + 1);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double l = htk_hz(htk_mel(lo) + step * m);
      const double c = htk_hz(htk_mel(lo) + step * (m + 1));
      const double r = htk_hz(htk_mel(lo) + step * (m + 2));
      for (std::size_t b = 0; b < fb.cols(); ++b) {
        const double f = b * sr / n_fft;
        const double expect = std::max(0.0, std::min((f - l) / (c - l), (r - f) / (r - c)));
        CHECK(std::abs(fb.at(m, b) - expect) < 1e-9);
      }
    }
  }
}

TEST_CASE("mel filterbank rejects empty filters and bad ranges") {
  CHECK_THROWS_AS(mel_filterbank(512, 400, 16000.0, 10.0, 8000.0), Error);
  // HTK spacing at 0 Hz leaves the 60-95 Hz filters between FFT bins.
  try {
    mel_filterbank(512, 128, 16000.0, 0.0, 8000.0);
    FAIL("expected an empty-filter error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("covers no FFT bin") != std::string::npos);
  }
  CHECK_THROWS_AS(mel_filterbank(512, 0, 16000.0, 10.0, 8000.0), Error);
  CHECK_THROWS_AS(mel_filterbank(512, 64, 16000.0, 100.0, 50.0), Error);
  CHECK_THROWS_AS(mel_filterbank(512, 64, 16000.0, 10.0, 9000.0), Error);
}

TEST_CASE("log_mel examples") {
  FrontendConfig cfg;
  cfg.standardize = false;
  Waveform silence;
  silence.samples.assign(16000, 0.0);
  const auto z = log_mel(silence, cfg);
  CHECK(z.n_frames() == 98);
  for (double v : z.values.data()) CHECK(v == std::log(cfg.log_floor));

  Rng rng(5);
  Waveform w;
  w.samples.resize(16000);
  for (auto& v : w.samples) v = uniform(rng, -0.4, 0.4);
  Waveform w2 = w;
  for (auto& v : w2.samples) v *= 2.0;
  const auto a = log_mel(w, cfg), b = log_mel(w2, cfg);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(std::abs(b.values[i] - a.values[i] - 2.0 * std::log(2.0)) < 1e-9);
  }

  Waveform ten;
  ten.samples.assign(160000, 0.01);
  CHECK(log_mel(ten, cfg).n_frames() == 998);
  CHECK(log_mel(ten, cfg).n_mels() == 128);
}

TEST_CASE("log_mel floor, determinism and energy monotonicity") {
  FrontendConfig cfg;
  cfg.standardize = false;
  Rng rng(11);
  Waveform w;
  w.samples.resize(8000);
  for (auto& v : w.samples) v = normal(rng, 0.0, 0.1);
  const auto a = log_mel(w, cfg), b = log_mel(w, cfg);
  CHECK(a.values == b.values);
  for (double v : a.values.data()) CHECK(v >= std::log(cfg.log_floor));

  const auto spec = stft(w, cfg.win_samples(), cfg.hop_samples(), cfg.n_fft);
  Tensor p1 = power_spectrum(spec), p2 = p1;
  for (auto& v : p2.data()) v += uniform(rng, 0.0, 1.0) * v;
  const Tensor fb = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate, cfg.f_min, cfg.f_max);
  const Tensor l1 = log_mel_from_power(p1, fb, cfg.log_floor);
  const Tensor l2 = log_mel_from_power(p2, fb, cfg.log_floor);
  for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l2[i] >= l1[i]);
}

TEST_CASE("log_mel rejects a rate mismatch") {
  FrontendConfig cfg;
  Waveform w;
  w.sample_rate = 8000.0;
  w.samples.assign(8000, 0.0);
  CHECK_THROWS_AS(log_mel(w, cfg), Error);
}

TEST_CASE("standardize gives zero mean and unit spread") {
  Rng rng(3);
  MelSpectrogram s;
  s.values = Tensor({50, 16});
  for (auto& v : s.values.data()) v = normal(rng, -4.0, 3.0);
  const auto z = standardize(s);
  double mean = 0.0, var = 0.0;
  for (double v : z.values.data()) mean += v;
  mean /= z.values.size();
  for (double v : z.values.data()) var += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::abs(std::sqrt(var / z.values.size()) - 1.0) < 1e-5);
}

TEST_CASE("wav round trips and resampling") {
  const auto dir = patchasd::testing::scratch_dir("wav");
  Waveform w = sine(440.0, 0.5, 1600);
  write_wav_float32(dir / "f.wav", w);
  const Waveform f = read_wav(dir / "f.wav");
  REQUIRE(f.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(f.samples[i] - w.samples[i]) < 1e-7);

  write_wav_pcm16(dir / "p.wav", w);
  const Waveform p = read_wav(dir / "p.wav");
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(p.samples[i] - w.samples[i]) < 1.0 / 32767.0);

  Waveform slow = sine(440.0, 0.5, 800, 8000.0);
  write_wav_pcm16(dir / "s.wav", slow);
  const Waveform up = read_wav(dir / "s.wav");
  CHECK(up.sample_rate == 16000.0);
  CHECK(up.samples.size() == doctest::Approx(1600).epsilon(0.002));

  patchasd::testing::write_bytes(dir / "bad.wav", "definitely not audio");
  CHECK_THROWS_AS(read_wav(dir / "bad.wav"), Error);
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), Error);
}
