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

// Log-mel front end: Hann-windowed STFT, HTK mel filterbank, log compression
// and optional per-clip standardization.

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "patchasd/tensor.hpp"

namespace patchasd {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  double duration_s() const { return samples.size() / sample_rate; }
};

struct FrontendConfig {
  double sample_rate = 16000.0;
  double win_s = 0.025;
  double hop_s = 0.010;
  std::size_t n_fft = 512;
  std::size_t n_mels = 128;
  double f_min = 10.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
  bool standardize = true;
  double standardize_eps = 1e-5;

  std::size_t win_samples() const;
  std::size_t hop_samples() const;
};

// Time-frequency matrix of log energies, [n_frames x n_mels].
struct MelSpectrogram {
  Tensor values;
  double frame_hop_s = 0.010;
  double frame_win_s = 0.025;

  std::size_t n_frames() const { return values.rows(); }
  std::size_t n_mels() const { return values.cols(); }
};

struct ComplexMatrix {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;

  std::complex<double> at(std::size_t frame, std::size_t bin) const {
    return data[frame * bins + bin];
  }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Number of full frames: floor((len - win) / hop) + 1. No final padding.
std::size_t frame_count(std::size_t n_samples, std::size_t win, std::size_t hop);

// Periodic Hann window of length `win`, zero-padded at the end to n_fft.
ComplexMatrix stft(const Waveform& w, std::size_t win_samples, std::size_t hop_samples,
                   std::size_t n_fft);

// |X|^2, [frames x bins].
Tensor power_spectrum(const ComplexMatrix& spec);

// Triangular HTK-mel filters, [n_mels x (n_fft/2 + 1)]. Filter k peaks at
// mel_to_hz of the (k+1)-th of n_mels + 2 uniformly spaced mel points.
// Throws if any filter covers no FFT bin.
Tensor mel_filterbank(std::size_t n_fft, std::size_t n_mels, double sample_rate,
                      double f_min, double f_max);

// log(max(power . fb^T, floor)), [frames x n_mels].
Tensor log_mel_from_power(const Tensor& power, const Tensor& filterbank, double floor);

// Raw log-mel energies; every entry is >= log(cfg.log_floor).
MelSpectrogram log_mel(const Waveform& w, const FrontendConfig& cfg);

// (x - mean) / (std + eps) over the whole spectrogram.
MelSpectrogram standardize(const MelSpectrogram& s, double eps = 1e-5);

// log_mel followed by standardize when cfg.standardize is set.
MelSpectrogram extract_features(const Waveform& w, const FrontendConfig& cfg);

}  // namespace patchasd
