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

#include "patchasd/dsp.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace patchasd {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// FFTW planning is not thread-safe; execution with new-array calls is. Plans
// are cached per size for the lifetime of the process.
class R2CPlans {
 public:
  fftw_plan get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(n, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::size_t, fftw_plan> plans_;
};

R2CPlans& plans() {
  static R2CPlans p;
  return p;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

std::size_t FrontendConfig::win_samples() const {
  return static_cast<std::size_t>(std::lround(win_s * sample_rate));
}

std::size_t FrontendConfig::hop_samples() const {
  return static_cast<std::size_t>(std::lround(hop_s * sample_rate));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t frame_count(std::size_t n_samples, std::size_t win, std::size_t hop) {
  if (hop == 0) throw Error("stft: hop must be >= 1");
  if (n_samples < win) {
    throw Error("stft: clip of " + std::to_string(n_samples) +
                " samples is shorter than one window (" + std::to_string(win) + ")");
  }
  return (n_samples - win) / hop + 1;
}

ComplexMatrix stft(const Waveform& w, std::size_t win_samples, std::size_t hop_samples,
                   std::size_t n_fft) {
  if (win_samples == 0 || win_samples > n_fft) {
    throw Error("stft: window " + std::to_string(win_samples) + " must be in [1, n_fft=" +
                std::to_string(n_fft) + "]");
  }
  const std::size_t frames = frame_count(w.samples.size(), win_samples, hop_samples);
  const std::size_t bins = n_fft / 2 + 1;

  std::vector<double> window(win_samples);
  for (std::size_t n = 0; n < win_samples; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win_samples);
  }

  ComplexMatrix out;
  out.frames = frames;
  out.bins = bins;
  out.data.resize(frames * bins);

  fftw_plan plan = plans().get(n_fft);
  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n_fft));
  std::unique_ptr<fftw_complex, FftwFree> spec(fftw_alloc_complex(bins));
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = w.samples.data() + f * hop_samples;
    double* buf = in.get();
    for (std::size_t n = 0; n < win_samples; ++n) buf[n] = src[n] * window[n];
    std::fill(buf + win_samples, buf + n_fft, 0.0);
    fftw_execute_dft_r2c(plan, buf, spec.get());
    for (std::size_t b = 0; b < bins; ++b) {
      out.data[f * bins + b] = {spec.get()[b][0], spec.get()[b][1]};
    }
  }
  return out;
}

Tensor power_spectrum(const ComplexMatrix& spec) {
  Tensor p({spec.frames, spec.bins});
  for (std::size_t i = 0; i < spec.data.size(); ++i) p[i] = std::norm(spec.data[i]);
  return p;
}

Tensor mel_filterbank(std::size_t n_fft, std::size_t n_mels, double sample_rate,
                      double f_min, double f_max) {
  if (n_mels == 0) throw Error("mel_filterbank: n_mels must be >= 1");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw Error("mel_filterbank: need 0 <= f_min < f_max <= sample_rate / 2");
  }
  const std::size_t bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    edges[k] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * k / (n_mels + 1));
  }

  Tensor fb({n_mels, bins});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    bool any = false;
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = b * sample_rate / n_fft;
      double v = 0.0;
      if (f > left && f <= center) {
        v = (f - left) / (center - left);
      } else if (f > center && f < right) {
        v = (right - f) / (right - center);
      }
      if (v > 0.0) any = true;
      fb.at(m, b) = v;
    }
    if (!any) {
      throw Error("mel_filterbank: filter " + std::to_string(m) + " (" +
                  std::to_string(left) + "-" + std::to_string(right) +
                  " Hz) covers no FFT bin; n_mels too large for n_fft=" +
                  std::to_string(n_fft));
    }
  }
  return fb;
}

Tensor log_mel_from_power(const Tensor& power, const Tensor& filterbank, double floor) {
  if (power.cols() != filterbank.cols()) {
    throw ShapeError("log_mel: power " + shape_str(power.shape()) + " vs filterbank " +
                     shape_str(filterbank.shape()));
  }
  Tensor out({power.rows(), filterbank.rows()});
  Eigen::Map<const RowMat> P(power.data().data(), power.rows(), power.cols());
  Eigen::Map<const RowMat> F(filterbank.data().data(), filterbank.rows(), filterbank.cols());
  Eigen::Map<RowMat> O(out.data().data(), out.rows(), out.cols());
  O.noalias() = P * F.transpose();
  for (auto& v : out.data()) v = std::log(std::max(v, floor));
  return out;
}

MelSpectrogram log_mel(const Waveform& w, const FrontendConfig& cfg) {
  if (w.sample_rate != cfg.sample_rate) {
    throw Error("log_mel: waveform rate " + std::to_string(w.sample_rate) +
                " Hz does not match front-end rate " + std::to_string(cfg.sample_rate) + " Hz");
  }
  const Tensor fb = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate, cfg.f_min, cfg.f_max);
  const ComplexMatrix spec = stft(w, cfg.win_samples(), cfg.hop_samples(), cfg.n_fft);
  MelSpectrogram s;
  s.values = log_mel_from_power(power_spectrum(spec), fb, cfg.log_floor);
  s.frame_hop_s = cfg.hop_s;
  s.frame_win_s = cfg.win_s;
  return s;
}

MelSpectrogram standardize(const MelSpectrogram& s, double eps) {
  MelSpectrogram out = s;
  const auto v = s.values.data();
  if (v.empty()) return out;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / v.size());
  for (auto& x : out.values.data()) x = (x - mean) / (sd + eps);
  return out;
}

MelSpectrogram extract_features(const Waveform& w, const FrontendConfig& cfg) {
  MelSpectrogram s = log_mel(w, cfg);
  return cfg.standardize ? standardize(s, cfg.standardize_eps) : s;
}

}  // namespace patchasd
