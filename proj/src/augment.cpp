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

#include "patchasd/augment.hpp"

#include <algorithm>

namespace patchasd {

MelSpectrogram spec_augment(const MelSpectrogram& s, const SpecAugConfig& cfg, Rng& rng) {
  const std::size_t frames = s.n_frames(), mels = s.n_mels();
  if (cfg.freq_mask_param > mels) {
    throw Error("spec_augment: freq mask param " + std::to_string(cfg.freq_mask_param) +
                " exceeds " + std::to_string(mels) + " mel bins");
  }
  if (cfg.time_mask_param > frames) {
    throw Error("spec_augment: time mask param " + std::to_string(cfg.time_mask_param) +
                " exceeds " + std::to_string(frames) + " frames");
  }
  MelSpectrogram out = s;
  if (frames == 0 || mels == 0) return out;
  double mean = 0.0;
  for (double v : s.values.data()) mean += v;
  mean /= static_cast<double>(s.values.size());

  for (std::size_t k = 0; k < cfg.n_freq_masks; ++k) {
    const auto width = static_cast<std::size_t>(uniform_int(rng, 0, cfg.freq_mask_param));
    const auto start = static_cast<std::size_t>(uniform_int(rng, 0, mels - width));
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t f = start; f < start + width; ++f) out.values.at(t, f) = mean;
  }
  for (std::size_t k = 0; k < cfg.n_time_masks; ++k) {
    const auto width = static_cast<std::size_t>(uniform_int(rng, 0, cfg.time_mask_param));
    const auto start = static_cast<std::size_t>(uniform_int(rng, 0, frames - width));
    for (std::size_t t = start; t < start + width; ++t)
      for (std::size_t f = 0; f < mels; ++f) out.values.at(t, f) = mean;
  }
  return out;
}

Tensor PatchGrid::tokens() const {
  return Tensor({n_patches(), patch_dim()}, data);
}

PatchGrid patchify(const MelSpectrogram& s, std::size_t patch) {
  if (patch == 0) throw Error("patchify: patch size must be positive");
  if (s.values.rank() != 2 || s.values.size() == 0) {
    throw Error("patchify: empty spectrogram");
  }
  const std::size_t frames = s.n_frames(), mels = s.n_mels();
  if (mels < patch || mels % patch != 0) {
    throw Error("patchify: " + std::to_string(mels) + " mel bins is not a positive multiple of " +
                std::to_string(patch));
  }
  const auto vals = s.values.data();
  const double pad = *std::min_element(vals.begin(), vals.end());

  PatchGrid g;
  g.patch = patch;
  g.rows_freq = mels / patch;
  g.cols_time = (frames + patch - 1) / patch;
  g.n_frames = frames;
  g.data.resize(g.n_patches() * patch * patch);
  for (std::size_t r = 0; r < g.rows_freq; ++r) {
    for (std::size_t c = 0; c < g.cols_time; ++c) {
      double* block = g.data.data() + (r * g.cols_time + c) * patch * patch;
      for (std::size_t f = 0; f < patch; ++f) {
        for (std::size_t t = 0; t < patch; ++t) {
          const std::size_t frame = c * patch + t;
          block[f * patch + t] = frame < frames ? s.values.at(frame, r * patch + f) : pad;
        }
      }
    }
  }
  return g;
}

MelSpectrogram unpatchify(const PatchGrid& g) {
  const std::size_t p = g.patch;
  const std::size_t frames = g.cols_time * p, mels = g.rows_freq * p;
  MelSpectrogram s;
  s.values = Tensor({frames, mels});
  for (std::size_t r = 0; r < g.rows_freq; ++r)
    for (std::size_t c = 0; c < g.cols_time; ++c) {
      const double* block = g.data.data() + (r * g.cols_time + c) * p * p;
      for (std::size_t f = 0; f < p; ++f)
        for (std::size_t t = 0; t < p; ++t) s.values.at(c * p + t, r * p + f) = block[f * p + t];
    }
  return s;
}

}  // namespace patchasd
