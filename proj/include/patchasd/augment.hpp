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

#pragma once

#include <cstddef>
#include <vector>

#include "patchasd/dsp.hpp"
#include "patchasd/random.hpp"
#include "patchasd/tensor.hpp"

namespace patchasd {

// Frequency and time masking. There is deliberately no time warping.
struct SpecAugConfig {
  std::size_t freq_mask_param = 40;  // F: max masked mel bins per mask
  std::size_t time_mask_param = 80;  // T: max masked frames per mask
  std::size_t n_freq_masks = 2;
  std::size_t n_time_masks = 2;
};

// Each mask draws a width w ~ U{0..F} (or T) and a start ~ U{0..n-w}, then
// fills the band with the spectrogram mean. The input is left untouched.
MelSpectrogram spec_augment(const MelSpectrogram& s, const SpecAugConfig& cfg, Rng& rng);

// Sequence of patch x patch blocks in raster order: index = row * cols + col,
// where row walks the mel axis and col walks the time axis. Inside a block,
// element (f, t) sits at f * patch + t.
struct PatchGrid {
  std::size_t patch = 16;
  std::size_t rows_freq = 0;
  std::size_t cols_time = 0;
  std::size_t n_frames = 0;  // unpadded frame count
  std::vector<double> data;  // n_patches * patch * patch

  std::size_t n_patches() const { return rows_freq * cols_time; }
  std::size_t patch_dim() const { return patch * patch; }
  // [n_patches x patch_dim] token matrix.
  Tensor tokens() const;
};

// Pads the time axis with the spectrogram minimum up to a multiple of
// `patch`. n_mels must be a multiple of `patch`.
PatchGrid patchify(const MelSpectrogram& s, std::size_t patch = 16);

// Inverse of patchify; returns the padded spectrogram.
MelSpectrogram unpatchify(const PatchGrid& g);

}  // namespace patchasd
