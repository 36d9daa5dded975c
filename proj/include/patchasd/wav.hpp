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

#include <filesystem>

#include "patchasd/dsp.hpp"

namespace patchasd {

// Mono RIFF/WAVE, 16-bit integer PCM or 32-bit IEEE float. Other rates are
// linearly resampled to `target_rate`.
Waveform read_wav(const std::filesystem::path& path, double target_rate = 16000.0);

// 16-bit PCM mono. Samples are clamped to [-1, 1].
void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w);

// 32-bit float mono.
void write_wav_float32(const std::filesystem::path& path, const Waveform& w);

Waveform resample_linear(const Waveform& w, double target_rate);

}  // namespace patchasd
