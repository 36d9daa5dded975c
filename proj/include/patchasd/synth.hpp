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

// Synthetic stationary machine sounds with injectable anomalies, written as a
// DCASE-style directory tree.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "patchasd/dsp.hpp"
#include "patchasd/random.hpp"

namespace patchasd {

enum class Domain { Source, Target };

std::string to_string(Domain d);
Domain parse_domain(const std::string& s);

struct MachineProfile {
  std::string machine_type;
  std::string entity_id;
  Domain domain = Domain::Source;
  double fundamental_hz = 120.0;
  std::vector<double> harmonic_amps{1.0, 0.5, 0.25};
  double noise_level = 0.3;    // noise RMS relative to the harmonic stack RMS
  double noise_pole = 0.6;     // one-pole low-pass coefficient in [0, 1)
  double target_detune = 1.06; // fundamental multiplier in the target domain

  void validate() const;
  double domain_fundamental() const;
};

enum class AnomalyKind { TransientClick, HarmonicShift, AmplitudeModulation, BandNoise };

std::string to_string(AnomalyKind k);
AnomalyKind parse_anomaly_kind(const std::string& s);

struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::HarmonicShift;
  double strength = 0.1;
  double onset_s = 0.0;

  void validate(double duration_s) const;
};

struct ClipRecord {
  std::string split;  // "train" or "test"
  std::string machine_type;
  std::string machine_id;
  Domain domain = Domain::Source;
  bool is_anomaly = false;
  std::size_t index = 0;
  std::optional<AnomalyKind> anomaly;

  // Grouping and clip keys, e.g. "fan/00" and "fan_00_source_normal_0003".
  std::string entity_key() const { return machine_type + "/" + machine_id; }
  std::string clip_id() const;
};

struct Clip {
  Waveform wave;
  ClipRecord record;
};

// Harmonic stack plus low-passed noise, RMS drawn from [0.08, 0.3].
Clip generate_clip(const MachineProfile& profile, double duration_s, Rng& rng,
                   double sample_rate = 16000.0);

// Returns a modified copy; the input is untouched.
Waveform inject_anomaly(const Waveform& w, const AnomalySpec& spec, Rng& rng);

// Defaults are set so every kind is plainly audible. A single short click is
// still the hardest kind for a clip-level embedding to pick up.
struct AnomalyStrengths {
  double transient_click = 30.0;  // burst std relative to clip RMS; saturates 16-bit PCM
  double harmonic_shift = 0.08;
  double amplitude_modulation = 1.0;
  double band_noise = 0.5;

  double of(AnomalyKind k) const;
};

struct DatasetLayout {
  std::vector<std::string> machine_types{"fan", "pump", "valve"};
  std::size_t ids_per_type = 2;
  std::size_t train_per_entity = 100;
  std::size_t test_per_entity = 40;
  double duration_s = 10.0;
  double sample_rate = 16000.0;
  double train_target_fraction = 0.0;  // 0.01 gives the 99:1 split
  double test_target_fraction = 0.0;
  double test_anomaly_fraction = 0.5;
  AnomalyStrengths strengths;
  std::vector<AnomalyKind> kinds{AnomalyKind::TransientClick, AnomalyKind::HarmonicShift,
                                 AnomalyKind::AmplitudeModulation, AnomalyKind::BandNoise};

  void validate() const;
};

std::string entity_id_name(std::size_t i);  // "00", "01", ...

MachineProfile entity_profile(const DatasetLayout& layout, std::size_t type_index,
                              std::size_t id_index, std::uint64_t seed);

// Every clip of the layout, in a fixed order.
std::vector<ClipRecord> plan_dataset(const DatasetLayout& layout);

// Waveform for one planned record; depends only on (layout, seed, record).
Waveform render_clip(const DatasetLayout& layout, std::uint64_t seed, const ClipRecord& record);

// <type>_<id>_<domain>_<normal|anomaly>_<index>.wav
std::string clip_filename(const ClipRecord& r);
// Inverse of clip_filename; split and anomaly kind are not encoded.
ClipRecord parse_clip_filename(const std::string& filename);

// Writes <root>/train/*.wav, <root>/test/*.wav and <root>/metadata.csv.
std::vector<ClipRecord> generate_dataset(const std::filesystem::path& root,
                                         const DatasetLayout& layout, std::uint64_t seed,
                                         std::size_t workers = 1);

std::vector<ClipRecord> read_metadata_csv(const std::filesystem::path& path);

}  // namespace patchasd
