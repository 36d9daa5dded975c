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

#include "patchasd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "patchasd/parallel.hpp"
#include "patchasd/wav.hpp"

namespace patchasd {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

std::size_t onset_sample(const Waveform& w, double onset_s) {
  return static_cast<std::size_t>(std::floor(onset_s * w.sample_rate));
}

}  // namespace

std::string to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }

Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw Error("unknown domain '" + s + "'");
}

void MachineProfile::validate() const {
  if (!(fundamental_hz > 20.0 && fundamental_hz < 4000.0)) {
    throw Error("machine profile: fundamental " + std::to_string(fundamental_hz) +
                " Hz outside (20, 4000)");
  }
  if (harmonic_amps.empty()) throw Error("machine profile: no harmonics");
  bool any = false;
  for (double a : harmonic_amps) {
    if (!(a >= 0.0)) throw Error("machine profile: negative harmonic amplitude");
    any = any || a > 0.0;
  }
  if (!any) throw Error("machine profile: all harmonic amplitudes are zero");
  if (!(noise_level >= 0.0)) throw Error("machine profile: negative noise level");
  if (!(noise_pole >= 0.0 && noise_pole < 1.0)) throw Error("machine profile: noise_pole outside [0, 1)");
  if (!(target_detune > 0.0)) throw Error("machine profile: target_detune must be positive");
}

double MachineProfile::domain_fundamental() const {
  return domain == Domain::Target ? fundamental_hz * target_detune : fundamental_hz;
}

std::string to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::TransientClick: return "transient-click";
    case AnomalyKind::HarmonicShift: return "harmonic-shift";
    case AnomalyKind::AmplitudeModulation: return "amplitude-modulation";
    case AnomalyKind::BandNoise: return "added-band-noise";
  }
  return "?";
}

AnomalyKind parse_anomaly_kind(const std::string& s) {
  for (auto k : {AnomalyKind::TransientClick, AnomalyKind::HarmonicShift,
                 AnomalyKind::AmplitudeModulation, AnomalyKind::BandNoise}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown anomaly kind '" + s + "'");
}

void AnomalySpec::validate(double duration_s) const {
  if (!(strength > 0.0)) throw Error("anomaly: strength must be positive");
  if (!(onset_s >= 0.0 && onset_s < duration_s)) {
    throw Error("anomaly: onset " + std::to_string(onset_s) + " s outside clip of " +
                std::to_string(duration_s) + " s");
  }
}

std::string ClipRecord::clip_id() const {
  const std::string f = clip_filename(*this);
  return f.substr(0, f.size() - 4);
}

Clip generate_clip(const MachineProfile& profile, double duration_s, Rng& rng, double sample_rate) {
  profile.validate();
  if (!(duration_s >= 1.0)) throw Error("generate_clip: duration must be >= 1 s");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const double f0 = profile.domain_fundamental() * (1.0 + uniform(rng, -0.005, 0.005));

  std::vector<double> harm(n, 0.0);
  for (std::size_t h = 0; h < profile.harmonic_amps.size(); ++h) {
    const double f = f0 * static_cast<double>(h + 1);
    const double a = profile.harmonic_amps[h] * (1.0 + 0.1 * truncated_normal(rng, 1.0));
    const double phase = uniform(rng, 0.0, kTwoPi);
    if (f >= 0.5 * sample_rate || a == 0.0) continue;
    // Rotating phasor, resynchronized every 4096 samples to bound drift.
    const double dphi = kTwoPi * f / sample_rate;
    const std::complex<double> step = std::polar(1.0, dphi);
    std::complex<double> z;
    for (std::size_t t = 0; t < n; ++t) {
      if (t % 4096 == 0) z = std::polar(a, phase + dphi * static_cast<double>(t));
      harm[t] += z.imag();
      z *= step;
    }
  }
  const double harm_rms = rms(harm);

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = std::move(harm);
  if (profile.noise_level > 0.0) {
    std::vector<double> noise(n);
    double y = 0.0;
    for (auto& v : noise) {
      y = (1.0 - profile.noise_pole) * normal(rng) + profile.noise_pole * y;
      v = y;
    }
    const double g = profile.noise_level * harm_rms / std::max(rms(noise), 1e-300);
    for (std::size_t t = 0; t < n; ++t) w.samples[t] += g * noise[t];
  }
  const double target = uniform(rng, 0.08, 0.3);
  const double g = target / rms(w.samples);
  for (auto& v : w.samples) v *= g;

  Clip c;
  c.wave = std::move(w);
  c.record.machine_type = profile.machine_type;
  c.record.machine_id = profile.entity_id;
  c.record.domain = profile.domain;
  return c;
}

Waveform inject_anomaly(const Waveform& w, const AnomalySpec& spec, Rng& rng) {
  spec.validate(w.duration_s());
  Waveform out = w;
  const std::size_t n = w.samples.size();
  const std::size_t t0 = onset_sample(w, spec.onset_s);
  const double level = rms(w.samples);
  const double sr = w.sample_rate;

  switch (spec.kind) {
    case AnomalyKind::TransientClick: {
      // Decaying noise burst, 25 ms time constant, 125 ms long.
      const double tau = 0.025 * sr;
      const std::size_t len = std::min(n - t0, static_cast<std::size_t>(5.0 * tau));
      for (std::size_t i = 0; i < len; ++i) {
        out.samples[t0 + i] += spec.strength * level * normal(rng) * std::exp(-static_cast<double>(i) / tau);
      }
      break;
    }
    case AnomalyKind::HarmonicShift: {
      // Read the tail faster by (1 + strength), wrapping inside [t0, n).
      const double rate = 1.0 + spec.strength;
      const double span = static_cast<double>(n - t0);
      for (std::size_t t = t0; t < n; ++t) {
        const double pos = std::fmod(static_cast<double>(t - t0) * rate, span);
        const auto i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        const double a = w.samples[t0 + i];
        const double b = w.samples[t0 + (i + 1) % (n - t0)];
        out.samples[t] = a + frac * (b - a);
      }
      break;
    }
    case AnomalyKind::AmplitudeModulation: {
      const double fm = uniform(rng, 2.0, 6.0);
      const double depth = std::min(spec.strength, 1.0);
      for (std::size_t t = t0; t < n; ++t) {
        out.samples[t] *= 1.0 + depth * std::sin(kTwoPi * fm * static_cast<double>(t - t0) / sr);
      }
      break;
    }
    case AnomalyKind::BandNoise: {
      const double fc = uniform(rng, 500.0, std::min(4000.0, 0.4 * sr));
      const double w0 = kTwoPi * fc / sr;
      const double alpha = std::sin(w0) / (2.0 * 5.0);
      const double a0 = 1.0 + alpha;
      const double b0 = alpha / a0, b2 = -alpha / a0;
      const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
      std::vector<double> band(n - t0);
      double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
      for (auto& y : band) {
        const double x = normal(rng);
        y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
      }
      const double g = spec.strength * level / std::max(rms(band), 1e-300);
      for (std::size_t t = t0; t < n; ++t) out.samples[t] += g * band[t - t0];
      break;
    }
  }
  return out;
}

double AnomalyStrengths::of(AnomalyKind k) const {
  switch (k) {
    case AnomalyKind::TransientClick: return transient_click;
    case AnomalyKind::HarmonicShift: return harmonic_shift;
    case AnomalyKind::AmplitudeModulation: return amplitude_modulation;
    case AnomalyKind::BandNoise: return band_noise;
  }
  return 0.0;
}

void DatasetLayout::validate() const {
  if (machine_types.empty()) throw Error("layout: no machine types");
  for (const auto& t : machine_types) {
    if (t.empty() || t.find_first_of("_/,. \t") != std::string::npos) {
      throw Error("layout: machine type '" + t + "' must be non-empty without '_', '/', ',', '.' or spaces");
    }
  }
  if (ids_per_type == 0 || ids_per_type > 100) throw Error("layout: ids_per_type must be in [1, 100]");
  if (train_per_entity == 0) throw Error("layout: train_per_entity must be positive");
  if (!(duration_s >= 1.0)) throw Error("layout: duration must be >= 1 s");
  auto frac_ok = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!frac_ok(train_target_fraction) || !frac_ok(test_target_fraction) ||
      !frac_ok(test_anomaly_fraction)) {
    throw Error("layout: fractions must be in [0, 1]");
  }
  if (kinds.empty() && test_anomaly_fraction > 0.0) throw Error("layout: no anomaly kinds");
}

std::string entity_id_name(std::size_t i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return buf;
}

MachineProfile entity_profile(const DatasetLayout& layout, std::size_t type_index,
                              std::size_t id_index, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x70726f66ULL, type_index, id_index}));
  MachineProfile p;
  p.machine_type = layout.machine_types.at(type_index);
  p.entity_id = entity_id_name(id_index);
  p.fundamental_hz = 110.0 * std::pow(1.7, static_cast<double>(type_index % 6)) *
                     (1.0 + 0.12 * static_cast<double>(id_index));
  while (p.fundamental_hz >= 1000.0) p.fundamental_hz *= 0.37;
  const double decay = 0.6 + 0.4 * static_cast<double>(type_index % 3);
  p.harmonic_amps.resize(12);
  for (std::size_t h = 0; h < p.harmonic_amps.size(); ++h) {
    p.harmonic_amps[h] = std::pow(static_cast<double>(h + 1), -decay) * uniform(rng, 0.5, 1.5);
  }
  p.noise_level = 0.2 + 0.1 * static_cast<double>(type_index % 3);
  p.noise_pole = 0.5 + 0.1 * static_cast<double>(type_index % 4);
  p.target_detune = 1.06;
  return p;
}

std::vector<ClipRecord> plan_dataset(const DatasetLayout& layout) {
  layout.validate();
  std::vector<ClipRecord> out;
  for (const auto& type : layout.machine_types) {
    for (std::size_t id = 0; id < layout.ids_per_type; ++id) {
      for (const std::string split : {"train", "test"}) {
        const bool train = split == "train";
        const std::size_t total = train ? layout.train_per_entity : layout.test_per_entity;
        const double tf = train ? layout.train_target_fraction : layout.test_target_fraction;
        const auto n_target = static_cast<std::size_t>(std::llround(total * tf));
        std::size_t index = 0;
        for (Domain d : {Domain::Source, Domain::Target}) {
          const std::size_t count = d == Domain::Source ? total - n_target : n_target;
          const std::size_t n_anom =
              train ? 0 : static_cast<std::size_t>(std::llround(count * layout.test_anomaly_fraction));
          for (std::size_t j = 0; j < count; ++j) {
            ClipRecord r;
            r.split = split;
            r.machine_type = type;
            r.machine_id = entity_id_name(id);
            r.domain = d;
            r.index = index++;
            if (j >= count - n_anom) {
              r.is_anomaly = true;
              r.anomaly = layout.kinds[(j - (count - n_anom)) % layout.kinds.size()];
            }
            out.push_back(std::move(r));
          }
        }
      }
    }
  }
  return out;
}

Waveform render_clip(const DatasetLayout& layout, std::uint64_t seed, const ClipRecord& r) {
  const auto it = std::find(layout.machine_types.begin(), layout.machine_types.end(), r.machine_type);
  if (it == layout.machine_types.end()) throw Error("render_clip: unknown machine type '" + r.machine_type + "'");
  const auto ti = static_cast<std::size_t>(it - layout.machine_types.begin());
  const auto ii = static_cast<std::size_t>(std::stoul(r.machine_id));
  MachineProfile p = entity_profile(layout, ti, ii, seed);
  p.domain = r.domain;
  Rng rng(derive_seed(seed, {ti, ii, r.split == "train" ? 0u : 1u, r.index}));
  Clip c = generate_clip(p, layout.duration_s, rng, layout.sample_rate);
  if (!r.is_anomaly) return c.wave;
  AnomalySpec spec;
  spec.kind = r.anomaly.value_or(AnomalyKind::HarmonicShift);
  spec.strength = layout.strengths.of(spec.kind);
  spec.onset_s = spec.kind == AnomalyKind::TransientClick
                     ? uniform(rng, 0.1, 0.9) * layout.duration_s
                     : uniform(rng, 0.0, 0.2) * layout.duration_s;
  return inject_anomaly(c.wave, spec, rng);
}

std::string clip_filename(const ClipRecord& r) {
  char idx[32];
  std::snprintf(idx, sizeof idx, "%04zu", r.index);
  return r.machine_type + "_" + r.machine_id + "_" + to_string(r.domain) + "_" +
         (r.is_anomaly ? "anomaly" : "normal") + "_" + idx + ".wav";
}

ClipRecord parse_clip_filename(const std::string& filename) {
  std::string stem = std::filesystem::path(filename).filename().string();
  if (stem.size() < 4 || stem.substr(stem.size() - 4) != ".wav") {
    throw Error("clip filename '" + filename + "': expected a .wav name");
  }
  stem.resize(stem.size() - 4);
  const auto parts = split(stem, '_');
  if (parts.size() != 5) {
    throw Error("clip filename '" + filename + "': expected <type>_<id>_<domain>_<normal|anomaly>_<index>.wav");
  }
  ClipRecord r;
  r.machine_type = parts[0];
  r.machine_id = parts[1];
  r.domain = parse_domain(parts[2]);
  if (parts[3] == "anomaly") {
    r.is_anomaly = true;
  } else if (parts[3] != "normal") {
    throw Error("clip filename '" + filename + "': label must be normal or anomaly");
  }
  if (parts[4].empty() || parts[4].find_first_not_of("0123456789") != std::string::npos) {
    throw Error("clip filename '" + filename + "': bad index '" + parts[4] + "'");
  }
  r.index = std::stoul(parts[4]);
  return r;
}

std::vector<ClipRecord> generate_dataset(const std::filesystem::path& root, const DatasetLayout& layout,
                                         std::uint64_t seed, std::size_t workers) {
  const auto records = plan_dataset(layout);
  std::filesystem::create_directories(root / "train");
  std::filesystem::create_directories(root / "test");
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto& r = records[i];
    write_wav_pcm16(root / r.split / clip_filename(r), render_clip(layout, seed, r));
  });
  std::ofstream f(root / "metadata.csv", std::ios::trunc);
  if (!f) throw Error("cannot write " + (root / "metadata.csv").string());
  f << "file,split,machine_type,machine_id,domain,label,anomaly_kind\n";
  for (const auto& r : records) {
    f << r.split << '/' << clip_filename(r) << ',' << r.split << ',' << r.machine_type << ','
      << r.machine_id << ',' << to_string(r.domain) << ',' << (r.is_anomaly ? "anomaly" : "normal")
      << ',' << (r.anomaly ? to_string(*r.anomaly) : "") << '\n';
  }
  return records;
}

std::vector<ClipRecord> read_metadata_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read metadata file " + path.string());
  std::string line;
  std::getline(f, line);
  std::vector<ClipRecord> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 7) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    }
    ClipRecord r = parse_clip_filename(cols[0]);
    r.split = cols[1];
    if (!cols[6].empty()) r.anomaly = parse_anomaly_kind(cols[6]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace patchasd
