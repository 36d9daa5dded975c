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

#include "patchasd/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace patchasd {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("wav: cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("wav: write failed for " + path.string());
}

std::string header(std::uint16_t format, std::uint16_t bits, std::uint32_t rate,
                   std::uint32_t data_bytes) {
  std::string h = "RIFF";
  put32(h, 36 + data_bytes);
  h += "WAVEfmt ";
  put32(h, 16);
  put16(h, format);
  put16(h, 1);
  put32(h, rate);
  put32(h, rate * bits / 8);
  put16(h, bits / 8);
  put16(h, bits);
  h += "data";
  put32(h, data_bytes);
  return h;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path, double target_rate) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("wav: cannot open " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                       std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw Error("wav: not a RIFF/WAVE file" + where);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::size_t len = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > buf.size()) {
      // Tolerate a data chunk whose declared length overruns the file.
      if (std::memcmp(chunk, "data", 4) != 0) throw Error("wav: truncated chunk" + where);
    }
    const std::size_t avail = std::min(len, buf.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw Error("wav: short fmt chunk" + where);
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) format = le16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (rate == 0) throw Error("wav: missing fmt chunk" + where);
  if (data == nullptr) throw Error("wav: missing data chunk" + where);
  if (channels != 1) {
    throw Error("wav: expected mono, got " + std::to_string(channels) + " channels" + where);
  }

  Waveform w;
  w.sample_rate = rate;
  if (format == kFormatPcm && bits == 16) {
    w.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      w.samples[i] = static_cast<std::int16_t>(le16(data + 2 * i)) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    w.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      w.samples[i] = std::bit_cast<float>(le32(data + 4 * i));
    }
  } else {
    throw Error("wav: unsupported encoding (format " + std::to_string(format) + ", " +
                std::to_string(bits) + " bits)" + where);
  }
  if (w.sample_rate != target_rate) w = resample_linear(w, target_rate);
  return w;
}

void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::string bytes =
      header(kFormatPcm, 16, static_cast<std::uint32_t>(std::lround(w.sample_rate)), n * 2);
  bytes.reserve(bytes.size() + n * 2);
  for (double x : w.samples) {
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(x, -1.0, 1.0) * 32767.0));
    put16(bytes, static_cast<std::uint16_t>(q));
  }
  write_file(path, bytes);
}

void write_wav_float32(const std::filesystem::path& path, const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::string bytes =
      header(kFormatFloat, 32, static_cast<std::uint32_t>(std::lround(w.sample_rate)), n * 4);
  for (double x : w.samples) put32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  write_file(path, bytes);
}

Waveform resample_linear(const Waveform& w, double target_rate) {
  if (!(target_rate > 0.0) || !(w.sample_rate > 0.0)) throw Error("resample: rates must be positive");
  Waveform out;
  out.sample_rate = target_rate;
  if (w.samples.empty()) return out;
  const double ratio = w.sample_rate / target_rate;
  const auto n_out = static_cast<std::size_t>(std::floor((w.samples.size() - 1) / ratio)) + 1;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = i * ratio;
    const auto k = static_cast<std::size_t>(t);
    const double frac = t - k;
    const double a = w.samples[k];
    const double b = k + 1 < w.samples.size() ? w.samples[k + 1] : a;
    out.samples[i] = a + (b - a) * frac;
  }
  return out;
}

}  // namespace patchasd
