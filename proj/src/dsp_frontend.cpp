// Copyright 2026 The relward Authors.
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

#include "relward/dsp_frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "relward/errors.hpp"
#include "relward/io.hpp"
#include "relward/rng.hpp"

namespace relward {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

SampleBuffer read_wav(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  const std::size_t size = raw.size();
  const std::string where = path.string() + ": ";

  if (size < 12 || std::memcmp(bytes, "RIFF", 4) != 0 ||
      std::memcmp(bytes + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = bytes + pos;
    const std::uint32_t chunk_size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + 16 > size) {
        throw FormatError(where + "truncated fmt chunk");
      }
      const std::uint16_t audio_format = le16(bytes + body);
      const std::uint16_t channels = le16(bytes + body + 2);
      const std::uint32_t rate = le32(bytes + body + 4);
      const std::uint16_t bits = le16(bytes + body + 14);
      if (audio_format != 1) {
        throw UnsupportedFormatError(where + "audio_format=" +
                                     std::to_string(audio_format) +
                                     " (only PCM=1 is supported)");
      }
      if (channels != 1) {
        throw UnsupportedFormatError(where + "channels=" +
                                     std::to_string(channels) +
                                     " (only mono is supported)");
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw UnsupportedFormatError(where + "sample_rate=" +
                                     std::to_string(rate) +
                                     " (only 16000 is supported)");
      }
      if (bits != 16) {
        throw UnsupportedFormatError(where + "bits_per_sample=" +
                                     std::to_string(bits) +
                                     " (only 16 is supported)");
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(where + "data chunk before fmt chunk");
      if (body + chunk_size > size) throw FormatError(where + "truncated data chunk");
      if (chunk_size % 2 != 0) throw FormatError(where + "odd data chunk size");
      SampleBuffer out;
      out.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(bytes + body + 2 * i));
        out.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return out;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw FormatError(where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void write_wav(const std::filesystem::path& path, const SampleBuffer& buffer) {
  if (buffer.sample_rate != kSampleRate) {
    throw ArgumentError("write_wav: sample_rate must be 16000");
  }
  const auto n = static_cast<std::uint32_t>(buffer.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, kSampleRate);
  put32(out, kSampleRate * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, 2 * n);
  for (double s : buffer.samples) {
    const double scaled = std::round(s * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put16(out, static_cast<std::uint16_t>(q));
  }
  write_file_atomic(path, out);
}

std::int64_t frame_start_for_center(std::size_t frame_len, std::size_t hop,
                                    std::size_t frame_count,
                                    std::int64_t center_sample) {
  const auto mid = static_cast<std::int64_t>((frame_count - 1) / 2);
  return center_sample - mid * static_cast<std::int64_t>(hop) -
         static_cast<std::int64_t>(frame_len / 2);
}

RawFrameBlock frame_signal_from(const SampleBuffer& buffer,
                                std::size_t frame_len, std::size_t hop,
                                std::size_t frame_count, std::int64_t start) {
  if (frame_len == 0 || hop == 0 || frame_count == 0) {
    throw ArgumentError("frame_signal: frame_len, hop and frame_count must be positive");
  }
  RawFrameBlock block;
  block.frames = Tensor({frame_count, frame_len});
  block.frame_len = frame_len;
  block.hop = hop;
  block.center_index = (frame_count - 1) / 2;
  const auto n = static_cast<std::int64_t>(buffer.samples.size());
  for (std::size_t j = 0; j < frame_count; ++j) {
    double* row = block.frames.row(j);
    const std::int64_t first = start + static_cast<std::int64_t>(j * hop);
    for (std::size_t m = 0; m < frame_len; ++m) {
      const std::int64_t idx = first + static_cast<std::int64_t>(m);
      row[m] = (idx >= 0 && idx < n) ? buffer.samples[static_cast<std::size_t>(idx)] : 0.0;
    }
  }
  return block;
}

RawFrameBlock frame_signal(const SampleBuffer& buffer, std::size_t frame_len,
                           std::size_t hop, std::size_t frame_count,
                           std::int64_t center_sample) {
  if (frame_len == 0 || hop == 0 || frame_count == 0) {
    throw ArgumentError("frame_signal: frame_len, hop and frame_count must be positive");
  }
  return frame_signal_from(
      buffer, frame_len, hop, frame_count,
      frame_start_for_center(frame_len, hop, frame_count, center_sample));
}

const std::vector<FormantPair>& formant_table(int table_id) {
  // Each first formant is shared by two classes and each second formant by
  // two classes, so no single band identifies a class on its own.
  static const std::vector<FormantPair> primary = {
      {350, 1300}, {350, 2500}, {600, 1900}, {600, 3100},
      {850, 1300}, {850, 2500}, {1100, 1900}, {1100, 3100}};
  static const std::vector<FormantPair> alternate = {
      {475, 1600}, {475, 2800}, {725, 2200}, {725, 3300},
      {975, 1600}, {975, 2800}, {1225, 2200}, {1225, 3300}};
  if (table_id == 0) return primary;
  if (table_id == 1) return alternate;
  throw ArgumentError("formant_table: unknown table " + std::to_string(table_id));
}

LabeledClip synthesize_clip(const ClipSpec& spec) {
  const auto& table = formant_table(spec.table_id);
  if (spec.class_id < 0 || spec.class_id >= static_cast<int>(table.size())) {
    throw ArgumentError("synthesize_clip: unknown class " + std::to_string(spec.class_id));
  }
  const FormantPair formants = table[static_cast<std::size_t>(spec.class_id)];
  Rng rng = make_rng(spec.seed, "clip/" + std::to_string(spec.table_id) + "/" +
                                    std::to_string(spec.class_id));

  const double f1 = formants.first_hz + uniform(rng, -10.0, 10.0);
  const double f2 = formants.second_hz + uniform(rng, -10.0, 10.0);
  const double a1 = uniform(rng, 0.5, 1.0);
  const double a2 = uniform(rng, 0.5, 1.0);
  const double phase1 = uniform(rng, 0.0, kTwoPi);
  const double phase2 = uniform(rng, 0.0, kTwoPi);
  const double f0 = uniform(rng, 90.0, 220.0);
  const double depth = uniform(rng, 0.2, 0.5);
  const double phase0 = uniform(rng, 0.0, kTwoPi);
  const double distractor_hz = uniform(rng, 300.0, 3400.0);
  const double distractor_amp = uniform(rng, 0.05, 0.2);
  const double distractor_phase = uniform(rng, 0.0, kTwoPi);
  const double attack = uniform(rng, 0.03, 0.12);
  const double release = uniform(rng, 0.03, 0.12);
  const double peak = uniform(rng, 0.2, 0.9);
  // Slow syllable-rate envelopes, one per formant; the distractor is steady.
  const double syllable_hz1 = uniform(rng, 3.0, 6.0);
  const double syllable_depth1 = uniform(rng, 0.6, 0.9);
  const double syllable_phase1 = uniform(rng, 0.0, kTwoPi);
  const double syllable_hz2 = uniform(rng, 3.0, 6.0);
  const double syllable_depth2 = uniform(rng, 0.6, 0.9);
  const double syllable_phase2 = uniform(rng, 0.0, kTwoPi);

  const auto n = static_cast<std::size_t>(kClipSeconds * kSampleRate);
  const double duration = static_cast<double>(n) / kSampleRate;
  LabeledClip clip;
  clip.class_id = spec.class_id;
  clip.buffer.samples.resize(n);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double env = 1.0;
    if (t < attack) env = 0.5 - 0.5 * std::cos(std::numbers::pi * t / attack);
    const double tail = duration - t;
    if (tail < release) env = 0.5 - 0.5 * std::cos(std::numbers::pi * tail / release);
    const double glottal = 1.0 + depth * std::cos(kTwoPi * f0 * t + phase0);
    const double s1 =
        1.0 - syllable_depth1 * (0.5 - 0.5 * std::cos(kTwoPi * syllable_hz1 * t + syllable_phase1));
    const double s2 =
        1.0 - syllable_depth2 * (0.5 - 0.5 * std::cos(kTwoPi * syllable_hz2 * t + syllable_phase2));
    const double v = glottal * (s1 * a1 * std::sin(kTwoPi * f1 * t + phase1) +
                                s2 * a2 * std::sin(kTwoPi * f2 * t + phase2)) +
                     distractor_amp * std::sin(kTwoPi * distractor_hz * t + distractor_phase);
    clip.buffer.samples[i] = env * v;
    max_abs = std::max(max_abs, std::abs(clip.buffer.samples[i]));
  }
  const double scale = peak / max_abs;
  for (double& s : clip.buffer.samples) s *= scale;
  return clip;
}

SampleBuffer make_noise(NoiseKind kind, std::size_t length, std::uint64_t seed) {
  Rng rng = make_rng(seed, kind == NoiseKind::white ? "noise/white" : "noise/pink");
  SampleBuffer out;
  out.samples.resize(length);
  if (kind == NoiseKind::white) {
    for (double& s : out.samples) s = gaussian(rng);
    return out;
  }
  // Paul Kellet's refined pinking filter on white input.
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (double& s : out.samples) {
    const double w = gaussian(rng);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    s = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
  }
  const double p = signal_power(out.samples);
  if (p > 0.0) {
    const double g = 1.0 / std::sqrt(p);
    for (double& s : out.samples) s *= g;
  }
  return out;
}

double signal_power(const std::vector<double>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

namespace {

std::vector<double> tiled(const std::vector<double>& noise, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = noise[i % noise.size()];
  return out;
}

}  // namespace

double noise_gain(const SampleBuffer& clean, const SampleBuffer& noise,
                  double snr_db) {
  const double pc = signal_power(clean.samples);
  if (!(pc > 0.0)) throw DegenerateInputError("mix_noise: clean signal has zero power");
  if (noise.samples.empty()) throw DegenerateInputError("mix_noise: empty noise buffer");
  const double pn = signal_power(tiled(noise.samples, clean.samples.size()));
  if (!(pn > 0.0)) throw DegenerateInputError("mix_noise: noise has zero power");
  return std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
}

SampleBuffer mix_noise(const SampleBuffer& clean, const SampleBuffer& noise,
                       double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) {
    if (!(signal_power(clean.samples) > 0.0)) {
      throw DegenerateInputError("mix_noise: clean signal has zero power");
    }
    return clean;
  }
  const double g = noise_gain(clean, noise, snr_db);
  SampleBuffer out = clean;
  const std::size_t nn = noise.samples.size();
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] += g * noise.samples[i % nn];
  }
  return out;
}

std::string format_snr(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return "inf";
  return format_double(snr_db);
}

double parse_snr(const std::string& text) {
  if (text == "inf" || text == "clean" || text == "+inf") return kCleanSnr;
  return parse_double(text);
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected path<TAB>class_id<TAB>snr_db");
    }
    ManifestEntry e;
    e.path = line.substr(0, t1);
    if (e.path.is_relative()) e.path = base / e.path;
    try {
      e.class_id = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
      e.snr_db = parse_snr(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": bad class_id or snr_db");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries) {
  const auto base = path.parent_path();
  std::string out;
  for (const auto& e : entries) {
    std::filesystem::path p = e.path;
    if (!base.empty()) {
      const auto rel = p.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out += p.string() + "\t" + std::to_string(e.class_id) + "\t" +
           format_snr(e.snr_db) + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace relward
