// Copyright (c) 2026 kwsinc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kwsinc/dsp.h"
#include "kwsinc/errors.h"

namespace kwsinc {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

struct ParsedWav {
  std::uint16_t format = 0;
  int channels = 0;
  int rate = 0;
  int bits = 0;
  bool have_data = false;
  std::size_t data_offset = 0;
  std::size_t data_declared = 0;

  std::size_t frame_bytes() const { return std::size_t(channels) * (bits / 8); }
};

ParsedWav parse(std::span<const std::uint8_t> bytes, bool need_data) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DecodeError("not a RIFF/WAVE file");
  }
  ParsedWav out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || available < 16) throw DecodeError("truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      out.format = read_u16(f);
      out.channels = read_u16(f + 2);
      out.rate = static_cast<int>(read_u32(f + 4));
      out.bits = read_u16(f + 14);
      if (out.format == kFormatExtensible) {
        if (size < 40 || available < 40) {
          throw DecodeError("truncated extensible fmt chunk");
        }
        out.format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      out.have_data = true;
      out.data_offset = body;
      out.data_declared = size;
      if (have_fmt) break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw DecodeError("missing fmt chunk");
  if (need_data && !out.have_data) throw DecodeError("missing data chunk");
  if (out.channels <= 0) throw DecodeError("invalid channel count");
  if (out.rate <= 0) throw DecodeError("invalid sample rate");
  const bool pcm_ok = out.format == kFormatPcm &&
                      (out.bits == 8 || out.bits == 16 || out.bits == 24 ||
                       out.bits == 32);
  const bool float_ok = out.format == kFormatFloat && out.bits == 32;
  if (!pcm_ok && !float_ok) {
    throw DecodeError("unsupported encoding (format " +
                      std::to_string(out.format) + ", " +
                      std::to_string(out.bits) + " bits)");
  }
  return out;
}

float decode_sample(const std::uint8_t* p, const ParsedWav& w) {
  if (w.format == kFormatFloat) {
    float v;
    std::memcpy(&v, p, 4);
    return std::isfinite(v) ? std::clamp(v, -1.0f, 1.0f) : 0.0f;
  }
  switch (w.bits) {
    case 8:
      return (float(p[0]) - 128.0f) / 128.0f;
    case 16:
      return float(std::int16_t(read_u16(p))) / 32768.0f;
    case 24: {
      std::int32_t v = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) |
                       (std::int32_t(p[2]) << 16);
      if (v & 0x800000) v -= 0x1000000;
      return float(v) / 8388608.0f;
    }
    default:
      return float(double(std::int32_t(read_u32(p))) / 2147483648.0);
  }
}

// Linear-interpolation resampler; adequate for the occasional off-rate clip.
std::vector<float> resample(const std::vector<float>& in, int from, int to) {
  if (from == to || in.empty()) return in;
  const auto out_len = static_cast<std::size_t>(
      std::llround(double(in.size()) * to / from));
  std::vector<float> out(out_len);
  const double step = double(from) / to;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double x = i * step;
    const auto i0 = static_cast<std::size_t>(x);
    const double frac = x - double(i0);
    const float a = in[std::min(i0, in.size() - 1)];
    const float b = in[std::min(i0 + 1, in.size() - 1)];
    out[i] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path,
                                    std::size_t limit = SIZE_MAX) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  if (limit == SIZE_MAX) {
    bytes.assign(std::istreambuf_iterator<char>(in),
                 std::istreambuf_iterator<char>());
  } else {
    bytes.resize(limit);
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(limit));
    bytes.resize(static_cast<std::size_t>(in.gcount()));
  }
  return bytes;
}

}  // namespace

Waveform normalize_length(Waveform w) {
  w.samples.resize(kClipSamples, 0.0f);
  return w;
}

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  const ParsedWav p = parse(bytes, true);
  const std::size_t frame_bytes = p.frame_bytes();
  // Streamed files may declare 0 or 0xFFFFFFFF; trust the bytes present.
  std::size_t len = bytes.size() - p.data_offset;
  if (p.data_declared != 0 && p.data_declared < len) len = p.data_declared;
  const std::size_t frames = len / frame_bytes;
  Waveform w;
  w.rate = p.rate;
  w.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::uint8_t* base = bytes.data() + p.data_offset + f * frame_bytes;
    float acc = 0.0f;
    for (int c = 0; c < p.channels; ++c) {
      acc += decode_sample(base + c * (p.bits / 8), p);
    }
    w.samples[f] = acc / float(p.channels);
  }
  return w;
}

Waveform load_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Waveform w;
  try {
    w = decode_wav(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
  if (w.rate != kSampleRate) {
    w.samples = resample(w.samples, w.rate, kSampleRate);
    w.rate = kSampleRate;
  }
  return normalize_length(std::move(w));
}

WavInfo probe_wav(const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw DecodeError("cannot stat " + path.string());
  // Headers normally sit in the first few hundred bytes.
  const auto bytes = read_file(path, 4096);
  ParsedWav p;
  try {
    p = parse(bytes, false);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
  WavInfo info;
  info.rate = p.rate;
  info.channels = p.channels;
  info.bits_per_sample = p.bits;
  if (p.have_data) {
    std::size_t len = file_size - std::min<std::size_t>(p.data_offset, file_size);
    if (p.data_declared != 0 && p.data_declared < len) len = p.data_declared;
    info.frames = static_cast<std::int64_t>(len / p.frame_bytes());
  }
  return info;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const std::uint32_t data_bytes = std::uint32_t(w.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
  };
  auto put_u16 = [&](std::uint16_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
  };
  auto put_tag = [&](const char* tag) { out.insert(out.end(), tag, tag + 4); };
  put_tag("RIFF");
  put_u32(36 + data_bytes);
  put_tag("WAVE");
  put_tag("fmt ");
  put_u32(16);
  put_u16(kFormatPcm);
  put_u16(1);
  put_u32(std::uint32_t(w.rate));
  put_u32(std::uint32_t(w.rate) * 2);
  put_u16(2);
  put_u16(16);
  put_tag("data");
  put_u32(data_bytes);
  for (float s : w.samples) {
    const float c = std::clamp(std::isfinite(s) ? s : 0.0f, -1.0f, 1.0f);
    const auto v = static_cast<std::int16_t>(
        std::clamp(std::lround(c * 32768.0f), -32768l, 32767l));
    put_u16(static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
}

}  // namespace kwsinc
