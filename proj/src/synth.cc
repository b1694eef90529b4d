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

#include "kwsinc/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include "kwsinc/errors.h"
#include "kwsinc/random.h"

namespace fs = std::filesystem;

namespace kwsinc {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Phone {
  bool voiced;
  double f1, f2, f3;  // formants for voiced, band edges (f1, f2) for noise
};

// Nine vowels (Peterson-Barney style averages), one nasal and three
// fricatives.
constexpr Phone kPhones[] = {
    {true, 270, 2290, 3010},  {true, 390, 1990, 2550}, {true, 530, 1840, 2480},
    {true, 660, 1720, 2410},  {true, 730, 1090, 2440}, {true, 570, 840, 2410},
    {true, 440, 1020, 2240},  {true, 300, 870, 2240},  {true, 640, 1190, 2390},
    {true, 250, 1100, 2300},  {false, 4000, 7500, 0},  {false, 2000, 4500, 0},
    {false, 1200, 7000, 0},
};
constexpr int kNumPhones = sizeof(kPhones) / sizeof(kPhones[0]);

const char* const kNames[] = {
    "yes",  "no",    "up",    "down",  "left",   "right",  "on",    "off",
    "stop", "go",    "zero",  "one",   "two",    "three",  "four",  "five",
    "six",  "seven", "eight", "nine",  "bed",    "bird",   "cat",   "dog",
    "happy", "house", "marvin", "sheila", "tree", "wow"};
constexpr int kMaxKeywords = sizeof(kNames) / sizeof(kNames[0]);

std::vector<std::vector<int>> pronunciations(std::uint64_t seed, int count) {
  Rng rng(derive_seed(seed, "pronunciation"));
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> out;
  while (static_cast<int>(out.size()) < count) {
    const int len = 2 + static_cast<int>(uniform_index(rng, 2));
    std::vector<int> seq;
    for (int i = 0; i < len; ++i) {
      int p;
      do {
        p = static_cast<int>(uniform_index(rng, kNumPhones));
      } while (!seq.empty() && p == seq.back());
      seq.push_back(p);
    }
    if (std::none_of(seq.begin(), seq.end(),
                     [](int p) { return kPhones[p].voiced; })) {
      continue;
    }
    if (seen.insert(seq).second) out.push_back(std::move(seq));
  }
  return out;
}

double formant_gain(double f, double f1, double f2, double f3) {
  auto peak = [f](double center, double bw) {
    const double d = (f - center) / bw;
    return 1.0 / (1.0 + d * d);
  };
  return peak(f1, 90.0) + 0.7 * peak(f2, 120.0) + 0.35 * peak(f3, 170.0);
}

// RBJ band-pass biquad, constant 0 dB peak gain.
std::vector<double> band_noise(Rng& rng, std::size_t n, double lo, double hi) {
  const double center = std::sqrt(lo * hi);
  const double q = center / (hi - lo);
  const double w0 = kTwoPi * center / kSampleRate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = normal(rng);
    const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    out[i] = y;
  }
  return out;
}

}  // namespace

std::vector<std::string> synth_keyword_names(int count) {
  if (count < 1 || count > kMaxKeywords) {
    throw ConfigError("synthetic corpus supports 1.." +
                      std::to_string(kMaxKeywords) + " keywords");
  }
  return {kNames, kNames + count};
}

Waveform synthesize_clip(int keyword_index, int clip_index,
                         const SynthOptions& opts) {
  if (keyword_index < 0 || keyword_index >= kMaxKeywords) {
    throw ConfigError("keyword index out of range");
  }
  const auto phones = pronunciations(opts.seed, kMaxKeywords)[keyword_index];

  Rng rng(derive_seed(opts.seed, "clip",
                      std::uint64_t(keyword_index) * 100003u + clip_index));
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
  };

  const double f0_base = uniform(90.0, 240.0);
  const double f0_slope = uniform(-0.25, 0.15);
  const double tract = uniform(0.88, 1.12);
  const double rate = uniform(0.75, 1.3);
  const double gain = uniform(0.25, 0.8);

  std::vector<std::size_t> seg_len;
  std::size_t total = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const double base_ms = kPhones[phones[i]].voiced ? 170.0 : 110.0;
    const auto len = static_cast<std::size_t>(
        base_ms * rate * uniform(0.85, 1.15) * kSampleRate / 1000.0);
    seg_len.push_back(len);
    total += len;
  }
  const std::size_t margin = kSampleRate / 20;
  const std::size_t latest =
      total + 2 * margin < std::size_t(kClipSamples)
          ? kClipSamples - total - margin
          : margin;
  const auto onset = static_cast<std::size_t>(uniform(double(margin), double(latest)));

  std::vector<double> speech(kClipSamples, 0.0);
  double phase = uniform(0.0, kTwoPi);
  std::size_t pos = onset;
  for (std::size_t s = 0; s < phones.size(); ++s) {
    const Phone& ph = kPhones[phones[s]];
    const std::size_t len = seg_len[s];
    const std::size_t ramp = std::min<std::size_t>(len / 4, 240);
    std::vector<double> seg(len, 0.0);
    if (ph.voiced) {
      const double j = opts.formant_jitter;
      const double f1 = ph.f1 * tract * uniform(1 - j, 1 + j);
      const double f2 = ph.f2 * tract * uniform(1 - j, 1 + j);
      const double f3 = ph.f3 * tract * uniform(1 - j, 1 + j);
      const double f0_start =
          f0_base * (1.0 + f0_slope * double(pos - onset) / double(total));
      const double f0_end =
          f0_base * (1.0 + f0_slope * double(pos + len - onset) / double(total));
      const int harmonics = static_cast<int>(7800.0 / std::max(f0_start, f0_end));
      std::vector<double> amp(harmonics + 1);
      for (int h = 1; h <= harmonics; ++h) {
        const double f = h * 0.5 * (f0_start + f0_end);
        amp[h] = formant_gain(f, f1, f2, f3) / std::sqrt(double(h));
      }
      for (std::size_t i = 0; i < len; ++i) {
        const double f0 = f0_start + (f0_end - f0_start) * double(i) / double(len);
        phase += kTwoPi * f0 / kSampleRate;
        double v = 0.0;
        for (int h = 1; h <= harmonics; ++h) v += amp[h] * std::sin(h * phase);
        seg[i] = v;
      }
    } else {
      seg = band_noise(rng, len, ph.f1 * tract, std::min(ph.f2 * tract, 7900.0));
    }
    double energy = 0.0;
    for (double v : seg) energy += v * v;
    const double norm = energy > 0 ? 1.0 / std::sqrt(energy / double(len)) : 0.0;
    const double level = ph.voiced ? 1.0 : 0.45;
    for (std::size_t i = 0; i < len && pos + i < speech.size(); ++i) {
      double env = 1.0;
      if (i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * i / ramp);
      if (len - i <= ramp) {
        env *= 0.5 - 0.5 * std::cos(std::numbers::pi * (len - i) / ramp);
      }
      speech[pos + i] += seg[i] * norm * level * env;
    }
    pos += len;
  }

  double speech_energy = 0.0;
  for (std::size_t i = onset; i < std::min(pos, speech.size()); ++i) {
    speech_energy += speech[i] * speech[i];
  }
  const double speech_rms =
      std::sqrt(speech_energy / double(std::max<std::size_t>(1, pos - onset)));
  const double snr_db = uniform(opts.min_snr_db, opts.max_snr_db);
  const double noise_rms = speech_rms / std::pow(10.0, snr_db / 20.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  double peak = 0.0;
  std::vector<double> mixed(kClipSamples);
  double brown = 0.0;
  for (int i = 0; i < kClipSamples; ++i) {
    brown = 0.98 * brown + 0.2 * normal(rng);
    mixed[i] = speech[i] + noise_rms * (0.7 * normal(rng) + 0.5 * brown);
    peak = std::max(peak, std::abs(mixed[i]));
  }
  Waveform w;
  w.samples.resize(kClipSamples);
  const double scale = peak > 0 ? gain / peak : 0.0;
  for (int i = 0; i < kClipSamples; ++i) {
    w.samples[i] = static_cast<float>(mixed[i] * scale);
  }
  return w;
}

void synthesize_corpus(const fs::path& root, const SynthOptions& opts) {
  const auto names = synth_keyword_names(opts.num_keywords);
  if (opts.clips_per_keyword < 1) {
    throw ConfigError("clips_per_keyword must be positive");
  }
  for (int k = 0; k < opts.num_keywords; ++k) {
    const fs::path dir = root / names[k];
    fs::create_directories(dir);
    for (int c = 0; c < opts.clips_per_keyword; ++c) {
      char file[32];
      std::snprintf(file, sizeof(file), "clip_%04d.wav", c);
      write_wav(dir / file, synthesize_clip(k, c, opts));
    }
  }
}

}  // namespace kwsinc
