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
#include <complex>
#include <string>

#include <fftw3.h>

#include "kwsinc/dsp.h"
#include "kwsinc/errors.h"
#include "kwsinc/random.h"

namespace kwsinc {
namespace {

constexpr double kMsToSamples = kSampleRate / 1000.0;

// Value at percentile p of |x|, linear interpolation between order stats.
double abs_percentile(const std::vector<float>& x, double p) {
  std::vector<double> mags(x.size());
  std::transform(x.begin(), x.end(), mags.begin(),
                 [](float v) { return std::abs(double(v)); });
  std::sort(mags.begin(), mags.end());
  const double pos = p / 100.0 * double(mags.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, mags.size() - 1);
  return mags[lo] + (mags[hi] - mags[lo]) * (pos - double(lo));
}

Waveform clip(const Waveform& w, double percentile) {
  const double t = abs_percentile(w.samples, percentile);
  Waveform out = w;
  for (float& s : out.samples) {
    s = static_cast<float>(std::clamp(double(s), -t, t));
  }
  return out;
}

Waveform time_mask(const Waveform& w, const PerturbationSpec& spec) {
  const auto width = static_cast<std::size_t>(std::lround(spec.magnitude * kMsToSamples));
  const std::size_t n = w.samples.size();
  std::size_t start;
  if (spec.offset_s) {
    if (*spec.offset_s < 0.0) throw ParameterError("TimeMask offset < 0");
    start = static_cast<std::size_t>(std::lround(*spec.offset_s * kSampleRate));
  } else {
    Rng rng(derive_seed(spec.seed, "time_mask.offset"));
    start = static_cast<std::size_t>(uniform_index(rng, n - width + 1));
  }
  Waveform out = w;
  const std::size_t end = std::min(n, start + width);
  for (std::size_t i = std::min(start, n); i < end; ++i) out.samples[i] = 0.0f;
  return out;
}

Waveform shift(const Waveform& w, double ms) {
  const long offset = std::lround(ms * kMsToSamples);
  const long n = static_cast<long>(w.samples.size());
  Waveform out = w;
  for (long i = 0; i < n; ++i) {
    const long src = i - offset;
    out.samples[i] = (src >= 0 && src < n) ? w.samples[src] : 0.0f;
  }
  return out;
}

// Resample by 2^(semitones/12) and keep the original length: content is
// compressed (zero tail) for upward shifts and truncated for downward ones.
Waveform pitch_shift(const Waveform& w, double semitones) {
  const double ratio = std::pow(2.0, semitones / 12.0);
  const std::size_t n = w.samples.size();
  Waveform out = w;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = double(i) * ratio;
    const auto i0 = static_cast<std::size_t>(x);
    if (i0 >= n) {
      out.samples[i] = 0.0f;
      continue;
    }
    const double frac = x - double(i0);
    const double a = w.samples[i0];
    const double b = i0 + 1 < n ? w.samples[i0 + 1] : 0.0;
    out.samples[i] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

class BandStop {
 public:
  BandStop() : time_(kClipSamples), freq_(kClipSamples / 2 + 1) {
    forward_ = fftw_plan_dft_r2c_1d(
        kClipSamples, time_.data(), reinterpret_cast<fftw_complex*>(freq_.data()),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse_ = fftw_plan_dft_c2r_1d(
        kClipSamples, reinterpret_cast<fftw_complex*>(freq_.data()), time_.data(),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~BandStop() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  BandStop(const BandStop&) = delete;
  BandStop& operator=(const BandStop&) = delete;

  Waveform apply(const Waveform& w, double lo_hz, double hi_hz) const {
    std::vector<double> time(w.samples.begin(), w.samples.end());
    std::vector<std::complex<double>> freq(kClipSamples / 2 + 1);
    fftw_execute_dft_r2c(forward_, time.data(),
                         reinterpret_cast<fftw_complex*>(freq.data()));
    for (std::size_t k = 0; k < freq.size(); ++k) {
      const double f = double(k) * kSampleRate / kClipSamples;
      if (f >= lo_hz && f <= hi_hz) freq[k] = 0.0;
    }
    fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex*>(freq.data()),
                         time.data());
    Waveform out = w;
    for (std::size_t i = 0; i < time.size(); ++i) {
      out.samples[i] = static_cast<float>(
          std::clamp(time[i] / kClipSamples, -1.0, 1.0));
    }
    return out;
  }

 private:
  std::vector<double> time_;
  std::vector<std::complex<double>> freq_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

Waveform frequency_mask(const Waveform& w, double band) {
  static const BandStop band_stop;
  static const std::vector<double> edges = mel_edges_hz();
  const auto m = static_cast<std::size_t>(std::lround(band));
  return band_stop.apply(w, edges[m], edges[m + 2]);
}

}  // namespace

std::string_view perturbation_name(Perturbation p) {
  switch (p) {
    case Perturbation::kClippingDistortion:
      return "clipping_distortion";
    case Perturbation::kTimeMask:
      return "time_mask";
    case Perturbation::kShift:
      return "shift";
    case Perturbation::kPitchShift:
      return "pitch_shift";
    case Perturbation::kFrequencyMask:
      return "frequency_mask";
  }
  return "unknown";
}

MagnitudeRange magnitude_range(Perturbation p) {
  switch (p) {
    case Perturbation::kClippingDistortion:
      return {80.0, 99.0};
    case Perturbation::kTimeMask:
      return {0.0, 100.0};
    case Perturbation::kShift:
      return {-100.0, 100.0};
    case Perturbation::kPitchShift:
      return {-2.0, 2.0};
    case Perturbation::kFrequencyMask:
      return {0.0, double(MfccOptions{}.num_mel_filters - 1)};
  }
  throw ParameterError("unknown perturbation");
}

PerturbationSpec draw_perturbation(Perturbation p, std::uint64_t seed) {
  Rng rng(derive_seed(seed, perturbation_name(p)));
  const MagnitudeRange r = magnitude_range(p);
  PerturbationSpec spec;
  spec.strategy = p;
  spec.seed = seed;
  if (p == Perturbation::kFrequencyMask) {
    spec.magnitude = double(uniform_index(rng, std::uint64_t(r.hi) + 1));
  } else {
    spec.magnitude = r.lo + (r.hi - r.lo) * uniform_unit(rng);
  }
  return spec;
}

Waveform perturb(const Waveform& w, const PerturbationSpec& spec) {
  if (w.samples.size() != static_cast<std::size_t>(kClipSamples)) {
    throw ContractError("perturb expects a normalized 16000-sample clip");
  }
  const MagnitudeRange r = magnitude_range(spec.strategy);
  if (!(spec.magnitude >= r.lo && spec.magnitude <= r.hi)) {
    throw ParameterError(std::string(perturbation_name(spec.strategy)) +
                         " magnitude " + std::to_string(spec.magnitude) +
                         " outside [" + std::to_string(r.lo) + ", " +
                         std::to_string(r.hi) + "]");
  }
  switch (spec.strategy) {
    case Perturbation::kClippingDistortion:
      return clip(w, spec.magnitude);
    case Perturbation::kTimeMask:
      return time_mask(w, spec);
    case Perturbation::kShift:
      return shift(w, spec.magnitude);
    case Perturbation::kPitchShift:
      return pitch_shift(w, spec.magnitude);
    case Perturbation::kFrequencyMask:
      return frequency_mask(w, spec.magnitude);
  }
  throw ParameterError("unknown perturbation");
}

}  // namespace kwsinc
