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

#include <cmath>
#include <complex>
#include <numbers>

#include <fftw3.h>

#include "kwsinc/dsp.h"
#include "kwsinc/errors.h"

namespace kwsinc {
namespace {

class MfccComputer {
 public:
  explicit MfccComputer(const MfccOptions& opts) : opts_(opts) {
    const int n = opts_.window_samples;
    window_.resize(n);
    for (int i = 0; i < n; ++i) {
      window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    }

    const int bins = opts_.fft_size / 2 + 1;
    const auto edges = mel_edges_hz(opts_);
    mel_weights_ = Eigen::MatrixXd::Zero(opts_.num_mel_filters, bins);
    for (int m = 0; m < opts_.num_mel_filters; ++m) {
      const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
      for (int k = 0; k < bins; ++k) {
        const double f = double(k) * kSampleRate / opts_.fft_size;
        const double up = (f - lo) / (center - lo);
        const double down = (hi - f) / (hi - center);
        mel_weights_(m, k) = std::max(0.0, std::min(up, down));
      }
    }

    const int mels = opts_.num_mel_filters;
    dct_.resize(opts_.num_coefficients, mels);
    for (int c = 0; c < opts_.num_coefficients; ++c) {
      const double scale = std::sqrt((c == 0 ? 1.0 : 2.0) / mels);
      for (int m = 0; m < mels; ++m) {
        dct_(c, m) =
            scale * std::cos(std::numbers::pi * c * (m + 0.5) / mels);
      }
    }

    std::vector<double> in(opts_.fft_size);
    std::vector<std::complex<double>> out(bins);
    plan_ = fftw_plan_dft_r2c_1d(
        opts_.fft_size, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
  }

  ~MfccComputer() { fftw_destroy_plan(plan_); }
  MfccComputer(const MfccComputer&) = delete;
  MfccComputer& operator=(const MfccComputer&) = delete;

  MfccFeature compute(const Waveform& w) const {
    if (w.samples.size() != static_cast<std::size_t>(kClipSamples)) {
      throw ContractError("compute_mfcc expects a normalized 16000-sample clip");
    }
    const int n = opts_.window_samples;
    const int frames = 1 + (kClipSamples - n) / opts_.hop_samples;
    const int bins = opts_.fft_size / 2 + 1;

    std::vector<double> emphasized(kClipSamples);
    emphasized[0] = w.samples[0];
    for (int i = 1; i < kClipSamples; ++i) {
      emphasized[i] = double(w.samples[i]) - opts_.preemphasis * w.samples[i - 1];
    }

    Eigen::MatrixXd power(bins, frames);
    std::vector<double> buf(opts_.fft_size, 0.0);
    std::vector<std::complex<double>> spec(bins);
    for (int f = 0; f < frames; ++f) {
      const double* src = emphasized.data() + f * opts_.hop_samples;
      for (int i = 0; i < n; ++i) buf[i] = src[i] * window_[i];
      fftw_execute_dft_r2c(plan_, buf.data(),
                           reinterpret_cast<fftw_complex*>(spec.data()));
      for (int k = 0; k < bins; ++k) power(k, f) = std::norm(spec[k]);
    }

    Eigen::MatrixXd log_mel = mel_weights_ * power;
    log_mel = log_mel.array().max(opts_.log_floor).log().matrix();
    MfccFeature out;
    out.coefficients = dct_ * log_mel;
    return out;
  }

 private:
  MfccOptions opts_;
  std::vector<double> window_;
  Eigen::MatrixXd mel_weights_;
  Eigen::MatrixXd dct_;
  fftw_plan plan_;
};

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> mel_edges_hz(const MfccOptions& opts) {
  const double lo = hz_to_mel(opts.low_hz);
  const double hi = hz_to_mel(opts.high_hz);
  const int points = opts.num_mel_filters + 2;
  std::vector<double> edges(points);
  for (int i = 0; i < points; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (points - 1));
  }
  return edges;
}

MfccFeature compute_mfcc(const Waveform& w) {
  // FFTW's planner is not reentrant; the plan itself is safe to execute
  // concurrently on distinct buffers.
  static const MfccComputer computer{MfccOptions{}};
  return computer.compute(w);
}

}  // namespace kwsinc
