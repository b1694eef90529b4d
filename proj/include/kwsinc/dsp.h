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

#ifndef KWSINC_DSP_H_
#define KWSINC_DSP_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace kwsinc {

inline constexpr int kSampleRate = 16000;
inline constexpr int kClipSamples = 16000;

// One-second mono clip; samples in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int rate = kSampleRate;
};

// Zero-pads at the end or truncates the tail to exactly kClipSamples.
Waveform normalize_length(Waveform w);

// Reads PCM RIFF/WAVE (8/16/24/32-bit integer or 32-bit float, any channel
// count, any rate). Channels are averaged, the result is resampled to
// 16 kHz when needed and then padded/trimmed to one second.
// Throws DecodeError.
Waveform load_wav(const std::filesystem::path& path);

// Same as load_wav but keeps the decoded length (no pad/trim, no resample).
Waveform decode_wav(std::span<const std::uint8_t> bytes);

// Header-only probe used when scanning a corpus. Throws DecodeError.
struct WavInfo {
  int rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::int64_t frames = 0;
  double duration_s() const { return rate ? double(frames) / rate : 0.0; }
};
WavInfo probe_wav(const std::filesystem::path& path);

// Writes 16-bit PCM mono. Samples are clamped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& w);

// ---------------------------------------------------------------------------
// MFCC frontend.
//
// Fixed chain: pre-emphasis 0.97, 25 ms periodic Hann window, 10 ms hop,
// 512-point power spectrum, 64 HTK-mel triangular filters over 20 Hz - 8 kHz,
// natural log with floor 1e-10, orthonormal DCT-II keeping 40 coefficients.
// ---------------------------------------------------------------------------
struct MfccOptions {
  double preemphasis = 0.97;
  int window_samples = 400;
  int hop_samples = 160;
  int fft_size = 512;
  int num_mel_filters = 64;
  double low_hz = 20.0;
  double high_hz = 8000.0;
  double log_floor = 1e-10;
  int num_coefficients = 40;
};

inline constexpr int kMfccCoefficients = 40;
inline constexpr int kMfccFrames = 1 + (kClipSamples - 400) / 160;  // 98

// Coefficient x frame matrix, 40 x 98 for a one-second clip.
struct MfccFeature {
  Eigen::MatrixXd coefficients;
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Edges of the mel filterbank in Hz: num_mel_filters + 2 points.
std::vector<double> mel_edges_hz(const MfccOptions& opts = {});

MfccFeature compute_mfcc(const Waveform& w);

// ---------------------------------------------------------------------------
// Perturbations used by the uncertainty estimate.
// ---------------------------------------------------------------------------
enum class Perturbation {
  kClippingDistortion,
  kTimeMask,
  kShift,
  kPitchShift,
  kFrequencyMask,
};
inline constexpr int kNumPerturbations = 5;
inline constexpr Perturbation kAllPerturbations[kNumPerturbations] = {
    Perturbation::kClippingDistortion, Perturbation::kTimeMask,
    Perturbation::kShift, Perturbation::kPitchShift,
    Perturbation::kFrequencyMask};

std::string_view perturbation_name(Perturbation p);

// Magnitude ranges:
//   ClippingDistortion  amplitude percentile p in [80, 99]
//   TimeMask            window width in ms, [0, 100]
//   Shift               shift in ms, [-100, 100], zero-filled
//   PitchShift          semitones, [-2, 2]
//   FrequencyMask       mel filter index in [0, 63]; the support of that
//                       filter is removed with a band-stop
struct PerturbationSpec {
  Perturbation strategy = Perturbation::kShift;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
  // TimeMask start in seconds; drawn from seed when absent.
  std::optional<double> offset_s;
};

struct MagnitudeRange {
  double lo;
  double hi;
};
MagnitudeRange magnitude_range(Perturbation p);

// One seeded draw of the magnitude, uniform over the strategy's range.
PerturbationSpec draw_perturbation(Perturbation p, std::uint64_t seed);

// Pure function of (w, spec). Output keeps length 16000. Throws
// ParameterError when the magnitude is outside its range.
Waveform perturb(const Waveform& w, const PerturbationSpec& spec);

// ---------------------------------------------------------------------------
// Mixup.
// ---------------------------------------------------------------------------
struct SoftLabel {
  std::vector<double> probabilities;
};

SoftLabel one_hot(int cls, int num_classes);

struct MixupResult {
  Waveform wave;
  SoftLabel label;
  double weight = 1.0;  // weight on the first input
};

// weight * (a, ya) + (1 - weight) * (b, yb). Throws ParameterError on
// length mismatch or weight outside [0, 1].
MixupResult mixup_with_weight(const Waveform& a, const Waveform& b,
                              const SoftLabel& ya, const SoftLabel& yb,
                              double weight);

// Draws weight ~ Beta(alpha, alpha) from seed.
double draw_mixup_weight(double alpha, std::uint64_t seed);

MixupResult mixup(const Waveform& a, const Waveform& b, const SoftLabel& ya,
                  const SoftLabel& yb, double alpha, std::uint64_t seed);

}  // namespace kwsinc

#endif  // KWSINC_DSP_H_
