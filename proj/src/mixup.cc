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

#include <random>

#include "kwsinc/dsp.h"
#include "kwsinc/errors.h"
#include "kwsinc/random.h"

namespace kwsinc {

SoftLabel one_hot(int cls, int num_classes) {
  if (cls < 0 || cls >= num_classes) {
    throw ParameterError("one_hot: class " + std::to_string(cls) +
                         " outside [0, " + std::to_string(num_classes) + ")");
  }
  SoftLabel y;
  y.probabilities.assign(num_classes, 0.0);
  y.probabilities[cls] = 1.0;
  return y;
}

MixupResult mixup_with_weight(const Waveform& a, const Waveform& b,
                              const SoftLabel& ya, const SoftLabel& yb,
                              double weight) {
  if (a.samples.size() != b.samples.size()) {
    throw ParameterError("mixup: waveform length mismatch");
  }
  if (ya.probabilities.size() != yb.probabilities.size()) {
    throw ParameterError("mixup: label width mismatch");
  }
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw ParameterError("mixup: weight outside [0, 1]");
  }
  MixupResult out;
  out.weight = weight;
  out.wave.rate = a.rate;
  out.wave.samples.resize(a.samples.size());
  const double rest = 1.0 - weight;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    out.wave.samples[i] =
        static_cast<float>(weight * a.samples[i] + rest * b.samples[i]);
  }
  out.label.probabilities.resize(ya.probabilities.size());
  for (std::size_t i = 0; i < ya.probabilities.size(); ++i) {
    out.label.probabilities[i] =
        weight * ya.probabilities[i] + rest * yb.probabilities[i];
  }
  return out;
}

double draw_mixup_weight(double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw ParameterError("mixup: alpha must be > 0");
  Rng rng(derive_seed(seed, "mixup"));
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  if (x + y <= 0.0) return 0.5;
  return x / (x + y);
}

MixupResult mixup(const Waveform& a, const Waveform& b, const SoftLabel& ya,
                  const SoftLabel& yb, double alpha, std::uint64_t seed) {
  return mixup_with_weight(a, b, ya, yb, draw_mixup_weight(alpha, seed));
}

}  // namespace kwsinc
