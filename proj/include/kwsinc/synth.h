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

#ifndef KWSINC_SYNTH_H_
#define KWSINC_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kwsinc/dsp.h"

namespace kwsinc {

// Synthetic keyword corpus in the Speech Commands layout. Each keyword is a
// fixed sequence of vowel (formant-filtered harmonic) and fricative
// (band-passed noise) segments; every clip draws its own speaker pitch,
// vocal-tract scale, speaking rate, onset, gain and background noise.
struct SynthOptions {
  int num_keywords = 10;
  int clips_per_keyword = 120;
  std::uint64_t seed = 1;
  double min_snr_db = 0.0;
  double max_snr_db = 20.0;
  // Per-segment random formant jitter (fraction).
  double formant_jitter = 0.08;
};

// Up to 30 Speech-Commands-style keyword names.
std::vector<std::string> synth_keyword_names(int count);

Waveform synthesize_clip(int keyword_index, int clip_index,
                         const SynthOptions& opts);

// Writes <root>/<keyword>/clip_NNNN.wav. Existing files are overwritten.
void synthesize_corpus(const std::filesystem::path& root,
                       const SynthOptions& opts);

}  // namespace kwsinc

#endif  // KWSINC_SYNTH_H_
