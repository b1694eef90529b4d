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

#ifndef KWSINC_CLIP_CACHE_H_
#define KWSINC_CLIP_CACHE_H_

#include <filesystem>
#include <string>
#include <unordered_map>

#include "kwsinc/dataset.h"
#include "kwsinc/dsp.h"

namespace kwsinc {

// Loads clips on first use and memoizes waveforms and their MFCCs by id.
// Not thread-safe.
class ClipCache {
 public:
  explicit ClipCache(std::filesystem::path source_root)
      : root_(std::move(source_root)) {}

  const Waveform& waveform(const UtteranceRecord& r);
  const MfccFeature& features(const UtteranceRecord& r);

  // Inserts an in-memory clip under r.id (tests, synthetic data).
  void put(const UtteranceRecord& r, Waveform w);

  std::size_t size() const { return waves_.size(); }

 private:
  std::filesystem::path root_;
  std::unordered_map<std::string, Waveform> waves_;
  std::unordered_map<std::string, MfccFeature> features_;
};

}  // namespace kwsinc

#endif  // KWSINC_CLIP_CACHE_H_
