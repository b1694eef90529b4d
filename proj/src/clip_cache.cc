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

#include "kwsinc/clip_cache.h"

namespace kwsinc {

const Waveform& ClipCache::waveform(const UtteranceRecord& r) {
  auto it = waves_.find(r.id);
  if (it == waves_.end()) {
    it = waves_.emplace(r.id, load_wav(root_ / r.path)).first;
  }
  return it->second;
}

const MfccFeature& ClipCache::features(const UtteranceRecord& r) {
  auto it = features_.find(r.id);
  if (it == features_.end()) {
    it = features_.emplace(r.id, compute_mfcc(waveform(r))).first;
  }
  return it->second;
}

void ClipCache::put(const UtteranceRecord& r, Waveform w) {
  features_.erase(r.id);
  waves_[r.id] = normalize_length(std::move(w));
}

}  // namespace kwsinc
