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

#ifndef KWSINC_RANDOM_H_
#define KWSINC_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace kwsinc {

using Rng = std::mt19937_64;

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

// Seed for a named sub-stream. Same (seed, tag, index) -> same value on
// every platform.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                          std::uint64_t index = 0);

// Index in [0, bound) taken as rng() % bound.
std::uint64_t uniform_index(Rng& rng, std::uint64_t bound);

// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform_unit(Rng& rng);

// Fisher-Yates from the back: for i = n-1..1 swap(v[i], v[uniform_index(i+1)]).
// Written out explicitly because std::shuffle is not portable across
// standard libraries and split/stream assignment must be reproducible.
template <typename T>
void seeded_shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace kwsinc

#endif  // KWSINC_RANDOM_H_
