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

#ifndef KWSINC_MEMORY_H_
#define KWSINC_MEMORY_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "kwsinc/clip_cache.h"
#include "kwsinc/dataset.h"
#include "kwsinc/model.h"

namespace kwsinc {

enum class SamplerKind { kRainbow, kRandom, kMeanClosest, kNone };

std::string_view sampler_name(SamplerKind kind);
// Throws ConfigError for unknown names.
SamplerKind parse_sampler(std::string_view name);

struct UncertaintyScore {
  double value = 0.0;  // in [0, 1]
};

struct ExemplarEntry {
  UtteranceRecord record;
  std::optional<double> uncertainty;  // set by the rainbow sampler only
  int task_added = 0;
};

// Budgeted rehearsal memory.
struct ExemplarStore {
  int budget = 0;
  std::vector<ExemplarEntry> entries;
  std::vector<std::string> warnings;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::map<std::string, int> class_counts() const;
  std::vector<UtteranceRecord> records() const;
};

struct ClassGroup {
  std::string keyword;
  std::vector<ExemplarEntry> members;
};

// One group per keyword, keyword-sorted; members keep input order.
std::vector<ClassGroup> group_by_keyword(std::span<const ExemplarEntry> candidates);

// Per-class quotas for a budget. Base share budget / classes; the remainder
// goes one slot each to the largest pools (ties by group order). Slots a
// class cannot fill are handed to the largest pools that still have spare
// candidates. Sum of quotas = min(budget, total candidates).
std::vector<int> class_quotas(std::span<const std::size_t> pool_sizes,
                              int budget);

// Evenly spaced ranks round(i * n / q), i = 0..q-1; a clash advances to the
// next unselected rank.
std::vector<std::size_t> stride_ranks(std::size_t n, std::size_t q);

// u = 1 - mean of the true-class probabilities.
UncertaintyScore uncertainty_from_probabilities(std::span<const double> probs);

// Runs the clip through all five perturbations (one seeded magnitude draw
// each) and scores u from the temperature-1 softmax of the current head.
// Throws ContractError when true_class is outside the head.
UncertaintyScore estimate_uncertainty(const TcResNet& model, const Waveform& clip,
                                      int true_class, std::uint64_t seed);

// Batched form of estimate_uncertainty.
std::vector<UncertaintyScore> estimate_uncertainties(
    const TcResNet& model, std::span<const Waveform* const> clips,
    std::span<const int> true_classes, std::span<const std::uint64_t> seeds);

// Rainbow selection: per class, members sorted by u descending (ties by
// id) and taken at stride_ranks(|D_c|, quota).
ExemplarStore diversity_select(std::span<const ClassGroup> groups, int budget);

// Uniform sample without replacement: id-sorted candidates, seeded
// Fisher-Yates, first min(budget, n).
ExemplarStore random_select(std::span<const ExemplarEntry> candidates,
                            int budget, std::uint64_t seed);

// Per class, the quota members nearest (Euclidean) to the class mean
// embedding; ties broken by lower id. embeddings row i belongs to
// candidates[i].
ExemplarStore mean_closest_select(std::span<const ExemplarEntry> candidates,
                                  const Eigen::MatrixXd& embeddings, int budget);

struct SamplerContext {
  const TcResNet* model = nullptr;
  ClipCache* clips = nullptr;
  std::function<int(const std::string&)> class_of;
  std::uint64_t seed = 0;
};

// Candidates = old store U incoming (incoming tagged with `task`); the
// chosen sampler builds the replacement store. Requires model and clips
// for rainbow / mean_closest.
ExemplarStore update_memory(const ExemplarStore& store,
                            std::span<const UtteranceRecord> incoming, int task,
                            SamplerKind kind, int budget, SamplerContext& ctx);

// CSV: "# budget=<L>" then header
// "id,keyword,relative_path,split,uncertainty,task_added"; uncertainty is
// written with 17 significant digits or left empty.
void write_exemplar_manifest(const std::filesystem::path& file,
                             const ExemplarStore& store);
ExemplarStore read_exemplar_manifest(const std::filesystem::path& file);

}  // namespace kwsinc

#endif  // KWSINC_MEMORY_H_
