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

#include "kwsinc/memory.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "kwsinc/errors.h"
#include "kwsinc/random.h"

namespace kwsinc {
namespace {

bool by_id(const ExemplarEntry& a, const ExemplarEntry& b) {
  return a.record.id < b.record.id;
}

constexpr std::size_t kUncertaintyChunk = 64;

}  // namespace

std::string_view sampler_name(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kRainbow:
      return "rainbow";
    case SamplerKind::kRandom:
      return "random";
    case SamplerKind::kMeanClosest:
      return "mean_closest";
    case SamplerKind::kNone:
      return "none";
  }
  return "unknown";
}

SamplerKind parse_sampler(std::string_view name) {
  if (name == "rainbow") return SamplerKind::kRainbow;
  if (name == "random") return SamplerKind::kRandom;
  if (name == "mean_closest") return SamplerKind::kMeanClosest;
  if (name == "none") return SamplerKind::kNone;
  throw ConfigError("unknown sampler '" + std::string(name) +
                    "' (expected rainbow, random, mean_closest or none)");
}

std::map<std::string, int> ExemplarStore::class_counts() const {
  std::map<std::string, int> counts;
  for (const auto& e : entries) ++counts[e.record.keyword];
  return counts;
}

std::vector<UtteranceRecord> ExemplarStore::records() const {
  std::vector<UtteranceRecord> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.record);
  return out;
}

std::vector<ClassGroup> group_by_keyword(
    std::span<const ExemplarEntry> candidates) {
  std::map<std::string, std::vector<ExemplarEntry>> groups;
  for (const auto& c : candidates) groups[c.record.keyword].push_back(c);
  std::vector<ClassGroup> out;
  out.reserve(groups.size());
  for (auto& [keyword, members] : groups) {
    out.push_back({keyword, std::move(members)});
  }
  return out;
}

std::vector<int> class_quotas(std::span<const std::size_t> pool_sizes,
                              int budget) {
  const std::size_t n = pool_sizes.size();
  std::vector<int> quota(n, 0);
  if (n == 0 || budget <= 0) return quota;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pool_sizes[a] > pool_sizes[b];
  });
  const int base = budget / static_cast<int>(n);
  const int remainder = budget % static_cast<int>(n);
  for (std::size_t i = 0; i < n; ++i) {
    quota[order[i]] = base + (static_cast<int>(i) < remainder ? 1 : 0);
  }

  long surplus = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const int cap = static_cast<int>(pool_sizes[c]);
    if (quota[c] > cap) {
      surplus += quota[c] - cap;
      quota[c] = cap;
    }
  }
  while (surplus > 0) {
    std::size_t best = n;
    std::size_t best_spare = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t spare = pool_sizes[c] - std::size_t(quota[c]);
      if (spare > best_spare) {
        best = c;
        best_spare = spare;
      }
    }
    if (best == n) break;
    ++quota[best];
    --surplus;
  }
  return quota;
}

std::vector<std::size_t> stride_ranks(std::size_t n, std::size_t q) {
  std::vector<std::size_t> ranks;
  if (q >= n) {
    ranks.resize(n);
    std::iota(ranks.begin(), ranks.end(), 0);
    return ranks;
  }
  std::vector<bool> taken(n, false);
  for (std::size_t i = 0; i < q; ++i) {
    // round(i * n / q), half up, in exact integer arithmetic.
    std::size_t r = (2 * i * n + q) / (2 * q);
    r = std::min(r, n - 1);
    while (taken[r]) r = (r + 1) % n;
    taken[r] = true;
    ranks.push_back(r);
  }
  return ranks;
}

UncertaintyScore uncertainty_from_probabilities(std::span<const double> probs) {
  if (probs.empty()) throw ContractError("uncertainty of zero perturbations");
  double sum = 0.0;
  for (double p : probs) sum += p;
  const double u = 1.0 - sum / double(probs.size());
  return {std::clamp(u, 0.0, 1.0)};
}

std::vector<UncertaintyScore> estimate_uncertainties(
    const TcResNet& model, std::span<const Waveform* const> clips,
    std::span<const int> true_classes, std::span<const std::uint64_t> seeds) {
  if (clips.size() != true_classes.size() || clips.size() != seeds.size()) {
    throw ContractError("estimate_uncertainties: argument sizes differ");
  }
  for (int c : true_classes) {
    if (c < 0 || c >= model.num_classes()) {
      throw ContractError("class " + std::to_string(c) +
                          " not covered by a head of size " +
                          std::to_string(model.num_classes()));
    }
  }
  std::vector<UncertaintyScore> out(clips.size());
  std::vector<MfccFeature> features;
  for (std::size_t start = 0; start < clips.size(); start += kUncertaintyChunk) {
    const std::size_t end = std::min(clips.size(), start + kUncertaintyChunk);
    features.clear();
    for (std::size_t i = start; i < end; ++i) {
      for (Perturbation p : kAllPerturbations) {
        features.push_back(
            compute_mfcc(perturb(*clips[i], draw_perturbation(p, seeds[i]))));
      }
    }
    const Eigen::MatrixXd probs = predict_proba(model.forward(make_batch(features)));
    for (std::size_t i = start; i < end; ++i) {
      double p[kNumPerturbations];
      for (int k = 0; k < kNumPerturbations; ++k) {
        p[k] = probs(Eigen::Index((i - start) * kNumPerturbations + k),
                     true_classes[i]);
      }
      out[i] = uncertainty_from_probabilities(p);
    }
  }
  return out;
}

UncertaintyScore estimate_uncertainty(const TcResNet& model, const Waveform& clip,
                                      int true_class, std::uint64_t seed) {
  const Waveform* clips[] = {&clip};
  const int classes[] = {true_class};
  const std::uint64_t seeds[] = {seed};
  return estimate_uncertainties(model, clips, classes, seeds).front();
}

ExemplarStore diversity_select(std::span<const ClassGroup> groups, int budget) {
  ExemplarStore store;
  store.budget = budget;
  std::vector<std::size_t> pools;
  for (const auto& g : groups) pools.push_back(g.members.size());
  if (budget < static_cast<int>(groups.size())) {
    store.warnings.push_back(
        "memory budget " + std::to_string(budget) + " is smaller than the " +
        std::to_string(groups.size()) +
        " classes; only the largest pools receive a slot");
  }
  const std::vector<int> quota = class_quotas(pools, budget);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<ExemplarEntry> members = groups[g].members;
    for (const auto& m : members) {
      if (!m.uncertainty) {
        throw ContractError("diversity_select: " + m.record.id +
                            " has no uncertainty");
      }
    }
    std::sort(members.begin(), members.end(),
              [](const ExemplarEntry& a, const ExemplarEntry& b) {
                if (*a.uncertainty != *b.uncertainty) {
                  return *a.uncertainty > *b.uncertainty;
                }
                return a.record.id < b.record.id;
              });
    for (std::size_t r : stride_ranks(members.size(), std::size_t(quota[g]))) {
      store.entries.push_back(members[r]);
    }
  }
  return store;
}

ExemplarStore random_select(std::span<const ExemplarEntry> candidates,
                            int budget, std::uint64_t seed) {
  std::vector<ExemplarEntry> pool(candidates.begin(), candidates.end());
  std::sort(pool.begin(), pool.end(), by_id);
  Rng rng(derive_seed(seed, "random_select"));
  seeded_shuffle(pool, rng);
  ExemplarStore store;
  store.budget = budget;
  const std::size_t keep =
      std::min<std::size_t>(pool.size(), std::size_t(std::max(budget, 0)));
  store.entries.assign(pool.begin(), pool.begin() + keep);
  std::sort(store.entries.begin(), store.entries.end(), by_id);
  return store;
}

ExemplarStore mean_closest_select(std::span<const ExemplarEntry> candidates,
                                  const Eigen::MatrixXd& embeddings,
                                  int budget) {
  if (embeddings.rows() != Eigen::Index(candidates.size())) {
    throw ContractError("mean_closest_select: one embedding row per candidate");
  }
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    by_class[candidates[i].record.keyword].push_back(i);
  }
  std::vector<std::size_t> pools;
  for (const auto& [k, idx] : by_class) pools.push_back(idx.size());
  const std::vector<int> quota = class_quotas(pools, budget);

  ExemplarStore store;
  store.budget = budget;
  std::size_t g = 0;
  for (const auto& [keyword, idx] : by_class) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(embeddings.cols());
    for (std::size_t i : idx) mean += embeddings.row(Eigen::Index(i));
    mean /= double(idx.size());
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i : idx) {
      scored.emplace_back((embeddings.row(Eigen::Index(i)) - mean).norm(), i);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return candidates[a.second].record.id < candidates[b.second].record.id;
    });
    for (int q = 0; q < quota[g]; ++q) {
      store.entries.push_back(candidates[scored[q].second]);
    }
    ++g;
  }
  return store;
}

ExemplarStore update_memory(const ExemplarStore& store,
                            std::span<const UtteranceRecord> incoming, int task,
                            SamplerKind kind, int budget, SamplerContext& ctx) {
  if (budget < 0) throw ConfigError("memory budget must be >= 0");
  if (kind == SamplerKind::kNone) {
    ExemplarStore empty;
    empty.budget = budget;
    return empty;
  }

  std::vector<ExemplarEntry> candidates;
  std::set<std::string> seen;
  for (const auto& e : store.entries) {
    if (seen.insert(e.record.id).second) candidates.push_back(e);
  }
  for (const auto& r : incoming) {
    if (seen.insert(r.id).second) candidates.push_back({r, std::nullopt, task});
  }

  switch (kind) {
    case SamplerKind::kRandom: {
      for (auto& c : candidates) c.uncertainty.reset();
      return random_select(candidates, budget,
                           derive_seed(ctx.seed, "memory", std::uint64_t(task)));
    }
    case SamplerKind::kRainbow: {
      if (!ctx.model || !ctx.clips || !ctx.class_of) {
        throw ContractError("rainbow sampler needs a model, clips and labels");
      }
      std::vector<const Waveform*> clips;
      std::vector<int> classes;
      std::vector<std::uint64_t> seeds;
      for (const auto& c : candidates) {
        clips.push_back(&ctx.clips->waveform(c.record));
        classes.push_back(ctx.class_of(c.record.keyword));
        seeds.push_back(
            derive_seed(ctx.seed, "uncertainty:" + c.record.id, std::uint64_t(task)));
      }
      const auto scores = estimate_uncertainties(*ctx.model, clips, classes, seeds);
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        candidates[i].uncertainty = scores[i].value;
      }
      const auto groups = group_by_keyword(candidates);
      return diversity_select(groups, budget);
    }
    case SamplerKind::kMeanClosest: {
      if (!ctx.model || !ctx.clips) {
        throw ContractError("mean_closest sampler needs a model and clips");
      }
      for (auto& c : candidates) c.uncertainty.reset();
      Eigen::MatrixXd embeddings(Eigen::Index(candidates.size()),
                                 ctx.model->config().channel_plan[3]);
      std::vector<const MfccFeature*> chunk;
      for (std::size_t start = 0; start < candidates.size();
           start += kUncertaintyChunk) {
        const std::size_t end =
            std::min(candidates.size(), start + kUncertaintyChunk);
        chunk.clear();
        for (std::size_t i = start; i < end; ++i) {
          chunk.push_back(&ctx.clips->features(candidates[i].record));
        }
        embeddings.middleRows(Eigen::Index(start), Eigen::Index(end - start)) =
            ctx.model->embed(make_batch(chunk));
      }
      return mean_closest_select(candidates, embeddings, budget);
    }
    case SamplerKind::kNone:
      break;
  }
  throw ConfigError("unknown sampler kind");
}

void write_exemplar_manifest(const std::filesystem::path& file,
                             const ExemplarStore& store) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << "# budget=" << store.budget << '\n';
  out << "id,keyword,relative_path,split,uncertainty,task_added\n";
  char buf[64];
  for (const auto& e : store.entries) {
    out << e.record.id << ',' << e.record.keyword << ','
        << e.record.path.generic_string() << ',' << split_name(e.record.split)
        << ',';
    if (e.uncertainty) {
      std::snprintf(buf, sizeof(buf), "%.17g", *e.uncertainty);
      out << buf;
    }
    out << ',' << e.task_added << '\n';
  }
}

ExemplarStore read_exemplar_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read " + file.string());
  const std::string name = file.string();
  std::string line;
  int line_no = 1;
  ExemplarStore store;
  if (!std::getline(in, line) || line.rfind("# budget=", 0) != 0) {
    throw ParseError(name, line_no, "expected '# budget=<L>'");
  }
  try {
    store.budget = std::stoi(line.substr(9));
  } catch (const std::exception&) {
    throw ParseError(name, line_no, "bad budget value");
  }
  ++line_no;
  if (!std::getline(in, line) ||
      line != "id,keyword,relative_path,split,uncertainty,task_added") {
    throw ParseError(name, line_no, "unexpected header");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw ParseError(name, line_no, "expected 6 fields");
    ExemplarEntry e;
    e.record.id = f[0];
    e.record.keyword = f[1];
    e.record.path = f[2];
    if (f[3] == "train") {
      e.record.split = Split::kTrain;
    } else if (f[3] == "test") {
      e.record.split = Split::kTest;
    } else {
      throw ParseError(name, line_no, "unknown split '" + f[3] + "'");
    }
    try {
      if (!f[4].empty()) e.uncertainty = std::stod(f[4]);
      e.task_added = std::stoi(f[5]);
    } catch (const std::exception&) {
      throw ParseError(name, line_no, "bad numeric field");
    }
    store.entries.push_back(std::move(e));
  }
  return store;
}

}  // namespace kwsinc
