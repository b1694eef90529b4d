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
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "kwsinc/clip_cache.h"
#include "kwsinc/errors.h"
#include "kwsinc/memory.h"
#include "kwsinc/model.h"
#include "kwsinc/synth.h"
#include "oracles.h"

using namespace kwsinc;
namespace fs = std::filesystem;

namespace {

ExemplarEntry entry(const std::string& keyword, int i,
                    std::optional<double> u = std::nullopt) {
  ExemplarEntry e;
  e.record.keyword = keyword;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s/%04d", keyword.c_str(), i);
  e.record.id = buf;
  e.record.path = e.record.id + ".wav";
  e.uncertainty = u;
  return e;
}

std::vector<std::string> ids(const ExemplarStore& s) {
  std::vector<std::string> out;
  for (const auto& e : s.entries) out.push_back(e.record.id);
  return out;
}

void zero_head(TcResNet& model) {
  for (auto& p : model.parameters()) {
    if (p.name.rfind("head.", 0) == 0) p.value.setZero();
  }
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("kwsinc_test_memory_" + name);
}

}  // namespace

TEST_CASE("group_by_keyword partitions candidates") {
  std::vector<ExemplarEntry> c;
  for (int i = 0; i < 3; ++i) {
    c.push_back(entry("b", i));
    c.push_back(entry("a", i));
  }
  const auto groups = group_by_keyword(c);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].keyword == "a");
  CHECK(groups[1].keyword == "b");
  CHECK(groups[0].members.size() == 3);
  CHECK(groups[1].members.size() == 3);
  for (const auto& g : groups) {
    for (const auto& m : g.members) CHECK(m.record.keyword == g.keyword);
  }
  CHECK(group_by_keyword(std::vector<ExemplarEntry>{}).empty());

  std::vector<ExemplarEntry> same = {entry("x", 0), entry("x", 1)};
  CHECK(group_by_keyword(same).size() == 1);

  std::vector<ExemplarEntry> disjoint = {entry("old1", 0), entry("old2", 0),
                                         entry("new1", 0), entry("new2", 0),
                                         entry("new3", 0)};
  CHECK(group_by_keyword(disjoint).size() == 5);
}

TEST_CASE("class quotas") {
  const std::vector<std::size_t> pools(18, 30);
  const auto q = class_quotas(pools, 500);
  int total = 0;
  for (int v : q) {
    CHECK((v == 27 || v == 28));
    total += v;
  }
  CHECK(total == 500);

  const std::vector<std::size_t> uneven = {2, 50, 50};
  const auto u = class_quotas(uneven, 30);
  CHECK(u[0] == 2);
  CHECK(u[0] + u[1] + u[2] == 30);
  CHECK(std::abs(u[1] - u[2]) <= 1);

  const std::vector<std::size_t> small = {3, 4};
  const auto s = class_quotas(small, 100);
  CHECK(s[0] == 3);
  CHECK(s[1] == 4);
  CHECK(class_quotas(small, 0) == std::vector<int>{0, 0});
}

TEST_CASE("stride ranks match the oracle") {
  CHECK(stride_ranks(10, 5) == std::vector<std::size_t>{0, 2, 4, 6, 8});
  for (std::size_t n = 1; n <= 50; ++n) {
    for (std::size_t q = 1; q <= n; ++q) {
      const auto got = stride_ranks(n, q);
      CHECK(got == oracle::stride_ranks(n, q));
      CHECK(std::set<std::size_t>(got.begin(), got.end()).size() == q);
    }
  }
}

TEST_CASE("diversity_select single class") {
  ClassGroup g{"k", {}};
  for (int i = 0; i < 10; ++i) g.members.push_back(entry("k", i, 0.05 * i));
  const std::vector<ClassGroup> groups = {g};
  const auto store = diversity_select(groups, 5);
  // Descending u puts member 9 at rank 0, member 8 at rank 1, ...
  CHECK(ids(store) ==
        std::vector<std::string>{"k/0009", "k/0007", "k/0005", "k/0003", "k/0001"});
  CHECK(store.budget == 5);

  const auto all = diversity_select(groups, 20);
  CHECK(all.size() == 10);
}

TEST_CASE("diversity_select three classes of thirty") {
  std::vector<ClassGroup> groups;
  for (const std::string k : {"a", "b", "c"}) {
    ClassGroup g{k, {}};
    for (int i = 0; i < 30; ++i) g.members.push_back(entry(k, i, i / 30.0));
    groups.push_back(g);
  }
  const auto store = diversity_select(groups, 30);
  CHECK(store.size() == 30);
  const auto counts = store.class_counts();
  for (const auto& [k, n] : counts) CHECK(n == 10);
  const auto chosen = ids(store);
  for (const std::string k : {"a", "b", "c"}) {
    // Rank 0 (max u) is always taken; the last stride point is rank 27.
    CHECK(std::count(chosen.begin(), chosen.end(), k + "/0029") == 1);
    CHECK(std::count(chosen.begin(), chosen.end(), k + "/0002") == 1);
    CHECK(std::count(chosen.begin(), chosen.end(), k + "/0000") == 0);
  }
}

TEST_CASE("diversity_select ties and errors") {
  ClassGroup g{"k", {}};
  for (int i = 5; i >= 0; --i) g.members.push_back(entry("k", i, 0.5));
  const std::vector<ClassGroup> groups = {g};
  CHECK(ids(diversity_select(groups, 3)) ==
        std::vector<std::string>{"k/0000", "k/0002", "k/0004"});

  ClassGroup bad{"k", {entry("k", 0)}};
  const std::vector<ClassGroup> bad_groups = {bad};
  CHECK_THROWS_AS(diversity_select(bad_groups, 1), ContractError);

  std::vector<ClassGroup> many;
  for (const std::string k : {"a", "b", "c"}) many.push_back({k, {entry(k, 0, 0.1)}});
  const auto short_budget = diversity_select(many, 2);
  CHECK(short_budget.size() == 2);
  CHECK(!short_budget.warnings.empty());
}

TEST_CASE("random_select matches the shuffle-prefix oracle") {
  std::vector<ExemplarEntry> c;
  for (int k = 0; k < 10; ++k) {
    for (int i = 0; i < 50; ++i) c.push_back(entry("kw" + std::to_string(k), i));
  }
  std::vector<ExemplarEntry> reversed(c.rbegin(), c.rend());
  const std::uint64_t seed = 42;
  const auto store = random_select(reversed, 50, seed);

  std::vector<std::string> sorted_ids;
  for (const auto& e : c) sorted_ids.push_back(e.record.id);
  std::sort(sorted_ids.begin(), sorted_ids.end());
  auto expected = oracle::shuffled(sorted_ids, oracle::seed_for(seed, "random_select"));
  expected.resize(50);
  std::sort(expected.begin(), expected.end());
  CHECK(ids(store) == expected);

  CHECK(ids(random_select(c, 50, seed)) == ids(store));
  CHECK(ids(random_select(c, 50, seed + 1)) != ids(store));
  CHECK(random_select(c, 1000, seed).size() == 500);
  CHECK(random_select(c, 0, seed).empty());
}

TEST_CASE("mean_closest_select") {
  std::vector<ExemplarEntry> c = {entry("k", 0), entry("k", 1), entry("k", 2),
                                  entry("k", 9)};
  Eigen::MatrixXd emb(4, 1);
  emb << 0, 1, 2, 9;
  CHECK(ids(mean_closest_select(c, emb, 2)) ==
        std::vector<std::string>{"k/0002", "k/0001"});

  // Input order does not matter.
  std::vector<ExemplarEntry> p = {c[3], c[1], c[0], c[2]};
  Eigen::MatrixXd pe(4, 1);
  pe << 9, 1, 0, 2;
  CHECK(ids(mean_closest_select(p, pe, 2)) ==
        std::vector<std::string>{"k/0002", "k/0001"});

  // Identical embeddings fall back to the lowest ids.
  std::vector<ExemplarEntry> tied = {entry("t", 3), entry("t", 1), entry("t", 2)};
  const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(3, 4);
  CHECK(ids(mean_closest_select(tied, same, 2)) ==
        std::vector<std::string>{"t/0001", "t/0002"});

  CHECK_THROWS_AS(mean_closest_select(c, Eigen::MatrixXd::Zero(3, 1), 2),
                  ContractError);
}

TEST_CASE("uncertainty from probabilities") {
  const std::vector<double> sure(5, 1.0);
  CHECK(uncertainty_from_probabilities(sure).value == 0.0);
  const std::vector<double> ramp = {0.5, 0.6, 0.7, 0.8, 0.9};
  CHECK(uncertainty_from_probabilities(ramp).value == doctest::Approx(0.3).epsilon(1e-12));
  const std::vector<double> none(5, 0.0);
  CHECK(uncertainty_from_probabilities(none).value == 1.0);
  CHECK_THROWS_AS(uncertainty_from_probabilities(std::vector<double>{}), ContractError);

  // Raising any true-class probability lowers u.
  std::vector<double> up = ramp;
  up[2] = 0.95;
  CHECK(uncertainty_from_probabilities(up).value < uncertainty_from_probabilities(ramp).value);
}

TEST_CASE("estimate_uncertainty on a uniform head") {
  ClassifierConfig cfg;
  cfg.num_classes = 30;
  TcResNet model(cfg, 3);
  zero_head(model);
  SynthOptions opts;
  const Waveform clip = synthesize_clip(0, 0, opts);
  const double u = estimate_uncertainty(model, clip, 7, 11).value;
  CHECK(u == doctest::Approx(1.0 - 1.0 / 30.0).epsilon(1e-12));
  CHECK(estimate_uncertainty(model, clip, 7, 11).value == u);
  CHECK_THROWS_AS(estimate_uncertainty(model, clip, 30, 11), ContractError);
  CHECK_THROWS_AS(estimate_uncertainty(model, clip, -1, 11), ContractError);

  TcResNet trained_like(cfg, 4);
  const double v = estimate_uncertainty(trained_like, clip, 2, 11).value;
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
}

TEST_CASE("update_memory dispatch") {
  const int classes = 18;
  const int per_class = 30;
  ClipCache clips("/nonexistent");
  SynthOptions opts;
  opts.seed = 9;
  const auto keywords = synth_keyword_names(classes);
  std::vector<UtteranceRecord> incoming;
  for (int k = 0; k < classes; ++k) {
    for (int i = 0; i < per_class; ++i) {
      UtteranceRecord r;
      r.keyword = keywords[k];
      r.id = r.keyword + "/" + std::to_string(i);
      clips.put(r, synthesize_clip(k, i, opts));
      incoming.push_back(r);
    }
  }
  ClassifierConfig cfg;
  cfg.num_classes = classes;
  TcResNet model(cfg, 1);
  SamplerContext ctx;
  ctx.model = &model;
  ctx.clips = &clips;
  ctx.class_of = [&](const std::string& k) {
    return int(std::find(keywords.begin(), keywords.end(), k) - keywords.begin());
  };
  ctx.seed = 17;

  const ExemplarStore empty;
  const auto none = update_memory(empty, incoming, 0, SamplerKind::kNone, 500, ctx);
  CHECK(none.empty());

  const auto rainbow = update_memory(empty, incoming, 0, SamplerKind::kRainbow, 500, ctx);
  CHECK(rainbow.size() == 500);
  for (const auto& [k, n] : rainbow.class_counts()) CHECK((n == 27 || n == 28));
  for (const auto& e : rainbow.entries) {
    REQUIRE(e.uncertainty.has_value());
    CHECK(*e.uncertainty >= 0.0);
    CHECK(*e.uncertainty <= 1.0);
  }
  const auto again = update_memory(empty, incoming, 0, SamplerKind::kRainbow, 500, ctx);
  CHECK(ids(again) == ids(rainbow));

  // Old exemplars and new records share one candidate pool.
  std::vector<UtteranceRecord> half(incoming.begin(), incoming.begin() + 60);
  const auto small = update_memory(empty, half, 1, SamplerKind::kRandom, 20, ctx);
  CHECK(small.size() == 20);
  const auto next = update_memory(small, half, 2, SamplerKind::kRandom, 40, ctx);
  CHECK(next.size() == 40);
  for (const auto& e : next.entries) CHECK((e.task_added == 1 || e.task_added == 2));

  const auto icarl = update_memory(empty, half, 0, SamplerKind::kMeanClosest, 10, ctx);
  CHECK(icarl.size() == 10);

  CHECK_THROWS_AS(update_memory(empty, half, 0, SamplerKind::kRandom, -1, ctx),
                  ConfigError);
  SamplerContext bare;
  CHECK_THROWS_AS(update_memory(empty, half, 0, SamplerKind::kRainbow, 10, bare),
                  ContractError);
  CHECK_THROWS_AS(parse_sampler("herding"), ConfigError);
  CHECK(parse_sampler("mean_closest") == SamplerKind::kMeanClosest);
}

TEST_CASE("exemplar manifest round trip") {
  ExemplarStore store;
  store.budget = 7;
  store.entries = {entry("a", 1, 0.1 + 0.2), entry("b", 2), entry("c", 3, 1.0 / 3.0)};
  store.entries[1].task_added = 2;
  const fs::path file = temp_file("roundtrip.csv");
  write_exemplar_manifest(file, store);
  const auto back = read_exemplar_manifest(file);
  CHECK(back.budget == 7);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.entries[i].record.id == store.entries[i].record.id);
    CHECK(back.entries[i].record.keyword == store.entries[i].record.keyword);
    CHECK(back.entries[i].record.path == store.entries[i].record.path);
    CHECK(back.entries[i].uncertainty == store.entries[i].uncertainty);
    CHECK(back.entries[i].task_added == store.entries[i].task_added);
  }

  const fs::path bad = temp_file("bad.csv");
  std::ofstream(bad) << "# budget=3\nid,keyword\n";
  try {
    read_exemplar_manifest(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(read_exemplar_manifest(temp_file("missing.csv")), DataError);
  fs::remove(file);
  fs::remove(bad);
}
