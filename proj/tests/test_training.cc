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

#include "doctest.h"
#include "kwsinc/clip_cache.h"
#include "kwsinc/errors.h"
#include "kwsinc/memory.h"
#include "kwsinc/model.h"
#include "kwsinc/random.h"
#include "kwsinc/synth.h"
#include "kwsinc/training.h"
#include "oracles.h"

using namespace kwsinc;
using Eigen::MatrixXd;

namespace {

MatrixXd random_logits(int rows, int cols, std::uint64_t seed, double scale = 2.0) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

MatrixXd one_hot_rows(std::initializer_list<int> labels, int classes) {
  MatrixXd t = MatrixXd::Zero(Eigen::Index(labels.size()), classes);
  int r = 0;
  for (int l : labels) t(r++, l) = 1.0;
  return t;
}

// In-memory corpus of `classes` synthetic keywords.
struct Toy {
  ClipCache clips{"/nonexistent"};
  std::vector<UtteranceRecord> records;
  std::vector<std::string> keywords;

  Toy(int classes, int per_class) {
    SynthOptions opts;
    opts.seed = 5;
    keywords = synth_keyword_names(classes);
    for (int k = 0; k < classes; ++k) {
      for (int i = 0; i < per_class; ++i) {
        UtteranceRecord r;
        r.keyword = keywords[k];
        r.id = r.keyword + "/" + std::to_string(i);
        clips.put(r, synthesize_clip(k, i, opts));
        records.push_back(r);
      }
    }
  }
  TrainContext context() {
    TrainContext ctx;
    ctx.clips = &clips;
    ctx.class_of = [this](const std::string& k) {
      return int(std::find(keywords.begin(), keywords.end(), k) - keywords.begin());
    };
    return ctx;
  }
};

}  // namespace

TEST_CASE("cross entropy closed forms") {
  MatrixXd confident = MatrixXd::Zero(1, 5);
  confident(0, 2) = 30.0;
  CHECK(ce_loss(confident, one_hot_rows({2}, 5)).value < 1e-6);
  CHECK(ce_loss(MatrixXd::Zero(3, 18), one_hot_rows({0, 5, 17}, 18)).value ==
        doctest::Approx(std::log(18.0)));
  MatrixXd mixed = MatrixXd::Zero(1, 10);
  mixed(0, 2) = mixed(0, 5) = 0.5;
  CHECK(ce_loss(MatrixXd::Zero(1, 10), mixed).value == doctest::Approx(std::log(10.0)));
  CHECK_THROWS_AS(ce_loss(MatrixXd::Zero(2, 4), MatrixXd::Zero(2, 5)), ContractError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
  MatrixXd z = random_logits(4, 6, 1);
  MatrixXd y = MatrixXd::Zero(4, 6);
  y(0, 1) = 1.0;
  y(1, 2) = 0.3;
  y(1, 4) = 0.7;
  y(2, 5) = 1.0;
  y(3, 0) = 1.0;
  const auto lv = ce_loss(z, y);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double num = oracle::central_difference(
        [&] { return ce_loss(z, y).value; }, z.data()[i], 1e-6);
    CHECK(oracle::relative_error(num, lv.grad.data()[i]) < 1e-6);
  }
}

TEST_CASE("distillation closed forms") {
  const MatrixXd zero = MatrixXd::Zero(1, 2);
  CHECK(kd_loss(zero, zero, 2.0, 2).value == doctest::Approx(std::log(2.0)));
  CHECK(kd_loss(random_logits(3, 5, 2), random_logits(3, 4, 3), 2.0, 0).value == 0.0);
  CHECK_THROWS_AS(kd_loss(zero, zero, 0.0, 2), ParameterError);
  CHECK_THROWS_AS(kd_loss(zero, zero, 2.0, 3), ContractError);
}

TEST_CASE("distillation gradient on random 4 x 10 logits") {
  MatrixXd s = random_logits(4, 10, 4);
  const MatrixXd t = random_logits(4, 10, 5);
  const auto lv = kd_loss(s, t, 2.0, 7);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double num = oracle::central_difference(
        [&] { return kd_loss(s, t, 2.0, 7).value; }, s.data()[i], 1e-5);
    const double ana = lv.grad.data()[i];
    if (i / 4 >= 7) {
      CHECK(ana == 0.0);  // columns beyond the old classes
      continue;
    }
    worst = std::max(worst, oracle::relative_error(num, ana));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("distillation is minimised by the teacher and equals its entropy there") {
  for (std::uint64_t seed : {10, 11, 12}) {
    const MatrixXd t = random_logits(3, 6, seed);
    const double at_teacher = kd_loss(t, t, 2.0, 6).value;
    const MatrixXd p = predict_proba(t, 2.0);
    const double entropy = -(p.array() * p.array().log()).sum() / 3.0;
    CHECK(at_teacher == doctest::Approx(entropy).epsilon(1e-12));
    for (std::uint64_t k = 0; k < 5; ++k) {
      const MatrixXd moved = t + random_logits(3, 6, 100 + k, 0.5);
      CHECK(kd_loss(moved, t, 2.0, 6).value >= at_teacher);
    }
  }
}

TEST_CASE("T^2 scaling multiplies loss and gradient") {
  const MatrixXd s = random_logits(2, 5, 6), t = random_logits(2, 5, 7);
  const auto plain = kd_loss(s, t, 3.0, 4, false);
  const auto scaled = kd_loss(s, t, 3.0, 4, true);
  CHECK(scaled.value == doctest::Approx(9.0 * plain.value));
  CHECK(scaled.grad.isApprox(9.0 * plain.grad));
}

TEST_CASE("mixing coefficient") {
  CHECK(mixing_coefficient(0, 15) == 1.0);
  CHECK(mixing_coefficient(15, 18) == doctest::Approx(0.4082).epsilon(1e-4));
  CHECK(mixing_coefficient(18, 18) == 0.0);
  double last = 1.0;
  for (int old = 1; old <= 30; ++old) {
    const double l = mixing_coefficient(old, 30);
    CHECK(l < last);
    CHECK(l >= 0.0);
    last = l;
  }
  CHECK_THROWS_AS(mixing_coefficient(19, 18), ContractError);
  CHECK_THROWS_AS(mixing_coefficient(0, 0), ContractError);
}

TEST_CASE("total loss blends exactly") {
  const MatrixXd s = random_logits(4, 18, 8), t = random_logits(4, 15, 9);
  const MatrixXd y = one_hot_rows({0, 16, 17, 3}, 18);
  KDConfig kd;
  const auto tl = total_loss(s, y, &t, 15, kd);
  const auto& b = tl.breakdown;
  CHECK(b.lambda == doctest::Approx(std::sqrt(1.0 / 6.0)));
  CHECK(b.total - (b.lambda * b.ce + (1.0 - b.lambda) * b.kd) == 0.0);
  CHECK(b.ce >= 0.0);
  CHECK(b.kd >= 0.0);

  kd.enabled = false;
  const auto off = total_loss(s, y, &t, 15, kd);
  CHECK(off.breakdown.kd == 0.0);
  CHECK(off.breakdown.total == off.breakdown.ce);
  CHECK(total_loss(s, y, nullptr, 15, KDConfig{}).breakdown.total ==
        off.breakdown.ce);

  // lambda = 0.4082, ce = 2, kd = 1 -> 1.408
  const double l = mixing_coefficient(15, 18);
  CHECK(l * 2.0 + (1.0 - l) * 1.0 == doctest::Approx(1.408).epsilon(1e-3));
}

TEST_CASE("Adam takes the bias-corrected first step") {
  std::vector<Parameter> params = {{"w", MatrixXd::Constant(2, 1, 1.0)}};
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  Adam adam(opt, params);
  Gradients g = {MatrixXd::Constant(2, 1, 3.0)};
  adam.step(params, g);
  // m_hat = g, v_hat = g^2: the step is lr * g / (|g| + eps).
  CHECK(params[0].value(0, 0) == doctest::Approx(1.0 - 0.1 * 3.0 / (3.0 + 1e-8)));
}

TEST_CASE("loss on a fixed batch decreases over 20 steps at lr 1e-3") {
  Toy toy(3, 4);
  ClassifierConfig cfg;
  cfg.num_classes = 3;
  TcResNet m(cfg, 3);
  std::vector<const MfccFeature*> feats;
  MatrixXd y = MatrixXd::Zero(12, 3);
  for (std::size_t i = 0; i < toy.records.size(); ++i) {
    feats.push_back(&toy.clips.features(toy.records[i]));
    y(Eigen::Index(i), int(i / 4)) = 1.0;
  }
  const FeatureBatch x = make_batch(feats);
  OptimizerConfig opt;
  opt.learning_rate = 1e-3;
  Adam adam(opt, m.parameters());
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 20; ++step) {
    ForwardCache cache;
    const auto lv = ce_loss(m.forward_train(x, cache), y);
    if (step == 0) first = lv.value;
    last = lv.value;
    adam.step(m.parameters(), m.backward(cache, lv.grad));
  }
  CHECK(last < 0.5 * first);
}

TEST_CASE("train_task with lr 0 leaves parameters unchanged") {
  Toy toy(2, 5);
  ClassifierConfig cfg;
  cfg.num_classes = 2;
  TcResNet m(cfg, 4);
  const auto before = m.parameters();
  OptimizerConfig opt;
  opt.learning_rate = 0.0;
  opt.epochs = 1;
  opt.batch_size = 4;
  auto ctx = toy.context();
  const auto r = train_task(m, nullptr, toy.records, ExemplarStore{}, 0, opt,
                            KDConfig{}, AugmentConfig{}, ctx);
  CHECK(r.epochs.size() == 1);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(m.parameters()[i].value == before[i].value);
  }
}

TEST_CASE("train_task keeps the teacher fixed, is deterministic and logs") {
  Toy toy(4, 6);
  ClassifierConfig cfg;
  cfg.num_classes = 2;
  TcResNet base(cfg, 6);
  const ModelSnapshot teacher = snapshot(base);
  std::vector<const MfccFeature*> feats;
  for (const auto& r : toy.records) feats.push_back(&toy.clips.features(r));
  const FeatureBatch x = make_batch(feats);
  const Logits t0 = teacher.forward(x);

  std::vector<UtteranceRecord> task1;
  ExemplarStore store;
  for (const auto& r : toy.records) {
    if (r.keyword == toy.keywords[2] || r.keyword == toy.keywords[3]) {
      task1.push_back(r);
    } else if (store.size() < 4) {
      store.entries.push_back({r, std::nullopt, 0});
    }
  }
  OptimizerConfig opt;
  opt.learning_rate = 1e-3;
  opt.epochs = 2;
  opt.batch_size = 8;
  opt.seed = 77;
  AugmentConfig aug;
  auto ctx = toy.context();

  TcResNet a = expand_head(base, 4), b = expand_head(base, 4);
  const auto ra = train_task(a, &teacher, task1, store, 1, opt, KDConfig{}, aug, ctx);
  const auto rb = train_task(b, &teacher, task1, store, 1, opt, KDConfig{}, aug, ctx);
  CHECK(teacher.forward(x) == t0);
  CHECK(a.forward(x) == b.forward(x));
  REQUIRE(ra.epochs.size() == 2);
  for (const auto& e : ra.epochs) {
    CHECK(e.task == 1);
    CHECK(e.lambda == doctest::Approx(std::sqrt(0.5)));
    CHECK(e.ce > 0.0);
    CHECK(e.kd > 0.0);
    CHECK(e.total == doctest::Approx(e.lambda * e.ce + (1 - e.lambda) * e.kd));
    CHECK(e.train_acc >= 0.0);
    CHECK(e.train_acc <= 1.0);
  }
  CHECK(a.parameters().front().value != base.parameters().front().value);
}

TEST_CASE("train_task contract errors") {
  Toy toy(2, 3);
  ClassifierConfig cfg;
  cfg.num_classes = 1;
  TcResNet m(cfg, 1);
  auto ctx = toy.context();
  OptimizerConfig opt;
  opt.epochs = 1;
  CHECK_THROWS_AS(train_task(m, nullptr, {}, ExemplarStore{}, 0, opt, KDConfig{},
                             AugmentConfig{}, ctx),
                  ContractError);
  // Second keyword is outside a one-class head.
  CHECK_THROWS_AS(train_task(m, nullptr, toy.records, ExemplarStore{}, 0, opt,
                             KDConfig{}, AugmentConfig{}, ctx),
                  ContractError);
}

TEST_CASE("augmentation names") {
  for (auto a : {Augmentation::kNone, Augmentation::kMixup, Augmentation::kSpecAugment}) {
    CHECK(parse_augmentation(augmentation_name(a)) == a);
  }
  CHECK_THROWS_AS(parse_augmentation("cutmix"), ConfigError);
}
