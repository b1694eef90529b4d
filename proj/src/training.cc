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

#include "kwsinc/training.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "kwsinc/errors.h"
#include "kwsinc/random.h"

namespace kwsinc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd log_softmax_rows(const MatrixXd& z) {
  const VectorXd row_max = z.rowwise().maxCoeff();
  MatrixXd shifted = z.colwise() - row_max;
  const VectorXd log_sum = shifted.array().exp().rowwise().sum().log();
  shifted.colwise() -= log_sum;
  return shifted;
}

int argmax_row(const MatrixXd& m, Eigen::Index row) {
  Eigen::Index best;
  m.row(row).maxCoeff(&best);
  return static_cast<int>(best);
}

// Zeroes one random span of frames and one random band of coefficients.
void spec_augment(MfccFeature& f, Rng& rng) {
  const auto frames = static_cast<std::uint64_t>(f.coefficients.cols());
  const auto coeffs = static_cast<std::uint64_t>(f.coefficients.rows());
  const auto t_width = uniform_index(rng, 11);
  const auto t_start = uniform_index(rng, frames - t_width + 1);
  f.coefficients.middleCols(Eigen::Index(t_start), Eigen::Index(t_width)).setZero();
  const auto c_width = uniform_index(rng, 6);
  const auto c_start = uniform_index(rng, coeffs - c_width + 1);
  f.coefficients.middleRows(Eigen::Index(c_start), Eigen::Index(c_width)).setZero();
}

}  // namespace

std::string_view augmentation_name(Augmentation a) {
  switch (a) {
    case Augmentation::kNone:
      return "none";
    case Augmentation::kMixup:
      return "mixup";
    case Augmentation::kSpecAugment:
      return "specaugment";
  }
  return "unknown";
}

Augmentation parse_augmentation(std::string_view name) {
  if (name == "none") return Augmentation::kNone;
  if (name == "mixup") return Augmentation::kMixup;
  if (name == "specaugment") return Augmentation::kSpecAugment;
  throw ConfigError("unknown augmentation '" + std::string(name) +
                    "' (expected mixup, specaugment or none)");
}

LossValue ce_loss(const Logits& logits, const MatrixXd& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ContractError("ce_loss: logits " + std::to_string(logits.rows()) +
                        "x" + std::to_string(logits.cols()) + " vs targets " +
                        std::to_string(targets.rows()) + "x" +
                        std::to_string(targets.cols()));
  }
  const double batch = double(logits.rows());
  const MatrixXd log_p = log_softmax_rows(logits);
  LossValue out;
  out.value = -(targets.array() * log_p.array()).sum() / batch;
  const VectorXd mass = targets.rowwise().sum();
  out.grad = (mass.asDiagonal() * log_p.array().exp().matrix() - targets) / batch;
  return out;
}

LossValue kd_loss(const Logits& student, const Logits& teacher,
                  double temperature, int old_classes, bool scale_by_t2) {
  if (!(temperature > 0.0)) throw ParameterError("KD temperature must be > 0");
  LossValue out;
  out.grad = MatrixXd::Zero(student.rows(), student.cols());
  if (old_classes == 0) return out;
  if (old_classes < 0 || student.cols() < old_classes ||
      teacher.cols() < old_classes || student.rows() != teacher.rows()) {
    throw ContractError("kd_loss: logits do not cover the old classes");
  }
  const double batch = double(student.rows());
  const MatrixXd log_q =
      log_softmax_rows(student.leftCols(old_classes) / temperature);
  const MatrixXd p =
      log_softmax_rows(teacher.leftCols(old_classes) / temperature).array().exp();
  const double scale = scale_by_t2 ? temperature * temperature : 1.0;
  out.value = -scale * (p.array() * log_q.array()).sum() / batch;
  out.grad.leftCols(old_classes) =
      scale * (log_q.array().exp().matrix() - p) / (temperature * batch);
  return out;
}

double mixing_coefficient(int old_classes, int total_classes) {
  if (total_classes <= 0 || old_classes < 0 || old_classes > total_classes) {
    throw ContractError("mixing_coefficient needs 0 <= old <= total, total > 0");
  }
  return std::sqrt(1.0 - double(old_classes) / double(total_classes));
}

TotalLoss total_loss(const Logits& student, const MatrixXd& targets,
                     const Logits* teacher, int old_classes,
                     const KDConfig& kd) {
  LossValue ce = ce_loss(student, targets);
  TotalLoss out;
  if (!kd.enabled || teacher == nullptr || old_classes == 0) {
    out.breakdown = {ce.value, 0.0, 1.0, ce.value};
    out.grad = std::move(ce.grad);
    return out;
  }
  const LossValue distill =
      kd_loss(student, *teacher, kd.temperature, old_classes, kd.scale_by_t2);
  const double lambda =
      mixing_coefficient(old_classes, static_cast<int>(student.cols()));
  out.breakdown.ce = ce.value;
  out.breakdown.kd = distill.value;
  out.breakdown.lambda = lambda;
  out.breakdown.total = lambda * ce.value + (1.0 - lambda) * distill.value;
  out.grad = lambda * ce.grad + (1.0 - lambda) * distill.grad;
  return out;
}

Adam::Adam(const OptimizerConfig& config, const std::vector<Parameter>& params)
    : config_(config) {
  for (const auto& p : params) {
    m_.push_back(MatrixXd::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(MatrixXd::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(std::vector<Parameter>& params, const Gradients& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ContractError("Adam::step: parameter list changed");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(t_));
  const double c2 = 1.0 - std::pow(b2, double(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
    params[i].value.array() -=
        config_.learning_rate * (m_[i].array() / c1) /
        ((v_[i].array() / c2).sqrt() + config_.epsilon);
  }
}

TrainResult train_task(TcResNet& student, const ModelSnapshot* teacher,
                       std::span<const UtteranceRecord> task_train,
                       const ExemplarStore& store, int task_index,
                       const OptimizerConfig& optimizer, const KDConfig& kd,
                       const AugmentConfig& augment, TrainContext& ctx) {
  if (!ctx.clips || !ctx.class_of) {
    throw ContractError("train_task needs clips and a label mapping");
  }
  if (optimizer.batch_size < 1 || optimizer.epochs < 0 ||
      optimizer.learning_rate < 0.0) {
    throw ConfigError("optimizer settings must be positive");
  }

  std::vector<UtteranceRecord> data(task_train.begin(), task_train.end());
  std::set<std::string> ids;
  for (const auto& r : data) ids.insert(r.id);
  for (const auto& e : store.entries) {
    if (ids.insert(e.record.id).second) data.push_back(e.record);
  }
  if (data.empty()) throw ContractError("train_task: empty training set");
  std::sort(data.begin(), data.end(),
            [](const UtteranceRecord& a, const UtteranceRecord& b) {
              return a.id < b.id;
            });

  const int classes = student.num_classes();
  std::vector<int> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    labels[i] = ctx.class_of(data[i].keyword);
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ContractError("train_task: class of " + data[i].id +
                          " outside the student head");
    }
  }
  const int old_classes = teacher ? teacher->num_classes() : 0;
  if (old_classes > classes) {
    throw ContractError("train_task: teacher head larger than student head");
  }

  Adam adam(optimizer, student.parameters());
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch_size = std::size_t(optimizer.batch_size);

  for (int epoch = 0; epoch < optimizer.epochs; ++epoch) {
    Rng rng(derive_seed(optimizer.seed, "epoch",
                        std::uint64_t(task_index) * 100000u + std::uint64_t(epoch)));
    seeded_shuffle(order, rng);
    EpochLog log;
    log.task = task_index;
    log.epoch = epoch;
    double seen = 0.0, clean = 0.0, correct = 0.0;

    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      const std::size_t n = end - start;
      // Batch-norm statistics from a single example are degenerate.
      if (n < 2 && order.size() >= 2) continue;

      // Mixup appends mixed pairs after the n clean examples.
      const std::size_t extra =
          augment.kind == Augmentation::kMixup && n >= 2
              ? std::size_t(std::llround(augment.mixup_fraction * double(n)))
              : 0;
      std::vector<MfccFeature> owned;
      owned.reserve(n + extra);
      std::vector<const MfccFeature*> feats(n + extra);
      MatrixXd targets = MatrixXd::Zero(Eigen::Index(n + extra), classes);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[start + i];
        targets(Eigen::Index(i), labels[idx]) = 1.0;
        if (augment.kind == Augmentation::kSpecAugment) {
          owned.push_back(ctx.clips->features(data[idx]));
          spec_augment(owned.back(), rng);
          feats[i] = &owned.back();
        } else {
          feats[i] = &ctx.clips->features(data[idx]);
        }
      }
      if (extra > 0) {
        std::vector<std::size_t> first(n), second(n);
        std::iota(first.begin(), first.end(), 0);
        std::iota(second.begin(), second.end(), 0);
        seeded_shuffle(first, rng);
        seeded_shuffle(second, rng);
        for (std::size_t j = 0; j < extra; ++j) {
          const std::size_t a = order[start + first[j % n]];
          const std::size_t b = order[start + second[j % n]];
          const double weight = draw_mixup_weight(augment.mixup_alpha, rng());
          const MixupResult mixed = mixup_with_weight(
              ctx.clips->waveform(data[a]), ctx.clips->waveform(data[b]),
              one_hot(labels[a], classes), one_hot(labels[b], classes), weight);
          owned.push_back(compute_mfcc(mixed.wave));
          feats[n + j] = &owned.back();
          for (int c = 0; c < classes; ++c) {
            targets(Eigen::Index(n + j), c) = mixed.label.probabilities[c];
          }
        }
      }

      const FeatureBatch batch = make_batch(feats);
      ForwardCache cache;
      const Logits logits = student.forward_train(batch, cache);
      Logits teacher_logits;
      const bool distill = kd.enabled && teacher && old_classes > 0;
      if (distill) teacher_logits = teacher->forward(batch);
      const TotalLoss loss = total_loss(logits, targets,
                                        distill ? &teacher_logits : nullptr,
                                        old_classes, kd);
      adam.step(student.parameters(), student.backward(cache, loss.grad));

      const double w = double(n + extra);
      log.ce += loss.breakdown.ce * w;
      log.kd += loss.breakdown.kd * w;
      log.lambda = loss.breakdown.lambda;
      log.total += loss.breakdown.total * w;
      for (std::size_t i = 0; i < n; ++i) {
        correct += argmax_row(logits, Eigen::Index(i)) ==
                           argmax_row(targets, Eigen::Index(i))
                       ? 1.0
                       : 0.0;
      }
      seen += w;
      clean += double(n);
    }
    if (seen > 0) {
      log.ce /= seen;
      log.kd /= seen;
      log.total /= seen;
      log.train_acc = correct / clean;
    }
    result.epochs.push_back(log);
  }
  if (!result.epochs.empty()) {
    result.final_train_accuracy = result.epochs.back().train_acc;
  }
  return result;
}

}  // namespace kwsinc
