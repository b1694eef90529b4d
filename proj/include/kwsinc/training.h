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

#ifndef KWSINC_TRAINING_H_
#define KWSINC_TRAINING_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "kwsinc/clip_cache.h"
#include "kwsinc/dataset.h"
#include "kwsinc/memory.h"
#include "kwsinc/model.h"

namespace kwsinc {

struct KDConfig {
  double temperature = 2.0;
  bool enabled = true;
  // Multiply the distillation term by T^2 (off: plain tempered CE).
  bool scale_by_t2 = false;
};

struct LossBreakdown {
  double ce = 0.0;
  double kd = 0.0;
  double lambda = 1.0;
  double total = 0.0;
};

struct OptimizerConfig {
  double learning_rate = 0.1;
  int batch_size = 128;
  int epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

enum class Augmentation { kNone, kMixup, kSpecAugment };

std::string_view augmentation_name(Augmentation a);
Augmentation parse_augmentation(std::string_view name);

struct AugmentConfig {
  Augmentation kind = Augmentation::kMixup;
  double mixup_alpha = 0.2;
  // Mixed pairs appended to each batch, as a fraction of its clean size.
  double mixup_fraction = 1.0;
};

// A scalar loss and its gradient with respect to the logits.
struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd grad;
};

// Batch mean of -sum_i y_i log softmax(o)_i. targets rows are distributions
// over the same classes as the logits. Throws ContractError on shape
// mismatch.
LossValue ce_loss(const Logits& logits, const Eigen::MatrixXd& targets);

// Batch mean of -sum_{i < old} softmax(teacher/T)_i log softmax(student/T)_i
// over the first old_classes columns. The gradient has the student's shape
// (zero beyond old_classes); no gradient flows to the teacher. Returns 0
// when old_classes == 0.
LossValue kd_loss(const Logits& student, const Logits& teacher,
                  double temperature, int old_classes, bool scale_by_t2 = false);

// sqrt(1 - old/total). Throws ContractError unless 0 <= old <= total, total > 0.
double mixing_coefficient(int old_classes, int total_classes);

struct TotalLoss {
  LossBreakdown breakdown;
  Eigen::MatrixXd grad;
};

// lambda * CE + (1 - lambda) * KD; pure CE when KD is disabled or there is
// no teacher (teacher == nullptr or old_classes == 0).
TotalLoss total_loss(const Logits& student, const Eigen::MatrixXd& targets,
                     const Logits* teacher, int old_classes,
                     const KDConfig& kd);

class Adam {
 public:
  Adam(const OptimizerConfig& config, const std::vector<Parameter>& params);
  void step(std::vector<Parameter>& params, const Gradients& grads);

 private:
  OptimizerConfig config_;
  std::vector<Eigen::MatrixXd> m_;
  std::vector<Eigen::MatrixXd> v_;
  long t_ = 0;
};

struct EpochLog {
  int task = 0;
  int epoch = 0;
  double ce = 0.0;
  double kd = 0.0;
  double lambda = 1.0;
  double total = 0.0;
  double train_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double final_train_accuracy = 0.0;
};

struct TrainContext {
  ClipCache* clips = nullptr;
  std::function<int(const std::string&)> class_of;
};

// Trains the student on task_train U store for optimizer.epochs epochs.
// The student head must already cover every class in the data. The
// teacher (nullable) is only read. Deterministic for a fixed optimizer seed.
TrainResult train_task(TcResNet& student, const ModelSnapshot* teacher,
                       std::span<const UtteranceRecord> task_train,
                       const ExemplarStore& store, int task_index,
                       const OptimizerConfig& optimizer, const KDConfig& kd,
                       const AugmentConfig& augment, TrainContext& ctx);

}  // namespace kwsinc

#endif  // KWSINC_TRAINING_H_
