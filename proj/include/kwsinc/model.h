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

#ifndef KWSINC_MODEL_H_
#define KWSINC_MODEL_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kwsinc/dsp.h"

namespace kwsinc {

// Temporal-convolution ResNet: the 40 MFCC coefficients are input channels
// and convolutions run along time. Stem conv (no BN), then three residual
// blocks of conv(k, stride) -> BN -> ReLU -> conv(k) -> BN plus a
// 1x1 conv(stride) -> BN shortcut, ReLU after the sum, global average
// pooling and a linear head.
struct ClassifierConfig {
  int input_channels = kMfccCoefficients;
  int input_frames = kMfccFrames;
  std::array<int, 4> channel_plan = {16, 24, 32, 48};
  int stem_kernel = 3;
  int block_kernel = 9;
  int block_stride = 2;
  int num_classes = 12;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

// Input batch: [input_channels x (batch * frames)], sample b occupying
// columns [b * frames, (b + 1) * frames).
struct FeatureBatch {
  Eigen::MatrixXd data;
  int batch = 0;
  int frames = 0;
};

FeatureBatch make_batch(std::span<const MfccFeature* const> features);
FeatureBatch make_batch(const std::vector<MfccFeature>& features);

// [batch x num_classes] unnormalized scores.
using Logits = Eigen::MatrixXd;

struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
};

// Gradients aligned with TcResNet::parameters().
using Gradients = std::vector<Eigen::MatrixXd>;

// Intermediate values kept by forward_train for backward.
struct ConvCache {
  Eigen::MatrixXd cols;  // im2col matrix
  int frames_in = 0;
};
struct BatchNormCache {
  Eigen::MatrixXd normalized;
  Eigen::VectorXd inv_std;
};
struct BlockCache {
  ConvCache conv1, conv2, shortcut;
  BatchNormCache bn1, bn2, bn_shortcut;
  Eigen::MatrixXd hidden;  // after the inner ReLU
  Eigen::MatrixXd output;  // after the outer ReLU
};
struct ForwardCache {
  int batch = 0;
  ConvCache stem;
  std::array<BlockCache, 3> blocks;
  Eigen::MatrixXd pooled;  // [48 x batch]
  int final_frames = 0;
};

class TcResNet {
 public:
  TcResNet(const ClassifierConfig& config, std::uint64_t seed);

  const ClassifierConfig& config() const { return config_; }
  int num_classes() const { return config_.num_classes; }

  // Evaluation mode: batch norm uses running statistics.
  Logits forward(const FeatureBatch& x) const;
  // Global-pooled penultimate activations, [batch x 48].
  Eigen::MatrixXd embed(const FeatureBatch& x) const;

  // Training mode: batch statistics, running statistics updated.
  Logits forward_train(const FeatureBatch& x, ForwardCache& cache);
  // Gradients of a scalar loss given dloss/dlogits ([batch x classes]).
  Gradients backward(const ForwardCache& cache,
                     const Eigen::MatrixXd& dlogits) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  // Batch-norm running statistics, one (mean, var) pair per BN layer.
  struct BnStats {
    std::string name;
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
  };
  std::vector<BnStats>& bn_stats() { return bn_stats_; }
  const std::vector<BnStats>& bn_stats() const { return bn_stats_; }

  // Grows the head; existing rows kept bit-exactly, new rows zero.
  void expand_head(int new_class_count);

  std::size_t count_params() const;

 private:
  ClassifierConfig config_;
  std::vector<Parameter> params_;
  std::vector<BnStats> bn_stats_;

  // Pooled trunk output [48 x batch]. A non-null cache selects training
  // mode; running statistics are then folded into *running.
  Eigen::MatrixXd trunk(const FeatureBatch& x, ForwardCache* cache,
                        std::vector<BnStats>* running) const;
  Logits head(const Eigen::MatrixXd& pooled) const;
  void check_input(const FeatureBatch& x) const;
};

// Frozen copy of a model; forward() outputs never change after creation.
class ModelSnapshot {
 public:
  explicit ModelSnapshot(const TcResNet& model)
      : model_(std::make_shared<const TcResNet>(model)) {}

  Logits forward(const FeatureBatch& x) const { return model_->forward(x); }
  Eigen::MatrixXd embed(const FeatureBatch& x) const { return model_->embed(x); }
  int num_classes() const { return model_->num_classes(); }
  std::size_t count_params() const { return model_->count_params(); }
  const TcResNet& model() const { return *model_; }

 private:
  std::shared_ptr<const TcResNet> model_;
};

// Free-function surface.
Logits forward(const TcResNet& model, const FeatureBatch& x);
// Row-wise softmax(logits / temperature). Throws ParameterError if T <= 0.
Eigen::MatrixXd predict_proba(const Logits& logits, double temperature = 1.0);
// Throws ContractError unless new_class_count > current head size.
TcResNet expand_head(TcResNet model, int new_class_count);
std::size_t count_params(const TcResNet& model);
ModelSnapshot snapshot(const TcResNet& model);

// Checkpoint: JSON document
//   {"format": "kwsinc-checkpoint", "version": 1, "config": {...},
//    "tensors": [{"name", "shape": [rows, cols], "data": [...]}],
//    "bn_stats": [{"name", "mean": [...], "var": [...]}]}
// Tensor data is column-major. Layer names and shapes are listed in
// docs/checkpoint.md.
void save_checkpoint(const std::filesystem::path& file, const TcResNet& model);
TcResNet load_checkpoint(const std::filesystem::path& file);

}  // namespace kwsinc

#endif  // KWSINC_MODEL_H_
