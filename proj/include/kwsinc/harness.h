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

#ifndef KWSINC_HARNESS_H_
#define KWSINC_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kwsinc/clip_cache.h"
#include "kwsinc/dataset.h"
#include "kwsinc/memory.h"
#include "kwsinc/model.h"
#include "kwsinc/training.h"

namespace kwsinc {

// R[t][j]: accuracy on task j's test keywords after training task t.
// Lower-triangular; entries may be missing (joint training fills only the
// final row).
class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(int num_tasks = 0);
  static AccuracyMatrix from_rows(const std::vector<std::vector<double>>& rows);

  int num_tasks() const { return static_cast<int>(rows_.size()); }
  void set(int t, int j, double accuracy);
  std::optional<double> at(int t, int j) const;
  bool row_complete(int t) const;

  bool operator==(const AccuracyMatrix& other) const = default;

 private:
  std::vector<std::vector<std::optional<double>>> rows_;
};

struct EvalRow {
  std::vector<double> per_task;  // index j = task
  double pooled = 0.0;
  double task_averaged = 0.0;
};

// Argmax over all logit columns, no task identity. labels[i] is the class
// of row i and tasks[i] the task that introduced it. Throws ContractError
// on an empty input or a task in [0, num_tasks) without samples.
EvalRow evaluate_predictions(const Logits& logits, std::span<const int> labels,
                             std::span<const int> tasks, int num_tasks);

// Evaluates the model on the test records of tasks 0..t.
EvalRow evaluate(const TcResNet& model, const TaskStream& stream, int t,
                 ClipCache& clips);

// Mean of the final row over all tasks. Throws ContractError if the final
// row is incomplete.
double compute_acc(const AccuracyMatrix& matrix);

// (1/T) sum_{j<T} (R[T][j] - R[j][j]); nullopt when T = 0 or a diagonal
// entry is missing.
std::optional<double> compute_bwt(const AccuracyMatrix& matrix);

// 16-bit mono one-second WAV: 16000 * 2 bytes + 44-byte header.
inline constexpr std::uint64_t kBytesPerClip = 32044;
std::uint64_t memory_footprint(const ExemplarStore& store);

enum class TrainingMode { kIncremental, kJoint };

struct ExperimentConfig {
  std::string name = "rk";
  std::filesystem::path data_dir;
  std::filesystem::path manifest;  // optional; splits taken from the file
  int max_clips_per_keyword = 0;   // 0 = all
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  int pretrain_count = 15;
  int task_count = 5;
  int keywords_per_task = 3;
  TrainingMode mode = TrainingMode::kIncremental;
  int memory_size = 500;
  SamplerKind sampler = SamplerKind::kRainbow;
  AugmentConfig augment;
  KDConfig kd;
  OptimizerConfig optimizer;
  std::filesystem::path output_dir;  // empty = no files
  bool save_checkpoint = false;
};

// Throws ConfigError with the offending key.
void validate(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& file);
void save_config(const std::filesystem::path& file, const ExperimentConfig& c);

struct MetricsReport {
  std::string name;
  double acc = 0.0;
  std::optional<double> bwt;
  double pooled_acc = 0.0;
  std::size_t param_count = 0;    // student, plus teacher when distilling
  std::size_t student_params = 0;
  std::uint64_t memory_bytes = 0;      // largest exemplar store
  std::uint64_t train_data_bytes = 0;  // largest per-task training set
  std::vector<double> pooled_curve;    // pooled accuracy after each task
  std::vector<double> acc_curve;       // task-averaged accuracy after each task
};

struct ExperimentResult {
  MetricsReport metrics;
  AccuracyMatrix matrix;
  std::vector<EpochLog> epochs;
  std::vector<ExemplarStore> stores;  // store after each task
};

// Pretrain, then per task: snapshot teacher, expand head, train on the task
// stream plus memory, update memory, evaluate. Writes config.yaml,
// matrix.csv, curve.csv, metrics.csv, epochs.csv and exemplars_task<t>.csv
// when output_dir is set. Failures are rethrown as StageError after the
// partial results are flushed. `clips` may be shared between runs.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                ClipCache* clips = nullptr);

void write_results(const std::filesystem::path& dir,
                   const ExperimentConfig& config,
                   const ExperimentResult& result);

// One loaded results directory.
struct ResultSet {
  std::string name;
  std::vector<double> pooled_curve;
  double acc = 0.0;
  std::optional<double> bwt;
  std::size_t param_count = 0;
  std::uint64_t memory_bytes = 0;
};

// Throws ParseError with the line number on malformed files.
ResultSet load_results(const std::filesystem::path& dir);

// Writes accuracy_curve.svg (one polyline per result set; every point
// carries data-series/data-task/data-value attributes), summary.csv and
// summary.md.
void render_report(std::span<const std::filesystem::path> inputs,
                   const std::filesystem::path& out_dir);

}  // namespace kwsinc

#endif  // KWSINC_HARNESS_H_
