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

#include "kwsinc/harness.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "kwsinc/errors.h"
#include "kwsinc/random.h"

namespace fs = std::filesystem;

namespace kwsinc {
namespace {

constexpr std::size_t kEvalChunk = 256;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  return 3;
}

}  // namespace

AccuracyMatrix::AccuracyMatrix(int num_tasks) {
  for (int t = 0; t < num_tasks; ++t) rows_.emplace_back(std::size_t(t + 1));
}

AccuracyMatrix AccuracyMatrix::from_rows(
    const std::vector<std::vector<double>>& rows) {
  AccuracyMatrix m(static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != t + 1) {
      throw ContractError("accuracy matrix must be lower-triangular");
    }
    for (std::size_t j = 0; j <= t; ++j) {
      m.set(static_cast<int>(t), static_cast<int>(j), rows[t][j]);
    }
  }
  return m;
}

void AccuracyMatrix::set(int t, int j, double accuracy) {
  if (t < 0 || t >= num_tasks() || j < 0 || j > t) {
    throw ContractError("accuracy matrix index outside the lower triangle");
  }
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw ContractError("accuracy outside [0, 1]");
  }
  rows_[t][j] = accuracy;
}

std::optional<double> AccuracyMatrix::at(int t, int j) const {
  if (t < 0 || t >= num_tasks() || j < 0 || j > t) return std::nullopt;
  return rows_[t][j];
}

bool AccuracyMatrix::row_complete(int t) const {
  if (t < 0 || t >= num_tasks()) return false;
  return std::all_of(rows_[t].begin(), rows_[t].end(),
                     [](const auto& v) { return v.has_value(); });
}

EvalRow evaluate_predictions(const Logits& logits, std::span<const int> labels,
                             std::span<const int> tasks, int num_tasks) {
  if (logits.rows() == 0) throw ContractError("evaluate: empty test set");
  if (std::size_t(logits.rows()) != labels.size() ||
      labels.size() != tasks.size()) {
    throw ContractError("evaluate: logits, labels and tasks differ in size");
  }
  std::vector<double> correct(num_tasks, 0.0), total(num_tasks, 0.0);
  double all_correct = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index pred;
    logits.row(i).maxCoeff(&pred);
    const int task = tasks[std::size_t(i)];
    if (task < 0 || task >= num_tasks) {
      throw ContractError("evaluate: task index out of range");
    }
    const bool hit = pred == labels[std::size_t(i)];
    total[task] += 1.0;
    correct[task] += hit ? 1.0 : 0.0;
    all_correct += hit ? 1.0 : 0.0;
  }
  EvalRow row;
  for (int j = 0; j < num_tasks; ++j) {
    if (total[j] == 0.0) {
      throw ContractError("evaluate: task " + std::to_string(j) +
                          " has an empty test set");
    }
    row.per_task.push_back(correct[j] / total[j]);
  }
  row.pooled = all_correct / double(logits.rows());
  double sum = 0.0;
  for (double a : row.per_task) sum += a;
  row.task_averaged = sum / double(num_tasks);
  return row;
}

EvalRow evaluate(const TcResNet& model, const TaskStream& stream, int t,
                 ClipCache& clips) {
  const auto records = stream.test_up_to(t);
  if (records.empty()) throw ContractError("evaluate: empty test set");
  Logits logits(Eigen::Index(records.size()), model.num_classes());
  std::vector<int> labels, tasks;
  std::vector<const MfccFeature*> chunk;
  for (std::size_t start = 0; start < records.size(); start += kEvalChunk) {
    const std::size_t end = std::min(records.size(), start + kEvalChunk);
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) {
      chunk.push_back(&clips.features(records[i]));
    }
    logits.middleRows(Eigen::Index(start), Eigen::Index(end - start)) =
        model.forward(make_batch(chunk));
  }
  for (const auto& r : records) {
    labels.push_back(stream.class_index(r.keyword));
    tasks.push_back(stream.task_of(r.keyword));
  }
  return evaluate_predictions(logits, labels, tasks, t + 1);
}

double compute_acc(const AccuracyMatrix& matrix) {
  const int last = matrix.num_tasks() - 1;
  if (last < 0 || !matrix.row_complete(last)) {
    throw ContractError("compute_acc: final row incomplete");
  }
  double sum = 0.0;
  for (int j = 0; j <= last; ++j) sum += *matrix.at(last, j);
  return sum / double(last + 1);
}

std::optional<double> compute_bwt(const AccuracyMatrix& matrix) {
  const int last = matrix.num_tasks() - 1;
  if (last < 1) return std::nullopt;
  double sum = 0.0;
  for (int j = 0; j < last; ++j) {
    const auto final_acc = matrix.at(last, j);
    const auto first_acc = matrix.at(j, j);
    if (!final_acc || !first_acc) return std::nullopt;
    sum += *final_acc - *first_acc;
  }
  return sum / double(last);
}

std::uint64_t memory_footprint(const ExemplarStore& store) {
  return std::uint64_t(store.size()) * kBytesPerClip;
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& key, const std::string& what) {
    throw ConfigError("config key '" + key + "': " + what);
  };
  if (c.data_dir.empty()) fail("data_dir", "required");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) {
    fail("test_fraction", "must lie in (0, 1)");
  }
  if (c.max_clips_per_keyword < 0) fail("max_clips_per_keyword", "must be >= 0");
  if (c.pretrain_count < 1) fail("pretrain_count", "must be >= 1");
  if (c.task_count < 0) fail("task_count", "must be >= 0");
  if (c.keywords_per_task < 1) fail("keywords_per_task", "must be >= 1");
  if (c.memory_size < 0) fail("memory_size", "must be >= 0");
  if (!(c.kd.temperature > 0.0)) fail("kd_temperature", "must be > 0");
  if (!(c.augment.mixup_alpha > 0.0)) fail("mixup_alpha", "must be > 0");
  if (!(c.augment.mixup_fraction >= 0.0 && c.augment.mixup_fraction <= 1.0)) {
    fail("mixup_fraction", "must lie in [0, 1]");
  }
  if (!(c.optimizer.learning_rate >= 0.0)) fail("learning_rate", "must be >= 0");
  if (c.optimizer.batch_size < 1) fail("batch_size", "must be >= 1");
  if (c.optimizer.epochs < 1) fail("epochs", "must be >= 1");
}

namespace {

void run_checked(const ExperimentConfig& config, ClipCache* shared,
                 std::string& stage, ExperimentResult& result) {
  stage = "dataset";
  Manifest manifest;
  if (!config.manifest.empty()) {
    manifest = read_manifest(config.manifest, config.data_dir);
  } else {
    manifest = scan_dataset(config.data_dir);
  }
  if (config.max_clips_per_keyword > 0) {
    manifest = limit_per_keyword(manifest, config.max_clips_per_keyword,
                                 config.seed);
  }
  if (config.manifest.empty()) {
    manifest = split_train_test(manifest, config.test_fraction, config.seed);
  }
  const TaskStream stream =
      build_task_stream(manifest, config.pretrain_count, config.task_count,
                        config.keywords_per_task, config.seed);
  const int last = stream.num_tasks() - 1;

  ClipCache local(config.data_dir);
  ClipCache& clips = shared ? *shared : local;
  auto class_of = [&stream](const std::string& k) { return stream.class_index(k); };

  ClassifierConfig arch;
  OptimizerConfig opt = config.optimizer;
  opt.seed = derive_seed(config.seed, "train");
  TrainContext train_ctx{&clips, class_of};
  result.matrix = AccuracyMatrix(stream.num_tasks());
  auto& m = result.metrics;
  m.name = config.name;

  if (config.mode == TrainingMode::kJoint) {
    stage = "train[joint]";
    arch.num_classes = stream.tasks[last].cumulative_classes;
    TcResNet model(arch, derive_seed(config.seed, "model"));
    const auto all_train = stream.train_up_to(last);
    ExemplarStore none;
    auto log = train_task(model, nullptr, all_train, none, last, opt,
                          KDConfig{.temperature = config.kd.temperature,
                                   .enabled = false},
                          config.augment, train_ctx);
    result.epochs = std::move(log.epochs);
    stage = "evaluate[joint]";
    const EvalRow row = evaluate(model, stream, last, clips);
    for (int j = 0; j <= last; ++j) result.matrix.set(last, j, row.per_task[j]);
    m.pooled_curve.assign(std::size_t(last), 0.0);
    m.acc_curve.assign(std::size_t(last), 0.0);
    m.pooled_curve.push_back(row.pooled);
    m.acc_curve.push_back(row.task_averaged);
    m.pooled_acc = row.pooled;
    m.student_params = m.param_count = model.count_params();
    m.train_data_bytes = std::uint64_t(all_train.size()) * kBytesPerClip;
    result.stores.push_back(none);
    if (config.save_checkpoint && !config.output_dir.empty()) {
      fs::create_directories(config.output_dir);
      save_checkpoint(config.output_dir / "model.json", model);
    }
    m.acc = compute_acc(result.matrix);
    m.bwt = compute_bwt(result.matrix);
    return;
  }

  arch.num_classes = stream.tasks[0].cumulative_classes;
  TcResNet model(arch, derive_seed(config.seed, "model"));
  ExemplarStore store;
  store.budget = config.memory_size;
  SamplerContext sampler_ctx{&model, &clips, class_of,
                             derive_seed(config.seed, "sampler")};
  std::size_t teacher_params = 0;

  for (int t = 0; t <= last; ++t) {
    const std::string tag = "[" + std::to_string(t) + "]";
    stage = "train" + tag;
    std::optional<ModelSnapshot> teacher;
    if (t > 0) {
      if (config.kd.enabled) {
        teacher.emplace(snapshot(model));
        teacher_params = std::max(teacher_params, teacher->count_params());
      }
      model.expand_head(stream.tasks[t].cumulative_classes);
    }
    std::set<std::string> ids;
    for (const auto& r : stream.train[t]) ids.insert(r.id);
    for (const auto& e : store.entries) ids.insert(e.record.id);
    m.train_data_bytes =
        std::max(m.train_data_bytes, std::uint64_t(ids.size()) * kBytesPerClip);

    auto log = train_task(model, teacher ? &*teacher : nullptr, stream.train[t],
                          store, t, opt, config.kd, config.augment, train_ctx);
    result.epochs.insert(result.epochs.end(), log.epochs.begin(),
                         log.epochs.end());

    stage = "memory" + tag;
    store = update_memory(store, stream.train[t], t, config.sampler,
                          config.memory_size, sampler_ctx);
    if (store.size() > std::size_t(config.memory_size)) {
      throw ContractError("exemplar store exceeds its budget");
    }
    m.memory_bytes = std::max(m.memory_bytes, memory_footprint(store));
    result.stores.push_back(store);

    stage = "evaluate" + tag;
    const EvalRow row = evaluate(model, stream, t, clips);
    for (int j = 0; j <= t; ++j) result.matrix.set(t, j, row.per_task[j]);
    m.pooled_curve.push_back(row.pooled);
    m.acc_curve.push_back(row.task_averaged);
    m.pooled_acc = row.pooled;
  }
  m.student_params = model.count_params();
  m.param_count = m.student_params + teacher_params;
  m.acc = compute_acc(result.matrix);
  m.bwt = compute_bwt(result.matrix);
  if (config.save_checkpoint && !config.output_dir.empty()) {
    stage = "write";
    fs::create_directories(config.output_dir);
    save_checkpoint(config.output_dir / "model.json", model);
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config,
                                ClipCache* clips) {
  try {
    validate(config);
  } catch (const ConfigError& e) {
    throw StageError("config", e.what(), 1);
  }
  ExperimentResult result;
  std::string stage = "setup";
  try {
    run_checked(config, clips, stage, result);
  } catch (const std::exception& e) {
    if (!config.output_dir.empty()) {
      try {
        write_results(config.output_dir, config, result);
      } catch (const std::exception&) {
        // keep the original failure
      }
    }
    throw StageError(stage, e.what(), exit_code_for(e));
  }
  if (!config.output_dir.empty()) {
    try {
      write_results(config.output_dir, config, result);
    } catch (const std::exception& e) {
      throw StageError("write", e.what(), exit_code_for(e));
    }
  }
  return result;
}

void write_results(const fs::path& dir, const ExperimentConfig& config,
                   const ExperimentResult& result) {
  fs::create_directories(dir);
  save_config(dir / "config.yaml", config);

  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };

  {
    auto out = open("matrix.csv");
    out << "after_task,eval_task,accuracy\n";
    for (int t = 0; t < result.matrix.num_tasks(); ++t) {
      for (int j = 0; j <= t; ++j) {
        if (const auto v = result.matrix.at(t, j)) {
          out << t << ',' << j << ',' << fmt17(*v) << '\n';
        }
      }
    }
  }
  {
    const auto& m = result.metrics;
    auto out = open("curve.csv");
    out << "task,pooled_accuracy,task_averaged_accuracy,memory_size\n";
    for (std::size_t t = 0; t < m.pooled_curve.size(); ++t) {
      if (!result.matrix.row_complete(static_cast<int>(t))) continue;
      const std::size_t stored =
          t < result.stores.size() ? result.stores[t].size() : 0;
      out << t << ',' << fmt17(m.pooled_curve[t]) << ','
          << fmt17(m.acc_curve[t]) << ',' << stored << '\n';
    }
  }
  {
    const auto& m = result.metrics;
    auto out = open("metrics.csv");
    out << "name,acc,bwt,pooled_acc,param_count,student_params,memory_bytes,"
           "train_data_bytes\n";
    const bool complete = result.matrix.num_tasks() > 0 &&
                          result.matrix.row_complete(result.matrix.num_tasks() - 1);
    out << m.name << ',' << (complete ? fmt17(m.acc) : "") << ','
        << (m.bwt ? fmt17(*m.bwt) : "") << ','
        << (complete ? fmt17(m.pooled_acc) : "") << ',' << m.param_count << ','
        << m.student_params << ',' << m.memory_bytes << ','
        << m.train_data_bytes << '\n';
  }
  {
    auto out = open("epochs.csv");
    out << "task,epoch,ce,kd,lambda,total,train_acc\n";
    for (const auto& e : result.epochs) {
      out << e.task << ',' << e.epoch << ',' << fmt17(e.ce) << ','
          << fmt17(e.kd) << ',' << fmt17(e.lambda) << ',' << fmt17(e.total)
          << ',' << fmt17(e.train_acc) << '\n';
    }
  }
  for (std::size_t t = 0; t < result.stores.size(); ++t) {
    write_exemplar_manifest(dir / ("exemplars_task" + std::to_string(t) + ".csv"),
                            result.stores[t]);
  }
}

}  // namespace kwsinc
