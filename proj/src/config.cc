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

#include <fstream>
#include <set>

#include <yaml-cpp/yaml.h>

#include "kwsinc/errors.h"
#include "kwsinc/harness.h"

namespace kwsinc {
namespace {

const std::set<std::string> kKnownKeys = {
    "name",          "data_dir",          "manifest",
    "max_clips_per_keyword", "test_fraction", "seed",
    "pretrain_count", "task_count",       "keywords_per_task",
    "mode",          "memory_size",       "sampler",
    "augment",       "mixup_alpha",       "mixup_fraction",
    "kd",            "kd_temperature",    "kd_scale_by_t2",
    "learning_rate", "batch_size",        "epochs",
    "output_dir",    "save_checkpoint"};

template <typename T>
void read(const YAML::Node& root, const char* key, T& out) {
  const YAML::Node n = root[key];
  if (!n) return;
  try {
    out = n.as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& file) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config " + file.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("config " + file.string() + ": " + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!kKnownKeys.count(key)) {
      throw ConfigError("config key '" + key + "': unknown");
    }
  }

  ExperimentConfig c;
  std::string s;
  read(root, "name", c.name);
  if (root["data_dir"]) { read(root, "data_dir", s); c.data_dir = s; }
  if (root["manifest"]) { read(root, "manifest", s); c.manifest = s; }
  read(root, "max_clips_per_keyword", c.max_clips_per_keyword);
  read(root, "test_fraction", c.test_fraction);
  read(root, "seed", c.seed);
  read(root, "pretrain_count", c.pretrain_count);
  read(root, "task_count", c.task_count);
  read(root, "keywords_per_task", c.keywords_per_task);
  if (root["mode"]) {
    read(root, "mode", s);
    if (s == "incremental") c.mode = TrainingMode::kIncremental;
    else if (s == "joint") c.mode = TrainingMode::kJoint;
    else throw ConfigError("config key 'mode': unknown value '" + s + "'");
  }
  read(root, "memory_size", c.memory_size);
  if (root["sampler"]) {
    read(root, "sampler", s);
    try {
      c.sampler = parse_sampler(s);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config key 'sampler': ") + e.what());
    }
  }
  if (root["augment"]) {
    read(root, "augment", s);
    try {
      c.augment.kind = parse_augmentation(s);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config key 'augment': ") + e.what());
    }
  }
  read(root, "mixup_alpha", c.augment.mixup_alpha);
  read(root, "mixup_fraction", c.augment.mixup_fraction);
  read(root, "kd", c.kd.enabled);
  read(root, "kd_temperature", c.kd.temperature);
  read(root, "kd_scale_by_t2", c.kd.scale_by_t2);
  read(root, "learning_rate", c.optimizer.learning_rate);
  read(root, "batch_size", c.optimizer.batch_size);
  read(root, "epochs", c.optimizer.epochs);
  if (root["output_dir"]) { read(root, "output_dir", s); c.output_dir = s; }
  read(root, "save_checkpoint", c.save_checkpoint);
  validate(c);
  return c;
}

void save_config(const std::filesystem::path& file, const ExperimentConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << c.name;
  out << YAML::Key << "data_dir" << YAML::Value << c.data_dir.string();
  if (!c.manifest.empty()) {
    out << YAML::Key << "manifest" << YAML::Value << c.manifest.string();
  }
  out << YAML::Key << "max_clips_per_keyword" << YAML::Value
      << c.max_clips_per_keyword;
  out << YAML::Key << "test_fraction" << YAML::Value << c.test_fraction;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "pretrain_count" << YAML::Value << c.pretrain_count;
  out << YAML::Key << "task_count" << YAML::Value << c.task_count;
  out << YAML::Key << "keywords_per_task" << YAML::Value << c.keywords_per_task;
  out << YAML::Key << "mode" << YAML::Value
      << (c.mode == TrainingMode::kJoint ? "joint" : "incremental");
  out << YAML::Key << "memory_size" << YAML::Value << c.memory_size;
  out << YAML::Key << "sampler" << YAML::Value
      << std::string(sampler_name(c.sampler));
  out << YAML::Key << "augment" << YAML::Value
      << std::string(augmentation_name(c.augment.kind));
  out << YAML::Key << "mixup_alpha" << YAML::Value << c.augment.mixup_alpha;
  out << YAML::Key << "mixup_fraction" << YAML::Value << c.augment.mixup_fraction;
  out << YAML::Key << "kd" << YAML::Value << c.kd.enabled;
  out << YAML::Key << "kd_temperature" << YAML::Value << c.kd.temperature;
  out << YAML::Key << "kd_scale_by_t2" << YAML::Value << c.kd.scale_by_t2;
  out << YAML::Key << "learning_rate" << YAML::Value << c.optimizer.learning_rate;
  out << YAML::Key << "batch_size" << YAML::Value << c.optimizer.batch_size;
  out << YAML::Key << "epochs" << YAML::Value << c.optimizer.epochs;
  if (!c.output_dir.empty()) {
    out << YAML::Key << "output_dir" << YAML::Value << c.output_dir.string();
  }
  out << YAML::Key << "save_checkpoint" << YAML::Value << c.save_checkpoint;
  out << YAML::EndMap;
  std::ofstream f(file);
  if (!f) throw DataError("cannot write " + file.string());
  f << out.c_str() << '\n';
}

}  // namespace kwsinc
