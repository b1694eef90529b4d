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

#ifndef KWSINC_DATASET_H_
#define KWSINC_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace kwsinc {

enum class Split { kTrain, kTest };

std::string_view split_name(Split s);

// One labeled clip. `path` is relative to the manifest's source root and
// `id` is "<keyword>/<file stem>", unique within a manifest. Clips are
// normalized to one second when loaded, so duration_s is always 1.0.
struct UtteranceRecord {
  std::string id;
  std::string keyword;
  std::filesystem::path path;
  double duration_s = 1.0;
  Split split = Split::kTrain;
};

struct Manifest {
  std::vector<UtteranceRecord> records;  // sorted by id
  std::vector<std::string> keywords;     // sorted, unique
  std::filesystem::path source_root;
  int skipped_files = 0;
  std::vector<std::string> warnings;

  std::filesystem::path resolve(const UtteranceRecord& r) const {
    return source_root / r.path;
  }
  std::size_t count(Split s) const;
};

// Walks <root>/<keyword>/<clip>.wav. Directories starting with '_' are
// ignored. Files whose WAV header cannot be read are skipped and counted in
// Manifest::skipped_files. Throws ConfigError when root is missing or no
// keyword directory holds a readable clip.
Manifest scan_dataset(const std::filesystem::path& root);

// Keeps at most max_per_keyword clips per keyword: seeded shuffle of the
// id-sorted records, first max_per_keyword retained.
Manifest limit_per_keyword(const Manifest& manifest, int max_per_keyword,
                           std::uint64_t seed);

// Per-keyword stratified split. For each keyword, the id-sorted records are
// shuffled with an Rng seeded by derive_seed(seed, keyword) and the first
// round(test_fraction * n) become test. Keywords with fewer than two
// records stay entirely in train (a warning is appended).
Manifest split_train_test(const Manifest& manifest, double test_fraction,
                          std::uint64_t seed);

// Manifest file: CSV with header "id,keyword,relative_path,split".
void write_manifest(const std::filesystem::path& file, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& file,
                       const std::filesystem::path& source_root);

struct TaskSpec {
  int index = 0;  // 0 = pretrain
  std::vector<std::string> new_keywords;
  int cumulative_classes = 0;
};

// Ordered incremental tasks. Class indices follow the order keywords are
// introduced, so the head for task t covers classes [0, N^t).
struct TaskStream {
  std::vector<TaskSpec> tasks;
  std::vector<std::vector<UtteranceRecord>> train;  // per task
  std::vector<std::vector<UtteranceRecord>> test;   // per task
  std::vector<std::string> class_order;
  std::vector<std::string> unused_keywords;
  std::uint64_t seed = 0;

  int num_tasks() const { return static_cast<int>(tasks.size()); }
  // Class index of a keyword; throws ContractError for unknown keywords.
  int class_index(std::string_view keyword) const;
  // Task that introduced the keyword.
  int task_of(std::string_view keyword) const;
  // Test records of all tasks <= t.
  std::vector<UtteranceRecord> test_up_to(int t) const;
  // Train records of all tasks <= t.
  std::vector<UtteranceRecord> train_up_to(int t) const;
};

// Lexicographic keyword order shuffled once by seed; the first
// pretrain_count keywords form task 0, the following blocks of
// keywords_per_task form tasks 1..task_count. Keywords left over are
// reported in unused_keywords and excluded. Throws ConfigError when the
// manifest has too few keywords.
TaskStream build_task_stream(const Manifest& manifest, int pretrain_count,
                             int task_count, int keywords_per_task,
                             std::uint64_t seed);

}  // namespace kwsinc

#endif  // KWSINC_DATASET_H_
