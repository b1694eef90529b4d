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

#include "kwsinc/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "kwsinc/dsp.h"
#include "kwsinc/errors.h"
#include "kwsinc/random.h"

namespace fs = std::filesystem;

namespace kwsinc {
namespace {

bool is_wav(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

void sort_records(std::vector<UtteranceRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const UtteranceRecord& a, const UtteranceRecord& b) {
              return a.id < b.id;
            });
}

std::map<std::string, std::vector<std::size_t>> index_by_keyword(
    const Manifest& m) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    out[m.records[i].keyword].push_back(i);
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::string_view split_name(Split s) {
  return s == Split::kTrain ? "train" : "test";
}

std::size_t Manifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(),
      [s](const UtteranceRecord& r) { return r.split == s; }));
}

Manifest scan_dataset(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw ConfigError("dataset root does not exist: " + root.string());
  }
  Manifest m;
  m.source_root = root;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.empty() || name[0] == '_' || name[0] == '.') continue;
    dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());

  for (const auto& dir : dirs) {
    const std::string keyword = dir.filename().string();
    if (keyword.find(',') != std::string::npos) {
      m.warnings.push_back("keyword directory with comma skipped: " + keyword);
      continue;
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_wav(entry.path())) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    bool any = false;
    for (const auto& file : files) {
      const std::string stem = file.stem().string();
      if (stem.find(',') != std::string::npos) {
        ++m.skipped_files;
        continue;
      }
      try {
        probe_wav(file);
      } catch (const DecodeError& e) {
        ++m.skipped_files;
        m.warnings.push_back(e.what());
        continue;
      }
      UtteranceRecord r;
      r.id = keyword + "/" + stem;
      r.keyword = keyword;
      r.path = fs::path(keyword) / file.filename();
      m.records.push_back(std::move(r));
      any = true;
    }
    if (any) m.keywords.push_back(keyword);
  }
  if (m.keywords.empty()) {
    throw ConfigError("no keywords found under " + root.string());
  }
  sort_records(m.records);
  for (std::size_t i = 1; i < m.records.size(); ++i) {
    if (m.records[i].id == m.records[i - 1].id) {
      throw DataError("duplicate clip id " + m.records[i].id +
                      " (same stem with different extension?)");
    }
  }
  return m;
}

Manifest limit_per_keyword(const Manifest& manifest, int max_per_keyword,
                           std::uint64_t seed) {
  if (max_per_keyword <= 0) {
    throw ConfigError("max clips per keyword must be positive");
  }
  Manifest out = manifest;
  out.records.clear();
  for (auto& [keyword, idx] : index_by_keyword(manifest)) {
    Rng rng(derive_seed(seed, "limit:" + keyword));
    seeded_shuffle(idx, rng);
    const std::size_t keep =
        std::min<std::size_t>(idx.size(), std::size_t(max_per_keyword));
    for (std::size_t i = 0; i < keep; ++i) {
      out.records.push_back(manifest.records[idx[i]]);
    }
  }
  sort_records(out.records);
  return out;
}

Manifest split_train_test(const Manifest& manifest, double test_fraction,
                          std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1)");
  }
  Manifest out = manifest;
  for (auto& [keyword, idx] : index_by_keyword(manifest)) {
    for (std::size_t i : idx) out.records[i].split = Split::kTrain;
    if (idx.size() < 2) {
      out.warnings.push_back("keyword '" + keyword +
                             "' has fewer than 2 clips; all kept in train");
      continue;
    }
    Rng rng(derive_seed(seed, keyword));
    seeded_shuffle(idx, rng);
    auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * double(idx.size())));
    if (n_test >= idx.size()) n_test = idx.size() - 1;
    for (std::size_t i = 0; i < n_test; ++i) {
      out.records[idx[i]].split = Split::kTest;
    }
  }
  return out;
}

void write_manifest(const fs::path& file, const Manifest& m) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write manifest " + file.string());
  out << "id,keyword,relative_path,split\n";
  for (const auto& r : m.records) {
    out << r.id << ',' << r.keyword << ',' << r.path.generic_string() << ','
        << split_name(r.split) << '\n';
  }
}

Manifest read_manifest(const fs::path& file, const fs::path& source_root) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read manifest " + file.string());
  Manifest m;
  m.source_root = source_root;
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) {
    throw ParseError(file.string(), 1, "empty manifest");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,keyword,relative_path,split") {
    throw ParseError(file.string(), line_no,
                     "expected header 'id,keyword,relative_path,split'");
  }
  std::set<std::string> keywords;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) {
      throw ParseError(file.string(), line_no, "expected 4 fields");
    }
    UtteranceRecord r;
    r.id = f[0];
    r.keyword = f[1];
    r.path = f[2];
    if (f[3] == "train") {
      r.split = Split::kTrain;
    } else if (f[3] == "test") {
      r.split = Split::kTest;
    } else {
      throw ParseError(file.string(), line_no, "unknown split '" + f[3] + "'");
    }
    if (r.id.empty() || r.keyword.empty()) {
      throw ParseError(file.string(), line_no, "empty id or keyword");
    }
    if (!ids.insert(r.id).second) {
      throw ParseError(file.string(), line_no, "duplicate id " + r.id);
    }
    keywords.insert(r.keyword);
    m.records.push_back(std::move(r));
  }
  m.keywords.assign(keywords.begin(), keywords.end());
  sort_records(m.records);
  return m;
}

int TaskStream::class_index(std::string_view keyword) const {
  const auto it = std::find(class_order.begin(), class_order.end(), keyword);
  if (it == class_order.end()) {
    throw ContractError("keyword not in task stream: " + std::string(keyword));
  }
  return static_cast<int>(it - class_order.begin());
}

int TaskStream::task_of(std::string_view keyword) const {
  for (const auto& t : tasks) {
    if (std::find(t.new_keywords.begin(), t.new_keywords.end(), keyword) !=
        t.new_keywords.end()) {
      return t.index;
    }
  }
  throw ContractError("keyword not in task stream: " + std::string(keyword));
}

std::vector<UtteranceRecord> TaskStream::test_up_to(int t) const {
  std::vector<UtteranceRecord> out;
  for (int j = 0; j <= t && j < num_tasks(); ++j) {
    out.insert(out.end(), test[j].begin(), test[j].end());
  }
  return out;
}

std::vector<UtteranceRecord> TaskStream::train_up_to(int t) const {
  std::vector<UtteranceRecord> out;
  for (int j = 0; j <= t && j < num_tasks(); ++j) {
    out.insert(out.end(), train[j].begin(), train[j].end());
  }
  return out;
}

TaskStream build_task_stream(const Manifest& manifest, int pretrain_count,
                             int task_count, int keywords_per_task,
                             std::uint64_t seed) {
  if (pretrain_count < 1 || task_count < 0 || keywords_per_task < 1) {
    throw ConfigError("task layout needs pretrain_count >= 1, task_count >= 0, "
                      "keywords_per_task >= 1");
  }
  const std::size_t needed =
      std::size_t(pretrain_count) + std::size_t(task_count) * keywords_per_task;
  if (needed > manifest.keywords.size()) {
    throw ConfigError("task layout needs " + std::to_string(needed) +
                      " keywords but the manifest has " +
                      std::to_string(manifest.keywords.size()));
  }
  std::vector<std::string> order = manifest.keywords;
  std::sort(order.begin(), order.end());
  Rng rng(derive_seed(seed, "task_stream"));
  seeded_shuffle(order, rng);

  TaskStream s;
  s.seed = seed;
  s.class_order.assign(order.begin(), order.begin() + needed);
  s.unused_keywords.assign(order.begin() + needed, order.end());
  std::size_t next = 0;
  for (int t = 0; t <= task_count; ++t) {
    TaskSpec spec;
    spec.index = t;
    const int n = t == 0 ? pretrain_count : keywords_per_task;
    spec.new_keywords.assign(order.begin() + next, order.begin() + next + n);
    next += n;
    spec.cumulative_classes = static_cast<int>(next);
    s.tasks.push_back(std::move(spec));
  }

  s.train.resize(s.tasks.size());
  s.test.resize(s.tasks.size());
  std::map<std::string, int> task_of;
  for (const auto& t : s.tasks) {
    for (const auto& k : t.new_keywords) task_of[k] = t.index;
  }
  for (const auto& r : manifest.records) {
    const auto it = task_of.find(r.keyword);
    if (it == task_of.end()) continue;
    auto& bucket = r.split == Split::kTrain ? s.train : s.test;
    bucket[it->second].push_back(r);
  }
  return s;
}

}  // namespace kwsinc
