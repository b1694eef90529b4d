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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "kwsinc/errors.h"
#include "kwsinc/harness.h"
#include "kwsinc/synth.h"

using namespace kwsinc;
namespace fs = std::filesystem;
using Eigen::MatrixXd;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kwsinc_test_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MatrixXd one_hot_logits(const std::vector<int>& predicted, int classes) {
  MatrixXd m = MatrixXd::Zero(Eigen::Index(predicted.size()), classes);
  for (std::size_t i = 0; i < predicted.size(); ++i) m(Eigen::Index(i), predicted[i]) = 1.0;
  return m;
}

// Ten keywords, 20 clips each, written once per test binary run.
const fs::path& mini_corpus() {
  static const fs::path root = [] {
    const fs::path p = scratch("corpus");
    SynthOptions opts;
    opts.num_keywords = 10;
    opts.clips_per_keyword = 20;
    opts.seed = 4;
    synthesize_corpus(p, opts);
    return p;
  }();
  return root;
}

ExperimentConfig mini_config() {
  ExperimentConfig c;
  c.name = "mini";
  c.data_dir = mini_corpus();
  c.seed = 8;
  c.pretrain_count = 4;
  c.task_count = 3;
  c.keywords_per_task = 2;
  c.memory_size = 20;
  c.optimizer.epochs = 1;
  c.optimizer.batch_size = 16;
  c.optimizer.learning_rate = 1e-3;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KWSINC_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<double> curve_column(const fs::path& file) {
  std::ifstream in(file);
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    out.push_back(std::strtod(line.substr(a + 1, b - a - 1).c_str(), nullptr));
  }
  return out;
}

}  // namespace

TEST_CASE("evaluate_predictions") {
  const std::vector<int> labels = {0, 1, 2, 3};
  const std::vector<int> tasks = {0, 0, 1, 1};
  const auto perfect = evaluate_predictions(one_hot_logits(labels, 4), labels, tasks, 2);
  CHECK(perfect.per_task == std::vector<double>{1.0, 1.0});
  CHECK(perfect.pooled == 1.0);

  const std::vector<int> two = {0, 0, 1, 1};
  const std::vector<int> t0(4, 0);
  const auto constant = evaluate_predictions(one_hot_logits({0, 0, 0, 0}, 2), two, t0, 1);
  CHECK(constant.pooled == 0.5);

  // Hand count: task 0 rows 0-5 get 4/6 right, task 1 rows 6-9 get 1/4.
  const std::vector<int> y = {0, 1, 2, 0, 1, 2, 3, 4, 3, 4};
  const std::vector<int> p = {0, 1, 2, 1, 2, 2, 3, 3, 4, 3};
  const std::vector<int> t = {0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  const auto row = evaluate_predictions(one_hot_logits(p, 5), y, t, 2);
  CHECK(row.per_task[0] == doctest::Approx(4.0 / 6.0));
  CHECK(row.per_task[1] == doctest::Approx(0.25));
  CHECK(row.pooled == doctest::Approx(0.5));
  CHECK(row.task_averaged == doctest::Approx((4.0 / 6.0 + 0.25) / 2.0));

  CHECK_THROWS_AS(evaluate_predictions(MatrixXd(0, 3), std::vector<int>{},
                                       std::vector<int>{}, 1),
                  ContractError);
  CHECK_THROWS_AS(evaluate_predictions(one_hot_logits({0}, 2), std::vector<int>{0},
                                       std::vector<int>{0}, 2),
                  ContractError);
}

TEST_CASE("ACC and BWT") {
  const auto m = AccuracyMatrix::from_rows({{0.9}, {0.8, 0.9}, {0.7, 0.8, 0.9}});
  CHECK(compute_acc(m) == doctest::Approx(0.8).epsilon(1e-12));
  REQUIRE(compute_bwt(m).has_value());
  CHECK(*compute_bwt(m) == doctest::Approx(-0.15).epsilon(1e-12));

  const auto ones = AccuracyMatrix::from_rows({{1.0}, {1.0, 1.0}});
  CHECK(compute_acc(ones) == 1.0);
  CHECK(*compute_bwt(ones) == 0.0);

  const auto single = AccuracyMatrix::from_rows({{0.42}});
  CHECK(compute_acc(single) == 0.42);
  CHECK(!compute_bwt(single).has_value());

  const auto gain = AccuracyMatrix::from_rows({{0.6}, {0.7, 0.9}});
  CHECK(*compute_bwt(gain) > 0.0);

  // Row order matters.
  const auto swapped = AccuracyMatrix::from_rows({{0.9}, {0.9, 0.8}, {0.8, 0.7, 0.9}});
  CHECK(*compute_bwt(swapped) != *compute_bwt(m));

  AccuracyMatrix partial(3);
  partial.set(2, 2, 0.5);
  CHECK_THROWS_AS(compute_acc(partial), ContractError);
  CHECK(!compute_bwt(partial).has_value());
  CHECK(!partial.row_complete(2));
}

TEST_CASE("memory footprint") {
  ExemplarStore store;
  CHECK(memory_footprint(store) == 0);
  store.entries.resize(500);
  CHECK(memory_footprint(store) == 16022000);
  CHECK(std::abs(double(memory_footprint(store)) - 16.2e6) / 16.2e6 <= 0.05);
  store.entries.resize(3000);
  CHECK(std::abs(double(memory_footprint(store)) - 97.2e6) / 97.2e6 <= 0.05);
}

TEST_CASE("config round trip and validation") {
  const fs::path dir = scratch("config");
  ExperimentConfig c = mini_config();
  c.sampler = SamplerKind::kMeanClosest;
  c.augment.kind = Augmentation::kSpecAugment;
  c.augment.mixup_alpha = 0.3;
  c.kd.enabled = false;
  c.kd.temperature = 3.5;
  c.mode = TrainingMode::kJoint;
  save_config(dir / "c.yaml", c);
  const ExperimentConfig back = load_config(dir / "c.yaml");
  CHECK(back.name == c.name);
  CHECK(back.data_dir == c.data_dir);
  CHECK(back.seed == c.seed);
  CHECK(back.pretrain_count == 4);
  CHECK(back.task_count == 3);
  CHECK(back.keywords_per_task == 2);
  CHECK(back.memory_size == 20);
  CHECK(back.sampler == SamplerKind::kMeanClosest);
  CHECK(back.augment.kind == Augmentation::kSpecAugment);
  CHECK(back.augment.mixup_alpha == 0.3);
  CHECK(!back.kd.enabled);
  CHECK(back.kd.temperature == 3.5);
  CHECK(back.mode == TrainingMode::kJoint);
  CHECK(back.optimizer.epochs == 1);
  CHECK(back.optimizer.learning_rate == 1e-3);

  std::ofstream(dir / "typo.yaml") << "name: x\nmemory_szie: 10\n";
  try {
    load_config(dir / "typo.yaml");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("memory_szie") != std::string::npos);
  }
  std::ofstream(dir / "sampler.yaml") << "sampler: herding\n";
  CHECK_THROWS_AS(load_config(dir / "sampler.yaml"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "absent.yaml"), ConfigError);

  ExperimentConfig bad = mini_config();
  bad.memory_size = -1;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = mini_config();
  bad.task_count = -1;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = mini_config();
  bad.test_fraction = 1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  CHECK_NOTHROW(validate(mini_config()));
}

TEST_CASE("mini experiment") {
  const fs::path out_a = scratch("run_a");
  const fs::path out_b = scratch("run_b");
  ExperimentConfig c = mini_config();
  c.output_dir = out_a;
  const auto a = run_experiment(c);
  c.output_dir = out_b;
  const auto b = run_experiment(c);

  REQUIRE(a.matrix.num_tasks() == 4);
  for (int t = 0; t < 4; ++t) {
    CHECK(a.matrix.row_complete(t));
    for (int j = 0; j < 4; ++j) {
      const auto v = a.matrix.at(t, j);
      CHECK(v.has_value() == (j <= t));
      if (v) {
        CHECK(*v >= 0.0);
        CHECK(*v <= 1.0);
      }
    }
  }
  CHECK(a.matrix == b.matrix);
  CHECK(a.stores.size() == 4);
  for (const auto& s : a.stores) CHECK(s.size() <= 20);
  CHECK(a.metrics.acc == compute_acc(a.matrix));
  CHECK(a.metrics.bwt == compute_bwt(a.matrix));
  CHECK(a.metrics.memory_bytes <= 20 * kBytesPerClip);
  CHECK(a.metrics.pooled_curve.size() == 4);

  CHECK(fs::exists(out_a / "config.yaml"));
  for (const char* f : {"matrix.csv", "curve.csv", "metrics.csv", "epochs.csv",
                        "exemplars_task0.csv", "exemplars_task3.csv"}) {
    CHECK_MESSAGE(fs::exists(out_a / f), f);
    CHECK(slurp(out_a / f) == slurp(out_b / f));
  }
  const auto reloaded = load_config(out_a / "config.yaml");
  CHECK(reloaded.seed == c.seed);

  ExperimentConfig finetune = mini_config();
  finetune.sampler = SamplerKind::kNone;
  finetune.memory_size = 0;
  finetune.kd.enabled = false;
  const auto f = run_experiment(finetune);
  for (const auto& s : f.stores) CHECK(s.empty());
  CHECK(f.metrics.memory_bytes == 0);
  CHECK(f.metrics.param_count == f.metrics.student_params);
  // The teacher is the previous model, two classes short of the student.
  CHECK(a.metrics.param_count == 2 * a.metrics.student_params - 2 * 49);
}

TEST_CASE("joint mode fills the final row") {
  ExperimentConfig c = mini_config();
  c.mode = TrainingMode::kJoint;
  c.sampler = SamplerKind::kNone;
  c.memory_size = 0;
  c.kd.enabled = false;
  const auto r = run_experiment(c);
  CHECK(r.matrix.row_complete(3));
  CHECK(!r.matrix.row_complete(0));
  CHECK(!r.metrics.bwt.has_value());
}

TEST_CASE("stage-tagged failures") {
  const fs::path dir = scratch("stage");
  ExperimentConfig c = mini_config();
  c.data_dir = "/nonexistent/kwsinc";
  try {
    run_experiment(c);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "dataset");
    CHECK(e.exit_code() == 1);
  }
  std::ofstream(dir / "manifest.csv") << "id,keyword,relative_path,split\nbroken\n";
  c = mini_config();
  c.manifest = dir / "manifest.csv";
  c.output_dir = dir / "out";
  try {
    run_experiment(c);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "dataset");
    CHECK(e.exit_code() == 2);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK(fs::exists(dir / "out" / "config.yaml"));
  c = mini_config();
  c.keywords_per_task = 0;
  try {
    run_experiment(c);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "config");
    CHECK(e.exit_code() == 1);
  }
}

TEST_CASE("report data join") {
  const fs::path base = scratch("report");
  ExperimentConfig c = mini_config();
  c.name = "rk";
  c.output_dir = base / "rk";
  run_experiment(c);
  c.name = "nr";
  c.sampler = SamplerKind::kRandom;
  c.kd.enabled = false;
  c.output_dir = base / "nr";
  run_experiment(c);

  const std::vector<fs::path> inputs = {base / "rk", base / "nr"};
  render_report(inputs, base / "out");
  const std::string svg = slurp(base / "out" / "accuracy_curve.svg");

  const std::regex group(R"re(<g data-series="([^"]+)">)re");
  std::vector<std::string> series;
  for (std::sregex_iterator it(svg.begin(), svg.end(), group), end; it != end; ++it) {
    series.push_back((*it)[1]);
  }
  CHECK(series == std::vector<std::string>{"rk", "nr"});

  const std::regex point(
      R"re(<circle [^>]*data-series="([^"]+)" data-task="(\d+)" data-value="([^"]+)")re");
  std::map<std::string, std::vector<double>> plotted;
  for (std::sregex_iterator it(svg.begin(), svg.end(), point), end; it != end; ++it) {
    auto& v = plotted[(*it)[1]];
    CHECK(std::stoul((*it)[2]) == v.size());
    v.push_back(std::strtod(std::string((*it)[3]).c_str(), nullptr));
  }
  CHECK(plotted["rk"] == curve_column(base / "rk" / "curve.csv"));
  CHECK(plotted["nr"] == curve_column(base / "nr" / "curve.csv"));
  CHECK(plotted["rk"].size() == 4);

  std::ifstream summary(base / "out" / "summary.csv");
  std::string line;
  int rows = -1;
  while (std::getline(summary, line)) rows += line.empty() ? 0 : 1;
  CHECK(rows == 2);
  CHECK(fs::exists(base / "out" / "summary.md"));

  std::ofstream(base / "nr" / "metrics.csv", std::ios::app) << "nr,oops\n";
  try {
    load_results(base / "nr");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch("cli");
  CHECK(run_cli("") == 1);
  CHECK(run_cli("run --config " + (dir / "absent.yaml").string() + " --out " +
                (dir / "o").string()) == 1);

  std::ofstream(dir / "no_root.yaml") << "data_dir: /nonexistent/kwsinc\n";
  CHECK(run_cli("run --config " + (dir / "no_root.yaml").string() + " --out " +
                (dir / "o").string()) == 1);
  std::ofstream(dir / "bad.csv") << "id,keyword,relative_path,split\nbroken\n";
  std::ofstream(dir / "bad_data.yaml")
      << "data_dir: " << mini_corpus().string() << "\nmanifest: "
      << (dir / "bad.csv").string() << "\n";
  CHECK(run_cli("run --config " + (dir / "bad_data.yaml").string() + " --out " +
                (dir / "o").string()) == 2);

  save_config(dir / "ok.yaml", mini_config());
  CHECK(run_cli("run --config " + (dir / "ok.yaml").string() + " --out " +
                (dir / "o").string() + " --sampler herding") == 1);
  CHECK(run_cli("run --config " + (dir / "ok.yaml").string() + " --out " +
                (dir / "o").string() + " --sampler random --kd off") == 0);
  CHECK(fs::exists(dir / "o" / "metrics.csv"));
  CHECK(run_cli("report --in " + (dir / "o").string() + " --out " +
                (dir / "r").string()) == 0);
  CHECK(run_cli("prepare --data-dir " + mini_corpus().string() + " --out " +
                (dir / "m.csv").string()) == 0);
  CHECK(run_cli("report --in " + (dir / "missing").string() + " --out " +
                (dir / "r").string()) == 2);
}
