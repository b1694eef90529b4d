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

// kwsinc command line: synth, prepare, run, report.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kwsinc/dataset.h"
#include "kwsinc/errors.h"
#include "kwsinc/harness.h"
#include "kwsinc/synth.h"

namespace fs = std::filesystem;
using namespace kwsinc;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> memory_size;
  std::optional<std::string> sampler;
  std::optional<std::string> kd;
  std::optional<std::string> augment;
  std::optional<int> epochs;
  std::optional<std::string> data_dir;
};

void apply(const Overrides& o, ExperimentConfig& c) {
  if (o.seed) c.seed = *o.seed;
  if (o.memory_size) c.memory_size = *o.memory_size;
  if (o.sampler) c.sampler = parse_sampler(*o.sampler);
  if (o.kd) c.kd.enabled = *o.kd == "on";
  if (o.augment) c.augment.kind = parse_augmentation(*o.augment);
  if (o.epochs) c.optimizer.epochs = *o.epochs;
  if (o.data_dir) c.data_dir = *o.data_dir;
  validate(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-incremental keyword spotting"};
  app.require_subcommand(1);

  SynthOptions synth_opts;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic keyword corpus");
  synth->add_option("--out", synth_out, "Corpus root")->required();
  synth->add_option("--keywords", synth_opts.num_keywords)->check(CLI::Range(2, 30));
  synth->add_option("--clips", synth_opts.clips_per_keyword)->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_opts.seed);

  std::string prep_dir, prep_out;
  double prep_fraction = 0.2;
  std::uint64_t prep_seed = 0;
  int prep_max = 0;
  auto* prepare = app.add_subcommand("prepare", "Scan a corpus and write a split manifest");
  prepare->add_option("--data-dir", prep_dir)->required();
  prepare->add_option("--out", prep_out, "Manifest CSV")->required();
  prepare->add_option("--test-fraction", prep_fraction);
  prepare->add_option("--seed", prep_seed);
  prepare->add_option("--max-per-keyword", prep_max);

  std::string run_config, run_out;
  Overrides ov;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", run_config, "YAML config")->required();
  run->add_option("--out", run_out, "Results directory")->required();
  run->add_option("--data-dir", ov.data_dir);
  run->add_option("--seed", ov.seed);
  run->add_option("--memory-size", ov.memory_size);
  run->add_option("--sampler", ov.sampler)
      ->check(CLI::IsMember({"rainbow", "random", "mean_closest", "none"}));
  run->add_option("--kd", ov.kd)->check(CLI::IsMember({"on", "off"}));
  run->add_option("--augment", ov.augment)
      ->check(CLI::IsMember({"mixup", "specaugment", "none"}));
  run->add_option("--epochs", ov.epochs);

  std::vector<std::string> report_in;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Plot and tabulate results");
  report->add_option("--in", report_in, "Results directories")->required();
  report->add_option("--out", report_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      synthesize_corpus(synth_out, synth_opts);
    } else if (*prepare) {
      Manifest m = scan_dataset(prep_dir);
      if (prep_max > 0) m = limit_per_keyword(m, prep_max, prep_seed);
      m = split_train_test(m, prep_fraction, prep_seed);
      for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
      if (m.skipped_files > 0) {
        std::cerr << "skipped " << m.skipped_files << " unreadable files\n";
      }
      write_manifest(prep_out, m);
      std::cout << m.count(Split::kTrain) << " train, " << m.count(Split::kTest)
                << " test, " << m.keywords.size() << " keywords\n";
    } else if (*run) {
      ExperimentConfig c = load_config(run_config);
      apply(ov, c);
      c.output_dir = run_out;
      const auto result = run_experiment(c);
      const auto& m = result.metrics;
      std::cout << m.name << ": ACC " << m.acc << ", BWT "
                << (m.bwt ? std::to_string(*m.bwt) : std::string("n/a"))
                << ", params " << m.param_count << ", memory "
                << m.memory_bytes << " B\n";
    } else if (*report) {
      std::vector<fs::path> dirs(report_in.begin(), report_in.end());
      render_report(dirs, report_out);
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
