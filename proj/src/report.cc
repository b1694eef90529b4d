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

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kwsinc/errors.h"
#include "kwsinc/harness.h"

namespace fs = std::filesystem;

namespace kwsinc {
namespace {

// Fixed palette; series beyond it cycle.
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& file, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, line, "not a number: '" + s + "'");
  }
}

std::uint64_t to_uint(const std::string& s, const std::string& file, int line) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError(file, line, "not a count: '" + s + "'");
  }
  return std::stoull(s);
}

// Header check plus data rows; returns (line number, cells) pairs.
std::vector<std::pair<int, std::vector<std::string>>> read_table(
    const fs::path& file, const std::string& header) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read " + file.string());
  std::string line;
  int n = 1;
  if (!std::getline(in, line) || line != header) {
    throw ParseError(file.string(), 1, "expected header '" + header + "'");
  }
  const std::size_t width = split_csv(header).size();
  std::vector<std::pair<int, std::vector<std::string>>> rows;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != width) {
      throw ParseError(file.string(), n,
                       "expected " + std::to_string(width) + " fields");
    }
    rows.emplace_back(n, std::move(cells));
  }
  return rows;
}

}  // namespace

ResultSet load_results(const fs::path& dir) {
  ResultSet r;
  const auto metrics_file = dir / "metrics.csv";
  const auto metrics = read_table(
      metrics_file,
      "name,acc,bwt,pooled_acc,param_count,student_params,memory_bytes,"
      "train_data_bytes");
  if (metrics.size() != 1) {
    throw ParseError(metrics_file.string(), 2, "expected exactly one row");
  }
  const auto& [line, m] = metrics.front();
  const std::string f = metrics_file.string();
  r.name = m[0];
  r.acc = to_double(m[1], f, line);
  if (!m[2].empty()) r.bwt = to_double(m[2], f, line);
  r.param_count = to_uint(m[4], f, line);
  r.memory_bytes = to_uint(m[6], f, line);

  const auto curve_file = dir / "curve.csv";
  const auto curve = read_table(
      curve_file, "task,pooled_accuracy,task_averaged_accuracy,memory_size");
  for (const auto& [n, cells] : curve) {
    const auto task = to_uint(cells[0], curve_file.string(), n);
    if (task != r.pooled_curve.size()) {
      // Joint runs only report the final task; earlier points stay absent.
      if (task < r.pooled_curve.size()) {
        throw ParseError(curve_file.string(), n, "task indices out of order");
      }
    }
    r.pooled_curve.resize(task);
    r.pooled_curve.push_back(to_double(cells[1], curve_file.string(), n));
  }
  return r;
}

void render_report(std::span<const fs::path> inputs, const fs::path& out_dir) {
  std::vector<ResultSet> sets;
  for (const auto& dir : inputs) sets.push_back(load_results(dir));
  fs::create_directories(out_dir);

  // Chart geometry.
  const double width = 640, height = 400, left = 60, right = 160, top = 30,
               bottom = 50;
  std::size_t max_tasks = 1;
  for (const auto& s : sets) max_tasks = std::max(max_tasks, s.pooled_curve.size());
  const double span_x = double(std::max<std::size_t>(max_tasks - 1, 1));
  auto px = [&](std::size_t t) {
    return left + (width - left - right) * double(t) / span_x;
  };
  auto py = [&](double v) { return top + (height - top - bottom) * (1.0 - v); };

  std::ofstream svg(out_dir / "accuracy_curve.svg");
  if (!svg) throw DataError("cannot write " + (out_dir / "accuracy_curve.svg").string());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\""
      << width - right << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << left
      << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 10; tick += 2) {
    const double v = tick / 10.0;
    svg << "<text x=\"" << left - 8 << "\" y=\"" << py(v) + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << tick * 10 << "</text>\n";
  }
  for (std::size_t t = 0; t < max_tasks; ++t) {
    svg << "<text x=\"" << px(t) << "\" y=\"" << py(0) + 16
        << "\" font-size=\"11\" text-anchor=\"middle\">" << t << "</text>\n";
  }
  svg << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 10
      << "\" font-size=\"12\" text-anchor=\"middle\">task</text>\n";
  svg << "<text x=\"14\" y=\"" << (top + height - bottom) / 2
      << "\" font-size=\"12\" transform=\"rotate(-90 14 "
      << (top + height - bottom) / 2
      << ")\" text-anchor=\"middle\">pooled accuracy (%)</text>\n";

  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& s = sets[i];
    const char* color = kColors[i % std::size(kColors)];
    const std::string name = xml_escape(s.name);
    svg << "<g data-series=\"" << name << "\">\n<polyline fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t t = 0; t < s.pooled_curve.size(); ++t) {
      svg << px(t) << ',' << py(s.pooled_curve[t]) << ' ';
    }
    svg << "\"/>\n";
    for (std::size_t t = 0; t < s.pooled_curve.size(); ++t) {
      svg << "<circle cx=\"" << px(t) << "\" cy=\"" << py(s.pooled_curve[t])
          << "\" r=\"3\" fill=\"" << color << "\" data-series=\"" << name
          << "\" data-task=\"" << t << "\" data-value=\""
          << fmt17(s.pooled_curve[t]) << "\"/>\n";
    }
    const double ly = top + 18.0 * double(i);
    svg << "<line x1=\"" << width - right + 12 << "\" y1=\"" << ly << "\" x2=\""
        << width - right + 32 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n<text x=\"" << width - right + 38
        << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << name
        << "</text>\n</g>\n";
  }
  svg << "</svg>\n";

  std::ofstream csv(out_dir / "summary.csv");
  std::ofstream md(out_dir / "summary.md");
  if (!csv || !md) throw DataError("cannot write summary in " + out_dir.string());
  csv << "name,acc,bwt,param_count,memory_bytes\n";
  md << "| Method | ACC (%) | BWT | Parameters | Memory |\n"
     << "|---|---|---|---|---|\n";
  for (const auto& s : sets) {
    csv << s.name << ',' << fmt17(s.acc) << ','
        << (s.bwt ? fmt17(*s.bwt) : "") << ',' << s.param_count << ','
        << s.memory_bytes << '\n';
    char acc[32], bwt[32], params[32], mem[32];
    std::snprintf(acc, sizeof(acc), "%.2f", 100.0 * s.acc);
    if (s.bwt) {
      std::snprintf(bwt, sizeof(bwt), "%.4f", *s.bwt);
    } else {
      std::snprintf(bwt, sizeof(bwt), "-");
    }
    std::snprintf(params, sizeof(params), "%.2fK", s.param_count / 1000.0);
    std::snprintf(mem, sizeof(mem), "%.1fM", s.memory_bytes / 1e6);
    md << "| " << s.name << " | " << acc << " | " << bwt << " | " << params
       << " | " << (s.memory_bytes ? mem : "-") << " |\n";
  }
}

}  // namespace kwsinc
