#include "ftlab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "ftlab/svg.hpp"
#include "ftlab/tensor.hpp"

namespace ftlab {

namespace fs = std::filesystem;

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream is(path);
  check(bool(is), "cannot read CSV '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    cells.push_back(cur);
    rows.push_back(std::move(cells));
  }
  return rows;
}

void make_report(const std::vector<std::string>& run_dirs,
                 const std::string& out_dir) {
  check(!run_dirs.empty(), "report: no run directories given");
  fs::create_directories(out_dir);

  // (strategy, split, metric) -> per-seed final values
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>>
      table;
  SvgChart probe_chart;
  probe_chart.title = "Forgetting probe overlay";
  probe_chart.x_label = "fine-tuning epoch";
  probe_chart.y_label = "SSL loss";

  std::size_t used = 0;
  for (const std::string& dir : run_dirs) {
    fs::path metrics = fs::path(dir) / "metrics.csv";
    if (!fs::exists(metrics)) {
      std::cerr << "report: skipping incomplete run dir '" << dir << "'\n";
      continue;
    }
    ++used;
    auto rows = read_csv(metrics.string());
    // header: run_id,strategy,seed,epoch,split,metric,value
    std::size_t final_epoch = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      final_epoch = std::max(final_epoch, std::size_t(std::stoul(rows[i][3])));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (std::stoul(r[3]) != final_epoch) continue;
      if (r[4].rfind("test", 0) != 0) continue;
      if (r[5] != "cer" && r[5] != "wer") continue;
      table[r[1]][r[4]][r[5]].push_back(std::stod(r[6]));
    }
    fs::path probe = fs::path(dir) / "probe.csv";
    if (fs::exists(probe)) {
      auto prows = read_csv(probe.string());
      std::map<std::string, SvgSeries> by_set;
      for (std::size_t i = 1; i < prows.size(); ++i) {
        const auto& r = prows[i];
        auto& s = by_set[r[1]];
        s.label = r[0] + "/" + r[1];
        s.points.emplace_back(std::stod(r[2]), std::stod(r[3]));
      }
      for (auto& [set_name, s] : by_set)
        probe_chart.series.push_back(std::move(s));
    }
  }
  check(used > 0, "report: no completed runs found");

  std::ofstream os(fs::path(out_dir) / "report.csv");
  check(bool(os), "report: cannot write report.csv");
  os << "strategy,split,metric,mean_over_seeds,n_seeds\n";
  char buf[64];
  for (const auto& [strategy, splits] : table) {
    // cross-split mean, the Table-"Mean" analog
    std::map<std::string, std::vector<double>> mean_over_splits;
    for (const auto& [split, metrics] : splits)
      for (const auto& [metric, vals] : metrics) {
        double m = 0.0;
        for (double v : vals) m += v;
        m /= double(vals.size());
        std::snprintf(buf, sizeof(buf), "%.17g", m);
        os << strategy << "," << split << "," << metric << "," << buf << ","
           << vals.size() << "\n";
        mean_over_splits[metric].push_back(m);
      }
    for (const auto& [metric, vals] : mean_over_splits) {
      double m = 0.0;
      for (double v : vals) m += v;
      m /= double(vals.size());
      std::snprintf(buf, sizeof(buf), "%.17g", m);
      os << strategy << ",mean," << metric << "," << buf << "," << vals.size()
         << "\n";
    }
  }
  write_svg_chart((fs::path(out_dir) / "probe_overlay.svg").string(),
                  probe_chart);
}

}  // namespace ftlab
