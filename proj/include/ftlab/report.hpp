#pragma once

#include <map>
#include <string>
#include <vector>

namespace ftlab {

// Aggregates completed run directories (metrics.csv + probe.csv) into a
// final-epoch comparison table (mean over seeds, plus a cross-split mean
// column) and a probe-curve overlay plot. Incomplete directories are skipped
// with a warning on stderr.
void make_report(const std::vector<std::string>& run_dirs,
                 const std::string& out_dir);

// Minimal CSV reading for our own schema-stable files.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace ftlab
