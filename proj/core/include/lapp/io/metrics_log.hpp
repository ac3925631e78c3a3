#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lapp/loop/loop.hpp"

namespace lapp::io {

// One metrics row as a single JSON object line, fixed key order, PPO stats
// flattened into named columns. NaN (e.g. gait metrics on the point mass)
// becomes null; reading maps null back to NaN. Doubles round-trip bit for
// bit.
std::string metrics_json_line(const loop::MetricsRow& row);
loop::MetricsRow metrics_from_json(const std::string& line);

// The same columns as CSV for plotting: bools as 0/1, NaN printed as nan.
std::string metrics_csv_header();
std::string metrics_csv_line(const loop::MetricsRow& row);

std::vector<loop::MetricsRow> read_metrics_jsonl(const std::string& path);

// Appends rows to <dir>/metrics.jsonl and <dir>/metrics.csv. Construction
// first drops any rows with epoch >= resume_epoch from both files (a fresh
// run passes 0 and starts clean; a resumed run passes its first epoch so a
// crashed run's trailing rows never duplicate). Epochs must then arrive
// strictly increasing, continuing from what was kept.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& dir, std::size_t resume_epoch = 0);

  void write(const loop::MetricsRow& row);  // flushes both files

  const std::string& jsonl_path() const { return jsonl_path_; }
  const std::string& csv_path() const { return csv_path_; }

 private:
  std::string jsonl_path_, csv_path_;
  std::ofstream jsonl_, csv_;
  std::optional<std::size_t> last_epoch_;
};

}  // namespace lapp::io
