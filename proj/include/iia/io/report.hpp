#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace iia {

struct ReportRecord {
  std::string model;
  std::string method;
  std::string metric;
  std::string class_selector;
  double value = 0.0;
  std::int64_t images = 0;
};

// One row per record in input order; columns model, method, metric, class,
// value (2 decimals), images. Writes `<stem>.csv` and `<stem>.md`
// atomically.
void write_report(const std::vector<ReportRecord>& records, const std::filesystem::path& stem);

std::string report_csv(const std::vector<ReportRecord>& records);
std::string report_markdown(const std::vector<ReportRecord>& records);

}  // namespace iia
