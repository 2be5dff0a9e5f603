#include "iia/io/report.hpp"

#include <sstream>

#include "iia/io/files.hpp"

namespace iia {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_csv(const std::vector<ReportRecord>& records) {
  std::ostringstream os;
  os << "model,method,metric,class,value,images\n";
  for (const auto& r : records) {
    os << csv_field(r.model) << ',' << csv_field(r.method) << ',' << csv_field(r.metric) << ','
       << csv_field(r.class_selector) << ',' << format_fixed(r.value, 2) << ',' << r.images << '\n';
  }
  return os.str();
}

std::string report_markdown(const std::vector<ReportRecord>& records) {
  std::ostringstream os;
  os << "| model | method | metric | class | value | images |\n";
  os << "|---|---|---|---|---:|---:|\n";
  for (const auto& r : records) {
    os << "| " << r.model << " | " << r.method << " | " << r.metric << " | " << r.class_selector << " | "
       << format_fixed(r.value, 2) << " | " << r.images << " |\n";
  }
  return os.str();
}

void write_report(const std::vector<ReportRecord>& records, const std::filesystem::path& stem) {
  auto csv = stem, md = stem;
  csv += ".csv";
  md += ".md";
  write_file_atomic(csv, report_csv(records));
  write_file_atomic(md, report_markdown(records));
}

}  // namespace iia
