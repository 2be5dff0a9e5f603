#pragma once

#include <filesystem>
#include <string>

namespace iia {

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

// Fixed-point with `decimals` digits, "-0.00" printed as "0.00".
std::string format_fixed(double value, int decimals);

}  // namespace iia
