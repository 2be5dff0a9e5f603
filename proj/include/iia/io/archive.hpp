#pragma once

#include <filesystem>
#include <string>

#include "iia/core/attribution_map.hpp"

namespace iia {

struct MapMetadata {
  std::string model;
  std::string plan;
  // ISO-8601 UTC; filled with the current time when empty.
  std::string created;
};

// `<stem>.bin` holds height*width little-endian float32 values, row-major;
// `<stem>.json` holds {height, width, class_index, method, model, plan,
// created}. Both are written atomically.
void save_map(const std::filesystem::path& stem, const AttributionMap& map, const MapMetadata& meta);

AttributionMap load_map(const std::filesystem::path& stem, MapMetadata* meta = nullptr);

std::filesystem::path archive_blob(const std::filesystem::path& stem);
std::filesystem::path archive_sidecar(const std::filesystem::path& stem);

}  // namespace iia
