#include "iia/io/archive.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>

#include "json.hpp"

#include "iia/errors.hpp"
#include "iia/io/files.hpp"

namespace iia {
namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

std::filesystem::path archive_blob(const std::filesystem::path& stem) {
  auto p = stem;
  p += ".bin";
  return p;
}

std::filesystem::path archive_sidecar(const std::filesystem::path& stem) {
  auto p = stem;
  p += ".json";
  return p;
}

void save_map(const std::filesystem::path& stem, const AttributionMap& map, const MapMetadata& meta) {
  if (static_cast<std::int64_t>(map.values.size()) != map.height * map.width) {
    throw InvalidArgument("map values do not match its height x width");
  }
  std::string blob(map.values.size() * 4, '\0');
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const auto bits = to_le(std::bit_cast<std::uint32_t>(map.values[i]));
    std::memcpy(blob.data() + 4 * i, &bits, 4);
  }
  nlohmann::ordered_json sidecar = {{"height", map.height},
                                    {"width", map.width},
                                    {"class_index", map.class_index},
                                    {"method", map.method_tag},
                                    {"model", meta.model},
                                    {"plan", meta.plan},
                                    {"created", meta.created.empty() ? utc_now() : meta.created}};
  write_file_atomic(archive_blob(stem), blob);
  write_file_atomic(archive_sidecar(stem), sidecar.dump(2) + "\n");
}

AttributionMap load_map(const std::filesystem::path& stem, MapMetadata* meta) {
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(read_file(archive_sidecar(stem)));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptArchive(archive_sidecar(stem).string() + ": " + e.what());
  }
  AttributionMap map;
  try {
    map.height = sidecar.at("height").get<std::int64_t>();
    map.width = sidecar.at("width").get<std::int64_t>();
    map.class_index = sidecar.at("class_index").get<int>();
    map.method_tag = sidecar.at("method").get<std::string>();
    if (meta) {
      meta->model = sidecar.at("model").get<std::string>();
      meta->plan = sidecar.at("plan").get<std::string>();
      meta->created = sidecar.at("created").get<std::string>();
    } else {
      sidecar.at("model");
      sidecar.at("plan");
      sidecar.at("created");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptArchive(archive_sidecar(stem).string() + ": missing or malformed field: " + e.what());
  }
  if (map.height < 0 || map.width < 0) throw CorruptArchive("negative map size in " + archive_sidecar(stem).string());
  const auto blob = read_file(archive_blob(stem));
  const auto expected = static_cast<std::size_t>(4 * map.height * map.width);
  if (blob.size() != expected) {
    throw CorruptArchive(archive_blob(stem).string() + " holds " + std::to_string(blob.size()) + " bytes, sidecar implies " +
                         std::to_string(expected));
  }
  map.values.resize(static_cast<std::size_t>(map.height * map.width));
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, blob.data() + 4 * i, 4);
    map.values[i] = std::bit_cast<float>(to_le(bits));
  }
  return map;
}

}  // namespace iia
