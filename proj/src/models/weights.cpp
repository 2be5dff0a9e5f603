#include "iia/models/weights.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "iia/errors.hpp"

namespace iia {
namespace {

struct DtypeInfo {
  const char* tag;
  torch::ScalarType type;
};

constexpr DtypeInfo kDtypes[] = {
    {"F64", torch::kFloat64}, {"F32", torch::kFloat32}, {"F16", torch::kFloat16}, {"BF16", torch::kBFloat16},
    {"I64", torch::kInt64},   {"I32", torch::kInt32},   {"U8", torch::kUInt8},    {"BOOL", torch::kBool},
};

torch::ScalarType parse_dtype(const std::string& tag) {
  for (const auto& d : kDtypes) {
    if (tag == d.tag) return d.type;
  }
  throw CorruptArchive("unsupported safetensors dtype " + tag);
}

const char* dtype_tag(torch::ScalarType type) {
  for (const auto& d : kDtypes) {
    if (type == d.type) return d.tag;
  }
  throw InvalidArgument(std::string("cannot store dtype ") + c10::toString(type));
}

}  // namespace

StateDict read_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open weights file " + path.string());
  unsigned char len_bytes[8];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) throw CorruptArchive(path.string() + ": truncated header");
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
  const auto file_size = std::filesystem::file_size(path);
  if (header_len > file_size - 8) throw CorruptArchive(path.string() + ": header length exceeds file size");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  const std::uint64_t data_start = 8 + header_len;

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptArchive(path.string() + ": bad header: " + e.what());
  }
  StateDict out;
  for (const auto& [name, entry] : meta.items()) {
    if (name == "__metadata__") continue;
    const auto type = parse_dtype(entry.at("dtype").get<std::string>());
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2 || offsets[1] < offsets[0] || data_start + offsets[1] > file_size) {
      throw CorruptArchive(path.string() + ": bad offsets for " + name);
    }
    auto tensor = torch::empty(shape, torch::TensorOptions().dtype(type));
    const auto nbytes = static_cast<std::uint64_t>(tensor.nbytes());
    if (nbytes != offsets[1] - offsets[0]) throw CorruptArchive(path.string() + ": size mismatch for " + name);
    in.seekg(static_cast<std::streamoff>(data_start + offsets[0]));
    in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw CorruptArchive(path.string() + ": truncated data for " + name);
    out.emplace(name, tensor);
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path, const StateDict& tensors) {
  nlohmann::json meta = nlohmann::json::object();
  std::uint64_t offset = 0;
  std::vector<torch::Tensor> ordered;
  for (const auto& [name, t] : tensors) {
    auto c = t.detach().cpu().contiguous();
    const auto nbytes = static_cast<std::uint64_t>(c.nbytes());
    meta[name] = {{"dtype", dtype_tag(c.scalar_type())}, {"shape", c.sizes().vec()}, {"data_offsets", {offset, offset + nbytes}}};
    offset += nbytes;
    ordered.push_back(c);
  }
  std::string header = meta.dump();
  while (header.size() % 8 != 0) header.push_back(' ');
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + tmp);
    std::uint64_t len = header.size();
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xff));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& t : ordered) out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    if (!out) throw InvalidArgument("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

StateDict state_dict(const torch::nn::Module& module) {
  StateDict out;
  for (const auto& p : module.named_parameters(/*recurse=*/true)) out.emplace(p.key(), p.value());
  for (const auto& b : module.named_buffers(/*recurse=*/true)) out.emplace(b.key(), b.value());
  return out;
}

void load_state(torch::nn::Module& module, const StateDict& state, bool strict) {
  torch::NoGradGuard no_grad;
  auto own = state_dict(module);
  std::vector<std::string> missing, unexpected;
  for (auto& [name, target] : own) {
    auto it = state.find(name);
    if (it == state.end()) {
      if (name.size() < 19 || name.substr(name.size() - 19) != "num_batches_tracked") missing.push_back(name);
      continue;
    }
    if (it->second.sizes() != target.sizes()) {
      throw InvalidArgument("weight " + name + " has shape " + c10::str(it->second.sizes()) + ", model expects " +
                            c10::str(target.sizes()));
    }
    target.copy_(it->second.to(target.dtype()));
  }
  for (const auto& [name, t] : state) {
    if (!own.count(name)) unexpected.push_back(name);
  }
  if (strict && (!missing.empty() || !unexpected.empty())) {
    std::ostringstream msg;
    msg << "state mismatch:";
    if (!missing.empty()) msg << " " << missing.size() << " missing (first: " << missing.front() << ")";
    if (!unexpected.empty()) msg << " " << unexpected.size() << " unexpected (first: " << unexpected.front() << ")";
    throw InvalidArgument(msg.str());
  }
}

}  // namespace iia
