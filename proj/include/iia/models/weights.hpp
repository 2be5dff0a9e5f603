#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace iia {

using StateDict = std::map<std::string, torch::Tensor>;

// safetensors container: u64 little-endian header length, JSON header, raw
// little-endian tensor data. F64/F32/F16/BF16/I64/I32/U8 are understood.
StateDict read_safetensors(const std::filesystem::path& path);
void write_safetensors(const std::filesystem::path& path, const StateDict& tensors);

// Parameters and buffers by dotted name.
StateDict state_dict(const torch::nn::Module& module);

// Copies `state` into the module's parameters and buffers. With `strict`, a
// missing or unexpected key is an error (num_batches_tracked may be absent).
void load_state(torch::nn::Module& module, const StateDict& state, bool strict = true);

}  // namespace iia
