#pragma once

#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "iia/models/instrumented_model.hpp"

namespace iia {

// A CNN expressed as an ordered list of stages (residual stages, dense
// blocks, ...) followed by a classification head. Stage indices are 1-based
// so that stage l produces h^l.
class StagedCnn {
 public:
  virtual ~StagedCnn() = default;

  virtual int num_stages() const = 0;
  virtual std::string stage_name(int index) const = 0;
  virtual torch::Tensor stage(int index, const torch::Tensor& x) = 0;
  virtual torch::Tensor classify(const torch::Tensor& features) = 0;
  virtual std::int64_t num_classes() const = 0;

  virtual std::vector<LayerGroup> layer_groups() = 0;
  virtual std::shared_ptr<StagedCnn> deep_copy() const = 0;
  virtual torch::nn::Module& module() = 0;
};

struct CnnOptions {
  std::string name;
  std::vector<std::int64_t> input_shape;  // {C, H, W}
  Normalization normalization = Normalization::imagenet();
  // Applied at every layer including the input.
  ReferencePolicy reference = ReferencePolicy::channel_min();
};

// Taps every stage output (u^l = h^l, v^l = identity). The network is probed
// once with a zero input; a stage that throws or does not return a 4D
// activation map is reported by name.
std::unique_ptr<InstrumentedModel> instrument_cnn(std::shared_ptr<StagedCnn> network, CnnOptions options);

}  // namespace iia
