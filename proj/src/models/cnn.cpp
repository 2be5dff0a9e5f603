#include "iia/models/cnn.hpp"

#include "iia/errors.hpp"

namespace iia {
namespace {

class InstrumentedCnn final : public InstrumentedModel {
 public:
  InstrumentedCnn(std::shared_ptr<StagedCnn> network, CnnOptions options)
      : network_(std::move(network)), options_(std::move(options)) {}

  const std::string& name() const override { return options_.name; }
  Architecture architecture() const override { return Architecture::cnn; }
  int depth() const override { return network_->num_stages(); }
  std::vector<std::int64_t> input_shape() const override { return options_.input_shape; }
  std::int64_t num_classes() const override { return network_->num_classes(); }

  LayerState advance(const LayerState& state, const torch::Tensor& v) const override {
    if (state.layer >= depth()) throw StateError("advance past the last stage; use head()");
    return LayerState{state.layer + 1, network_->stage(state.layer + 1, v), {}};
  }

  torch::Tensor head(const LayerState& state, const torch::Tensor& v) const override {
    if (state.layer != depth()) throw StateError("head() needs the state of the last stage");
    return network_->classify(v);
  }

  ReferencePolicy default_reference(int /*layer*/) const override { return options_.reference; }
  Normalization normalization() const override { return options_.normalization; }
  std::vector<LayerGroup> layer_groups() const override { return network_->layer_groups(); }
  std::vector<torch::Tensor> parameters() const override { return network_->module().parameters(); }
  void set_training(bool training) override { network_->module().train(training); }

  std::unique_ptr<InstrumentedModel> clone(bool share_weights) const override {
    auto network = share_weights ? network_ : network_->deep_copy();
    return std::make_unique<InstrumentedCnn>(std::move(network), options_);
  }

 private:
  std::shared_ptr<StagedCnn> network_;
  CnnOptions options_;
};

}  // namespace

std::unique_ptr<InstrumentedModel> instrument_cnn(std::shared_ptr<StagedCnn> network, CnnOptions options) {
  if (!network) throw InstrumentationError("instrument_cnn: no network");
  if (network->num_stages() < 1) throw InstrumentationError(options.name + ": network has no stages to tap");
  if (options.input_shape.size() != 3) throw InstrumentationError(options.name + ": input shape must be {C,H,W}");

  torch::NoGradGuard no_grad;
  const bool was_training = network->module().is_training();
  network->module().eval();
  auto params = network->module().parameters();
  auto probe_options = params.empty() ? torch::TensorOptions() : torch::TensorOptions().dtype(params.front().dtype());
  auto x = torch::zeros({1, options.input_shape[0], options.input_shape[1], options.input_shape[2]}, probe_options);
  for (int s = 1; s <= network->num_stages(); ++s) {
    try {
      x = network->stage(s, x);
    } catch (const std::exception& e) {
      throw InstrumentationError(options.name + ": stage " + std::to_string(s) + " (" + network->stage_name(s) +
                                 ") is not decomposable: " + e.what());
    }
    if (x.dim() != 4) {
      throw InstrumentationError(options.name + ": stage " + std::to_string(s) + " (" + network->stage_name(s) +
                                 ") does not produce an activation map");
    }
  }
  try {
    network->classify(x);
  } catch (const std::exception& e) {
    throw InstrumentationError(options.name + ": classification head failed on the last stage output: " + e.what());
  }
  network->module().train(was_training);

  auto model = std::make_unique<InstrumentedCnn>(std::move(network), std::move(options));
  freeze(*model);
  return model;
}

}  // namespace iia
