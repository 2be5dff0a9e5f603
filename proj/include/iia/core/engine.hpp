#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include <torch/torch.h>

#include "iia/core/attribution_map.hpp"
#include "iia/core/plan.hpp"
#include "iia/core/reference.hpp"
#include "iia/integrands.hpp"
#include "iia/models/instrumented_model.hpp"

namespace iia {

struct ExecutionOptions {
  // Upper bound on rows per forward/backward pass.
  std::int64_t max_batch = 100;
  // Evaluate each grid point with its own pass from the input, without
  // sharing the no-gradient prefix across grid points.
  bool sequential = false;
};

// Reference policy overrides keyed by layer; missing layers fall back to the
// model's default.
using ReferenceSet = std::map<int, ReferencePolicy>;

// Resolves the class an explanation is computed for. `label` is required for
// the target selector; the predicted class comes from the clean forward pass.
int resolve_class(const InstrumentedModel& model, const torch::Tensor& image, ClassSelector selector,
                  std::optional<int> label);

// Layers whose interpolants need gradients for `integrand` at plan.layer.
std::vector<int> gradient_layers(const InstrumentedModel& model, const InterpolationPlan& plan,
                                 const Integrand& integrand);

// The nested-sum approximation of the iterated integral: for every grid point
// the pipeline runs with the plan's interpolants injected in ascending layer
// order, the integrand is evaluated at plan.layer and weighted by
// (u^l - r^l); the sum is divided by n^beta and reduced to a map of the
// image's spatial size. Accumulation is in double precision.
//
// `image` is a single (C,H,W) model-ready tensor.
AttributionMap iterated_attribution(const InstrumentedModel& model, const torch::Tensor& image,
                                    const InterpolationPlan& plan, const Integrand& integrand,
                                    const ReferenceSet& references, int class_index,
                                    const ExecutionOptions& options = {});

// The un-reduced accumulated tensor (u^l - r^l) o sum q / n^beta, shaped like
// one sample of v^l (tensor integrands) or T x T (rollout integrands).
torch::Tensor iterated_attribution_tensor(const InstrumentedModel& model, const torch::Tensor& image,
                                          const InterpolationPlan& plan, const Integrand& integrand,
                                          const ReferenceSet& references, int class_index,
                                          const ExecutionOptions& options = {});

// Turns an accumulated tensor at `layer` into a 2D map of the model's input
// size: channel mean for activation tensors, [CLS] row for attention-shaped
// or rollout results.
Grid2D layer_tensor_to_map(const InstrumentedModel& model, const torch::Tensor& accumulated, int layer,
                           std::optional<Grid2D>* raw_out = nullptr);

}  // namespace iia
