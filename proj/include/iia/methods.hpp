#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "iia/core/attribution_map.hpp"
#include "iia/core/engine.hpp"
#include "iia/core/plan.hpp"
#include "iia/models/instrumented_model.hpp"

namespace iia {

// Named explanation methods: the five interpolation presets plus the
// baselines.
enum class Method { iia2, iia3, img, act, iia2_lm1, ig, gradcam, rollout };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view text);
std::vector<Method> ablation_methods();  // img, act, iia2, iia3, iia2_lm1, ig

bool supports(Method method, Architecture architecture);

// Plan of a preset method for `model`, nullopt for the baselines.
std::optional<InterpolationPlan> method_plan(Method method, const InstrumentedModel& model, int steps,
                                             ClassSelector selector = ClassSelector::predicted);

// Integrand used with the presets: activation x gradient on CNNs, Gradient
// Rollout on transformers.
Integrand method_integrand(const InstrumentedModel& model);

// `ig` uses the zero image as reference; every map has the input's size.
AttributionMap explain(const InstrumentedModel& model, const torch::Tensor& image, Method method, int steps,
                       int class_index, const ExecutionOptions& options = {});

}  // namespace iia
