#include "iia/core/engine.hpp"

#include <sstream>

#include "iia/core/grid.hpp"
#include "iia/core/reduce.hpp"
#include "iia/core/schedule.hpp"
#include "iia/errors.hpp"

namespace iia {
namespace {

ReferencePolicy reference_for(const InstrumentedModel& model, const ReferenceSet& refs, int layer) {
  auto it = refs.find(layer);
  return it != refs.end() ? it->second : model.default_reference(layer);
}

std::int64_t ipow(std::int64_t base, std::size_t exp) {
  std::int64_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) out *= base;
  return out;
}

// Per-row step indices for the active layers handled in one pass.
using StepColumns = std::map<int, torch::Tensor>;  // layer -> int64 (rows)

struct Job {
  const InstrumentedModel& model;
  const InterpolationPlan& plan;
  const Integrand& integrand;
  const ReferenceSet& refs;
  int class_index;
  std::vector<int> grad_layers;  // ascending
  int first_grad;
  bool needs_backward;
};

torch::Tensor interpolate_layer(const Job& job, int layer, const torch::Tensor& u, const torch::Tensor& steps) {
  auto r = reference_for(job.model, job.refs, layer).make(u);
  auto a = steps.to(torch::kDouble) / static_cast<double>(job.plan.steps);
  return interpolate_rows(u, r, a);
}

std::string row_context(const Job& job, const StepColumns& steps, std::int64_t row) {
  std::ostringstream os;
  os << "(";
  bool first = true;
  for (const auto& [layer, col] : steps) {
    os << (first ? "" : ", ") << "a_" << layer << "=" << col[row].item<std::int64_t>() << "/" << job.plan.steps;
    first = false;
  }
  os << ")";
  return os.str();
}

// Runs a batch from its state at job.first_grad up to the head with gradients
// enabled and returns the summed (double) contribution of its rows.
torch::Tensor run_tracked(const Job& job, LayerState state, const StepColumns& steps) {
  const int depth = job.model.depth();
  const int l = job.plan.layer;
  std::map<int, torch::Tensor> v_at;
  torch::Tensor u_l;
  torch::Tensor logits;
  for (int j = state.layer; j <= depth; ++j) {
    auto u = state.u;
    torch::Tensor v;
    if (auto it = steps.find(j); it != steps.end()) {
      if (j == job.first_grad) {
        torch::NoGradGuard no_grad;
        v = interpolate_layer(job, j, u, it->second);
      } else {
        v = interpolate_layer(job, j, u, it->second);
      }
    } else {
      v = u;
    }
    if (j == job.first_grad && job.needs_backward) v = v.detach().set_requires_grad(true);
    if (j == l) u_l = u;
    v_at[j] = v;
    if (j < depth) {
      state = job.model.advance(state, v);
    } else {
      logits = job.model.head(state, v);
    }
  }

  std::vector<torch::Tensor> grads;
  if (job.needs_backward) {
    std::vector<torch::Tensor> inputs;
    for (int j : job.grad_layers) inputs.push_back(v_at.at(j));
    if (logits.requires_grad()) {
      auto score = logits.select(1, job.class_index).sum();
      grads = torch::autograd::grad({score}, inputs, {}, /*retain_graph=*/false, /*create_graph=*/false,
                                    /*allow_unused=*/true);
    } else {
      grads.resize(inputs.size());
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      grads[i] = grads[i].defined() ? grads[i].detach() : torch::zeros_like(inputs[i]);
    }
  }

  torch::NoGradGuard no_grad;
  torch::Tensor contrib;
  switch (job.integrand.kind) {
    case IntegrandKind::plain_gradient:
    case IntegrandKind::activation_gradient_product: {
      auto v = v_at.at(l).detach();
      auto q = job.integrand.kind == IntegrandKind::plain_gradient ? plain_gradient(v, grads.front())
                                                                    : activation_gradient_product(v, grads.front());
      auto r = reference_for(job.model, job.refs, l).make(u_l);
      contrib = (u_l.to(torch::kDouble) - r.to(torch::kDouble)) * q.to(torch::kDouble);
      break;
    }
    case IntegrandKind::gradient_rollout:
    case IntegrandKind::attention_rollout: {
      RolloutState rs;
      for (std::size_t i = 0; i < job.grad_layers.size(); ++i) {
        rs.attentions.push_back(v_at.at(job.grad_layers[i]).detach());
        if (job.needs_backward) rs.gradients.push_back(grads[i]);
      }
      contrib = job.integrand.kind == IntegrandKind::gradient_rollout
                    ? gradient_rollout(rs, job.integrand.rollout_combine)
                    : attention_rollout(rs, job.integrand.rollout_combine);
      break;
    }
  }
  auto finite = torch::isfinite(contrib).flatten(1).all(1);
  if (!finite.all().item<bool>()) {
    const auto row = (~finite).nonzero()[0][0].item<std::int64_t>();
    throw NumericError("non-finite integrand at layer " + std::to_string(l) + " for grid point " +
                       row_context(job, steps, row));
  }
  return contrib.sum(0);
}

Job make_job(const InstrumentedModel& model, const torch::Tensor& image, const InterpolationPlan& plan,
             const Integrand& integrand, const ReferenceSet& refs, int class_index) {
  plan.validate();
  if (plan.depth() != model.depth()) {
    throw InvalidArgument("plan covers " + std::to_string(plan.depth()) + " layers but " + model.name() + " has " +
                          std::to_string(model.depth()));
  }
  const auto shape = model.input_shape();
  if (image.dim() != 3 || image.sizes().vec() != shape) {
    throw InvalidArgument("image shape " + c10::str(image.sizes()) + " does not match the model input " +
                          c10::str(c10::IntArrayRef(shape)));
  }
  if (class_index < 0 || class_index >= model.num_classes()) {
    throw InvalidArgument("class index " + std::to_string(class_index) + " out of range");
  }
  Job job{model, plan, integrand, refs, class_index, gradient_layers(model, plan, integrand), 0, false};
  job.first_grad = job.grad_layers.front();
  job.needs_backward = integrand.kind != IntegrandKind::attention_rollout;
  return job;
}

torch::Tensor run_batched(const Job& job, const torch::Tensor& image, const ExecutionOptions& options) {
  const int n = job.plan.steps;
  const int g = job.first_grad;

  // Shared prefix below the first gradient layer: one row per grid prefix.
  LayerState state = job.model.capture_input(image.unsqueeze(0));
  {
    torch::NoGradGuard no_grad;
    for (int j = 0; j < g; ++j) {
      torch::Tensor v = state.u;
      if (job.plan.is_active(j)) {
        const auto rows = state.batch();
        state = state.select_rows(torch::arange(rows).repeat_interleave(n));
        auto steps = torch::arange(1, n + 1, torch::kLong).repeat({rows});
        v = interpolate_layer(job, j, state.u, steps);
      }
      state = job.model.advance(state, v);
    }
  }

  std::vector<int> suffix_layers;
  for (int j : job.plan.active_layers()) {
    if (j >= g) suffix_layers.push_back(j);
  }
  const std::int64_t prefix_rows = state.batch();
  const std::int64_t suffix_size = ipow(n, suffix_layers.size());
  const auto schedule = schedule_range(prefix_rows * suffix_size, std::max<std::int64_t>(1, options.max_batch));

  torch::Tensor total;
  for (const auto& range : schedule.batches) {
    auto rows = torch::arange(range.begin, range.end, torch::kLong);
    auto chunk = state.select_rows(torch::div(rows, suffix_size, "floor"));
    StepColumns steps;
    auto rem = torch::remainder(rows, suffix_size);
    for (auto it = suffix_layers.rbegin(); it != suffix_layers.rend(); ++it) {
      steps[*it] = torch::remainder(rem, n) + 1;
      rem = torch::div(rem, n, "floor");
    }
    auto part = run_tracked(job, chunk, steps);
    total = total.defined() ? total + part : part;
  }
  return total / static_cast<double>(job.plan.grid_size());
}

torch::Tensor run_sequential(const Job& job, const torch::Tensor& image) {
  const int g = job.first_grad;
  const auto points = enumerate_interpolation_grid(job.plan);
  torch::Tensor total;
  for (const auto& point : points) {
    StepColumns all;
    for (int j : job.plan.active_layers()) all[j] = torch::full({1}, point.k[static_cast<std::size_t>(j)], torch::kLong);
    LayerState state = job.model.capture_input(image.unsqueeze(0));
    {
      torch::NoGradGuard no_grad;
      for (int j = 0; j < g; ++j) {
        auto it = all.find(j);
        auto v = it != all.end() ? interpolate_layer(job, j, state.u, it->second) : state.u;
        state = job.model.advance(state, v);
      }
    }
    StepColumns upper;
    for (const auto& [j, col] : all) {
      if (j >= g) upper[j] = col;
    }
    auto part = run_tracked(job, state, upper);
    total = total.defined() ? total + part : part;
  }
  return total / static_cast<double>(job.plan.grid_size());
}

}  // namespace

int resolve_class(const InstrumentedModel& model, const torch::Tensor& image, ClassSelector selector,
                  std::optional<int> label) {
  if (selector == ClassSelector::target) {
    if (!label) throw InvalidArgument("the target class selector needs a label");
    if (*label < 0 || *label >= model.num_classes()) throw InvalidArgument("label out of the model's class range");
    return *label;
  }
  return model.predict(image);
}

std::vector<int> gradient_layers(const InstrumentedModel& model, const InterpolationPlan& plan,
                                 const Integrand& integrand) {
  if (!integrand.is_rollout()) return {plan.layer};
  if (model.architecture() != Architecture::vit) {
    throw UnsupportedArchitecture(integrand.name() + " needs attention layers; " + model.name() + " has none");
  }
  if (plan.layer < 1) throw InvalidArgument(integrand.name() + " needs an attention layer (l >= 1)");
  std::vector<int> layers;
  for (int j = 1; j <= plan.layer; ++j) layers.push_back(j);
  return layers;
}

torch::Tensor iterated_attribution_tensor(const InstrumentedModel& model, const torch::Tensor& image,
                                          const InterpolationPlan& plan, const Integrand& integrand,
                                          const ReferenceSet& references, int class_index,
                                          const ExecutionOptions& options) {
  const Job job = make_job(model, image, plan, integrand, references, class_index);
  return options.sequential ? run_sequential(job, image) : run_batched(job, image, options);
}

Grid2D layer_tensor_to_map(const InstrumentedModel& model, const torch::Tensor& accumulated, int layer,
                           std::optional<Grid2D>* raw_out) {
  const auto shape = model.input_shape();
  const auto h = shape.at(1), w = shape.at(2);
  Grid2D raw;
  const bool attention = model.architecture() == Architecture::vit && layer >= 1;
  if (accumulated.dim() == 2 || attention) {
    auto square = accumulated.dim() == 3 ? accumulated.mean(0) : accumulated;
    if (square.dim() != 2) throw InvalidArgument("attention-layer result must be (T,T) or (H,T,T)");
    const auto grid = model.token_grid();
    if (!grid) throw InvalidArgument(model.name() + " has no token grid for a token-level result");
    raw = cls_row_to_patch_map(Grid2D::from_tensor(square), grid->rows, grid->cols);
  } else if (accumulated.dim() == 3) {
    raw = Grid2D::from_tensor(accumulated.to(torch::kDouble).mean(0));
  } else {
    throw InvalidArgument("cannot reduce a " + std::to_string(accumulated.dim()) + "D result to a map");
  }
  if (raw_out) *raw_out = raw;
  return reduce_to_map(raw.to_tensor(), h, w);
}

AttributionMap iterated_attribution(const InstrumentedModel& model, const torch::Tensor& image,
                                    const InterpolationPlan& plan, const Integrand& integrand,
                                    const ReferenceSet& references, int class_index,
                                    const ExecutionOptions& options) {
  auto accumulated = iterated_attribution_tensor(model, image, plan, integrand, references, class_index, options);
  std::optional<Grid2D> raw;
  auto grid = layer_tensor_to_map(model, accumulated, plan.layer, &raw);
  auto map = AttributionMap::from_grid(grid, class_index, "iia " + plan.describe() + " q=" + integrand.name());
  if (!map.all_finite()) throw NumericError("attribution map for layer " + std::to_string(plan.layer) + " is not finite");
  map.raw_pre_resize = std::move(raw);
  return map;
}

}  // namespace iia
