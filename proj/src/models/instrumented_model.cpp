#include "iia/models/instrumented_model.hpp"

#include <optional>

#include "iia/errors.hpp"

namespace iia {

void reinitialize(const LayerGroup& group, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(seed);
  for (const auto& module : group.modules) {
    if (group.initializer) {
      group.initializer(*module);
      continue;
    }
    if (auto conv = std::dynamic_pointer_cast<torch::nn::Conv2dImpl>(module)) {
      conv->reset_parameters();
    } else if (auto linear = std::dynamic_pointer_cast<torch::nn::LinearImpl>(module)) {
      linear->reset_parameters();
    } else if (auto bn = std::dynamic_pointer_cast<torch::nn::BatchNorm2dImpl>(module)) {
      bn->reset_parameters();
    } else if (auto ln = std::dynamic_pointer_cast<torch::nn::LayerNormImpl>(module)) {
      ln->reset_parameters();
    } else {
      for (auto& p : module->parameters()) {
        if (p.dim() >= 2) {
          torch::nn::init::kaiming_uniform_(p, std::sqrt(5.0));
        } else {
          p.normal_(0.0, 0.02);
        }
      }
    }
  }
  for (auto tensor : group.loose) tensor.normal_(0.0, 0.02);
}

LayerState LayerState::select_rows(const torch::Tensor& rows) const {
  LayerState out{layer, u.index_select(0, rows), {}};
  out.carry.reserve(carry.size());
  for (const auto& c : carry) out.carry.push_back(c.index_select(0, rows));
  return out;
}

LayerState LayerState::concat(const std::vector<LayerState>& parts) {
  if (parts.empty()) throw InvalidArgument("LayerState::concat of nothing");
  if (parts.size() == 1) return parts.front();
  LayerState out;
  out.layer = parts.front().layer;
  std::vector<torch::Tensor> us;
  for (const auto& p : parts) us.push_back(p.u);
  out.u = torch::cat(us, 0);
  for (std::size_t c = 0; c < parts.front().carry.size(); ++c) {
    std::vector<torch::Tensor> pieces;
    for (const auto& p : parts) pieces.push_back(p.carry[c]);
    out.carry.push_back(torch::cat(pieces, 0));
  }
  return out;
}

LayerState LayerState::detached() const {
  LayerState out{layer, u.detach(), {}};
  for (const auto& c : carry) out.carry.push_back(c.detach());
  return out;
}

torch::Tensor InstrumentedModel::forward(const torch::Tensor& x) const {
  LayerState state = capture_input(x);
  for (int j = 0; j < depth(); ++j) state = advance(state, state.u);
  return head(state, state.u);
}

int InstrumentedModel::predict(const torch::Tensor& image) const {
  torch::NoGradGuard no_grad;
  auto logits = forward(image.unsqueeze(0));
  return static_cast<int>(logits.argmax(1).item<std::int64_t>());
}

void freeze(InstrumentedModel& model) {
  model.set_training(false);
  for (auto& p : model.parameters()) p.set_requires_grad(false);
}

TapSession::TapSession(const InstrumentedModel& model) : model_(model) {}

torch::Tensor TapSession::forward_with_injections(const torch::Tensor& input,
                                                  const std::map<int, torch::Tensor>& injections, int track_from) {
  const int depth = model_.depth();
  for (const auto& [layer, tensor] : injections) {
    if (layer < 0 || layer > depth) {
      throw InstrumentationError("layer " + std::to_string(layer) + " is not registered (model has layers 0.." +
                                 std::to_string(depth) + ")");
    }
  }
  if (track_from < 0 || track_from > depth) throw InvalidArgument("track_from outside the tapped layers");
  taps_.assign(static_cast<std::size_t>(depth) + 1, {});
  track_from_ = track_from;
  logits_ = torch::Tensor();

  LayerState state = model_.capture_input(input);
  for (int j = 0; j <= depth; ++j) {
    auto& tap = taps_[static_cast<std::size_t>(j)];
    tap.u = state.u;
    torch::Tensor v = state.u;
    if (auto it = injections.find(j); it != injections.end()) {
      if (it->second.sizes() != state.u.sizes()) {
        throw InvalidArgument("injection at layer " + std::to_string(j) + " has shape " +
                              c10::str(it->second.sizes()) + ", expected " + c10::str(state.u.sizes()));
      }
      v = it->second.to(state.u.options()).detach();
      if (j >= track_from) v.set_requires_grad(true);
    } else if (j == track_from) {
      v = v.detach().set_requires_grad(true);
    }
    tap.v = v;

    std::optional<torch::NoGradGuard> no_grad;
    if (j < track_from) no_grad.emplace();
    if (j < depth) {
      state = model_.advance(state, v);
    } else {
      logits_ = model_.head(state, v);
    }
  }
  return logits_;
}

torch::Tensor TapSession::backward_to_injection(int class_index, int layer) {
  if (!logits_.defined()) throw StateError("backward_to_injection called before forward_with_injections");
  if (layer < 0 || layer >= static_cast<int>(taps_.size())) {
    throw InstrumentationError("layer " + std::to_string(layer) + " is not registered");
  }
  if (class_index < 0 || class_index >= logits_.size(1)) throw InvalidArgument("class index out of range");
  auto& tap = taps_[static_cast<std::size_t>(layer)];
  if (layer < track_from_) {
    throw StateError("gradients were not tracked for layer " + std::to_string(layer));
  }
  torch::Tensor grad;
  if (tap.v.requires_grad() && logits_.requires_grad()) {
    auto score = logits_.select(1, class_index).sum();
    auto grads = torch::autograd::grad({score}, {tap.v}, {}, /*retain_graph=*/true, /*create_graph=*/false,
                                       /*allow_unused=*/true);
    grad = grads.front();
  }
  if (!grad.defined()) grad = torch::zeros_like(tap.v);
  tap.grad_v = grad.detach();
  return tap.grad_v;
}

const LayerTapState& TapSession::tap(int layer) const {
  if (layer < 0 || layer >= static_cast<int>(taps_.size())) {
    throw InstrumentationError("layer " + std::to_string(layer) + " is not registered");
  }
  return taps_[static_cast<std::size_t>(layer)];
}

void TapSession::clear() {
  taps_.clear();
  logits_ = torch::Tensor();
}

}  // namespace iia
