#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "iia/core/reference.hpp"

namespace iia {

enum class Architecture { cnn, vit };

// Per-channel input statistics a model expects after scaling pixels to [0,1].
struct Normalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  static Normalization imagenet() { return {}; }
  static Normalization half() { return {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}; }
  static Normalization identity() { return {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}}; }
};

struct TokenGrid {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

// A named set of submodules that sanity checks re-initialise together.
struct LayerGroup {
  std::string name;
  std::vector<std::shared_ptr<torch::nn::Module>> modules;
  // Parameters owned directly by a parent module (e.g. position embeddings).
  std::vector<torch::Tensor> loose;
  // Overrides the per-type default initializer when set.
  std::function<void(torch::nn::Module&)> initializer;
};

// Re-draws every parameter in the group from the initializer family the
// module was constructed with, seeded by `seed`.
void reinitialize(const LayerGroup& group, std::uint64_t seed);

// Snapshot of the pipeline right after u^layer has been computed: `u` is the
// representation of interest and `carry` holds whatever else the layer needs
// to finish from an injected interpolant (e.g. attention values). All tensors
// are batch-major.
struct LayerState {
  int layer = 0;
  torch::Tensor u;
  std::vector<torch::Tensor> carry;

  std::int64_t batch() const { return u.size(0); }
  LayerState select_rows(const torch::Tensor& rows) const;
  static LayerState concat(const std::vector<LayerState>& parts);
  LayerState detached() const;
};

// Uniform tap/inject interface over a network decomposed as
//   h^{-1} = x,  u^l = u^l(h^{l-1}),  h^l = v^l(v^l),  logits = f(h^L).
// Layer 0 is the input itself. Implementations are immutable during
// attribution; all mutable tap state lives in TapSession.
class InstrumentedModel {
 public:
  virtual ~InstrumentedModel() = default;

  virtual const std::string& name() const = 0;
  virtual Architecture architecture() const = 0;
  // L, the number of tapped layers above the input.
  virtual int depth() const = 0;
  // {C, H, W}
  virtual std::vector<std::int64_t> input_shape() const = 0;
  virtual std::int64_t num_classes() const = 0;

  // Completes layer `state.layer` from the interpolant `v` and computes the
  // next layer's representation.
  virtual LayerState advance(const LayerState& state, const torch::Tensor& v) const = 0;
  // Completes layer L from `v` and applies the classification head.
  virtual torch::Tensor head(const LayerState& state, const torch::Tensor& v) const = 0;

  virtual ReferencePolicy default_reference(int layer) const = 0;
  virtual std::optional<TokenGrid> token_grid() const { return std::nullopt; }
  virtual Normalization normalization() const { return Normalization::imagenet(); }

  // Ordered from the input side to the head.
  virtual std::vector<LayerGroup> layer_groups() const = 0;
  virtual std::vector<torch::Tensor> parameters() const = 0;
  virtual void set_training(bool training) = 0;

  // A new instance. With `share_weights` the clone reads the same parameter
  // storage (cheap, for worker pools); otherwise parameters are deep-copied.
  virtual std::unique_ptr<InstrumentedModel> clone(bool share_weights) const = 0;

  LayerState capture_input(const torch::Tensor& x) const { return LayerState{0, x, {}}; }

  // Plain phi(x) through the tapped pipeline without substitutions.
  torch::Tensor forward(const torch::Tensor& x) const;

  // Class index with the highest logit for a single (C,H,W) image.
  int predict(const torch::Tensor& image) const;
};

// Fixes parameters: eval mode and no parameter gradients.
void freeze(InstrumentedModel& model);

struct LayerTapState {
  torch::Tensor u;
  torch::Tensor r;
  torch::Tensor v;
  torch::Tensor grad_v;
};

// Mutable tap registry for one model instance and one worker.
class TapSession {
 public:
  explicit TapSession(const InstrumentedModel& model);

  // Runs the pipeline from `input` (batch-major), substituting v^l for the
  // layers present in `injections`. Every layer's u^l and v^l is recorded and
  // gradients are tracked from layer `track_from` upwards.
  torch::Tensor forward_with_injections(const torch::Tensor& input, const std::map<int, torch::Tensor>& injections,
                                        int track_from = 0);

  // d f_y / d v^layer for the last forward pass, summed over the batch rows'
  // class-y scores. Unused layers yield zeros.
  torch::Tensor backward_to_injection(int class_index, int layer);

  const LayerTapState& tap(int layer) const;
  void clear();

 private:
  const InstrumentedModel& model_;
  std::vector<LayerTapState> taps_;
  torch::Tensor logits_;
  int track_from_ = 0;
};

}  // namespace iia
