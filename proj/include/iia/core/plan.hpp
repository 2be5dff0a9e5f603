#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace iia {

enum class ClassSelector { target, predicted };

std::string_view to_string(ClassSelector selector);
std::optional<ClassSelector> parse_class_selector(std::string_view text);

// Which representations are interpolated (one flag per layer, index 0 being
// the input), how many steps each nested sum takes, and the layer whose
// representation the integrand is taken with respect to.
struct InterpolationPlan {
  std::vector<std::uint8_t> interpolate;  // size depth()+1
  int steps = 10;
  int layer = 0;
  ClassSelector class_selector = ClassSelector::predicted;

  int depth() const { return static_cast<int>(interpolate.size()) - 1; }

  // Number of interpolated layers at or below `layer`.
  int beta() const;

  // Ascending indices j <= layer with interpolate[j] set.
  std::vector<int> active_layers() const;

  bool is_active(int j) const { return j <= layer && j < static_cast<int>(interpolate.size()) && interpolate[j] != 0; }

  // n^beta.
  std::int64_t grid_size() const;

  // Throws InvalidArgument when the plan cannot be executed.
  void validate() const;

  // e.g. "b=10001 l=4 n=10 class=predicted"
  std::string describe() const;
};

enum class Preset { iia2, iia3, img, act, iia2_lm1 };

std::string_view to_string(Preset preset);
std::optional<Preset> parse_preset(std::string_view text);

// Builds one of the named plans for a model with `depth` tapped layers.
InterpolationPlan make_preset(Preset preset, int depth, int steps = 10);

}  // namespace iia
