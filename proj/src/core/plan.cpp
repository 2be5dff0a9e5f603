#include "iia/core/plan.hpp"

#include <sstream>

#include "iia/errors.hpp"

namespace iia {

std::string_view to_string(ClassSelector selector) {
  return selector == ClassSelector::target ? "target" : "predicted";
}

std::optional<ClassSelector> parse_class_selector(std::string_view text) {
  if (text == "target") return ClassSelector::target;
  if (text == "predicted") return ClassSelector::predicted;
  return std::nullopt;
}

int InterpolationPlan::beta() const {
  int count = 0;
  for (int j = 0; j <= layer && j < static_cast<int>(interpolate.size()); ++j) count += interpolate[j] != 0;
  return count;
}

std::vector<int> InterpolationPlan::active_layers() const {
  std::vector<int> out;
  for (int j = 0; j <= layer && j < static_cast<int>(interpolate.size()); ++j) {
    if (interpolate[j] != 0) out.push_back(j);
  }
  return out;
}

std::int64_t InterpolationPlan::grid_size() const {
  std::int64_t total = 1;
  for (int i = 0; i < beta(); ++i) total *= steps;
  return total;
}

void InterpolationPlan::validate() const {
  if (interpolate.empty()) throw InvalidArgument("interpolation plan has no layers");
  if (steps < 1) throw InvalidArgument("interpolation plan needs at least one step, got " + std::to_string(steps));
  if (layer < 0 || layer > depth()) {
    throw InvalidArgument("integrand layer " + std::to_string(layer) + " outside [0, " + std::to_string(depth()) + "]");
  }
  for (auto flag : interpolate) {
    if (flag > 1) throw InvalidArgument("interpolation flags must be 0 or 1");
  }
}

std::string InterpolationPlan::describe() const {
  std::ostringstream os;
  os << "b=";
  for (auto flag : interpolate) os << static_cast<int>(flag);
  os << " l=" << layer << " n=" << steps << " class=" << to_string(class_selector);
  return os.str();
}

std::string_view to_string(Preset preset) {
  switch (preset) {
    case Preset::iia2: return "iia2";
    case Preset::iia3: return "iia3";
    case Preset::img: return "img";
    case Preset::act: return "act";
    case Preset::iia2_lm1: return "iia2_lm1";
  }
  return "unknown";
}

std::optional<Preset> parse_preset(std::string_view text) {
  for (Preset p : {Preset::iia2, Preset::iia3, Preset::img, Preset::act, Preset::iia2_lm1}) {
    if (text == to_string(p)) return p;
  }
  return std::nullopt;
}

InterpolationPlan make_preset(Preset preset, int depth, int steps) {
  if (depth < 1) throw InvalidArgument("presets need a model with at least one tapped layer");
  const bool needs_penultimate = preset == Preset::iia3 || preset == Preset::iia2_lm1;
  if (needs_penultimate && depth < 2) {
    throw InvalidArgument(std::string(to_string(preset)) + " needs at least two tapped layers");
  }
  InterpolationPlan plan;
  plan.interpolate.assign(static_cast<std::size_t>(depth) + 1, 0);
  plan.steps = steps;
  plan.layer = depth;
  switch (preset) {
    case Preset::iia2:
      plan.interpolate[0] = 1;
      plan.interpolate[depth] = 1;
      break;
    case Preset::iia3:
      plan.interpolate[0] = 1;
      plan.interpolate[depth - 1] = 1;
      plan.interpolate[depth] = 1;
      break;
    case Preset::img:
      plan.interpolate[0] = 1;
      break;
    case Preset::act:
      plan.interpolate[depth] = 1;
      break;
    case Preset::iia2_lm1:
      plan.interpolate[0] = 1;
      plan.interpolate[depth - 1] = 1;
      plan.layer = depth - 1;
      break;
  }
  return plan;
}

}  // namespace iia
