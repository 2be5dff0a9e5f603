#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "iia/core/attribution_map.hpp"
#include "iia/models/instrumented_model.hpp"

namespace iia {

struct MetricCurve {
  std::vector<double> fractions;
  std::vector<double> scores;
  double auc = 0.0;
};

// Trapezoidal area divided by the fraction span. Fractions must ascend; a
// zero span yields the mean score.
double auc(const std::vector<double>& fractions, const std::vector<double>& scores);

enum class PerturbationOrder { pos, neg };
enum class InsDelMode { insertion, deletion };

// Pixel indices (row-major) from most to least relevant; equal values keep
// raster order.
std::vector<std::int64_t> relevance_order(const AttributionMap& map);

// Pixels covered by fraction i/steps of n pixels, rounded half up.
std::int64_t masked_count(std::int64_t i, std::int64_t steps, std::int64_t n);

// Softmax probability of `class_index` for each image of a batch, evaluated
// without gradients in chunks of `max_batch`.
std::vector<double> class_probabilities(const InstrumentedModel& model, const torch::Tensor& batch, int class_index,
                                        std::int64_t max_batch = 32);

// POS removes pixels in decreasing relevance, NEG in exactly the reverse
// order; fractions 0.1..0.9, removed pixels set to zero in model space.
MetricCurve perturbation_curve(const InstrumentedModel& model, const torch::Tensor& image, const AttributionMap& map,
                               int class_index, PerturbationOrder order);

// Deletion removes most-relevant-first from the image, insertion reveals
// most-relevant-first onto a zero image; fractions 0, 0.1, ..., 1.
MetricCurve insertion_deletion(const InstrumentedModel& model, const torch::Tensor& image, const AttributionMap& map,
                               int class_index, InsDelMode mode);

struct ExplainedImage {
  torch::Tensor image;  // model space (C,H,W)
  AttributionMap map;
  int class_index = 0;
};

struct AdpPic {
  double adp = 0.0;  // percent
  double pic = 0.0;  // percent
};

// Min-max normalised map as a (H,W) mask; a constant map gives all ones.
torch::Tensor normalized_mask(const AttributionMap& map);

AdpPic adp_pic_from_scores(const std::vector<double>& full, const std::vector<double>& masked);
AdpPic adp_pic(const InstrumentedModel& model, const std::vector<ExplainedImage>& items);

// Entropy proxy: compressed size in bytes of an 8-bit RGB/gray image.
using Compressor = std::function<std::size_t(const torch::Tensor& pixels_hwc_u8)>;
std::size_t png_compressed_size(const torch::Tensor& pixels_hwc_u8);

struct SicAicOptions {
  double blur_sigma = 16.0;
  int steps = 10;
  Compressor compressor = png_compressed_size;
};

struct SicAic {
  double sic = 0.0;
  double aic = 0.0;
  std::vector<MetricCurve> softmax_curves;   // per image, x = information
  std::vector<MetricCurve> accuracy_curves;  // per image
};

// Progressively reveals the top i/(steps-1) relevant pixels on a blurred
// copy; x is the composite's compressed size over the clean image's.
SicAic sic_aic(const InstrumentedModel& model, const std::vector<ExplainedImage>& items, const SicAicOptions& options = {});

// Per-image faithfulness numbers; AUCs are in [0,1].
struct MapEvaluation {
  double pos = 0.0;
  double neg = 0.0;
  double ins = 0.0;
  double del = 0.0;
  double full_probability = 0.0;    // Y
  double masked_probability = 0.0;  // O, on image o normalized map
};

MapEvaluation evaluate_map(const InstrumentedModel& model, const torch::Tensor& image, const AttributionMap& map,
                           int class_index);

// Means over images, all in percent: AUCs scaled by 100, ADP and PIC as
// defined.
struct MetricSummary {
  double pos = 0.0, neg = 0.0, ins = 0.0, del = 0.0, adp = 0.0, pic = 0.0;
  std::int64_t images = 0;
};

MetricSummary summarize(const std::vector<MapEvaluation>& evaluations);

struct SegScore {
  double pa = 0.0;
  double ap = 0.0;
  double miou = 0.0;
  double mf1 = 0.0;
};

// Foreground = map >= mean(map) (map > 0 for a constant map). `mask` is
// row-major, non-zero = foreground.
SegScore segmentation_scores(const AttributionMap& map, const std::vector<std::uint8_t>& mask);

// Area under precision-recall of the pixel ranking, summed over distinct
// thresholds.
double average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

}  // namespace iia
