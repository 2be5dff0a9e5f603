#include "iia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "iia/errors.hpp"

namespace iia {
namespace {

void check_pair(const torch::Tensor& image, const AttributionMap& map) {
  if (image.dim() != 3) throw InvalidArgument("metric image must be (C,H,W)");
  if (image.size(1) != map.height || image.size(2) != map.width) {
    throw InvalidArgument("map is " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                          " but the image is " + std::to_string(image.size(1)) + "x" + std::to_string(image.size(2)));
  }
}

// (steps+1) x (H*W) selection masks: row i marks the first count(i) pixels of
// `order`.
torch::Tensor prefix_masks(const std::vector<std::int64_t>& order, const std::vector<std::int64_t>& counts) {
  const auto n = static_cast<std::int64_t>(order.size());
  auto masks = torch::zeros({static_cast<std::int64_t>(counts.size()), n}, torch::kBool);
  auto acc = masks.accessor<bool, 2>();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (std::int64_t p = 0; p < counts[i]; ++p) acc[static_cast<std::int64_t>(i)][order[static_cast<std::size_t>(p)]] = true;
  }
  return masks;
}

// Batch where image b keeps `source` where keep[b] is set and `fill` elsewhere.
torch::Tensor compose(const torch::Tensor& source, const torch::Tensor& fill, const torch::Tensor& keep) {
  const auto b = keep.size(0);
  auto k = keep.reshape({b, 1, source.size(1), source.size(2)});
  return torch::where(k, source.unsqueeze(0), fill.unsqueeze(0));
}

torch::Tensor to_pixels(const torch::Tensor& image, const Normalization& norm) {
  auto x = image.detach().to(torch::kDouble).clone();
  for (std::int64_t c = 0; c < x.size(0); ++c) {
    const auto i = static_cast<std::size_t>(std::min<std::int64_t>(c, 2));
    x[c] = x[c] * norm.std[i] + norm.mean[i];
  }
  return (x * 255.0).round().clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0}).contiguous();
}

torch::Tensor gaussian_blur(const torch::Tensor& image, double sigma) {
  if (sigma <= 0.0) return image.clone();
  auto src = image.detach().to(torch::kFloat).contiguous();
  auto out = torch::empty_like(src);
  const int h = static_cast<int>(src.size(1)), w = static_cast<int>(src.size(2));
  for (std::int64_t c = 0; c < src.size(0); ++c) {
    cv::Mat in(h, w, CV_32F, src[c].data_ptr<float>());
    cv::Mat dst(h, w, CV_32F, out[c].data_ptr<float>());
    cv::GaussianBlur(in, dst, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT_101);
  }
  return out.to(image.dtype());
}

}  // namespace

double auc(const std::vector<double>& fractions, const std::vector<double>& scores) {
  if (fractions.size() != scores.size()) throw InvalidArgument("auc: fractions and scores differ in length");
  if (fractions.size() < 2) throw InvalidArgument("auc needs at least two points");
  double area = 0.0;
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    const double dx = fractions[i] - fractions[i - 1];
    if (dx < 0) throw InvalidArgument("auc: fractions must ascend");
    area += 0.5 * dx * (scores[i] + scores[i - 1]);
  }
  const double span = fractions.back() - fractions.front();
  if (span == 0.0) return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  return area / span;
}

std::vector<std::int64_t> relevance_order(const AttributionMap& map) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(map.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return map.values[static_cast<std::size_t>(a)] > map.values[static_cast<std::size_t>(b)];
  });
  return order;
}

std::int64_t masked_count(std::int64_t i, std::int64_t steps, std::int64_t n) {
  if (steps < 1) throw InvalidArgument("masked_count needs steps >= 1");
  return (2 * i * n + steps) / (2 * steps);
}

std::vector<double> class_probabilities(const InstrumentedModel& model, const torch::Tensor& batch, int class_index,
                                        std::int64_t max_batch) {
  torch::NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(batch.size(0)));
  for (std::int64_t start = 0; start < batch.size(0); start += max_batch) {
    const auto end = std::min(batch.size(0), start + max_batch);
    auto probs = torch::softmax(model.forward(batch.slice(0, start, end)).to(torch::kDouble), 1);
    for (std::int64_t i = 0; i < end - start; ++i) out.push_back(probs[i][class_index].item<double>());
  }
  return out;
}

MetricCurve perturbation_curve(const InstrumentedModel& model, const torch::Tensor& image, const AttributionMap& map,
                               int class_index, PerturbationOrder order) {
  check_pair(image, map);
  auto ranked = relevance_order(map);
  if (order == PerturbationOrder::neg) std::reverse(ranked.begin(), ranked.end());
  MetricCurve curve;
  std::vector<std::int64_t> counts;
  for (int i = 1; i <= 9; ++i) {
    curve.fractions.push_back(i / 10.0);
    counts.push_back(masked_count(i, 10, map.size()));
  }
  auto removed = prefix_masks(ranked, counts);
  auto batch = compose(image, torch::zeros_like(image), removed.logical_not());
  curve.scores = class_probabilities(model, batch, class_index);
  curve.auc = auc(curve.fractions, curve.scores);
  return curve;
}

MetricCurve insertion_deletion(const InstrumentedModel& model, const torch::Tensor& image, const AttributionMap& map,
                               int class_index, InsDelMode mode) {
  check_pair(image, map);
  const auto ranked = relevance_order(map);
  MetricCurve curve;
  std::vector<std::int64_t> counts;
  for (int i = 0; i <= 10; ++i) {
    curve.fractions.push_back(i / 10.0);
    counts.push_back(masked_count(i, 10, map.size()));
  }
  auto selected = prefix_masks(ranked, counts);
  auto zero = torch::zeros_like(image);
  auto batch = mode == InsDelMode::insertion ? compose(image, zero, selected) : compose(image, zero, selected.logical_not());
  curve.scores = class_probabilities(model, batch, class_index);
  curve.auc = auc(curve.fractions, curve.scores);
  return curve;
}

torch::Tensor normalized_mask(const AttributionMap& map) {
  auto m = map.to_tensor().to(torch::kDouble);
  const double lo = m.min().item<double>(), hi = m.max().item<double>();
  if (hi == lo) return torch::ones_like(m);
  return (m - lo) / (hi - lo);
}

AdpPic adp_pic_from_scores(const std::vector<double>& full, const std::vector<double>& masked) {
  if (full.size() != masked.size()) throw InvalidArgument("ADP/PIC: score lists differ in length");
  if (full.empty()) throw InvalidArgument("ADP/PIC needs at least one image");
  double drop = 0.0, increase = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const double y = full[i], o = masked[i];
    if (!(y > 0.0)) throw NumericError("ADP: unmasked score " + std::to_string(y) + " of image " + std::to_string(i) + " is not positive");
    drop += std::max(0.0, y - o) / y;
    if (y < o) increase += 1.0;
  }
  const double n = static_cast<double>(full.size());
  return {100.0 * drop / n, 100.0 * increase / n};
}

AdpPic adp_pic(const InstrumentedModel& model, const std::vector<ExplainedImage>& items) {
  std::vector<double> full, masked;
  for (const auto& item : items) {
    check_pair(item.image, item.map);
    auto mask = normalized_mask(item.map).to(item.image.dtype()).unsqueeze(0);
    auto batch = torch::stack({item.image, item.image * mask});
    auto probs = class_probabilities(model, batch, item.class_index);
    full.push_back(probs[0]);
    masked.push_back(probs[1]);
  }
  return adp_pic_from_scores(full, masked);
}

MapEvaluation evaluate_map(const InstrumentedModel& model, const torch::Tensor& image, const AttributionMap& map,
                           int class_index) {
  MapEvaluation e;
  e.pos = perturbation_curve(model, image, map, class_index, PerturbationOrder::pos).auc;
  e.neg = perturbation_curve(model, image, map, class_index, PerturbationOrder::neg).auc;
  e.ins = insertion_deletion(model, image, map, class_index, InsDelMode::insertion).auc;
  e.del = insertion_deletion(model, image, map, class_index, InsDelMode::deletion).auc;
  auto mask = normalized_mask(map).to(image.dtype()).unsqueeze(0);
  auto probs = class_probabilities(model, torch::stack({image, image * mask}), class_index);
  e.full_probability = probs[0];
  e.masked_probability = probs[1];
  return e;
}

MetricSummary summarize(const std::vector<MapEvaluation>& evaluations) {
  MetricSummary s;
  s.images = static_cast<std::int64_t>(evaluations.size());
  if (evaluations.empty()) return s;
  std::vector<double> full, masked;
  for (const auto& e : evaluations) {
    s.pos += e.pos;
    s.neg += e.neg;
    s.ins += e.ins;
    s.del += e.del;
    full.push_back(e.full_probability);
    masked.push_back(e.masked_probability);
  }
  const double scale = 100.0 / static_cast<double>(evaluations.size());
  s.pos *= scale;
  s.neg *= scale;
  s.ins *= scale;
  s.del *= scale;
  const auto ap = adp_pic_from_scores(full, masked);
  s.adp = ap.adp;
  s.pic = ap.pic;
  return s;
}

std::size_t png_compressed_size(const torch::Tensor& pixels) {
  auto p = pixels.contiguous();
  const int h = static_cast<int>(p.size(0)), w = static_cast<int>(p.size(1));
  const int c = p.dim() == 3 ? static_cast<int>(p.size(2)) : 1;
  cv::Mat mat(h, w, CV_8UC(c), p.data_ptr<std::uint8_t>());
  if (c == 3) cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
  std::vector<uchar> buf;
  cv::imencode(".png", mat, buf, {cv::IMWRITE_PNG_COMPRESSION, 9});
  return buf.size();
}

SicAic sic_aic(const InstrumentedModel& model, const std::vector<ExplainedImage>& items, const SicAicOptions& options) {
  if (options.steps < 2) throw InvalidArgument("SIC/AIC needs at least two steps");
  if (items.empty()) throw InvalidArgument("SIC/AIC needs at least one image");
  const auto norm = model.normalization();
  SicAic out;
  for (const auto& item : items) {
    check_pair(item.image, item.map);
    const auto ranked = relevance_order(item.map);
    std::vector<std::int64_t> counts;
    for (int i = 0; i < options.steps; ++i) counts.push_back(masked_count(i, options.steps - 1, item.map.size()));
    auto batch = compose(item.image, gaussian_blur(item.image, options.blur_sigma), prefix_masks(ranked, counts));

    const double clean_size = static_cast<double>(options.compressor(to_pixels(item.image, norm)));
    std::vector<std::pair<double, std::int64_t>> info;  // (information, row)
    for (std::int64_t i = 0; i < batch.size(0); ++i) {
      info.emplace_back(static_cast<double>(options.compressor(to_pixels(batch[i], norm))) / clean_size, i);
    }
    std::stable_sort(info.begin(), info.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    torch::Tensor logits;
    {
      torch::NoGradGuard no_grad;
      logits = model.forward(batch).to(torch::kDouble);
    }
    auto probs = torch::softmax(logits, 1);
    auto predicted = logits.argmax(1);
    MetricCurve sic, aic;
    for (const auto& [x, row] : info) {
      sic.fractions.push_back(x);
      aic.fractions.push_back(x);
      sic.scores.push_back(probs[row][item.class_index].item<double>());
      aic.scores.push_back(predicted[row].item<std::int64_t>() == item.class_index ? 1.0 : 0.0);
    }
    sic.auc = auc(sic.fractions, sic.scores);
    aic.auc = auc(aic.fractions, aic.scores);
    out.sic += sic.auc;
    out.aic += aic.auc;
    out.softmax_curves.push_back(std::move(sic));
    out.accuracy_curves.push_back(std::move(aic));
  }
  out.sic /= static_cast<double>(items.size());
  out.aic /= static_cast<double>(items.size());
  return out;
}

double average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("average_precision: length mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double positives = 0.0;
  for (auto l : labels) positives += l ? 1.0 : 0.0;
  if (positives == 0.0) throw InvalidArgument("average_precision: no positive labels");
  double tp = 0.0, seen = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    tp += labels[idx[i]] ? 1.0 : 0.0;
    seen += 1.0;
    // Only close a threshold once all tied scores are in.
    if (i + 1 < idx.size() && scores[idx[i + 1]] == scores[idx[i]]) continue;
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
  }
  return ap;
}

SegScore segmentation_scores(const AttributionMap& map, const std::vector<std::uint8_t>& mask) {
  if (static_cast<std::int64_t>(mask.size()) != map.size()) throw InvalidArgument("mask and map sizes differ");
  const auto n = map.size();
  if (n == 0) throw InvalidArgument("empty map");
  double mean = 0.0;
  bool constant = true;
  for (std::int64_t i = 0; i < n; ++i) {
    mean += map.values[static_cast<std::size_t>(i)];
    constant = constant && map.values[static_cast<std::size_t>(i)] == map.values[0];
  }
  mean /= static_cast<double>(n);

  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = map.values[static_cast<std::size_t>(i)];
    const bool pred = constant ? v > 0.0 : v >= mean;
    const bool truth = mask[static_cast<std::size_t>(i)] != 0;
    if (pred && truth) tp += 1;
    else if (pred && !truth) fp += 1;
    else if (!pred && truth) fn += 1;
    else tn += 1;
  }
  SegScore s;
  s.pa = (tp + tn) / static_cast<double>(n);
  if (tp + fn == 0) {
    const double perfect = tp + fp == 0 ? 1.0 : 0.0;
    s.miou = s.mf1 = s.ap = perfect;
    return s;
  }
  auto ratio = [](double num, double den) { return den == 0 ? 1.0 : num / den; };
  const double iou_fg = ratio(tp, tp + fp + fn), iou_bg = ratio(tn, tn + fn + fp);
  const double f1_fg = ratio(2 * tp, 2 * tp + fp + fn), f1_bg = ratio(2 * tn, 2 * tn + fn + fp);
  s.miou = 0.5 * (iou_fg + iou_bg);
  s.mf1 = 0.5 * (f1_fg + f1_bg);
  std::vector<double> scores(map.values.begin(), map.values.end());
  std::vector<std::uint8_t> labels(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) labels[i] = mask[i] ? 1 : 0;
  s.ap = average_precision(scores, labels);
  return s;
}

}  // namespace iia
