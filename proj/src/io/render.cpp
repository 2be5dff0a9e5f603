#include "iia/io/render.hpp"

#include <algorithm>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "iia/errors.hpp"

namespace iia {
namespace {

cv::Mat colorize_bgr(const AttributionMap& map) {
  if (map.size() == 0) throw InvalidArgument("cannot render an empty map");
  const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double lo = *lo_it, hi = *hi_it;
  cv::Mat gray(static_cast<int>(map.height), static_cast<int>(map.width), CV_8U);
  for (std::int64_t i = 0; i < map.size(); ++i) {
    const double v = hi > lo ? (map.values[static_cast<std::size_t>(i)] - lo) / (hi - lo) : 0.0;
    gray.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  cv::Mat color;
  cv::applyColorMap(gray, color, cv::COLORMAP_JET);
  return color;
}

std::string encode(const cv::Mat& bgr) {
  std::vector<uchar> buf;
  cv::imencode(".png", bgr, buf);
  return std::string(buf.begin(), buf.end());
}

}  // namespace

torch::Tensor colorize(const AttributionMap& map) {
  cv::Mat rgb;
  cv::cvtColor(colorize_bgr(map), rgb, cv::COLOR_BGR2RGB);
  return torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
}

std::string render_heatmap(const AttributionMap& map) { return encode(colorize_bgr(map)); }

std::string render_overlay(const AttributionMap& map, const torch::Tensor& image, double alpha) {
  if (image.dim() != 3 || image.size(0) != map.height || image.size(1) != map.width || image.size(2) != 3) {
    throw InvalidArgument("overlay image must be HxWx3 at the map's size");
  }
  auto img = image.contiguous();
  cv::Mat rgb(static_cast<int>(map.height), static_cast<int>(map.width), CV_8UC3, img.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  cv::Mat out;
  cv::addWeighted(colorize_bgr(map), alpha, bgr, 1.0 - alpha, 0.0, out);
  return encode(out);
}

}  // namespace iia
