#include "iia/io/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "iia/errors.hpp"

namespace iia {
namespace {

cv::Mat to_mat(const torch::Tensor& hwc) {
  auto t = hwc.contiguous();
  const int c = t.dim() == 3 ? static_cast<int>(t.size(2)) : 1;
  return cv::Mat(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC(c), t.data_ptr<std::uint8_t>()).clone();
}

torch::Tensor from_mat(const cv::Mat& m) {
  cv::Mat c = m.isContinuous() ? m : m.clone();
  auto t = torch::from_blob(c.data, {c.rows, c.cols, c.channels()}, torch::kUInt8).clone();
  return t;
}

// Output size after the short-side resize, or the input size when it is
// already at the crop size.
cv::Size resized_size(std::int64_t h, std::int64_t w, const PreprocessOptions& o) {
  if (h == o.crop && w == o.crop) return {static_cast<int>(w), static_cast<int>(h)};
  if (h <= w) {
    const auto nw = static_cast<int>(o.resize_short * w / h);
    return {nw, static_cast<int>(o.resize_short)};
  }
  const auto nh = static_cast<int>(o.resize_short * h / w);
  return {static_cast<int>(o.resize_short), nh};
}

cv::Rect center_crop(cv::Size size, std::int64_t crop) {
  const int c = static_cast<int>(crop);
  if (size.width < c || size.height < c) throw InvalidArgument("image smaller than the crop after resizing");
  return {(size.width - c) / 2, (size.height - c) / 2, c, c};
}

}  // namespace

torch::Tensor read_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DatasetError("cannot decode image " + path.string());
  if (m.depth() != CV_8U) m.convertTo(m, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2RGB);
  else if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  return from_mat(m);
}

torch::Tensor preprocess(const torch::Tensor& image, const PreprocessOptions& o) {
  if (image.dim() != 3 && image.dim() != 2) throw InvalidArgument("preprocess expects an HWC or HW image");
  if (image.size(0) == 0 || image.size(1) == 0) throw InvalidArgument("preprocess: zero-sized image");
  auto hwc = image.dim() == 2 ? image.unsqueeze(2) : image;
  if (hwc.scalar_type() != torch::kUInt8) throw InvalidArgument("preprocess expects uint8 pixels");
  cv::Mat m = to_mat(hwc);
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_RGBA2RGB);
  if (o.channels == 3 && m.channels() == 1) cv::cvtColor(m, m, cv::COLOR_GRAY2RGB);
  if (o.channels == 1 && m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_RGB2GRAY);
  const auto size = resized_size(m.rows, m.cols, o);
  if (size != m.size()) cv::resize(m, m, size, 0, 0, cv::INTER_LINEAR);
  m = m(center_crop(m.size(), o.crop)).clone();
  auto t = from_mat(m).permute({2, 0, 1}).to(torch::kFloat).div(255.0);
  for (std::int64_t c = 0; c < t.size(0); ++c) {
    const auto i = static_cast<std::size_t>(std::min<std::int64_t>(c, 2));
    t[c].sub_(o.normalization.mean[i]).div_(o.normalization.std[i]);
  }
  return t.contiguous();
}

std::vector<std::uint8_t> preprocess_mask(const std::vector<std::uint8_t>& mask, std::int64_t height,
                                          std::int64_t width, const PreprocessOptions& o) {
  if (static_cast<std::int64_t>(mask.size()) != height * width) throw InvalidArgument("mask size mismatch");
  cv::Mat m(static_cast<int>(height), static_cast<int>(width), CV_8U, const_cast<std::uint8_t*>(mask.data()));
  cv::Mat r;
  const auto size = resized_size(height, width, o);
  if (size != m.size()) {
    cv::resize(m, r, size, 0, 0, cv::INTER_NEAREST);
  } else {
    r = m.clone();
  }
  cv::Mat c = r(center_crop(r.size(), o.crop)).clone();
  std::vector<std::uint8_t> out(c.data, c.data + c.total());
  for (auto& v : out) v = v ? 1 : 0;
  return out;
}

torch::Tensor to_display(const torch::Tensor& image, const Normalization& n) {
  auto x = image.detach().to(torch::kDouble).clone();
  for (std::int64_t c = 0; c < x.size(0); ++c) {
    const auto i = static_cast<std::size_t>(std::min<std::int64_t>(c, 2));
    x[c] = x[c] * n.std[i] + n.mean[i];
  }
  auto out = (x * 255.0).round().clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0});
  if (out.size(2) == 1) out = out.expand({-1, -1, 3});
  return out.contiguous();
}

PreprocessOptions preprocess_for(const InstrumentedModel& model) {
  const auto shape = model.input_shape();
  PreprocessOptions o;
  o.channels = shape[0];
  o.crop = shape[1];
  o.resize_short = shape[1] == 224 ? 256 : shape[1];
  o.normalization = model.normalization();
  return o;
}

}  // namespace iia
