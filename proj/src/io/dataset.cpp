#include "iia/io/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <png.h>
#include <zlib.h>

#include <opencv2/imgproc.hpp>

#include "json.hpp"

#include "iia/errors.hpp"
#include "iia/io/files.hpp"
#include "iia/io/image.hpp"

namespace iia {
namespace fs = std::filesystem;
namespace {

const std::set<std::string> kImageExtensions = {".jpg", ".jpeg", ".png", ".bmp", ".JPEG", ".JPG", ".PNG", ".webp"};

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

bool is_image(const fs::path& p) { return fs::is_regular_file(p) && kImageExtensions.count(p.extension().string()); }

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (is_image(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void require_dir(const fs::path& p) {
  if (!fs::is_directory(p)) throw DatasetError("dataset directory " + p.string() + " does not exist");
}

std::map<std::string, int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot read label file " + path.string());
  std::map<std::string, int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::string name;
    int label;
    if (!(ls >> name)) continue;
    if (!(ls >> label)) throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": expected '<file> <label>'");
    labels[name] = label;
  }
  return labels;
}

std::optional<int> lookup(const std::map<std::string, int>& labels, const fs::path& image) {
  if (auto it = labels.find(image.filename().string()); it != labels.end()) return it->second;
  if (auto it = labels.find(image.stem().string()); it != labels.end()) return it->second;
  return std::nullopt;
}

std::vector<std::uint8_t> binarize(const std::vector<std::uint8_t>& raw, bool voc) {
  std::vector<std::uint8_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = voc ? (raw[i] != 0 && raw[i] != 255) : (raw[i] != 0);
  return out;
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::image_folder: return "image_folder";
    case DatasetKind::imagenet_val: return "imagenet_val";
    case DatasetKind::in_seg: return "in_seg";
    case DatasetKind::voc_masks: return "voc_masks";
    case DatasetKind::coco_masks: return "coco_masks";
  }
  return "unknown";
}

std::optional<DatasetKind> parse_dataset_kind(const std::string& text) {
  for (auto k : {DatasetKind::image_folder, DatasetKind::imagenet_val, DatasetKind::in_seg, DatasetKind::voc_masks,
                 DatasetKind::coco_masks}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

Dataset Dataset::open(const DatasetSpec& spec) {
  Dataset ds;
  ds.kind_ = spec.kind;
  const auto& root = spec.root;
  require_dir(root);
  std::map<std::string, int> labels;
  if (spec.label_source && spec.kind != DatasetKind::coco_masks) labels = read_labels(*spec.label_source);

  switch (spec.kind) {
    case DatasetKind::image_folder:
    case DatasetKind::imagenet_val: {
      std::vector<fs::path> classes;
      for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) classes.push_back(e.path());
      }
      std::sort(classes.begin(), classes.end());
      if (!classes.empty()) {
        for (std::size_t c = 0; c < classes.size(); ++c) {
          for (const auto& img : sorted_images(classes[c])) {
            ds.entries_.push_back({classes[c].filename().string() + "/" + img.filename().string(), img,
                                   static_cast<int>(c), {}, {}});
          }
        }
        break;
      }
      if (spec.kind == DatasetKind::imagenet_val && labels.empty()) {
        const auto fallback = root / "val_labels.txt";
        if (!fs::exists(fallback)) throw DatasetError("imagenet_val needs a label source or " + fallback.string());
        labels = read_labels(fallback);
      }
      for (const auto& img : sorted_images(root)) {
        auto label = lookup(labels, img);
        if (spec.kind == DatasetKind::imagenet_val && !label) {
          warn("no label for " + img.filename().string() + "; skipped");
          continue;
        }
        ds.entries_.push_back({img.filename().string(), img, label, {}, {}});
      }
      break;
    }
    case DatasetKind::in_seg: {
      require_dir(root / "images");
      for (const auto& img : sorted_images(root / "images")) {
        auto mask = root / "masks" / (img.stem().string() + ".png");
        if (!fs::exists(mask)) {
          warn("no mask for " + img.filename().string() + "; skipped");
          continue;
        }
        ds.entries_.push_back({img.stem().string(), img, lookup(labels, img), mask, {}});
      }
      break;
    }
    case DatasetKind::voc_masks: {
      require_dir(root / "JPEGImages");
      std::vector<std::string> ids;
      const auto list = root / "ImageSets" / "Segmentation" / "val.txt";
      if (fs::exists(list)) {
        std::ifstream in(list);
        for (std::string id; in >> id;) ids.push_back(id);
      } else {
        require_dir(root / "SegmentationClass");
        for (const auto& e : fs::directory_iterator(root / "SegmentationClass")) {
          if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
        }
      }
      std::sort(ids.begin(), ids.end());
      for (const auto& id : ids) {
        auto mask = root / "SegmentationClass" / (id + ".png");
        auto img = root / "JPEGImages" / (id + ".jpg");
        if (!fs::exists(img)) {
          warn("image " + img.string() + " missing; skipped");
          continue;
        }
        if (!fs::exists(mask)) {
          warn("no mask for " + id + "; skipped");
          continue;
        }
        ds.entries_.push_back({id, img, lookup(labels, img), mask, {}});
      }
      break;
    }
    case DatasetKind::coco_masks: {
      const auto ann_path = spec.label_source.value_or(root / "annotations.json");
      auto json = std::make_shared<nlohmann::json>();
      try {
        *json = nlohmann::json::parse(read_file(ann_path));
      } catch (const std::exception& e) {
        throw DatasetError("cannot parse COCO annotations " + ann_path.string() + ": " + e.what());
      }
      const auto image_dir = fs::is_directory(root / "images") ? root / "images" : root;
      std::map<std::int64_t, std::vector<std::size_t>> objects;
      const auto& anns = json->at("annotations");
      for (std::size_t i = 0; i < anns.size(); ++i) objects[anns[i].at("image_id").get<std::int64_t>()].push_back(i);
      std::vector<Entry> entries;
      for (const auto& im : json->at("images")) {
        const auto id = im.at("id").get<std::int64_t>();
        const auto file = im.at("file_name").get<std::string>();
        auto it = objects.find(id);
        if (it == objects.end()) {
          warn("no annotations for " + file + "; skipped");
          continue;
        }
        if (!fs::exists(image_dir / file)) {
          warn("image " + (image_dir / file).string() + " missing; skipped");
          continue;
        }
        entries.push_back({file, image_dir / file, std::nullopt, {}, it->second});
      }
      std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.id < b.id; });
      ds.entries_ = std::move(entries);
      ds.coco_ = json;
      break;
    }
  }

  if (spec.subset_list) {
    std::ifstream in(*spec.subset_list);
    if (!in) throw DatasetError("cannot read subset list " + spec.subset_list->string());
    std::set<std::string> keep;
    for (std::string id; in >> id;) keep.insert(id);
    std::vector<Entry> kept;
    for (auto& e : ds.entries_) {
      if (keep.count(e.id) || keep.count(e.image.filename().string()) || keep.count(e.image.stem().string())) {
        kept.push_back(std::move(e));
      }
    }
    ds.entries_ = std::move(kept);
  }
  if (spec.subset_size) {
    if (*spec.subset_size < 0) throw InvalidArgument("subset size must be non-negative");
    if (static_cast<std::size_t>(*spec.subset_size) < ds.entries_.size()) {
      ds.entries_.resize(static_cast<std::size_t>(*spec.subset_size));
    }
  }
  return ds;
}

bool Dataset::labelled() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.label.has_value(); });
}

Sample Dataset::load(std::size_t index) const {
  const auto& e = entries_.at(index);
  Sample s;
  s.id = e.id;
  s.image = read_image(e.image);
  s.label = e.label;
  const auto h = s.image.size(0), w = s.image.size(1);
  if (kind_ == DatasetKind::in_seg || kind_ == DatasetKind::voc_masks) {
    std::int64_t mh = 0, mw = 0;
    auto raw = read_png_indices(e.mask, &mh, &mw);
    if (mh != h || mw != w) throw DatasetError("mask " + e.mask.string() + " does not match its image size");
    s.mask = binarize(raw, kind_ == DatasetKind::voc_masks);
  } else if (kind_ == DatasetKind::coco_masks) {
    const auto& anns = static_cast<const nlohmann::json*>(coco_.get())->at("annotations");
    s.mask.assign(static_cast<std::size_t>(h * w), 0);
    for (auto i : e.objects) {
      const auto& seg = anns[i].at("segmentation");
      std::vector<std::uint8_t> part;
      if (seg.is_array()) {
        part.assign(s.mask.size(), 0);
        for (const auto& poly : seg) {
          auto m = rasterize_polygon(poly.get<std::vector<double>>(), h, w);
          for (std::size_t p = 0; p < m.size(); ++p) part[p] |= m[p];
        }
      } else {
        const auto size = seg.at("size").get<std::vector<std::int64_t>>();
        if (size.size() != 2 || size[0] != h || size[1] != w) throw DatasetError("RLE size does not match " + e.id);
        const auto& counts = seg.at("counts");
        part = decode_rle(counts.is_string() ? decompress_rle_string(counts.get<std::string>())
                                             : counts.get<std::vector<std::uint32_t>>(),
                          h, w);
      }
      for (std::size_t p = 0; p < part.size(); ++p) s.mask[p] |= part[p];
    }
  }
  return s;
}

std::vector<std::uint8_t> read_png_indices(const fs::path& path, std::int64_t* height, std::int64_t* width) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw DatasetError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    std::fclose(fp);
    throw DatasetError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DatasetError("cannot decode PNG " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth < 8) png_set_packing(png);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA) png_set_rgb_to_gray(png, 1, -1, -1);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != w) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DatasetError(path.string() + " is not a single-channel or paletted PNG");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = out.data() + static_cast<std::size_t>(r) * w;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  *height = h;
  *width = w;
  return out;
}

std::vector<std::uint8_t> decode_rle(const std::vector<std::uint32_t>& counts, std::int64_t height, std::int64_t width) {
  std::vector<std::uint8_t> colmajor(static_cast<std::size_t>(height * width), 0);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto c : counts) {
    if (pos + c > colmajor.size()) throw DatasetError("RLE counts exceed the mask size");
    std::fill_n(colmajor.begin() + static_cast<std::ptrdiff_t>(pos), c, value);
    pos += c;
    value ^= 1;
  }
  std::vector<std::uint8_t> out(colmajor.size());
  for (std::int64_t x = 0; x < width; ++x) {
    for (std::int64_t y = 0; y < height; ++y) {
      out[static_cast<std::size_t>(y * width + x)] = colmajor[static_cast<std::size_t>(x * height + y)];
    }
  }
  return out;
}

std::vector<std::uint32_t> decompress_rle_string(const std::string& s) {
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw DatasetError("truncated compressed RLE");
      const std::int64_t c = static_cast<std::int64_t>(s[p]) - 48;
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    if (x < 0) throw DatasetError("negative run in compressed RLE");
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return counts;
}

std::vector<std::uint8_t> rasterize_polygon(const std::vector<double>& xy, std::int64_t height, std::int64_t width) {
  if (xy.size() < 6 || xy.size() % 2) throw DatasetError("polygon needs at least three x,y pairs");
  cv::Mat m = cv::Mat::zeros(static_cast<int>(height), static_cast<int>(width), CV_8U);
  constexpr int shift = 8;
  std::vector<cv::Point> pts;
  for (std::size_t i = 0; i < xy.size(); i += 2) {
    pts.emplace_back(static_cast<int>(std::lround(xy[i] * (1 << shift))), static_cast<int>(std::lround(xy[i + 1] * (1 << shift))));
  }
  std::vector<std::vector<cv::Point>> polys{pts};
  cv::fillPoly(m, polys, cv::Scalar(1), cv::LINE_8, shift);
  return std::vector<std::uint8_t>(m.data, m.data + m.total());
}

}  // namespace iia

namespace iia {

std::pair<torch::Tensor, torch::Tensor> read_mnist_csv_gz(const fs::path& path) {
  gzFile gz = gzopen(path.string().c_str(), "rb");
  if (!gz) throw DatasetError("cannot open " + path.string());
  std::string text;
  char buffer[1 << 16];
  int got;
  while ((got = gzread(gz, buffer, sizeof buffer)) > 0) text.append(buffer, static_cast<std::size_t>(got));
  const bool failed = got < 0;
  gzclose(gz);
  if (failed) throw DatasetError("cannot decompress " + path.string());

  std::vector<float> pixels;
  std::vector<std::int64_t> labels;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<int> values;
    values.reserve(785);
    const char* p = line.c_str();
    char* end = nullptr;
    while (*p) {
      long v = std::strtol(p, &end, 10);
      if (end == p) break;
      values.push_back(static_cast<int>(v));
      p = end;
      while (*p == ',' || *p == ' ' || *p == '\r') ++p;
    }
    if (values.size() != 785) {
      if (lineno == 1) continue;  // header
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": expected 785 values");
    }
    for (int i = 0; i < 784; ++i) pixels.push_back(static_cast<float>(values[i]) / 255.0f);
    labels.push_back(values[784]);
  }
  const auto n = static_cast<std::int64_t>(labels.size());
  if (n == 0) throw DatasetError(path.string() + " holds no samples");
  auto images = torch::from_blob(pixels.data(), {n, 1, 28, 28}, torch::kFloat32).clone();
  auto y = torch::from_blob(labels.data(), {n}, torch::kInt64).clone();
  return {images, y};
}

}  // namespace iia
