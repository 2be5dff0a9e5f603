#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace iia {

enum class DatasetKind { image_folder, imagenet_val, in_seg, voc_masks, coco_masks };

std::string to_string(DatasetKind kind);
std::optional<DatasetKind> parse_dataset_kind(const std::string& text);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::image_folder;
  std::filesystem::path root;
  // Keep only the first `subset_size` samples of the ordered listing.
  std::optional<std::int64_t> subset_size;
  // File with one sample id (file name or stem) per line to keep.
  std::optional<std::filesystem::path> subset_list;
  // Labels: lines "<file name> <label>" or "<file name>,<label>"; for COCO
  // the annotation JSON.
  std::optional<std::filesystem::path> label_source;
};

struct Sample {
  std::string id;
  torch::Tensor image;  // uint8 HWC
  std::optional<int> label;
  std::vector<std::uint8_t> mask;  // row-major, image size; empty without a mask
};

// Ordered sample listing. Layouts:
//   image_folder  root/*.{jpg,png,...} or root/<class>/*  (class = sorted index)
//   imagenet_val  root/* with labels from label_source or root/val_labels.txt
//   in_seg        root/images/* with binary masks root/masks/<stem>.png
//   voc_masks     root/JPEGImages, root/SegmentationClass palette PNGs,
//                 ids from root/ImageSets/Segmentation/val.txt when present
//   coco_masks    root/images/* with polygons/RLE in label_source or
//                 root/annotations.json; all objects are unioned
// Samples without their annotation are skipped with a warning on stderr.
class Dataset {
 public:
  static Dataset open(const DatasetSpec& spec);

  std::size_t size() const { return entries_.size(); }
  Sample load(std::size_t index) const;
  const std::string& id(std::size_t index) const { return entries_.at(index).id; }
  // True when every sample carries a class label.
  bool labelled() const;

  struct Entry {
    std::string id;
    std::filesystem::path image;
    std::optional<int> label;
    std::filesystem::path mask;  // voc/in_seg
    std::vector<std::size_t> objects;  // coco annotation indices
  };

 private:
  DatasetKind kind_ = DatasetKind::image_folder;
  std::vector<Entry> entries_;
  std::shared_ptr<const void> coco_;  // parsed annotation file
};

// Raw palette indices of an 8-bit paletted (or grayscale) PNG.
std::vector<std::uint8_t> read_png_indices(const std::filesystem::path& path, std::int64_t* height,
                                           std::int64_t* width);

// COCO run-length encodings (column-major). `counts` is either the
// uncompressed list or the compressed string form.
std::vector<std::uint8_t> decode_rle(const std::vector<std::uint32_t>& counts, std::int64_t height, std::int64_t width);
std::vector<std::uint32_t> decompress_rle_string(const std::string& counts);

// Rows of 784 grey values (0..255) followed by the label, gzip compressed.
// Returns images (N,1,28,28) scaled to [0,1] and int64 labels (N).
std::pair<torch::Tensor, torch::Tensor> read_mnist_csv_gz(const std::filesystem::path& path);

// Filled polygon [x0,y0,x1,y1,...] as a row-major mask.
std::vector<std::uint8_t> rasterize_polygon(const std::vector<double>& xy, std::int64_t height, std::int64_t width);

}  // namespace iia
