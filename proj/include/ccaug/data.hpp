#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccaug/check.hpp"

namespace ccaug {

// One image with pixels in [0,1], channel-planar row-major layout. When a
// corruption pipeline has touched the image, the realized draw is kept for
// audit (distribution tests read it back).
struct LabeledImage {
  std::vector<float> pixels;  // length channels*height*width
  int label = 0;
  float corruption_param = 0.0f;
  bool corrupted = false;
};

struct Dataset {
  int channels = 1;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<std::string> class_names;  // empty when the source has no name metadata
  std::vector<LabeledImage> items;

  void validate() const;
  int class_index_for(const std::string& name) const;  // error when absent
};

// MNIST IDX pair: big-endian headers, magic 0x00000803 (images) and
// 0x00000801 (labels). Pixel bytes scale linearly onto [0,1].
Dataset load_mnist(const std::string& image_file, const std::string& label_file);

enum class CifarVariant { Cifar10, Cifar100 };

// CIFAR binary batches: 3073-byte records (label, 1024 R, 1024 G, 1024 B) or
// 3074-byte records for CIFAR-100 (coarse then fine label; the fine label is
// used). Class names are attached separately via load_class_names.
Dataset load_cifar(const std::vector<std::string>& batch_files, CifarVariant variant);

// One class name per line (the batches.meta.txt / fine_label_names.txt files
// shipped with the CIFAR archives). Blank trailing lines are ignored.
std::vector<std::string> load_class_names(const std::string& path);

// Rotate every image once by an angle drawn uniformly from
// [-half_widths[label], +half_widths[label]]; a zero half-width leaves the
// image untouched. Draws are keyed by (seed, item index), so the result is
// independent of traversal order.
Dataset corrupt_rotation(const Dataset& src, std::span<const float> half_widths,
                         std::uint64_t seed);

// Add one uniform draw from [-half_width, half_width] to every pixel of the
// images whose class is in `class_names`, clamped to [0,1].
Dataset corrupt_brightness(const Dataset& src, const std::vector<std::string>& class_names,
                           float half_width, std::uint64_t seed);

// The ten hand-picked CIFAR-100 classes, remapped to labels 0-9 in this
// order. Indices are resolved through the dataset's own name metadata.
const std::vector<std::string>& cifar100_subset_names();
Dataset cifar100_subset(const Dataset& full);

// First n items (deterministic desk-scale truncation).
Dataset truncate(const Dataset& src, int n);

// Versioned binary cache of a corrupted dataset, including realized draws
// and the originating spec (opaque JSON text).
struct CachedDataset {
  Dataset dataset;
  std::string spec_json;
};

void save_dataset_cache(const std::string& path, const Dataset& dataset,
                        const std::string& spec_json);
CachedDataset load_dataset_cache(const std::string& path);

}  // namespace ccaug
