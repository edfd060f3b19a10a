#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace curlcl {

struct Dataset {
  Matrix images;                    // N × D, intensities in [0, 1]
  std::vector<std::size_t> labels;  // N entries in [0, num_classes)
  std::size_t num_classes = 0;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return images.cols(); }
  // Range and consistency checks; parse error on violation.
  void validate() const;
};

// IDX image (magic 0x00000803) and label (0x00000801) files. Pixels are
// divided by 255. Parse errors name the offending field ("magic",
// "payload", "count").
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);
Dataset parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels);

// The standard MNIST file names inside `dir`; `train` selects the 60k file.
Dataset load_mnist(const std::filesystem::path& dir, bool train);

// Generic binary dataset file, little-endian:
//   "CURLDS01"  u64 N  u64 D  u64 C  u32 dtype (0 = u8 scaled by 1/255, 1 = f64)
//   N·D payload values row-major, then N u32 labels.
void save_dataset(const std::filesystem::path& path, const Dataset& data, bool as_bytes);
Dataset load_dataset(const std::filesystem::path& path);

// Rows `indices` of `data`, in order.
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// Seeded shuffle; the last n_valid examples of the permutation become the
// validation split. n_valid = 0 returns the data unchanged.
std::pair<Dataset, Dataset> split_train_valid(const Dataset& data, std::size_t n_valid,
                                              std::uint64_t seed);

// Keeps examples whose label is in `classes` (labels are not remapped).
Dataset filter_classes(const Dataset& data, std::span<const std::size_t> classes);

// Seeded subsample of at most n rows without replacement, original order kept.
Dataset sample_rows(const Dataset& data, std::size_t n, std::uint64_t seed);

struct BlobSpec {
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t per_class = 500;
  double spread = 0.08;  // per-pixel noise standard deviation
  double contrast = 0.9;  // band intensity; background is 1 - contrast
};

// Well-separated classes in [0,1]^dim: class c lights up its own contiguous
// band of dim / classes pixels; samples add clipped Gaussian noise. The
// prototypes are fixed, so train and test draws share classes.
Dataset make_blobs(const BlobSpec& spec, std::uint64_t seed);

}  // namespace curlcl
