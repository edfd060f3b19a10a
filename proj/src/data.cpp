#include "data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "error.hpp"
#include "rng.hpp"

namespace curlcl {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::uint64_t le(const std::vector<std::uint8_t>& b, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{b[at + i]} << (8 * i);
  return v;
}

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

constexpr char kDatasetMagic[8] = {'C', 'U', 'R', 'L', 'D', 'S', '0', '1'};

}  // namespace

void Dataset::validate() const {
  if (images.rows() != labels.size()) {
    throw Error(ErrorCode::parse, "dataset: " + std::to_string(images.rows()) + " images but " +
                                      std::to_string(labels.size()) + " labels");
  }
  for (double v : images.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::parse, "dataset: intensity outside [0,1]");
  }
  for (std::size_t y : labels) {
    if (y >= num_classes) {
      throw Error(ErrorCode::parse, "dataset: label " + std::to_string(y) + " >= class count " +
                                        std::to_string(num_classes));
    }
  }
}

Dataset parse_idx(const std::vector<std::uint8_t>& images,
                  const std::vector<std::uint8_t>& labels) {
  if (images.size() < 16 || be32(images, 0) != 0x00000803) {
    throw Error(ErrorCode::parse, "idx images: bad magic");
  }
  if (labels.size() < 8 || be32(labels, 0) != 0x00000801) {
    throw Error(ErrorCode::parse, "idx labels: bad magic");
  }
  const std::size_t n = be32(images, 4);
  const std::size_t rows = be32(images, 8);
  const std::size_t cols = be32(images, 12);
  const std::size_t n_labels = be32(labels, 4);
  if (n != n_labels) {
    throw Error(ErrorCode::parse, "idx: count mismatch, " + std::to_string(n) + " images vs " +
                                      std::to_string(n_labels) + " labels");
  }
  const std::size_t dim = rows * cols;
  if (dim != 0 && n > (images.size() - 16) / dim) {
    throw Error(ErrorCode::parse, "idx images: truncated payload");
  }
  if (labels.size() - 8 < n) throw Error(ErrorCode::parse, "idx labels: truncated payload");

  Dataset data;
  data.images = Matrix(n, dim);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n * dim; ++i) data.images.data()[i] = images[16 + i] / 255.0;
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = labels[8 + i];
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = n == 0 ? 0 : max_label + 1;
  return data;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path));
}

Dataset load_mnist(const std::filesystem::path& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  Dataset d = load_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"));
  d.num_classes = 10;
  d.split = train ? "train" : "test";
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data, bool as_bytes) {
  data.validate();
  std::vector<std::uint8_t> out(kDatasetMagic, kDatasetMagic + 8);
  put_le(out, data.size(), 8);
  put_le(out, data.dim(), 8);
  put_le(out, data.num_classes, 8);
  put_le(out, as_bytes ? 0 : 1, 4);
  for (double v : data.images.values()) {
    if (as_bytes) {
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    } else {
      put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
  }
  for (std::size_t y : data.labels) put_le(out, y, 4);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto b = read_file(path);
  if (b.size() < 36 || std::memcmp(b.data(), kDatasetMagic, 8) != 0) {
    throw Error(ErrorCode::parse, "dataset file '" + path.string() + "': bad magic");
  }
  const std::uint64_t n = le(b, 8, 8);
  const std::uint64_t d = le(b, 16, 8);
  const std::uint64_t c = le(b, 24, 8);
  const std::uint32_t dtype = static_cast<std::uint32_t>(le(b, 32, 4));
  if (dtype > 1) throw Error(ErrorCode::parse, "dataset file: unknown dtype " + std::to_string(dtype));
  const std::size_t width = dtype == 0 ? 1 : 8;
  if (d == 0 || n > (b.size() / d) || b.size() - 36 != n * d * width + n * 4) {
    throw Error(ErrorCode::parse, "dataset file '" + path.string() + "': payload size mismatch");
  }
  Dataset data;
  data.images = Matrix(n, d);
  data.labels.resize(n);
  data.num_classes = c;
  std::size_t at = 36;
  for (double& v : data.images.values()) {
    v = dtype == 0 ? b[at] / 255.0 : std::bit_cast<double>(le(b, at, 8));
    at += width;
  }
  for (auto& y : data.labels) {
    y = le(b, at, 4);
    at += 4;
  }
  data.validate();
  return data;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.images = Matrix(indices.size(), data.dim());
  out.labels.resize(indices.size());
  out.num_classes = data.num_classes;
  out.split = data.split;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto row = data.images.row(indices[i]);
    std::copy(row.begin(), row.end(), out.images.row(i).begin());
    out.labels[i] = data.labels[indices[i]];
  }
  return out;
}

std::pair<Dataset, Dataset> split_train_valid(const Dataset& data, std::size_t n_valid,
                                              std::uint64_t seed) {
  if (n_valid >= data.size() && n_valid > 0) {
    throw Error(ErrorCode::argument, "split_train_valid: n_valid " + std::to_string(n_valid) +
                                         " >= dataset size " + std::to_string(data.size()));
  }
  if (n_valid == 0) {
    Dataset valid;
    valid.images = Matrix(0, data.dim());
    valid.num_classes = data.num_classes;
    valid.split = "valid";
    return {data, valid};
  }
  Rng rng = Rng::derive(seed, stream_tag::split);
  const auto perm = permutation(data.size(), rng);
  const std::size_t n_train = data.size() - n_valid;
  Dataset train = subset(data, std::span(perm).first(n_train));
  Dataset valid = subset(data, std::span(perm).subspan(n_train));
  train.split = "train";
  valid.split = "valid";
  return {std::move(train), std::move(valid)};
}

Dataset filter_classes(const Dataset& data, std::span<const std::size_t> classes) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), data.labels[i]) != classes.end()) keep.push_back(i);
  }
  return subset(data, keep);
}

Dataset sample_rows(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n >= data.size()) return data;
  Rng rng(seed);
  auto perm = permutation(data.size(), rng);
  perm.resize(n);
  std::sort(perm.begin(), perm.end());
  return subset(data, perm);
}

Dataset make_blobs(const BlobSpec& spec, std::uint64_t seed) {
  if (spec.classes == 0 || spec.dim < spec.classes) {
    throw Error(ErrorCode::argument, "make_blobs: need at least one pixel per class");
  }
  const std::size_t band = spec.dim / spec.classes;
  Rng rng(seed);
  Dataset data;
  data.num_classes = spec.classes;
  data.images = Matrix(spec.classes * spec.per_class, spec.dim);
  data.labels.resize(spec.classes * spec.per_class);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const std::size_t r = c * spec.per_class + i;
      data.labels[r] = c;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        const double base = (d / band == c) ? spec.contrast : 1.0 - spec.contrast;
        data.images(r, d) = std::clamp(base + spec.spread * rng.normal(), 0.0, 1.0);
      }
    }
  }
  return data;
}

}  // namespace curlcl
