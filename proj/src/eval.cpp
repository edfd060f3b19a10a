#include "eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace curlcl {

namespace {

constexpr std::size_t kChunk = 512;

Matrix row_block(const Matrix& m, std::size_t first, std::size_t count) {
  Matrix out(count, m.cols());
  std::copy(m.row(first).data(), m.row(first).data() + count * m.cols(), out.data());
  return out;
}

std::size_t vote(std::span<const std::size_t> neighbor_labels) {
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t y : neighbor_labels) ++counts[y];
  std::size_t best = 0;
  std::size_t best_count = 0;
  for (const auto& [y, c] : counts) {
    if (c > best_count) {
      best = y;
      best_count = c;
    }
  }
  return best;
}

}  // namespace

const char* latent_mode_name(LatentMode mode) {
  return mode == LatentMode::sampled ? "sampled" : "mean";
}

LatentMode parse_latent_mode(const std::string& text) {
  if (text == "sampled") return LatentMode::sampled;
  if (text == "mean") return LatentMode::mean;
  throw Error(ErrorCode::config, "unknown latent mode '" + text + "' (sampled, mean)");
}

EncodedLatents encode_eval_latents(const Matrix& x, const ModelParams& params, std::uint64_t seed,
                                   LatentMode mode) {
  const std::size_t n = x.rows();
  const std::size_t nz = params.latent_dim();
  const std::size_t k_active = params.num_components();
  EncodedLatents out;
  out.z = Matrix(n, nz);
  out.components.resize(n);
  out.posterior = Matrix(n, k_active);
  for (std::size_t first = 0; first < n; first += kChunk) {
    const std::size_t count = std::min(kChunk, n - first);
    const Matrix h = encode_shared(row_block(x, first, count), params);
    const Matrix q = infer_task_posterior(h, params);
    std::copy(q.values().begin(), q.values().end(), out.posterior.row(first).begin());
    std::vector<std::vector<std::size_t>> members(k_active);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t k = argmax(q.row(i));
      out.components[first + i] = k;
      members[k].push_back(i);
    }
    for (std::size_t k = 0; k < k_active; ++k) {
      if (members[k].empty()) continue;
      Matrix hk(members[k].size(), h.cols());
      for (std::size_t j = 0; j < members[k].size(); ++j) {
        const auto r = h.row(members[k][j]);
        std::copy(r.begin(), r.end(), hk.row(j).begin());
      }
      const LatentPosterior post = component_posterior_params(hk, k, params);
      for (std::size_t j = 0; j < members[k].size(); ++j) {
        const std::size_t row = first + members[k][j];
        auto z = out.z.row(row);
        if (mode == LatentMode::mean) {
          std::copy(post.mean.row(j).begin(), post.mean.row(j).end(), z.begin());
        } else {
          Rng rng = Rng::derive(seed, stream_tag::eval, row);
          for (std::size_t d = 0; d < nz; ++d) {
            z[d] = post.mean(j, d) + post.stddev(j, d) * rng.normal();
          }
        }
      }
    }
  }
  return out;
}

ClusterMapping map_clusters(std::span<const std::size_t> components,
                            std::span<const std::size_t> labels, std::size_t num_classes,
                            std::size_t num_components) {
  if (components.size() != labels.size()) {
    throw Error(ErrorCode::argument, "cluster accuracy: " + std::to_string(components.size()) +
                                         " assignments vs " + std::to_string(labels.size()) +
                                         " labels");
  }
  ClusterMapping m;
  m.confusion = Matrix(num_classes, num_components);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || components[i] >= num_components) {
      throw Error(ErrorCode::index, "cluster accuracy: label or component out of range");
    }
    m.confusion(labels[i], components[i]) += 1.0;
  }
  m.component_class.assign(num_components, 0);
  m.used.assign(num_components, false);
  for (std::size_t k = 0; k < num_components; ++k) {
    double best = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (m.confusion(c, k) > best) {
        best = m.confusion(c, k);
        m.component_class[k] = c;
      }
    }
    m.used[k] = best > 0.0;
  }
  return m;
}

double cluster_accuracy_from_confusion(const Matrix& confusion) {
  double correct = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < confusion.cols(); ++k) {
    double best = 0.0;
    for (std::size_t c = 0; c < confusion.rows(); ++c) {
      best = std::max(best, confusion(c, k));
      total += confusion(c, k);
    }
    correct += best;
  }
  return total > 0.0 ? correct / total : 0.0;
}

double cluster_accuracy(std::span<const std::size_t> components,
                        std::span<const std::size_t> labels) {
  if (components.size() != labels.size()) {
    throw Error(ErrorCode::argument, "cluster accuracy: length mismatch");
  }
  if (labels.empty()) throw Error(ErrorCode::argument, "cluster accuracy: no points");
  const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;
  const std::size_t comps = *std::max_element(components.begin(), components.end()) + 1;
  return cluster_accuracy_from_confusion(map_clusters(components, labels, classes, comps).confusion);
}

std::vector<double> per_class_accuracy(const Matrix& confusion) {
  std::vector<std::size_t> mapped(confusion.cols(), 0);
  for (std::size_t k = 0; k < confusion.cols(); ++k) {
    double best = 0.0;
    for (std::size_t c = 0; c < confusion.rows(); ++c) {
      if (confusion(c, k) > best) {
        best = confusion(c, k);
        mapped[k] = c;
      }
    }
  }
  std::vector<double> acc(confusion.rows(), 0.0);
  for (std::size_t c = 0; c < confusion.rows(); ++c) {
    double total = 0.0;
    double hit = 0.0;
    for (std::size_t k = 0; k < confusion.cols(); ++k) {
      total += confusion(c, k);
      if (mapped[k] == c) hit += confusion(c, k);
    }
    acc[c] = total > 0.0 ? hit / total : 0.0;
  }
  return acc;
}

std::vector<double> knn_errors(const Matrix& train, std::span<const std::size_t> train_labels,
                               const Matrix& test, std::span<const std::size_t> test_labels,
                               std::span<const std::size_t> ks) {
  if (train.rows() != train_labels.size() || test.rows() != test_labels.size()) {
    throw Error(ErrorCode::argument, "knn: latent and label counts differ");
  }
  if (train.cols() != test.cols()) throw Error(ErrorCode::shape, "knn: latent dims differ");
  if (test.rows() == 0) throw Error(ErrorCode::argument, "knn: empty test set");
  if (ks.empty()) throw Error(ErrorCode::argument, "knn: no k given");
  std::size_t k_max = 0;
  for (std::size_t k : ks) {
    if (k == 0 || k > train.rows()) {
      throw Error(ErrorCode::argument, "knn: k=" + std::to_string(k) + " invalid for " +
                                           std::to_string(train.rows()) + " train points");
    }
    k_max = std::max(k_max, k);
  }

  const std::size_t n_train = train.rows();
  const std::size_t dim = train.cols();
  std::vector<double> train_norm(n_train, 0.0);
  double max_train_norm = 0.0;
  for (std::size_t j = 0; j < n_train; ++j) {
    for (double v : train.row(j)) train_norm[j] += v * v;
    max_train_norm = std::max(max_train_norm, train_norm[j]);
  }

  std::vector<std::size_t> wrong(ks.size(), 0);
  std::vector<std::size_t> order(n_train);
  std::vector<std::pair<double, std::size_t>> candidates;
  std::vector<std::size_t> neighbor_labels;
  for (std::size_t first = 0; first < test.rows(); first += kChunk) {
    const std::size_t count = std::min(kChunk, test.rows() - first);
    const Matrix block = row_block(test, first, count);
    // Approximate squared distances via one product; refined exactly below.
    Matrix dots(count, n_train);
    gemm(block, false, train, true, dots);
    for (std::size_t i = 0; i < count; ++i) {
      const auto t = block.row(i);
      double t_norm = 0.0;
      for (double v : t) t_norm += v * v;
      const auto dot_row = dots.row(i);
      std::vector<double> approx(n_train);
      for (std::size_t j = 0; j < n_train; ++j) approx[j] = t_norm + train_norm[j] - 2.0 * dot_row[j];
      std::iota(order.begin(), order.end(), 0);
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_max - 1),
                       order.end(), [&](std::size_t a, std::size_t b) { return approx[a] < approx[b]; });
      const double cutoff =
          approx[order[k_max - 1]] + 1e-9 * (1.0 + t_norm + max_train_norm);
      candidates.clear();
      for (std::size_t j = 0; j < n_train; ++j) {
        if (approx[j] <= cutoff) {
          const auto r = train.row(j);
          double d2 = 0.0;
          for (std::size_t d = 0; d < dim; ++d) {
            const double diff = t[d] - r[d];
            d2 += diff * diff;
          }
          candidates.emplace_back(d2, j);
        }
      }
      std::sort(candidates.begin(), candidates.end());
      for (std::size_t q = 0; q < ks.size(); ++q) {
        neighbor_labels.clear();
        for (std::size_t n = 0; n < ks[q]; ++n) neighbor_labels.push_back(train_labels[candidates[n].second]);
        if (vote(neighbor_labels) != test_labels[first + i]) ++wrong[q];
      }
    }
  }
  std::vector<double> errors(ks.size());
  for (std::size_t q = 0; q < ks.size(); ++q) {
    errors[q] = static_cast<double>(wrong[q]) / static_cast<double>(test.rows());
  }
  return errors;
}

double knn_error(const Matrix& train, std::span<const std::size_t> train_labels,
                 const Matrix& test, std::span<const std::size_t> test_labels, std::size_t k) {
  const std::size_t ks[] = {k};
  return knn_errors(train, train_labels, test, test_labels, ks).front();
}

EvalReport evaluate(const ModelParams& params, const Dataset& test, const Dataset& train,
                    const EvalConfig& config) {
  if (test.size() == 0) throw Error(ErrorCode::argument, "evaluate: empty test set");
  if (train.size() == 0) throw Error(ErrorCode::argument, "evaluate: empty train set");
  EvalReport report;
  report.n_active_components = params.num_components();
  const EncodedLatents test_latents =
      encode_eval_latents(test.images, params, config.seed, config.latent_mode);
  const std::size_t classes = std::max(test.num_classes, train.num_classes);
  const ClusterMapping mapping =
      map_clusters(test_latents.components, test.labels, classes, params.num_components());
  report.confusion = mapping.confusion;
  report.cluster_accuracy = cluster_accuracy_from_confusion(report.confusion);
  report.per_class_accuracy = per_class_accuracy(report.confusion);

  if (!config.knn_k.empty()) {
    const Dataset fit = sample_rows(train, config.knn_subsample, mix_seed(config.seed, stream_tag::eval));
    // Train latents use a distinct noise seed from the test latents.
    const EncodedLatents train_latents =
        encode_eval_latents(fit.images, params, mix_seed(config.seed, 1), config.latent_mode);
    const auto errors =
        knn_errors(train_latents.z, fit.labels, test_latents.z, test.labels, config.knn_k);
    for (std::size_t q = 0; q < config.knn_k.size(); ++q) report.knn_error[config.knn_k[q]] = errors[q];
  }
  return report;
}

double incremental_class_accuracy(const Matrix& posterior, std::span<const std::size_t> labels) {
  if (posterior.rows() != labels.size() || labels.empty()) {
    throw Error(ErrorCode::argument, "incremental class accuracy: size mismatch");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= posterior.cols()) {
      throw Error(ErrorCode::config, "incremental accuracy: components not aligned with classes");
    }
    if (argmax(posterior.row(i)) == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double incremental_task_accuracy(const Matrix& posterior, std::span<const std::size_t> labels,
                                 std::span<const std::pair<std::size_t, std::size_t>> task_pairs) {
  if (posterior.rows() != labels.size() || labels.empty()) {
    throw Error(ErrorCode::argument, "incremental task accuracy: size mismatch");
  }
  std::vector<std::size_t> hit(task_pairs.size(), 0);
  std::vector<std::size_t> total(task_pairs.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t t = 0;
    while (t < task_pairs.size() && task_pairs[t].first != labels[i] &&
           task_pairs[t].second != labels[i]) {
      ++t;
    }
    if (t == task_pairs.size()) {
      throw Error(ErrorCode::config, "incremental task accuracy: label " +
                                         std::to_string(labels[i]) + " belongs to no task");
    }
    const auto [a, b] = task_pairs[t];
    if (a >= posterior.cols() || b >= posterior.cols()) {
      throw Error(ErrorCode::config, "incremental accuracy: components not aligned with classes");
    }
    // Ties go to the lower component index, as in argmax.
    const std::size_t lo = std::min(a, b);
    const std::size_t hi = std::max(a, b);
    const std::size_t pred = posterior(i, hi) > posterior(i, lo) ? hi : lo;
    total[t] += 1;
    if (pred == labels[i]) hit[t] += 1;
  }
  double sum = 0.0;
  std::size_t tasks = 0;
  for (std::size_t t = 0; t < task_pairs.size(); ++t) {
    if (total[t] == 0) continue;
    sum += static_cast<double>(hit[t]) / static_cast<double>(total[t]);
    ++tasks;
  }
  return sum / static_cast<double>(tasks);
}

void write_latents_csv(const std::filesystem::path& path, const EncodedLatents& latents,
                       std::span<const std::size_t> labels) {
  if (labels.size() != latents.z.rows()) {
    throw Error(ErrorCode::argument, "latent export: label count does not match latents");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << "index,label,component";
  for (std::size_t d = 0; d < latents.z.cols(); ++d) out << ",z_" << d;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < latents.z.rows(); ++i) {
    out << i << ',' << labels[i] << ',' << latents.components[i];
    for (double v : latents.z.row(i)) out << ',' << v;
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  std::vector<std::uint8_t> bytes{'C', 'U', 'R', 'L', 'M', 'A', 'T', '1'};
  auto put = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(m.rows());
  put(m.cols());
  for (double v : m.values()) put(std::bit_cast<std::uint64_t>(v));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto get = [&](std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[at + i]} << (8 * i);
    return v;
  };
  if (b.size() < 24 || std::string(b.begin(), b.begin() + 8) != "CURLMAT1") {
    throw Error(ErrorCode::parse, "matrix file '" + path.string() + "': bad magic");
  }
  const std::uint64_t rows = get(8);
  const std::uint64_t cols = get(16);
  if (cols != 0 && rows > (b.size() / 8) / cols) throw Error(ErrorCode::parse, "matrix file: bad size");
  if (b.size() != 24 + 8 * rows * cols) throw Error(ErrorCode::parse, "matrix file: truncated payload");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(get(24 + 8 * i));
  return m;
}

void write_pgm_grid(const std::filesystem::path& path, const Matrix& images, std::size_t columns) {
  if (images.rows() == 0 || columns == 0) throw Error(ErrorCode::argument, "pgm: nothing to write");
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(images.cols()))));
  if (side * side != images.cols()) {
    throw Error(ErrorCode::shape, "pgm: image dimension " + std::to_string(images.cols()) +
                                      " is not a square");
  }
  const std::size_t cols = std::min(columns, images.rows());
  const std::size_t grid_rows = (images.rows() + cols - 1) / cols;
  const std::size_t width = cols * side;
  const std::size_t height = grid_rows * side;
  std::vector<std::uint8_t> pixels(width * height, 0);
  for (std::size_t n = 0; n < images.rows(); ++n) {
    const std::size_t ox = (n % cols) * side;
    const std::size_t oy = (n / cols) * side;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double v = std::clamp(images(n, y * side + x), 0.0, 1.0);
        pixels[(oy + y) * width + ox + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

}  // namespace curlcl
