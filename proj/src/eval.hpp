#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "model.hpp"

namespace curlcl {

enum class LatentMode { sampled, mean };

const char* latent_mode_name(LatentMode mode);
LatentMode parse_latent_mode(const std::string& text);

struct EncodedLatents {
  Matrix z;                              // N × n_z
  std::vector<std::size_t> components;   // argmax_k q(y=k|x)
  Matrix posterior;                      // N × K
};

// ŷ = argmax q(y|x); z is μ^(ŷ) (mean) or one draw from q(z|x,ŷ) seeded by
// `seed` and the row index (sampled).
EncodedLatents encode_eval_latents(const Matrix& x, const ModelParams& params, std::uint64_t seed,
                                   LatentMode mode);

struct ClusterMapping {
  std::vector<std::size_t> component_class;  // majority class per component
  std::vector<bool> used;                    // component holds at least one point
  Matrix confusion;                          // classes × components counts
};

// Majority-class mapping (ties to the lowest class); empty components ignored.
ClusterMapping map_clusters(std::span<const std::size_t> components,
                            std::span<const std::size_t> labels, std::size_t num_classes,
                            std::size_t num_components);
double cluster_accuracy(std::span<const std::size_t> components,
                        std::span<const std::size_t> labels);
// Accuracy implied by a class × component confusion matrix.
double cluster_accuracy_from_confusion(const Matrix& confusion);
// Per-class share of points whose component maps back to that class.
std::vector<double> per_class_accuracy(const Matrix& confusion);

// k-NN classification error with Euclidean distance; distance ties go to the
// lower train index and vote ties to the smaller class. One error per k.
std::vector<double> knn_errors(const Matrix& train, std::span<const std::size_t> train_labels,
                               const Matrix& test, std::span<const std::size_t> test_labels,
                               std::span<const std::size_t> ks);
double knn_error(const Matrix& train, std::span<const std::size_t> train_labels,
                 const Matrix& test, std::span<const std::size_t> test_labels, std::size_t k);

struct EvalConfig {
  std::vector<std::size_t> knn_k{3, 5, 10};
  std::size_t knn_subsample = 10000;
  LatentMode latent_mode = LatentMode::sampled;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::uint64_t step = 0;
  double cluster_accuracy = 0.0;
  std::map<std::size_t, double> knn_error;
  std::size_t n_active_components = 0;
  Matrix confusion;
  std::vector<double> per_class_accuracy;
};

// Read-only over params. k-NN is fitted on a seeded subsample of `train`.
EvalReport evaluate(const ModelParams& params, const Dataset& test, const Dataset& train,
                    const EvalConfig& config);

// argmax over all K versus argmax within each test point's task pair.
// Requires components aligned with class labels (K >= number of classes).
double incremental_class_accuracy(const Matrix& posterior, std::span<const std::size_t> labels);
double incremental_task_accuracy(const Matrix& posterior, std::span<const std::size_t> labels,
                                 std::span<const std::pair<std::size_t, std::size_t>> task_pairs);

// CSV with header index,label,component,z_0..z_{n-1}.
void write_latents_csv(const std::filesystem::path& path, const EncodedLatents& latents,
                       std::span<const std::size_t> labels);

// Raw matrix file ("CURLMAT1", u64 rows, u64 cols, f64 payload) plus a PGM
// grid with `columns` tiles per row of side √D.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);
void write_pgm_grid(const std::filesystem::path& path, const Matrix& images, std::size_t columns);

}  // namespace curlcl
