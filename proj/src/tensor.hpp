#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace curlcl {

// Every matrix starts on a 64-byte boundary so vectorized kernels split their
// loops identically on each run, keeping results bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

// Dense row-major matrix of doubles. Vectors are 1×n matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, AlignedAllocator<double>> data_;
};

// c = op(a)·op(b) + beta·c, with op = transpose when the flag is set.
// c must already have the result shape. Unchecked for finiteness; this is the
// inner-loop kernel the model passes are built from.
void gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b, Matrix& c,
          double beta = 0.0);

// Checked product: shape error on mismatch, numeric error on non-finite output.
Matrix matmul(const Matrix& a, const Matrix& b);

// Adds the row vector `bias` (1×cols) to every row of m.
void add_row_bias(Matrix& m, const Matrix& bias);
// Accumulates column sums of m into acc (1×cols).
void accumulate_column_sums(const Matrix& m, Matrix& acc);

void relu_inplace(Matrix& m);
// grad ⊙= 1[pre > 0]
void relu_backward_inplace(Matrix& grad, const Matrix& pre_activation);

double log_sum_exp(std::span<const double> v);
std::vector<double> softmax(std::span<const double> v);
// Row-wise softmax of a logits matrix.
Matrix softmax_rows(const Matrix& logits);

double softplus(double x);
double sigmoid(double x);

bool all_finite(std::span<const double> v);
void require_finite(const Matrix& m, const char* what);

}  // namespace curlcl
