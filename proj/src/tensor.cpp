#include "tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"

namespace curlcl {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}
MutMap view(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

}  // namespace

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape: return "shape";
    case ErrorCode::argument: return "argument";
    case ErrorCode::index: return "index";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::parse: return "parse";
    case ErrorCode::state: return "state";
    case ErrorCode::io: return "io";
    case ErrorCode::config: return "config";
    case ErrorCode::capacity: return "capacity";
  }
  return "unknown";
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw Error(ErrorCode::shape, "ragged initializer for Matrix");
    }
    std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
    ++i;
  }
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b, Matrix& c,
          double beta) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t ka = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (ka != kb || c.rows() != m || c.cols() != n) {
    throw Error(ErrorCode::shape, "gemm: incompatible shapes " + a.shape_string() +
                                      (transpose_a ? "^T" : "") + " x " + b.shape_string() +
                                      (transpose_b ? "^T" : "") + " -> " + c.shape_string());
  }
  if (m == 0 || n == 0) return;
  auto out = view(c);
  if (ka == 0) {
    out *= beta;
    return;
  }
  if (beta == 0.0) {
    if (!transpose_a && !transpose_b) out.noalias() = view(a) * view(b);
    else if (transpose_a && !transpose_b) out.noalias() = view(a).transpose() * view(b);
    else if (!transpose_a && transpose_b) out.noalias() = view(a) * view(b).transpose();
    else out.noalias() = view(a).transpose() * view(b).transpose();
  } else {
    if (beta != 1.0) out *= beta;
    if (!transpose_a && !transpose_b) out.noalias() += view(a) * view(b);
    else if (transpose_a && !transpose_b) out.noalias() += view(a).transpose() * view(b);
    else if (!transpose_a && transpose_b) out.noalias() += view(a) * view(b).transpose();
    else out.noalias() += view(a).transpose() * view(b).transpose();
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::shape,
                "matmul: shape mismatch " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix c(a.rows(), b.cols());
  gemm(a, false, b, false, c);
  require_finite(c, "matmul result");
  return c;
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  if (bias.size() != m.cols()) {
    throw Error(ErrorCode::shape,
                "bias of size " + std::to_string(bias.size()) + " for " + m.shape_string());
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias.data()[c];
  }
}

void accumulate_column_sums(const Matrix& m, Matrix& acc) {
  if (acc.size() != m.cols()) {
    throw Error(ErrorCode::shape, "column-sum accumulator size mismatch");
  }
  if (m.rows() == 0) return;
  auto target = Eigen::Map<Eigen::RowVectorXd>(acc.data(), static_cast<Eigen::Index>(acc.size()));
  target += view(m).colwise().sum();
}

void relu_inplace(Matrix& m) {
  for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(Matrix& grad, const Matrix& pre_activation) {
  auto g = grad.values();
  auto a = pre_activation.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(a[i] > 0.0)) g[i] = 0.0;
  }
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::argument, "log_sum_exp of an empty vector");
  const double peak = *std::max_element(v.begin(), v.end());
  if (std::isinf(peak)) return peak;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - peak);
  return peak + std::log(acc);
}

std::vector<double> softmax(std::span<const double> v) {
  const double lse = log_sum_exp(v);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i] - lse);
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

double softplus(double x) {
  // log1p(exp(x)) without overflow for large x or loss of precision for small.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m.values())) {
    throw Error(ErrorCode::numeric, std::string(what) + " contains non-finite values");
  }
}

}  // namespace curlcl
