#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace adacur {

/// Dense row-major matrix of 64-bit scores. Entries are validated to be
/// finite on construction; downstream kernels rely on that invariant.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);  // zero-filled
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// Gathers the given columns into a new rows() x idx.size() matrix,
  /// preserving the order of idx.
  DenseMatrix columns(std::span<const std::uint32_t> idx) const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Dense vector with the same finiteness contract as DenseMatrix.
class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t n) : v_(n, 0.0) {}
  explicit DenseVector(std::vector<double> v);

  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double operator[](std::size_t i) const { return v_[i]; }
  double& operator[](std::size_t i) { return v_[i]; }

  void append(double x);  // validates finiteness

  const std::vector<double>& data() const { return v_; }
  std::span<const double> span() const { return v_; }

  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  bool operator==(const DenseVector&) const = default;

 private:
  std::vector<double> v_;
};

/// Moore-Penrose pseudo-inverse via SVD. Singular values sigma_j with
/// sigma_j <= rcond * sigma_max are treated as zero, so rank-deficient
/// inputs (e.g. linearly dependent anchor columns) are handled. The result
/// has shape cols() x rows().
DenseMatrix pseudo_inverse(const DenseMatrix& m, double rcond = 1e-12);

/// Overflow-safe softmax: exp(v_i - max v) / sum_j exp(v_j - max v).
DenseVector softmax(const DenseVector& v);

/// Indices of the k largest entries, descending by value, ties broken by
/// ascending index. Deterministic by construction.
std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k);
std::vector<std::size_t> top_k_indices(const DenseVector& v, std::size_t k);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// (1 x n) . (n x m) product; the common shape in the search loop.
DenseVector vec_times_matrix(const DenseVector& v, const DenseMatrix& m);

}  // namespace adacur
