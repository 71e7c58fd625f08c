#include "adacur/linalg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "adacur/errors.hpp"

namespace adacur {

namespace {

void require_finite(std::span<const double> data, const char* what) {
  for (double x : data) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument(std::string(what) + ": non-finite entry");
    }
  }
}

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EigenRowMajor> map_of(const DenseMatrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("DenseMatrix: data length != rows * cols");
  }
  require_finite(data_, "DenseMatrix");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::columns(std::span<const std::uint32_t> idx) const {
  DenseMatrix out(rows_, idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= cols_) {
      throw std::invalid_argument("DenseMatrix::columns: index out of range");
    }
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* src = data_.data() + r * cols_;
    double* dst = out.data_.data() + r * idx.size();
    for (std::size_t j = 0; j < idx.size(); ++j) dst[j] = src[idx[j]];
  }
  return out;
}

DenseVector::DenseVector(std::vector<double> v) : v_(std::move(v)) {
  require_finite(v_, "DenseVector");
}

void DenseVector::append(double x) {
  if (!std::isfinite(x)) {
    throw std::invalid_argument("DenseVector::append: non-finite entry");
  }
  v_.push_back(x);
}

DenseMatrix pseudo_inverse(const DenseMatrix& m, double rcond) {
  if (m.empty()) {
    throw std::invalid_argument("pseudo_inverse: empty matrix");
  }
  if (!(rcond > 0.0)) {
    throw std::invalid_argument("pseudo_inverse: rcond must be > 0");
  }
  require_finite(m.data(), "pseudo_inverse");

  Eigen::MatrixXd a = map_of(m);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw FactorizationError("pseudo_inverse: SVD did not converge");
  }

  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double cutoff = rcond * smax;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  }

  Eigen::MatrixXd p = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();

  DenseMatrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

DenseVector softmax(const DenseVector& v) {
  if (v.empty()) {
    throw std::invalid_argument("softmax: empty input");
  }
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  const double norm = static_cast<double>(sum);
  for (double& x : out) x /= norm;
  return DenseVector(std::move(out));
}

std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k) {
  if (k > v.size()) {
    throw std::invalid_argument("top_k_indices: k > length");
  }
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (v[a] != v[b]) return v[a] > v[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> top_k_indices(const DenseVector& v, std::size_t k) {
  return top_k_indices(v.span(), k);
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree");
  }
  DenseMatrix out(a.rows(), b.cols());
  if (out.empty()) return out;
  Eigen::Map<EigenRowMajor> result(out.data().data(),
                                   static_cast<Eigen::Index>(out.rows()),
                                   static_cast<Eigen::Index>(out.cols()));
  result.noalias() = map_of(a) * map_of(b);
  return out;
}

DenseVector vec_times_matrix(const DenseVector& v, const DenseMatrix& m) {
  if (v.size() != m.rows()) {
    throw std::invalid_argument("vec_times_matrix: dimensions disagree");
  }
  std::vector<double> out(m.cols());
  Eigen::Map<Eigen::RowVectorXd> result(out.data(), static_cast<Eigen::Index>(m.cols()));
  Eigen::Map<const Eigen::RowVectorXd> lhs(v.data().data(),
                                           static_cast<Eigen::Index>(v.size()));
  result.noalias() = lhs * map_of(m);
  return DenseVector(std::move(out));
}

}  // namespace adacur
