#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geomgcn {

/// Dense row-major matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw std::invalid_argument("Tensor2: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string());
  }
  Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw std::invalid_argument("Tensor2: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool same_shape(const Tensor2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  Tensor2& operator+=(const Tensor2& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  friend bool operator==(const Tensor2& a, const Tensor2& b) noexcept {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  static Tensor2 identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  void require_same_shape(const Tensor2& o, const char* what) const {
    if (!same_shape(o))
      throw std::invalid_argument(std::string("Tensor2 ") + what + ": shape mismatch " + shape_string() +
                                  " vs " + o.shape_string());
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

inline double frobenius_norm(const Tensor2& a) {
  double s = 0.0;
  for (double x : a.flat()) s += x * x;
  return std::sqrt(s);
}

/// C = A * B. Zero entries of A are skipped, which makes bag-of-words
/// feature matrices cheap without a separate sparse format.
inline Tensor2 matmul_plain(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch " + a.shape_string() + " * " + b.shape_string());
  Tensor2 c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    const auto arow = a.row(i);
    for (std::size_t k = 0; k < arow.size(); ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

/// C = A^T * B without materializing the transpose.
inline Tensor2 matmul_at_b(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("matmul_at_b: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor2 c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto arow = a.row(r);
    const double* brow = b.row(r).data();
    for (std::size_t i = 0; i < arow.size(); ++i) {
      const double ari = arow[i];
      if (ari == 0.0) continue;
      double* out = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) out[j] += ari * brow[j];
    }
  }
  return c;
}

/// C = A * B^T.
inline Tensor2 matmul_a_bt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_a_bt: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor2 c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < arow.size(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

/// Row-compressed copy of a mostly-zero matrix. Column indices are ascending
/// within a row, so products visit terms in the same order as the dense
/// kernels above.
struct SparseRows {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;
  std::vector<double> values;

  static SparseRows from_dense(const Tensor2& m) {
    SparseRows s;
    s.rows = m.rows();
    s.cols = m.cols();
    s.offsets.reserve(m.rows() + 1);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      for (std::size_t c = 0; c < row.size(); ++c)
        if (row[c] != 0.0) {
          s.indices.push_back(c);
          s.values.push_back(row[c]);
        }
      s.offsets.push_back(s.indices.size());
    }
    return s;
  }
  std::size_t nnz() const noexcept { return values.size(); }
};

}  // namespace geomgcn
