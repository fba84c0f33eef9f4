#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tplrecon {

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double> multiply(std::span<const double> x) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Pivots smaller than this times max|A| are treated as zero.
inline constexpr double kSingularPivotRatio = 1e-12;

/// Solves A x = b by Gaussian elimination with partial (row) pivoting.
/// Throws SingularSystemError naming the offending equation when a pivot
/// falls below kSingularPivotRatio * max|A|.
std::vector<double> solve_linear_system(DenseMatrix a, std::vector<double> b);

}  // namespace tplrecon
