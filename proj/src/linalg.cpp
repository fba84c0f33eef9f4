#include "tplrecon/linalg.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "tplrecon/error.hpp"

namespace tplrecon {

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> DenseMatrix::multiply(std::span<const double> x) const {
  if (x.size() != cols_) throw Error(ErrorCode::kDimMismatch, "matrix-vector dim mismatch");
  std::vector<double> y(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto row_r = row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) acc += row_r[c] * x[c];
    y[r] = acc;
  }
  return y;
}

std::vector<double> solve_linear_system(DenseMatrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  if (n == 0 || a.cols() != n) {
    throw Error(ErrorCode::kInvalidArgument, "linear system must be square and non-empty");
  }
  if (b.size() != n) throw Error(ErrorCode::kDimMismatch, "rhs length differs from matrix size");

  double scale = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (double v : a.row(r)) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite matrix entry");
      scale = std::max(scale, std::abs(v));
    }
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite rhs entry");
  }
  const double tiny = kSingularPivotRatio * scale;

  // origin[k] is the original equation now stored in row k.
  std::vector<std::size_t> origin(n);
  std::iota(origin.begin(), origin.end(), std::size_t{0});

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    double best = std::abs(a(k, k));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double v = std::abs(a(r, k));
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (!(best > tiny)) {
      throw SingularSystemError(origin[pivot], "singular system");
    }
    if (pivot != k) {
      std::swap_ranges(a.row(k).begin(), a.row(k).end(), a.row(pivot).begin());
      std::swap(b[k], b[pivot]);
      std::swap(origin[k], origin[pivot]);
    }
    const auto pivot_row = a.row(k);
    for (std::size_t r = k + 1; r < n; ++r) {
      const auto row_r = a.row(r);
      const double factor = row_r[k] / pivot_row[k];
      if (factor == 0.0) continue;
      row_r[k] = 0.0;
      for (std::size_t c = k + 1; c < n; ++c) row_r[c] -= factor * pivot_row[c];
      b[r] -= factor * b[k];
    }
  }

  std::vector<double> x(n);
  for (std::size_t k = n; k-- > 0;) {
    const auto row_k = a.row(k);
    double acc = b[k];
    for (std::size_t c = k + 1; c < n; ++c) acc -= row_k[c] * x[c];
    x[k] = acc / row_k[k];
  }
  return x;
}

}  // namespace tplrecon
