#include "mts/matrix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "mts/errors.hpp"

namespace mts {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: " + std::to_string(data_.size()) + " values for shape " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw DimensionError("Matrix::from_rows: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Matrix(n, m, std::move(values));
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool operator==(const Matrix& a, const Matrix& b) noexcept {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.data_.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.data_[i]) != std::bit_cast<std::uint64_t>(b.data_[i])) {
      return false;
    }
  }
  return true;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for " + m.shape_string());
    }
    std::copy_n(m.row(indices[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

namespace {
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t word) {
  for (int b = 0; b < 8; ++b) {
    h ^= (word >> (8 * b)) & 0xffU;
    h *= kFnvPrime;
  }
  return h;
}
}  // namespace

std::uint64_t hash_matrix(const Matrix& m, std::uint64_t seed) {
  std::uint64_t h = fnv_mix(seed, m.rows());
  h = fnv_mix(h, m.cols());
  for (double v : m.values()) h = fnv_mix(h, std::bit_cast<std::uint64_t>(v));
  return h;
}

}  // namespace mts
