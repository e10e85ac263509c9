#include "mts/kernels.hpp"

#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mts/errors.hpp"

namespace mts::kernels {

namespace {

struct GemmShape {
  std::size_t m, k, n;
};

GemmShape gemm_shape(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  const std::size_t am = ta == Transpose::no ? a.rows() : a.cols();
  const std::size_t ak = ta == Transpose::no ? a.cols() : a.rows();
  const std::size_t bk = tb == Transpose::no ? b.rows() : b.cols();
  const std::size_t bn = tb == Transpose::no ? b.cols() : b.rows();
  if (ak != bk) {
    throw DimensionError("gemm: inner dimensions differ (" + a.shape_string() + " * " +
                         b.shape_string() + ")");
  }
  return {am, ak, bn};
}

// One output row; shared by the serial and parallel paths so that both
// accumulate every element in the same k order.
void gemm_row(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb, std::size_t i,
              const GemmShape& s, Matrix& out) {
  auto orow = out.row(i);
  for (std::size_t kk = 0; kk < s.k; ++kk) {
    const double aik = ta == Transpose::no ? a(i, kk) : a(kk, i);
    if (tb == Transpose::no) {
      const auto brow = b.row(kk);
      for (std::size_t j = 0; j < s.n; ++j) orow[j] += aik * brow[j];
    } else {
      for (std::size_t j = 0; j < s.n; ++j) orow[j] += aik * b(j, kk);
    }
  }
}

void check_bias(const Matrix& a, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_row_broadcast: bias " + bias.shape_string() + " for " +
                         a.shape_string());
  }
}

bool go_parallel(std::size_t work) {
#ifdef _OPENMP
  return work >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

}  // namespace

namespace serial {

Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  const GemmShape s = gemm_shape(a, ta, b, tb);
  Matrix out(s.m, s.n);
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(a, ta, b, tb, i, s, out);
  return out;
}

Matrix add_row_broadcast(const Matrix& a, const Matrix& bias) {
  check_bias(a, bias);
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] += bias(0, j);
  }
  return out;
}

Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
  }
  return out;
}

}  // namespace serial

namespace parallel {

Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  const GemmShape s = gemm_shape(a, ta, b, tb);
  Matrix out(s.m, s.n);
  const auto rows = static_cast<std::ptrdiff_t>(s.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_row(a, ta, b, tb, static_cast<std::size_t>(i), s, out);
  }
  return out;
}

Matrix add_row_broadcast(const Matrix& a, const Matrix& bias) {
  check_bias(a, bias);
  Matrix out = a;
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    auto r = out.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] += bias(0, j);
  }
  return out;
}

Matrix column_sums(const Matrix& a) {
  // Each thread owns a contiguous block of columns and walks the rows in
  // order, so every column keeps the serial summation order.
  Matrix out(1, a.cols());
  const std::size_t rows = a.rows(), cols = a.cols();
#pragma omp parallel
  {
    std::size_t begin = 0, end = cols;
#ifdef _OPENMP
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    begin = cols * t / nt;
    end = cols * (t + 1) / nt;
#endif
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = begin; j < end; ++j) out(0, j) += a(i, j);
    }
  }
  return out;
}

}  // namespace parallel

Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  const GemmShape s = gemm_shape(a, ta, b, tb);
  return go_parallel(s.m * s.k * s.n) ? parallel::gemm(a, ta, b, tb)
                                      : serial::gemm(a, ta, b, tb);
}

Matrix add_row_broadcast(const Matrix& a, const Matrix& bias) {
  return go_parallel(a.size()) ? parallel::add_row_broadcast(a, bias)
                               : serial::add_row_broadcast(a, bias);
}

Matrix column_sums(const Matrix& a) {
  return go_parallel(a.size()) ? parallel::column_sums(a) : serial::column_sums(a);
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace mts::kernels
