#pragma once

#include <cstddef>

#include "mts/matrix.hpp"

// Dense kernels used by the autograd engine and the value-only forward passes.
//
// Every kernel has a serial reference in `kernels::serial` and an OpenMP
// version in `kernels::parallel`. The parallel versions split work by output
// row only, so each output element is produced by one thread with the same
// summation order as the serial code: results are bitwise identical.
namespace mts::kernels {

enum class Transpose { no, yes };

/// Minimum multiply-add count before the dispatching kernels go parallel.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

namespace serial {
/// out = op(a) * op(b)
Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb);
/// out = a + broadcast(bias) where bias is 1 x cols.
Matrix add_row_broadcast(const Matrix& a, const Matrix& bias);
/// Column sums as a 1 x cols matrix.
Matrix column_sums(const Matrix& a);
}  // namespace serial

namespace parallel {
Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb);
Matrix add_row_broadcast(const Matrix& a, const Matrix& bias);
Matrix column_sums(const Matrix& a);
}  // namespace parallel

// Dispatching versions: parallel above kParallelThreshold and outside an
// enclosing parallel region, serial otherwise.
Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb);
Matrix add_row_broadcast(const Matrix& a, const Matrix& bias);
Matrix column_sums(const Matrix& a);

int max_threads() noexcept;

}  // namespace mts::kernels
