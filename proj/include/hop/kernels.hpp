#pragma once

#include <cstddef>
#include <span>

#include "hop/matrix.hpp"

namespace hop {

/// Governs the accumulator type of reductions over `float` data.
enum class Accumulation { kNative, kWide };

/// OpenMP-parallel dense kernels. Work is split over output rows only and each
/// output element is reduced in ascending index order, so results are
/// bit-identical for any thread count.
namespace kernels {

/// a · b
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                      Accumulation acc = Accumulation::kWide);

/// aᵀ · b
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                         Accumulation acc = Accumulation::kWide);

/// a · bᵀ
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                         Accumulation acc = Accumulation::kWide);

/// m[r][c] += bias[c] for every row.
template <typename T>
void add_row_bias(BasicMatrix<T>& m, std::span<const T> bias);

/// Per-column sum over rows (ascending), as a 1×cols matrix.
template <typename T>
BasicMatrix<T> column_sums(const BasicMatrix<T>& m, Accumulation acc = Accumulation::kWide);

/// Number of threads the parallel kernels will use.
int max_threads();

}  // namespace kernels

/// Serial textbook loops with the same reduction order as `kernels`; kept as
/// the test oracle and benchmark baseline.
namespace reference {

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                      Accumulation acc = Accumulation::kWide);
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                         Accumulation acc = Accumulation::kWide);
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                         Accumulation acc = Accumulation::kWide);
template <typename T>
BasicMatrix<T> column_sums(const BasicMatrix<T>& m, Accumulation acc = Accumulation::kWide);

}  // namespace reference

}  // namespace hop
