#include "hop/kernels.hpp"

#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hop {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void check_inner(std::size_t lhs, std::size_t rhs, const char* op) {
  require(lhs == rhs, ErrorKind::kShape,
          std::string(op) + ": inner dimension mismatch " + std::to_string(lhs) +
              " vs " + std::to_string(rhs));
}

template <typename Acc, typename T>
void matmul_rows(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& out) {
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  const bool parallel = m * n * p >= kParallelWork;
#pragma omp parallel if (parallel)
  {
    std::vector<Acc> acc(p);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), Acc{0});
      const T* arow = a.data() + i * n;
      for (std::size_t k = 0; k < n; ++k) {
        const Acc aik = arow[k];
        const T* brow = b.data() + k * p;
        for (std::size_t j = 0; j < p; ++j) acc[j] += aik * static_cast<Acc>(brow[j]);
      }
      T* orow = out.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] = static_cast<T>(acc[j]);
    }
  }
}

template <typename Acc, typename T>
void matmul_tn_rows(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& out) {
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  const bool parallel = m * n * p >= kParallelWork;
#pragma omp parallel if (parallel)
  {
    std::vector<Acc> acc(p);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), Acc{0});
      for (std::size_t k = 0; k < m; ++k) {
        const Acc aki = a.data()[k * n + i];
        const T* brow = b.data() + k * p;
        for (std::size_t j = 0; j < p; ++j) acc[j] += aki * static_cast<Acc>(brow[j]);
      }
      T* orow = out.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] = static_cast<T>(acc[j]);
    }
  }
}

template <typename Acc, typename T>
void matmul_nt_rows(const BasicMatrix<T>& a, const BasicMatrix<T>& b, BasicMatrix<T>& out) {
  const std::size_t m = a.rows(), n = a.cols(), p = b.rows();
  const bool parallel = m * n * p >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const T* arow = a.data() + i * n;
    for (std::size_t j = 0; j < p; ++j) {
      const T* brow = b.data() + j * n;
      Acc s{0};
      for (std::size_t k = 0; k < n; ++k) s += static_cast<Acc>(arow[k]) * brow[k];
      out.data()[i * p + j] = static_cast<T>(s);
    }
  }
}

template <typename Acc, typename T>
void column_sums_impl(const BasicMatrix<T>& m, BasicMatrix<T>& out) {
  std::vector<Acc> acc(m.cols(), Acc{0});
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const T* row = m.data() + r * m.cols();
    for (std::size_t c = 0; c < m.cols(); ++c) acc[c] += row[c];
  }
  for (std::size_t c = 0; c < m.cols(); ++c) out.data()[c] = static_cast<T>(acc[c]);
}

bool wide(Accumulation acc) { return acc == Accumulation::kWide; }

}  // namespace

namespace kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b, Accumulation acc) {
  check_inner(a.cols(), b.rows(), "matmul");
  BasicMatrix<T> out(a.rows(), b.cols());
  if (wide(acc))
    matmul_rows<double>(a, b, out);
  else
    matmul_rows<T>(a, b, out);
  debug_check_finite(out);
  return out;
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b, Accumulation acc) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  BasicMatrix<T> out(a.cols(), b.cols());
  if (wide(acc))
    matmul_tn_rows<double>(a, b, out);
  else
    matmul_tn_rows<T>(a, b, out);
  debug_check_finite(out);
  return out;
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b, Accumulation acc) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  BasicMatrix<T> out(a.rows(), b.rows());
  if (wide(acc))
    matmul_nt_rows<double>(a, b, out);
  else
    matmul_nt_rows<T>(a, b, out);
  debug_check_finite(out);
  return out;
}

template <typename T>
void add_row_bias(BasicMatrix<T>& m, std::span<const T> bias) {
  require(bias.size() == m.cols(), ErrorKind::kShape, "add_row_bias: bias width mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

template <typename T>
BasicMatrix<T> column_sums(const BasicMatrix<T>& m, Accumulation acc) {
  BasicMatrix<T> out(1, m.cols());
  if (wide(acc))
    column_sums_impl<double>(m, out);
  else
    column_sums_impl<T>(m, out);
  return out;
}

#define HOP_INSTANTIATE_KERNELS(T)                                                   \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&,       \
                                 Accumulation);                                      \
  template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&,    \
                                    Accumulation);                                   \
  template BasicMatrix<T> matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&,    \
                                    Accumulation);                                   \
  template void add_row_bias(BasicMatrix<T>&, std::span<const T>);                   \
  template BasicMatrix<T> column_sums(const BasicMatrix<T>&, Accumulation);

HOP_INSTANTIATE_KERNELS(float)
HOP_INSTANTIATE_KERNELS(double)

}  // namespace kernels

namespace reference {
namespace {

template <typename Acc, typename T>
BasicMatrix<T> naive_product(const BasicMatrix<T>& a, bool ta, const BasicMatrix<T>& b,
                             bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t n = ta ? a.rows() : a.cols();
  const std::size_t nb = tb ? b.cols() : b.rows();
  const std::size_t p = tb ? b.rows() : b.cols();
  check_inner(n, nb, "reference product");
  BasicMatrix<T> out(m, p);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      Acc s{0};
      for (std::size_t k = 0; k < n; ++k) {
        const T x = ta ? a(k, i) : a(i, k);
        const T y = tb ? b(j, k) : b(k, j);
        s += static_cast<Acc>(x) * static_cast<Acc>(y);
      }
      out(i, j) = static_cast<T>(s);
    }
  }
  return out;
}

}  // namespace

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b, Accumulation acc) {
  return wide(acc) ? naive_product<double>(a, false, b, false)
                   : naive_product<T>(a, false, b, false);
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b, Accumulation acc) {
  return wide(acc) ? naive_product<double>(a, true, b, false)
                   : naive_product<T>(a, true, b, false);
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b, Accumulation acc) {
  return wide(acc) ? naive_product<double>(a, false, b, true)
                   : naive_product<T>(a, false, b, true);
}

template <typename T>
BasicMatrix<T> column_sums(const BasicMatrix<T>& m, Accumulation acc) {
  BasicMatrix<T> out(1, m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    if (wide(acc)) {
      double s = 0;
      for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c);
      out(0, c) = static_cast<T>(s);
    } else {
      T s = 0;
      for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c);
      out(0, c) = s;
    }
  }
  return out;
}

#define HOP_INSTANTIATE_REFERENCE(T)                                                  \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&,        \
                                 Accumulation);                                       \
  template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&,     \
                                    Accumulation);                                    \
  template BasicMatrix<T> matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&,     \
                                    Accumulation);                                    \
  template BasicMatrix<T> column_sums(const BasicMatrix<T>&, Accumulation);

HOP_INSTANTIATE_REFERENCE(float)
HOP_INSTANTIATE_REFERENCE(double)

}  // namespace reference
}  // namespace hop
