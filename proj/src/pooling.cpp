#include "hop/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hop {

std::string_view to_string(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::kCls: return "cls";
    case PoolingKind::kAvg: return "avg";
    case PoolingKind::kMax: return "max";
    case PoolingKind::kAvgMax: return "avgmax";
    case PoolingKind::kStdDev: return "stddev";
    case PoolingKind::kMoments: return "moments";
    case PoolingKind::kMomentsCls: return "moments_cls";
  }
  return "unknown";
}

PoolingKind parse_pooling_kind(std::string_view name) {
  for (auto k : {PoolingKind::kCls, PoolingKind::kAvg, PoolingKind::kMax, PoolingKind::kAvgMax,
                 PoolingKind::kStdDev, PoolingKind::kMoments, PoolingKind::kMomentsCls})
    if (to_string(k) == name) return k;
  fail(ErrorKind::kConfig, "unknown pooling kind '" + std::string(name) + "'");
}

void PoolingSpec::validate() const {
  if (kind != PoolingKind::kMoments && kind != PoolingKind::kMomentsCls) return;
  require(order >= 1 && order <= kMaxMomentOrder, ErrorKind::kConfig,
          "moment order must be in [1, " + std::to_string(kMaxMomentOrder) + "], got " +
              std::to_string(order));
  require(kind != PoolingKind::kMomentsCls || order >= 2, ErrorKind::kConfig,
          "moments_cls requires order >= 2");
}

std::size_t PoolingSpec::blocks() const {
  switch (kind) {
    case PoolingKind::kAvgMax: return 2;
    case PoolingKind::kMoments:
    case PoolingKind::kMomentsCls: return static_cast<std::size_t>(order);
    default: return 1;
  }
}

std::string PoolingSpec::describe() const {
  std::string s(to_string(kind));
  if (kind == PoolingKind::kMoments || kind == PoolingKind::kMomentsCls)
    s += "(p=" + std::to_string(order) + ")";
  return s;
}

namespace {

void require_tokens(std::size_t length) {
  require(length >= 1, ErrorKind::kEmptySequence, "pooling needs at least one token");
}

// Per-channel mean and the power sums Σ_d dev^k / L for k = 1..max_power,
// laid out as sums[(k-1)*Q + q].
template <typename T>
void centered_sums(const T* h, std::size_t L, std::size_t Q, int max_power,
                   std::vector<double>& mean, std::vector<double>& sums) {
  mean.assign(Q, 0.0);
  for (std::size_t d = 0; d < L; ++d)
    for (std::size_t q = 0; q < Q; ++q) mean[q] += h[d * Q + q];
  const double inv_l = 1.0 / static_cast<double>(L);
  for (double& m : mean) m *= inv_l;
  sums.assign(static_cast<std::size_t>(std::max(max_power, 0)) * Q, 0.0);
  for (std::size_t d = 0; d < L; ++d) {
    for (std::size_t q = 0; q < Q; ++q) {
      const double dev = h[d * Q + q] - mean[q];
      double pw = 1.0;
      for (int k = 1; k <= max_power; ++k) {
        pw *= dev;
        sums[static_cast<std::size_t>(k - 1) * Q + q] += pw;
      }
    }
  }
  for (double& s : sums) s *= inv_l;
}

template <typename T>
void moments_rows(const T* h, std::size_t L, std::size_t Q, int p, bool cls_first, T* out) {
  std::vector<double> mean, sums;
  centered_sums(h, L, Q, p, mean, sums);
  for (std::size_t q = 0; q < Q; ++q)
    out[q] = cls_first ? h[q] : static_cast<T>(mean[q]);
  for (int k = 2; k <= p; ++k)
    for (std::size_t q = 0; q < Q; ++q)
      out[static_cast<std::size_t>(k - 1) * Q + q] =
          static_cast<T>(sums[static_cast<std::size_t>(k - 1) * Q + q]);
}

template <typename T>
void moments_rows_backward(const T* h, std::size_t L, std::size_t Q, int p, bool cls_first,
                           const T* g, T* grad) {
  std::vector<double> mean, sums;
  centered_sums(h, L, Q, std::max(p - 1, 0), mean, sums);
  const double inv_l = 1.0 / static_cast<double>(L);
  for (std::size_t d = 0; d < L; ++d) {
    for (std::size_t q = 0; q < Q; ++q) {
      double total = cls_first ? (d == 0 ? static_cast<double>(g[q]) : 0.0) : g[q] * inv_l;
      const double dev = h[d * Q + q] - mean[q];
      double pw = 1.0;  // dev^{k-1}
      for (int k = 2; k <= p; ++k) {
        pw *= dev;
        // d m_k / d h_d = (k/L) (dev_d^{k-1} − (1/L) Σ_e dev_e^{k-1})
        const double lower = sums[static_cast<std::size_t>(k - 2) * Q + q];
        total += g[static_cast<std::size_t>(k - 1) * Q + q] * (k * inv_l) * (pw - lower);
      }
      grad[d * Q + q] = static_cast<T>(total);
    }
  }
}

template <typename T>
void max_rows(const T* h, std::size_t L, std::size_t Q, T* out, std::size_t* arg) {
  for (std::size_t q = 0; q < Q; ++q) {
    std::size_t best = 0;
    for (std::size_t d = 1; d < L; ++d)
      if (h[d * Q + q] > h[best * Q + q]) best = d;
    out[q] = h[best * Q + q];
    if (arg) arg[q] = best;
  }
}

template <typename T>
void pool_rows(const T* h, std::size_t L, std::size_t Q, const PoolingSpec& spec, T* out) {
  require_tokens(L);
  switch (spec.kind) {
    case PoolingKind::kCls:
      std::copy(h, h + Q, out);
      return;
    case PoolingKind::kAvg:
      moments_rows(h, L, Q, 1, false, out);
      return;
    case PoolingKind::kMax:
      max_rows(h, L, Q, out, static_cast<std::size_t*>(nullptr));
      return;
    case PoolingKind::kAvgMax:
      moments_rows(h, L, Q, 1, false, out);
      max_rows(h, L, Q, out + Q, static_cast<std::size_t*>(nullptr));
      return;
    case PoolingKind::kStdDev: {
      std::vector<double> mean, sums;
      centered_sums(h, L, Q, 2, mean, sums);
      for (std::size_t q = 0; q < Q; ++q)
        out[q] = static_cast<T>(std::sqrt(sums[Q + q] + kStdDevEpsilon));
      return;
    }
    case PoolingKind::kMoments:
    case PoolingKind::kMomentsCls:
      spec.validate();
      moments_rows(h, L, Q, spec.order, spec.kind == PoolingKind::kMomentsCls, out);
      return;
  }
}

template <typename T>
void pool_rows_backward(const T* h, std::size_t L, std::size_t Q, const PoolingSpec& spec,
                        const T* g, T* grad) {
  require_tokens(L);
  std::fill(grad, grad + L * Q, T{0});
  switch (spec.kind) {
    case PoolingKind::kCls:
      std::copy(g, g + Q, grad);
      return;
    case PoolingKind::kAvg:
      moments_rows_backward(h, L, Q, 1, false, g, grad);
      return;
    case PoolingKind::kMax:
    case PoolingKind::kAvgMax: {
      const bool with_avg = spec.kind == PoolingKind::kAvgMax;
      if (with_avg) moments_rows_backward(h, L, Q, 1, false, g, grad);
      const T* gmax = with_avg ? g + Q : g;
      std::vector<T> scratch(Q);
      std::vector<std::size_t> arg(Q);
      max_rows(h, L, Q, scratch.data(), arg.data());
      for (std::size_t q = 0; q < Q; ++q) grad[arg[q] * Q + q] += gmax[q];
      return;
    }
    case PoolingKind::kStdDev: {
      std::vector<double> mean, sums;
      centered_sums(h, L, Q, 2, mean, sums);
      const double inv_l = 1.0 / static_cast<double>(L);
      for (std::size_t q = 0; q < Q; ++q) {
        const double sd = std::sqrt(sums[Q + q] + kStdDevEpsilon);
        const double scale = g[q] / (2.0 * sd) * 2.0 * inv_l;
        for (std::size_t d = 0; d < L; ++d)
          grad[d * Q + q] = static_cast<T>(scale * (h[d * Q + q] - mean[q] - sums[q]));
      }
      return;
    }
    case PoolingKind::kMoments:
    case PoolingKind::kMomentsCls:
      spec.validate();
      moments_rows_backward(h, L, Q, spec.order, spec.kind == PoolingKind::kMomentsCls, g,
                            grad);
      return;
  }
}

template <typename T>
void check_grad_width(std::size_t got, std::size_t want) {
  require(got == want, ErrorKind::kShape,
          "pooling gradient width " + std::to_string(got) + " != " + std::to_string(want));
}

template <typename T>
void check_layout(const BasicMatrix<T>& tokens, const RaggedLayout& layout) {
  require(!layout.offsets.empty() && layout.offsets.front() == 0 &&
              layout.offsets.back() == tokens.rows(),
          ErrorKind::kShape, "ragged layout does not cover the token matrix");
  for (std::size_t b = 0; b < layout.batch(); ++b)
    require(layout.offsets[b + 1] > layout.offsets[b], ErrorKind::kEmptySequence,
            "sample " + std::to_string(b) + " has no tokens");
}

}  // namespace

template <typename T>
PooledFeature<T> central_moments(const BasicMatrix<T>& tokens, int order) {
  return pool(tokens, PoolingSpec{PoolingKind::kMoments, order});
}

template <typename T>
BasicMatrix<T> central_moments_backward(const BasicMatrix<T>& tokens, int order,
                                        std::span<const T> grad_out) {
  return pool_backward(tokens, PoolingSpec{PoolingKind::kMoments, order}, grad_out);
}

template <typename T>
PooledFeature<T> baseline_pool(const BasicMatrix<T>& tokens, PoolingKind kind) {
  require(kind != PoolingKind::kMoments && kind != PoolingKind::kMomentsCls, ErrorKind::kConfig,
          "baseline_pool does not handle moment pooling");
  return pool(tokens, PoolingSpec{kind, 1});
}

template <typename T>
BasicMatrix<T> baseline_pool_backward(const BasicMatrix<T>& tokens, PoolingKind kind,
                                      std::span<const T> grad_out) {
  require(kind != PoolingKind::kMoments && kind != PoolingKind::kMomentsCls, ErrorKind::kConfig,
          "baseline_pool does not handle moment pooling");
  return pool_backward(tokens, PoolingSpec{kind, 1}, grad_out);
}

template <typename T>
PooledFeature<T> moments_with_cls(const BasicMatrix<T>& tokens, int order) {
  return pool(tokens, PoolingSpec{PoolingKind::kMomentsCls, order});
}

template <typename T>
BasicMatrix<T> moments_with_cls_backward(const BasicMatrix<T>& tokens, int order,
                                         std::span<const T> grad_out) {
  return pool_backward(tokens, PoolingSpec{PoolingKind::kMomentsCls, order}, grad_out);
}

template <typename T>
void pool_into(const BasicMatrix<T>& tokens, const PoolingSpec& spec, std::span<T> out) {
  spec.validate();
  check_grad_width<T>(out.size(), spec.output_width(tokens.cols()));
  pool_rows(tokens.data(), tokens.rows(), tokens.cols(), spec, out.data());
}

template <typename T>
PooledFeature<T> pool(const BasicMatrix<T>& tokens, const PoolingSpec& spec) {
  spec.validate();
  PooledFeature<T> f{std::vector<T>(spec.output_width(tokens.cols())), tokens.rows()};
  pool_rows(tokens.data(), tokens.rows(), tokens.cols(), spec, f.values.data());
  return f;
}

template <typename T>
BasicMatrix<T> pool_backward(const BasicMatrix<T>& tokens, const PoolingSpec& spec,
                             std::span<const T> grad_out) {
  spec.validate();
  check_grad_width<T>(grad_out.size(), spec.output_width(tokens.cols()));
  BasicMatrix<T> grad(tokens.rows(), tokens.cols());
  pool_rows_backward(tokens.data(), tokens.rows(), tokens.cols(), spec, grad_out.data(),
                     grad.data());
  return grad;
}

template <typename T>
BasicMatrix<T> pool_batch(const BasicMatrix<T>& tokens, const RaggedLayout& layout,
                          const PoolingSpec& spec) {
  spec.validate();
  check_layout(tokens, layout);
  const std::size_t Q = tokens.cols(), B = layout.batch();
  BasicMatrix<T> out(B, spec.output_width(Q));
#pragma omp parallel for schedule(dynamic, 4) if (B * tokens.rows() > 4096)
  for (std::ptrdiff_t bb = 0; bb < static_cast<std::ptrdiff_t>(B); ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    pool_rows(tokens.data() + layout.offsets[b] * Q, layout.length(b), Q, spec,
              out.row(b).data());
  }
  return out;
}

template <typename T>
BasicMatrix<T> pool_batch_backward(const BasicMatrix<T>& tokens, const RaggedLayout& layout,
                                   const PoolingSpec& spec, const BasicMatrix<T>& grad_out) {
  spec.validate();
  check_layout(tokens, layout);
  const std::size_t Q = tokens.cols(), B = layout.batch();
  require(grad_out.rows() == B && grad_out.cols() == spec.output_width(Q), ErrorKind::kShape,
          "pool_batch_backward: gradient shape mismatch");
  BasicMatrix<T> grad(tokens.rows(), Q);
#pragma omp parallel for schedule(dynamic, 4) if (B * tokens.rows() > 4096)
  for (std::ptrdiff_t bb = 0; bb < static_cast<std::ptrdiff_t>(B); ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const std::size_t off = layout.offsets[b] * Q;
    pool_rows_backward(tokens.data() + off, layout.length(b), Q, spec, grad_out.row(b).data(),
                       grad.data() + off);
  }
  return grad;
}

namespace reference {

template <typename T>
BasicMatrix<T> pool_batch(const BasicMatrix<T>& tokens, const RaggedLayout& layout,
                          const PoolingSpec& spec) {
  spec.validate();
  check_layout(tokens, layout);
  const std::size_t Q = tokens.cols();
  BasicMatrix<T> out(layout.batch(), spec.output_width(Q));
  for (std::size_t b = 0; b < layout.batch(); ++b)
    pool_rows(tokens.data() + layout.offsets[b] * Q, layout.length(b), Q, spec,
              out.row(b).data());
  return out;
}

template <typename T>
BasicMatrix<T> pool_batch_backward(const BasicMatrix<T>& tokens, const RaggedLayout& layout,
                                   const PoolingSpec& spec, const BasicMatrix<T>& grad_out) {
  spec.validate();
  check_layout(tokens, layout);
  const std::size_t Q = tokens.cols();
  BasicMatrix<T> grad(tokens.rows(), Q);
  for (std::size_t b = 0; b < layout.batch(); ++b) {
    const std::size_t off = layout.offsets[b] * Q;
    pool_rows_backward(tokens.data() + off, layout.length(b), Q, spec, grad_out.row(b).data(),
                       grad.data() + off);
  }
  return grad;
}

}  // namespace reference

#define HOP_INSTANTIATE_POOLING(T)                                                          \
  template PooledFeature<T> central_moments(const BasicMatrix<T>&, int);                    \
  template BasicMatrix<T> central_moments_backward(const BasicMatrix<T>&, int,              \
                                                   std::span<const T>);                     \
  template PooledFeature<T> baseline_pool(const BasicMatrix<T>&, PoolingKind);              \
  template BasicMatrix<T> baseline_pool_backward(const BasicMatrix<T>&, PoolingKind,        \
                                                 std::span<const T>);                       \
  template PooledFeature<T> moments_with_cls(const BasicMatrix<T>&, int);                   \
  template BasicMatrix<T> moments_with_cls_backward(const BasicMatrix<T>&, int,             \
                                                    std::span<const T>);                    \
  template void pool_into(const BasicMatrix<T>&, const PoolingSpec&, std::span<T>);         \
  template PooledFeature<T> pool(const BasicMatrix<T>&, const PoolingSpec&);                \
  template BasicMatrix<T> pool_backward(const BasicMatrix<T>&, const PoolingSpec&,          \
                                        std::span<const T>);                                \
  template BasicMatrix<T> pool_batch(const BasicMatrix<T>&, const RaggedLayout&,            \
                                     const PoolingSpec&);                                   \
  template BasicMatrix<T> pool_batch_backward(const BasicMatrix<T>&, const RaggedLayout&,   \
                                              const PoolingSpec&, const BasicMatrix<T>&);   \
  template BasicMatrix<T> reference::pool_batch(const BasicMatrix<T>&, const RaggedLayout&, \
                                                const PoolingSpec&);                        \
  template BasicMatrix<T> reference::pool_batch_backward(                                   \
      const BasicMatrix<T>&, const RaggedLayout&, const PoolingSpec&, const BasicMatrix<T>&);

HOP_INSTANTIATE_POOLING(float)
HOP_INSTANTIATE_POOLING(double)

}  // namespace hop
