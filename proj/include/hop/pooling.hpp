#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hop/matrix.hpp"

namespace hop {

enum class PoolingKind { kCls, kAvg, kMax, kAvgMax, kStdDev, kMoments, kMomentsCls };

std::string_view to_string(PoolingKind kind);
PoolingKind parse_pooling_kind(std::string_view name);

inline constexpr int kMaxMomentOrder = 5;
inline constexpr int kDefaultMomentOrder = 3;
inline constexpr double kStdDevEpsilon = 1e-8;

/// Reduction from an L×Q token matrix to a fixed-width vector.
struct PoolingSpec {
  PoolingKind kind = PoolingKind::kMoments;
  int order = kDefaultMomentOrder;  // only meaningful for the moment kinds

  /// Throws a config error for an order outside [1, 5] (or p < 2 with CLS).
  void validate() const;

  /// Number of Q-wide blocks in the pooled output.
  std::size_t blocks() const;
  std::size_t output_width(std::size_t channels) const { return blocks() * channels; }

  std::string describe() const;

  friend bool operator==(const PoolingSpec&, const PoolingSpec&) = default;
};

template <typename T>
struct PooledFeature {
  std::vector<T> values;
  std::size_t source_length = 0;
};

/// [m_1 | m_2 | … | m_p], channel-blocked: m_1 is the per-channel mean and
/// m_k (k ≥ 2) the population central moment (1/L) Σ_d (h_d − m_1)^k. Two
/// passes, 64-bit accumulation.
template <typename T>
PooledFeature<T> central_moments(const BasicMatrix<T>& tokens, int order);

template <typename T>
BasicMatrix<T> central_moments_backward(const BasicMatrix<T>& tokens, int order,
                                        std::span<const T> grad_out);

/// CLS, AVG, MAX, AVGMAX or STDDEV reduction.
template <typename T>
PooledFeature<T> baseline_pool(const BasicMatrix<T>& tokens, PoolingKind kind);

template <typename T>
BasicMatrix<T> baseline_pool_backward(const BasicMatrix<T>& tokens, PoolingKind kind,
                                      std::span<const T> grad_out);

/// Moments with the m_1 block replaced by the token at position 0.
template <typename T>
PooledFeature<T> moments_with_cls(const BasicMatrix<T>& tokens, int order);

template <typename T>
BasicMatrix<T> moments_with_cls_backward(const BasicMatrix<T>& tokens, int order,
                                         std::span<const T> grad_out);

/// Dispatch on `spec`; writes `spec.output_width(Q)` values into `out`.
template <typename T>
void pool_into(const BasicMatrix<T>& tokens, const PoolingSpec& spec, std::span<T> out);

template <typename T>
PooledFeature<T> pool(const BasicMatrix<T>& tokens, const PoolingSpec& spec);

template <typename T>
BasicMatrix<T> pool_backward(const BasicMatrix<T>& tokens, const PoolingSpec& spec,
                             std::span<const T> grad_out);

/// Ragged batch: sample b owns rows [offsets[b], offsets[b+1]) of `tokens`.
struct RaggedLayout {
  std::vector<std::size_t> offsets;  // size B + 1, offsets[0] == 0

  std::size_t batch() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t length(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
};

/// Pools every sample of a stacked ragged batch into one row each
/// (OpenMP-parallel over samples).
template <typename T>
BasicMatrix<T> pool_batch(const BasicMatrix<T>& tokens, const RaggedLayout& layout,
                          const PoolingSpec& spec);

template <typename T>
BasicMatrix<T> pool_batch_backward(const BasicMatrix<T>& tokens, const RaggedLayout& layout,
                                   const PoolingSpec& spec, const BasicMatrix<T>& grad_out);

namespace reference {

/// Serial single-threaded equivalents of the batched pooling kernels.
template <typename T>
BasicMatrix<T> pool_batch(const BasicMatrix<T>& tokens, const RaggedLayout& layout,
                          const PoolingSpec& spec);

template <typename T>
BasicMatrix<T> pool_batch_backward(const BasicMatrix<T>& tokens, const RaggedLayout& layout,
                                   const PoolingSpec& spec, const BasicMatrix<T>& grad_out);

}  // namespace reference
}  // namespace hop
